#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace profuse::oracle {

std::vector<std::vector<NaiveHit>> composite_full(const GaussianScene& scene, const Camera& cam,
                                                  const RenderConfig& config) {
  std::vector<std::optional<ProjectedGaussian>> proj;
  for (const auto& g : scene.gaussians) proj.push_back(project_gaussian(g, cam, config.sigma_cutoff, config.near_plane));
  std::vector<std::vector<NaiveHit>> out(static_cast<std::size_t>(cam.width) * cam.height);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      std::vector<std::uint32_t> cand;
      for (std::uint32_t i = 0; i < proj.size(); ++i) {
        if (!proj[i]) continue;
        if (footprint_distance_sq(*proj[i], x + 0.5, y + 0.5) <= config.sigma_cutoff * config.sigma_cutoff)
          cand.push_back(i);
      }
      std::stable_sort(cand.begin(), cand.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return proj[a]->depth < proj[b]->depth; });
      double t = 1.0;
      auto& list = out[static_cast<std::size_t>(y) * cam.width + x];
      for (auto i : cand) {
        const double alpha = hit_alpha(scene.gaussians[i].opacity, footprint_distance_sq(*proj[i], x + 0.5, y + 0.5));
        if (alpha < config.alpha_cutoff) continue;
        list.push_back({i, alpha, t * alpha});
        t *= 1.0 - alpha;
      }
    }
  }
  return out;
}

PixelHits composite(const GaussianScene& scene, const Camera& cam, const RenderConfig& config) {
  const auto full = composite_full(scene, cam, config);
  PixelHits h;
  h.width = cam.width;
  h.height = cam.height;
  h.top_k = config.top_k;
  const auto k = static_cast<std::size_t>(config.top_k);
  h.index.assign(full.size() * k, 0);
  h.weight.assign(full.size() * k, 0.0f);
  h.count.assign(full.size(), 0);
  h.total_weight.assign(full.size(), 0.0f);
  for (std::size_t p = 0; p < full.size(); ++p) {
    const auto& list = full[p];
    double total = 0.0;
    for (const auto& hit : list) total += hit.weight;
    h.total_weight[p] = static_cast<float>(total);
    std::vector<std::size_t> keep(list.size());
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    if (config.mode == TopKMode::largest_weight) {
      // Selection by repeated maximum, earliest position on ties.
      std::vector<std::size_t> chosen;
      std::vector<bool> used(list.size(), false);
      while (chosen.size() < std::min(k, list.size())) {
        std::size_t best = list.size();
        for (std::size_t i = 0; i < list.size(); ++i)
          if (!used[i] && (best == list.size() || list[i].weight > list[best].weight)) best = i;
        used[best] = true;
        chosen.push_back(best);
      }
      std::sort(chosen.begin(), chosen.end());
      keep = chosen;
    } else if (keep.size() > k) {
      keep.resize(k);
    }
    for (std::size_t t = 0; t < keep.size(); ++t) {
      h.index[p * k + t] = list[keep[t]].gaussian;
      h.weight[p * k + t] = static_cast<float>(list[keep[t]].weight);
    }
    h.count[p] = static_cast<std::uint16_t>(keep.size());
  }
  return h;
}

namespace {

BinaryMask splat(const BinaryMask& m, const WarpField& w, int dw, int dh) {
  std::vector<float> acc(static_cast<std::size_t>(dw) * dh, 0.0f);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!m(x, y)) continue;
      const double u = static_cast<double>(w.warp_x(x, y)) - 0.5;
      const double v = static_cast<double>(w.warp_y(x, y)) - 0.5;
      const double fu = std::floor(u), fv = std::floor(v);
      const double ax = u - fu, ay = v - fv;
      for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
          const double wt = (dx ? ax : 1 - ax) * (dy ? ay : 1 - ay);
          const double tx = fu + dx, ty = fv + dy;
          if (wt <= 0.0 || tx < 0 || ty < 0 || tx >= dw || ty >= dh) continue;
          acc[static_cast<std::size_t>(ty) * dw + static_cast<std::size_t>(tx)] += static_cast<float>(wt);
        }
    }
  BinaryMask out(dw, dh, 0);
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = acc[i] >= 0.5f;
  return out;
}

BinaryMask label_mask(const LabelMap& l, int k) {
  BinaryMask m(l.width(), l.height(), 0);
  for (std::size_t i = 0; i < l.size(); ++i) m[i] = l[i] == k;
  return m;
}

double iou_on(const BinaryMask& a, const BinaryMask& b, const BinaryMask& g) {
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (g[i]) {
      inter += a[i] && b[i];
      uni += a[i] || b[i];
    }
  return uni ? double(inter) / double(uni) : 0.0;
}

double box_iou(const BinaryMask& a, const BinaryMask& b) {
  auto box = [](const BinaryMask& m) {
    std::array<int, 4> r{1 << 30, 1 << 30, -1, -1};
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x)
        if (m(x, y)) r = {std::min(r[0], x), std::min(r[1], y), std::max(r[2], x + 1), std::max(r[3], y + 1)};
    return r;
  };
  const auto ra = box(a), rb = box(b);
  if (ra[2] < 0 || rb[2] < 0) return 0.0;
  const double iw = std::max(0, std::min(ra[2], rb[2]) - std::max(ra[0], rb[0]));
  const double ih = std::max(0, std::min(ra[3], rb[3]) - std::max(ra[1], rb[1]));
  const double inter = iw * ih;
  const double area_a = double(ra[2] - ra[0]) * (ra[3] - ra[1]);
  const double area_b = double(rb[2] - rb[0]) * (rb[3] - rb[1]);
  return inter / (area_a + area_b - inter);
}

/// Score of mask a of `dst` against mask b of `src` seen through `w` (src -> dst).
std::pair<double, double> directed(const View& src, int b, const View& dst, int a, const WarpField& w,
                                   const BinaryMask& vsrc, const BinaryMask& vdst, double tau) {
  BinaryMask gsrc(vsrc.width(), vsrc.height(), 0);
  for (std::size_t i = 0; i < gsrc.size(); ++i) gsrc[i] = w.confidence[i] >= tau && vsrc[i];
  BinaryMask mb = label_mask(src.masks.labels, b);
  for (std::size_t i = 0; i < mb.size(); ++i) mb[i] = mb[i] && gsrc[i];
  const int dw = dst.camera.width, dh = dst.camera.height;
  const BinaryMask moved = splat(mb, w, dw, dh);
  BinaryMask g = splat(gsrc, w, dw, dh);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = g[i] && vdst[i];
  const BinaryMask ma = label_mask(dst.masks.labels, a);
  return {iou_on(ma, moved, g), box_iou(ma, moved)};
}

}  // namespace

std::vector<Edge> exhaustive_edges(const ViewSet& views, std::span<const WarpField> warps,
                                   std::span<const BinaryMask> vis, const ClusterConfig& config) {
  std::vector<Edge> out;
  auto warp = [&](ViewId s, ViewId d) -> const WarpField& {
    for (const auto& w : warps)
      if (w.src_view == s && w.dst_view == d) return w;
    throw std::runtime_error("oracle: missing warp");
  };
  for (auto [i, j] : candidate_pairs(views, config)) {
    const View& vi = views.views[i];
    const View& vj = views.views[j];
    for (int a = 1; a <= vi.masks.mask_count(); ++a)
      for (int b = 1; b <= vj.masks.mask_count(); ++b) {
        const auto [o_i, b_i] = directed(vj, b, vi, a, warp(vj.id, vi.id), vis[j], vis[i], config.tau_alpha);
        const auto [o_j, b_j] = directed(vi, a, vj, b, warp(vi.id, vj.id), vis[i], vis[j], config.tau_alpha);
        if (o_i >= config.tau_iou && o_j >= config.tau_iou && b_i >= config.tau_box && b_j >= config.tau_box) {
          Edge e{{vi.id, static_cast<MaskId>(a)}, {vj.id, static_cast<MaskId>(b)}, o_i, o_j, b_i, b_j};
          if (e.b < e.a) {
            std::swap(e.a, e.b);
            std::swap(e.o_ab, e.o_ba);
            std::swap(e.box_ab, e.box_ba);
          }
          out.push_back(e);
        }
      }
  }
  std::sort(out.begin(), out.end(), [](const Edge& x, const Edge& y) {
    return std::tie(x.a, x.b) < std::tie(y.a, y.b);
  });
  return out;
}

ProposalSet exhaustive_proposals(std::span<const Edge> edges, const ViewSet& views, const ClusterConfig& config) {
  std::map<MaskNode, std::vector<MaskNode>> adj;
  for (const auto& v : views.views)
    for (int k = 1; k <= v.masks.mask_count(); ++k) adj[{v.id, static_cast<MaskId>(k)}];
  for (const auto& e : edges) {
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
  }
  std::map<MaskNode, bool> seen;
  std::vector<Proposal> comps;
  for (const auto& [node, unused] : adj) {
    if (seen[node]) continue;
    Proposal p;
    std::vector<MaskNode> stack{node};
    seen[node] = true;
    while (!stack.empty()) {
      const MaskNode n = stack.back();
      stack.pop_back();
      p.members.push_back(n);
      for (const auto& m : adj[n])
        if (!seen[m]) {
          seen[m] = true;
          stack.push_back(m);
        }
    }
    std::sort(p.members.begin(), p.members.end());
    for (const auto& m : p.members)
      if (std::find(p.views.begin(), p.views.end(), m.view) == p.views.end()) p.views.push_back(m.view);
    std::sort(p.views.begin(), p.views.end());
    if (static_cast<int>(p.members.size()) >= config.s_min && static_cast<int>(p.views.size()) >= config.v_min)
      comps.push_back(p);
  }
  std::sort(comps.begin(), comps.end(),
            [](const Proposal& a, const Proposal& b) { return a.members.front() < b.members.front(); });
  ProposalSet out;
  out.proposals = comps;
  for (const auto& v : views.views) out.lookup[v.id].assign(static_cast<std::size_t>(v.masks.mask_count()) + 1, 0);
  for (std::size_t i = 0; i < comps.size(); ++i)
    for (const auto& m : comps[i].members) out.lookup[m.view][m.mask] = static_cast<std::uint16_t>(i + 1);
  return out;
}

double mask_mass(const PixelHits& hits, const BinaryMask& mask) {
  double mu = 0.0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      const std::size_t p = static_cast<std::size_t>(y) * mask.width() + x;
      for (int t = 0; t < hits.count[p]; ++t) mu += hits.weight[p * hits.top_k + t];
    }
  return mu;
}

std::vector<std::uint32_t> exact_top(const RowMatrixf& d, std::span<const std::uint8_t> valid,
                                     const Eigen::VectorXf& q, std::size_t k) {
  std::vector<std::pair<double, std::uint32_t>> s;
  const Eigen::VectorXd qd = q.cast<double>().normalized();
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    if (valid.empty() || valid[i]) s.emplace_back(-d.row(i).cast<double>().dot(qd), static_cast<std::uint32_t>(i));
  std::sort(s.begin(), s.end());
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < std::min(k, s.size()); ++i) out.push_back(s[i].second);
  return out;
}

std::vector<double> decoded_dots(const PQCodebook& cb, const PQCodes& codes, const Eigen::VectorXf& q) {
  const RowMatrixf dec = decode(cb, codes, false);
  std::vector<double> out;
  for (Eigen::Index i = 0; i < dec.rows(); ++i) out.push_back(dec.row(i).cast<double>().dot(q.cast<double>()));
  return out;
}

std::pair<double, double> tau_sweep(const GaussianScene& scene, std::span<const PixelHits> hits,
                                    std::span<const Eigen::VectorXf> queries, std::span<const EvalPair> pairs,
                                    double gamma, std::span<const double> grid) {
  double best_tau = 0.0, best = -1.0;
  for (double tau : grid) {
    double sum = 0.0;
    for (const auto& pr : pairs) {
      // Queries are stored as unit float vectors before scoring.
      const Eigen::VectorXd q = queries[pr.query].cast<double>().normalized().cast<float>().cast<double>();
      const PixelHits& h = hits[pr.view];
      long inter = 0, uni = 0;
      for (std::size_t p = 0; p < pr.gt.size(); ++p) {
        double a = 0.0;
        for (int t = 0; t < h.count[p]; ++t) {
          const auto g = h.index[p * h.top_k + t];
          if (scene.labeled[g] && scene.descriptors->row(g).cast<double>().dot(q) >= tau)
            a += h.weight[p * h.top_k + t];
        }
        const bool pred = a >= gamma;
        inter += pred && pr.gt[p];
        uni += pred || pr.gt[p];
      }
      sum += uni ? double(inter) / double(uni) : 1.0;
    }
    const double mean = sum / static_cast<double>(pairs.size());
    if (mean > best) {
      best = mean;
      best_tau = tau;
    }
  }
  return {best_tau, best};
}

TransferResult transfer(const GaussianScene& scene, std::span<const Eigen::Vector3d> points,
                        const RowMatrixf& classes, const TransferConfig& config) {
  TransferResult out;
  const auto c = classes.rows();
  out.probabilities = RowMatrixf::Zero(static_cast<Eigen::Index>(points.size()), c);
  out.labels.assign(points.size(), -1);
  for (std::size_t v = 0; v < points.size(); ++v) {
    std::vector<std::pair<double, std::size_t>> byd;
    for (std::size_t g = 0; g < scene.size(); ++g)
      if (scene.labeled[g])
        byd.emplace_back((scene.gaussians[g].position.cast<double>() - points[v]).squaredNorm(), g);
    std::sort(byd.begin(), byd.end());
    if (byd.size() > static_cast<std::size_t>(config.knn_k)) byd.resize(static_cast<std::size_t>(config.knn_k));
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(c);
    double total = 0.0;
    for (auto [unused, g] : byd) {
      const Gaussian& gs = scene.gaussians[g];
      const Eigen::Matrix3d cov = gs.covariance();
      const Eigen::Vector3d d = points[v] - gs.position.cast<double>();
      const double d2 = d.dot(cov.ldlt().solve(d));
      if (d2 > config.mahal_sigma * config.mahal_sigma) continue;
      const double w = std::exp(-0.5 * d2) * gs.opacity;
      Eigen::VectorXd logits(c);
      for (Eigen::Index k = 0; k < c; ++k)
        logits[k] = classes.row(k).cast<double>().normalized().dot(scene.descriptors->row(g).cast<double>()) /
                    config.temperature;
      Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
      acc += w * e / e.sum();
      total += w;
    }
    if (total <= 0.0) continue;
    acc /= acc.sum();
    out.probabilities.row(static_cast<Eigen::Index>(v)) = acc.cast<float>().transpose();
    Eigen::Index best = 0;
    acc.maxCoeff(&best);
    out.labels[v] = static_cast<int>(best);
  }
  for (int l : out.labels) out.unlabeled += l < 0;
  return out;
}

}  // namespace profuse::oracle
