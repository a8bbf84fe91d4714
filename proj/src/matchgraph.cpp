#include "profuse/matchgraph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "profuse/errors.hpp"
#include "profuse/parallel.hpp"
#include "profuse/synth.hpp"

namespace profuse {

namespace {

struct Box {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive
  bool empty() const { return x1 < x0; }
  double area() const { return empty() ? 0.0 : double(x1 - x0 + 1) * double(y1 - y0 + 1); }
};

Box tight_box(const BinaryMask& m) {
  Box b{m.width(), m.height(), -1, -1};
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m(x, y)) {
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x);
        b.y1 = std::max(b.y1, y);
      }
  if (b.x1 < 0) return Box{};
  return b;
}

void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (!a.same_shape(b)) throw ConfigError(std::string(what) + ": mask shapes differ");
}

const WarpField* find_warp(std::span<const WarpField> warps, ViewId src, ViewId dst) {
  for (const auto& w : warps)
    if (w.src_view == src && w.dst_view == dst) return &w;
  return nullptr;
}

/// Gated overlap and box agreement of every mask of view `dst` against every
/// warped mask of view `src`, measured in dst's frame. Row-major [a-1][b-1].
struct DirectionScores {
  std::vector<double> overlap;
  std::vector<double> box;
};

DirectionScores score_direction(const View& src, const View& dst, const WarpField& warp, const BinaryMask& src_vis,
                                const BinaryMask& dst_vis, const ClusterConfig& config) {
  const int w = dst.camera.width;
  const int h = dst.camera.height;
  const BinaryMask src_gate = gate(warp, config.tau_alpha, src_vis);
  BinaryMask moved_gate = warp_mask(src_gate, warp, w, h);
  for (std::size_t p = 0; p < moved_gate.size(); ++p) moved_gate[p] = moved_gate[p] && dst_vis[p];

  const int ka = dst.masks.mask_count();
  const int kb = src.masks.mask_count();
  std::vector<BinaryMask> dst_masks;
  for (int a = 1; a <= ka; ++a) dst_masks.push_back(dst.masks.mask(static_cast<MaskId>(a)));

  DirectionScores out;
  out.overlap.assign(static_cast<std::size_t>(ka * kb), 0.0);
  out.box.assign(static_cast<std::size_t>(ka * kb), 0.0);
  for (int b = 1; b <= kb; ++b) {
    BinaryMask support = src.masks.mask(static_cast<MaskId>(b));
    for (std::size_t p = 0; p < support.size(); ++p) support[p] = support[p] && src_gate[p];
    const BinaryMask moved = warp_mask(support, warp, w, h);
    for (int a = 1; a <= ka; ++a) {
      const auto slot = static_cast<std::size_t>((a - 1) * kb + (b - 1));
      out.overlap[slot] = gated_iou(dst_masks[static_cast<std::size_t>(a - 1)], moved, moved_gate);
      out.box[slot] = bbox_iou(dst_masks[static_cast<std::size_t>(a - 1)], moved);
    }
  }
  return out;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

std::uint16_t ProposalSet::proposal_of(ViewId view, MaskId mask) const {
  const auto it = lookup.find(view);
  if (it == lookup.end() || mask >= it->second.size()) return 0;
  return it->second[mask];
}

Grid2D<float> splat_mask(const BinaryMask& mask, const WarpField& warp, int dst_width, int dst_height) {
  if (!mask.same_shape(warp.confidence)) throw ConfigError("warp_mask: mask and warp shapes differ");
  Grid2D<float> out(dst_width, dst_height, 0.0f);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y)) continue;
      // Continuous target, shifted so integer values land on pixel centers.
      const double u = static_cast<double>(warp.warp_x(x, y)) - 0.5;
      const double v = static_cast<double>(warp.warp_y(x, y)) - 0.5;
      if (!std::isfinite(u) || !std::isfinite(v)) continue;
      const double fu = std::floor(u);
      const double fv = std::floor(v);
      if (fu < -1.0 || fv < -1.0 || fu > dst_width || fv > dst_height) continue;
      const int x0 = static_cast<int>(fu);
      const int y0 = static_cast<int>(fv);
      const double ax = u - fu;
      const double ay = v - fv;
      const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      for (int c = 0; c < 4; ++c)
        if (wts[c] > 0.0 && out.contains(xs[c], ys[c])) out(xs[c], ys[c]) += static_cast<float>(wts[c]);
    }
  }
  return out;
}

BinaryMask warp_mask(const BinaryMask& mask, const WarpField& warp, int dst_width, int dst_height) {
  const Grid2D<float> soft = splat_mask(mask, warp, dst_width, dst_height);
  BinaryMask out(dst_width, dst_height, 0);
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = soft[p] >= 0.5f ? 1 : 0;
  return out;
}

BinaryMask warp_mask(const BinaryMask& mask, const WarpField& warp) {
  return warp_mask(mask, warp, mask.width(), mask.height());
}

BinaryMask gate(const WarpField& warp, double tau_alpha, const BinaryMask& vis_mask) {
  if (!vis_mask.same_shape(warp.confidence)) throw ConfigError("gate: visibility mask and warp shapes differ");
  BinaryMask out(vis_mask.width(), vis_mask.height(), 0);
  for (std::size_t p = 0; p < out.size(); ++p)
    out[p] = (static_cast<double>(warp.confidence[p]) >= tau_alpha && vis_mask[p]) ? 1 : 0;
  return out;
}

double gated_iou(const BinaryMask& mask_a, const BinaryMask& warped_b, const BinaryMask& gate_mask) {
  require_same_shape(mask_a, warped_b, "gated_iou");
  require_same_shape(mask_a, gate_mask, "gated_iou");
  std::size_t inter = 0, uni = 0;
  for (std::size_t p = 0; p < mask_a.size(); ++p) {
    if (!gate_mask[p]) continue;
    const bool a = mask_a[p] != 0;
    const bool b = warped_b[p] != 0;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double bbox_iou(const BinaryMask& mask_a, const BinaryMask& warped_b) {
  const Box a = tight_box(mask_a);
  const Box b = tight_box(warped_b);
  if (a.empty() || b.empty()) return 0.0;
  Box i{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
  const double inter = (i.x1 < i.x0 || i.y1 < i.y0) ? 0.0 : double(i.x1 - i.x0 + 1) * double(i.y1 - i.y0 + 1);
  return inter / (a.area() + b.area() - inter);
}

std::vector<std::pair<std::size_t, std::size_t>> candidate_pairs(const ViewSet& views, const ClusterConfig& config) {
  if (views.size() < 2) return {};
  // Rank in view id order so score ties do not depend on how the views are listed.
  std::vector<std::size_t> by_id(views.size());
  std::iota(by_id.begin(), by_id.end(), std::size_t{0});
  std::sort(by_id.begin(), by_id.end(),
            [&](std::size_t a, std::size_t b) { return views.views[a].id < views.views[b].id; });
  std::vector<Camera> cams;
  for (auto i : by_id) cams.push_back(views.views[i].camera);
  const int k = std::min(config.neighbors_k, static_cast<int>(views.size()) - 1);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (auto [a, b] : neighbor_pairs(cams, k, config.neighbor_lambda)) out.emplace_back(by_id[a], by_id[b]);
  return out;
}

std::vector<Edge> build_graph(const ViewSet& views, std::span<const WarpField> warps,
                              std::span<const BinaryMask> vis_masks, const ClusterConfig& config) {
  config.check();
  if (vis_masks.size() != views.size()) throw ConfigError("build_graph: one visibility mask per view is required");
  const auto pairs = candidate_pairs(views, config);
  std::vector<const WarpField*> forward(pairs.size()), backward(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const View& vi = views.views[pairs[i].first];
    const View& vj = views.views[pairs[i].second];
    forward[i] = find_warp(warps, vj.id, vi.id);
    backward[i] = find_warp(warps, vi.id, vj.id);
    if (!forward[i] || !backward[i])
      throw ConfigError("missing warp between views " + std::to_string(vi.id) + " and " + std::to_string(vj.id));
  }

  std::vector<std::vector<Edge>> per_pair(pairs.size());
  parallel_for(0, pairs.size(), [&](std::size_t pi) {
    const auto [ia, ib] = pairs[pi];
    const View& vi = views.views[ia];
    const View& vj = views.views[ib];
    // in_i[a][b]: mask a of view i against mask b of view j warped into i.
    const DirectionScores in_i = score_direction(vj, vi, *forward[pi], vis_masks[ib], vis_masks[ia], config);
    const DirectionScores in_j = score_direction(vi, vj, *backward[pi], vis_masks[ia], vis_masks[ib], config);
    const int ka = vi.masks.mask_count();
    const int kb = vj.masks.mask_count();
    for (int a = 1; a <= ka; ++a) {
      for (int b = 1; b <= kb; ++b) {
        const auto s_i = static_cast<std::size_t>((a - 1) * kb + (b - 1));
        const auto s_j = static_cast<std::size_t>((b - 1) * ka + (a - 1));
        if (in_i.overlap[s_i] >= config.tau_iou && in_j.overlap[s_j] >= config.tau_iou &&
            in_i.box[s_i] >= config.tau_box && in_j.box[s_j] >= config.tau_box) {
          Edge e{{vi.id, static_cast<MaskId>(a)}, {vj.id, static_cast<MaskId>(b)},
                 in_i.overlap[s_i], in_j.overlap[s_j], in_i.box[s_i], in_j.box[s_j]};
          if (e.b < e.a) {
            std::swap(e.a, e.b);
            std::swap(e.o_ab, e.o_ba);
            std::swap(e.box_ab, e.box_ba);
          }
          per_pair[pi].push_back(e);
        }
      }
    }
  });

  std::vector<Edge> edges;
  for (auto& list : per_pair) edges.insert(edges.end(), list.begin(), list.end());
  std::sort(edges.begin(), edges.end(),
            [](const Edge& x, const Edge& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [](const Edge& x, const Edge& y) { return x.a == y.a && x.b == y.b; }),
              edges.end());
  return edges;
}

ProposalSet extract_proposals(std::span<const Edge> edges, const ViewSet& views, const ClusterConfig& config) {
  config.check();
  // Nodes enumerated view by view in ascending (view id, mask) order.
  std::vector<MaskNode> nodes;
  std::vector<const View*> by_id;
  for (const auto& v : views.views) by_id.push_back(&v);
  std::sort(by_id.begin(), by_id.end(), [](const View* a, const View* b) { return a->id < b->id; });
  for (const View* v : by_id)
    for (int k = 1; k <= v->masks.mask_count(); ++k) nodes.push_back({v->id, static_cast<MaskId>(k)});
  auto node_index = [&](const MaskNode& n) -> std::size_t {
    const auto it = std::lower_bound(nodes.begin(), nodes.end(), n);
    if (it == nodes.end() || *it != n)
      throw ConfigError("edge refers to unknown mask " + std::to_string(n.mask) + " of view " + std::to_string(n.view));
    return static_cast<std::size_t>(it - nodes.begin());
  };

  UnionFind uf(nodes.size());
  for (const auto& e : edges) uf.unite(node_index(e.a), node_index(e.b));

  // Roots are the smallest member, so walking nodes in order yields components
  // already sorted by their smallest member.
  std::vector<std::vector<std::size_t>> components;
  std::vector<std::size_t> component_of(nodes.size(), SIZE_MAX);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::size_t r = uf.find(i);
    if (component_of[r] == SIZE_MAX) {
      component_of[r] = components.size();
      components.emplace_back();
    }
    components[component_of[r]].push_back(i);
  }

  ProposalSet out;
  for (const View* v : by_id) out.lookup[v->id].assign(static_cast<std::size_t>(v->masks.mask_count()) + 1, 0);
  for (const auto& comp : components) {
    Proposal p;
    for (std::size_t i : comp) {
      p.members.push_back(nodes[i]);
      p.views.push_back(nodes[i].view);
    }
    p.views.erase(std::unique(p.views.begin(), p.views.end()), p.views.end());
    if (static_cast<int>(p.members.size()) < config.s_min || static_cast<int>(p.views.size()) < config.v_min) continue;
    if (out.proposals.size() >= 65535) throw ConfigError("more than 65535 proposals");
    const auto id = static_cast<std::uint16_t>(out.proposals.size() + 1);
    for (const auto& m : p.members) out.lookup[m.view][m.mask] = id;
    out.proposals.push_back(std::move(p));
  }
  return out;
}

}  // namespace profuse
