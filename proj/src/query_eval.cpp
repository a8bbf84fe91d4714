#include "profuse/query_eval.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "profuse/errors.hpp"
#include "profuse/parallel.hpp"
#include "profuse/spatial.hpp"

namespace profuse {

Eigen::VectorXf normalize_query(const Eigen::VectorXf& query) {
  const double norm = query.cast<double>().norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw ConfigError("query embedding must be finite and non-zero");
  return (query.cast<double>() / norm).cast<float>();
}

Selection select_gaussians(const GaussianScene& scene, const PQIndex& index, const Eigen::VectorXf& query,
                           const QueryConfig& config, ScoreMode mode) {
  config.check();
  if (!scene.descriptors) throw ConfigError("scene has no descriptors");
  const RowMatrixf& desc = *scene.descriptors;
  if (query.size() != desc.cols()) throw ConfigError("query dimension does not match the scene descriptors");
  const Eigen::VectorXd q = normalize_query(query).cast<double>();
  const std::size_t n = scene.size();
  Selection out;

  if (mode == ScoreMode::exact) {
    for (std::size_t g = 0; g < n; ++g) {
      if (!scene.labeled[g]) continue;
      const double s = desc.row(static_cast<Eigen::Index>(g)).cast<double>().dot(q.transpose());
      if (s >= config.tau_act) {
        out.active.push_back(static_cast<std::uint32_t>(g));
        out.scores.push_back(s);
      }
    }
    out.shortlist_used = n;
    return out;
  }

  if (index.codes.size() != n || index.valid.size() != n) throw ConfigError("index does not match the scene");
  std::size_t valid_count = 0;
  for (auto v : index.valid) valid_count += v != 0;
  const Eigen::VectorXf qf = q.cast<float>();
  std::size_t size = static_cast<std::size_t>(config.shortlist_size);
  std::vector<SearchHit> shortlist;
  for (;;) {
    shortlist = search(index.codebook, index.codes, qf, size, index.valid);
    if (shortlist.size() >= valid_count || shortlist.empty()) break;
    if (shortlist.back().score < config.tau_act - config.expand_margin) break;
    size *= 2;
  }
  out.shortlist_used = shortlist.size();
  std::sort(shortlist.begin(), shortlist.end(), [](const SearchHit& a, const SearchHit& b) { return a.index < b.index; });
  const PQCodebook& cb = index.codebook;
  for (const auto& hit : shortlist) {
    if (!scene.labeled[hit.index]) continue;
    const auto row = index.codes.row(hit.index);
    Eigen::VectorXd decoded(cb.dim);
    for (int s = 0; s < cb.m; ++s) {
      const float* c = cb.centroid(s, row[static_cast<std::size_t>(s)]);
      for (int j = 0; j < cb.dsub; ++j) decoded[s * cb.dsub + j] = c[j];
    }
    const double norm = decoded.norm();
    if (!(norm > 0.0)) continue;
    const double score = decoded.dot(q) / norm;
    if (score >= config.tau_act) {
      out.active.push_back(hit.index);
      out.scores.push_back(score);
    }
  }
  return out;
}

std::vector<std::uint8_t> active_flags(const Selection& selection, std::size_t gaussian_count) {
  std::vector<std::uint8_t> flags(gaussian_count, 0);
  for (auto g : selection.active) {
    if (g >= gaussian_count) throw ConfigError("selected Gaussian outside the scene");
    flags[g] = 1;
  }
  return flags;
}

Grid2D<float> activation_map(const PixelHits& hits, std::span<const std::uint8_t> active) {
  Grid2D<float> out(hits.width, hits.height, 0.0f);
  for (std::size_t p = 0; p < out.size(); ++p) {
    const auto idx = hits.indices_at(p);
    const auto wts = hits.weights_at(p);
    double a = 0.0;
    for (std::size_t t = 0; t < idx.size(); ++t)
      if (idx[t] < active.size() && active[idx[t]]) a += wts[t];
    out[p] = static_cast<float>(a);
  }
  return out;
}

BinaryMask activation_mask(const PixelHits& hits, std::span<const std::uint8_t> active, double gamma) {
  BinaryMask out(hits.width, hits.height, 0);
  for (std::size_t p = 0; p < out.size(); ++p) {
    const auto idx = hits.indices_at(p);
    const auto wts = hits.weights_at(p);
    double a = 0.0;
    for (std::size_t t = 0; t < idx.size(); ++t)
      if (idx[t] < active.size() && active[idx[t]]) a += wts[t];
    out[p] = a >= gamma ? 1 : 0;
  }
  return out;
}

double mask_iou(const BinaryMask& pred, const BinaryMask& gt) {
  if (!pred.same_shape(gt)) throw ConfigError("predicted and ground-truth masks differ in shape");
  std::size_t inter = 0, uni = 0;
  for (std::size_t p = 0; p < pred.size(); ++p) {
    inter += pred[p] && gt[p];
    uni += pred[p] || gt[p];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

SelectionMetrics miou_macc(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt, double acc_threshold) {
  if (pred.size() != gt.size()) throw ConfigError("prediction and ground-truth lists differ in length");
  if (pred.empty()) throw ConfigError("no query-frame pairs to evaluate");
  SelectionMetrics m;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double iou = mask_iou(pred[i], gt[i]);
    m.ious.push_back(iou);
    m.miou += iou;
    hits += iou >= acc_threshold;
  }
  m.miou /= static_cast<double>(pred.size());
  m.macc = static_cast<double>(hits) / static_cast<double>(pred.size());
  return m;
}

std::vector<double> default_tau_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 18; ++i) grid.push_back(0.5 + 0.025 * i);
  return grid;
}

TauSearch grid_search_tau(std::span<const double> grid, const std::function<double(double)>& score) {
  if (grid.empty()) throw ConfigError("empty tau grid");
  TauSearch out;
  bool first = true;
  for (double tau : grid) {
    const double s = score(tau);
    out.scores.push_back(s);
    if (first || s > out.best_score || (s == out.best_score && tau < out.best_tau)) {
      out.best_score = s;
      out.best_tau = tau;
      first = false;
    }
  }
  return out;
}

SelectionReport evaluate_selection(const GaussianScene& scene, const PQIndex& index, std::span<const PixelHits> hits,
                                   std::span<const Eigen::VectorXf> queries, std::span<const EvalPair> pairs,
                                   const QueryConfig& config, ScoreMode mode) {
  std::vector<std::vector<std::uint8_t>> flags(queries.size());
  parallel_for(0, queries.size(), [&](std::size_t q) {
    flags[q] = active_flags(select_gaussians(scene, index, queries[q], config, mode), scene.size());
  });
  SelectionReport report;
  report.predicted.resize(pairs.size());
  std::vector<BinaryMask> gts;
  for (const auto& p : pairs) {
    if (p.query >= queries.size() || p.view >= hits.size()) throw ConfigError("evaluation pair out of range");
    gts.push_back(p.gt);
  }
  parallel_for(0, pairs.size(), [&](std::size_t i) {
    report.predicted[i] = activation_mask(hits[pairs[i].view], flags[pairs[i].query], config.gamma);
  });
  report.metrics = miou_macc(report.predicted, gts);
  return report;
}

TauSearch grid_search_tau(const GaussianScene& scene, const PQIndex& index, std::span<const PixelHits> hits,
                          std::span<const Eigen::VectorXf> queries, std::span<const EvalPair> pairs,
                          const QueryConfig& config, std::span<const double> grid, ScoreMode mode) {
  return grid_search_tau(grid, [&](double tau) {
    QueryConfig c = config;
    c.tau_act = tau;
    return evaluate_selection(scene, index, hits, queries, pairs, c, mode).metrics.miou;
  });
}

void TransferConfig::check() const {
  if (knn_k < 1) throw ConfigError("knn_k must be >= 1");
  if (!(mahal_sigma > 0.0)) throw ConfigError("mahal_sigma must be positive");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
}

TransferResult transfer_to_points(const GaussianScene& scene, std::span<const Eigen::Vector3d> points,
                                  const RowMatrixf& classes, const TransferConfig& config) {
  config.check();
  if (classes.rows() == 0) throw ConfigError("no class embeddings");
  if (!scene.descriptors) throw ConfigError("scene has no descriptors");
  const RowMatrixf& desc = *scene.descriptors;
  if (classes.cols() != desc.cols()) throw ConfigError("class embedding dimension does not match the scene");
  const auto c_count = static_cast<int>(classes.rows());
  RowMatrixd cls = classes.cast<double>();
  for (int c = 0; c < c_count; ++c) {
    const double norm = cls.row(c).norm();
    if (!(norm > 0.0)) throw ConfigError("class embedding " + std::to_string(c) + " is zero");
    cls.row(c) /= norm;
  }

  std::vector<std::uint32_t> ids;
  std::vector<Eigen::Vector3d> centers;
  for (std::size_t g = 0; g < scene.size(); ++g)
    if (scene.labeled[g]) {
      ids.push_back(static_cast<std::uint32_t>(g));
      centers.push_back(scene.gaussians[g].position.cast<double>());
    }
  std::vector<Eigen::Matrix3d> precision(ids.size());
  std::vector<Eigen::VectorXd> probs(ids.size());
  parallel_for(0, ids.size(), [&](std::size_t i) {
    const Gaussian& g = scene.gaussians[ids[i]];
    const Eigen::Matrix3d r = g.rotation.normalized().toRotationMatrix().cast<double>();
    const Eigen::Vector3d s = g.scale.cast<double>();
    precision[i] = r * s.cwiseProduct(s).cwiseInverse().asDiagonal() * r.transpose();
    Eigen::VectorXd logits = cls * desc.row(ids[i]).cast<double>().transpose() / config.temperature;
    logits.array() -= logits.maxCoeff();
    Eigen::VectorXd e = logits.array().exp();
    probs[i] = e / e.sum();
  });

  const KdTree tree(centers);
  TransferResult out;
  out.probabilities = RowMatrixf::Zero(static_cast<Eigen::Index>(points.size()), c_count);
  out.labels.assign(points.size(), -1);
  const double gate_sq = config.mahal_sigma * config.mahal_sigma;
  parallel_for(0, points.size(), [&](std::size_t v) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(c_count);
    double total = 0.0;
    for (const auto& nb : tree.nearest(points[v], config.knn_k)) {
      const Eigen::Vector3d d = points[v] - centers[nb.index];
      const double d2 = d.dot(precision[nb.index] * d);
      if (!(d2 <= gate_sq)) continue;
      const double w = std::exp(-0.5 * d2) * scene.gaussians[ids[nb.index]].opacity;
      if (!(w > 0.0)) continue;
      acc += w * probs[nb.index];
      total += w;
    }
    if (!(total > 0.0)) return;
    acc /= acc.sum();
    out.probabilities.row(static_cast<Eigen::Index>(v)) = acc.cast<float>().transpose();
    Eigen::Index best = 0;
    acc.maxCoeff(&best);
    out.labels[v] = static_cast<int>(best);
  });
  for (int l : out.labels) out.unlabeled += l < 0;
  return out;
}

double label_accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw ConfigError("label lists differ in length");
  if (predicted.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) ok += predicted[i] >= 0 && predicted[i] == truth[i];
  return static_cast<double>(ok) / static_cast<double>(predicted.size());
}

}  // namespace profuse
