#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "profuse/pq_index.hpp"
#include "profuse/splat_renderer.hpp"
#include "profuse/types.hpp"

namespace profuse {

/// Unit-normalized copy; throws ConfigError on a zero or non-finite query.
Eigen::VectorXf normalize_query(const Eigen::VectorXf& query);

enum class ScoreMode {
  /// ADC shortlist, re-scored with decoded descriptors.
  pq,
  /// Every labeled Gaussian scored with its stored descriptor.
  exact,
};

struct Selection {
  std::vector<std::uint32_t> active;  // ascending
  std::vector<double> scores;         // aligned with active
  std::size_t shortlist_used = 0;
};

Selection select_gaussians(const GaussianScene& scene, const PQIndex& index, const Eigen::VectorXf& query,
                           const QueryConfig& config, ScoreMode mode = ScoreMode::pq);

/// Per-Gaussian 0/1 flags from a selection.
std::vector<std::uint8_t> active_flags(const Selection& selection, std::size_t gaussian_count);

/// A(p) = sum of retained weights whose Gaussian is active.
Grid2D<float> activation_map(const PixelHits& hits, std::span<const std::uint8_t> active);
BinaryMask activation_mask(const PixelHits& hits, std::span<const std::uint8_t> active, double gamma);

/// IoU with the convention that two empty masks agree perfectly.
double mask_iou(const BinaryMask& pred, const BinaryMask& gt);

struct SelectionMetrics {
  double miou = 0.0;
  double macc = 0.0;
  std::vector<double> ious;
};

SelectionMetrics miou_macc(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt,
                           double acc_threshold = 0.25);

/// 0.5, 0.525, ..., 0.95.
std::vector<double> default_tau_grid();

struct TauSearch {
  double best_tau = 0.0;
  double best_score = 0.0;
  std::vector<double> scores;  // aligned with the grid
};

/// Maximizes score(tau) over the grid; ties go to the smaller tau.
TauSearch grid_search_tau(std::span<const double> grid, const std::function<double(double)>& score);

/// One query evaluated on one view against a ground-truth mask.
struct EvalPair {
  std::size_t query = 0;
  std::size_t view = 0;  // position in the hit list
  BinaryMask gt;
};

struct SelectionReport {
  SelectionMetrics metrics;
  std::vector<BinaryMask> predicted;  // aligned with the pairs
};

SelectionReport evaluate_selection(const GaussianScene& scene, const PQIndex& index, std::span<const PixelHits> hits,
                                   std::span<const Eigen::VectorXf> queries, std::span<const EvalPair> pairs,
                                   const QueryConfig& config, ScoreMode mode = ScoreMode::pq);

/// grid_search_tau over mean IoU of evaluate_selection.
TauSearch grid_search_tau(const GaussianScene& scene, const PQIndex& index, std::span<const PixelHits> hits,
                          std::span<const Eigen::VectorXf> queries, std::span<const EvalPair> pairs,
                          const QueryConfig& config, std::span<const double> grid, ScoreMode mode = ScoreMode::pq);

struct TransferConfig {
  int knn_k = 64;
  double mahal_sigma = 3.0;
  double temperature = 1.0;

  void check() const;
};

struct TransferResult {
  RowMatrixf probabilities;  // V x C, zero rows for unlabeled vertices
  std::vector<int> labels;   // -1 when unlabeled
  std::size_t unlabeled = 0;
};

/// Label transfer from labeled Gaussians to points: nearest knn_k centers,
/// Mahalanobis gate under each Gaussian's covariance, weights
/// exp(-d^2/2) * opacity, per-candidate softmax over cosine logits.
TransferResult transfer_to_points(const GaussianScene& scene, std::span<const Eigen::Vector3d> points,
                                  const RowMatrixf& classes, const TransferConfig& config = {});

/// Fraction of points whose label matches; unlabeled points count as wrong.
double label_accuracy(std::span<const int> predicted, std::span<const int> truth);

}  // namespace profuse
