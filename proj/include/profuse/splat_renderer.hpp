#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "profuse/types.hpp"

namespace profuse {

struct ProjectedGaussian {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
  /// Inverse of cov.
  Eigen::Matrix2d conic = Eigen::Matrix2d::Identity();
  double depth = 0.0;
  /// Pixel radius that bounds the sigma_cutoff ellipse.
  double radius = 0.0;
};

/// EWA projection: perspective mean, cov2d = J W Sigma W^T J^T with J the
/// projection Jacobian at the mean. Returns nullopt when the mean is in front
/// of the near plane or the footprint misses the image.
std::optional<ProjectedGaussian> project_gaussian(const Gaussian& g, const Camera& cam, double sigma_cutoff = 3.0,
                                                  double near_plane = 0.01);

/// Squared Mahalanobis distance of a continuous pixel coordinate to the footprint.
inline double footprint_distance_sq(const ProjectedGaussian& p, double px, double py) {
  const double dx = px - p.mean.x();
  const double dy = py - p.mean.y();
  return p.conic(0, 0) * dx * dx + 2.0 * p.conic(0, 1) * dx * dy + p.conic(1, 1) * dy * dy;
}

/// Clamped per-hit alpha: opacity * exp(-d^2 / 2), capped at 0.999.
inline double hit_alpha(double opacity, double distance_sq) {
  return std::min(0.999, std::max(0.0, opacity * std::exp(-0.5 * distance_sq)));
}

/// Up to top_k (gaussian, weight) pairs per pixel in depth order, with
/// weight = T * alpha. total_weight holds the sum over the full, untruncated
/// depth list, i.e. 1 - prod(1 - alpha).
struct PixelHits {
  int width = 0;
  int height = 0;
  int top_k = 0;
  std::vector<std::uint32_t> index;  // H * W * top_k
  std::vector<float> weight;         // H * W * top_k, 0 for unused slots
  std::vector<std::uint16_t> count;  // H * W
  std::vector<float> total_weight;   // H * W

  std::size_t pixel(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
  }
  std::span<const std::uint32_t> indices_at(std::size_t p) const {
    return {index.data() + p * static_cast<std::size_t>(top_k), count[p]};
  }
  std::span<const float> weights_at(std::size_t p) const {
    return {weight.data() + p * static_cast<std::size_t>(top_k), count[p]};
  }
  /// Sum of retained weights at a pixel.
  double retained_weight(std::size_t p) const;

  friend bool operator==(const PixelHits&, const PixelHits&) = default;
};

/// Tile-binned forward pass. Per pixel: gather footprints within sigma_cutoff,
/// sort by (depth, index), drop alpha < alpha_cutoff, composite front to back
/// and keep top_k hits (largest weight, or first in depth order).
PixelHits render_hits(const GaussianScene& scene, const Camera& cam, const RenderConfig& config);

/// Pixel on iff its retained weights sum to at least threshold.
BinaryMask visibility_mask(const PixelHits& hits, double threshold = 0.5);

}  // namespace profuse
