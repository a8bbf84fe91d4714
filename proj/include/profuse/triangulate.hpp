#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "profuse/container_io.hpp"
#include "profuse/types.hpp"

namespace profuse {

enum class TriangulationStatus { ok, near_parallel, behind_camera };

struct Triangulation {
  TriangulationStatus status = TriangulationStatus::ok;
  Eigen::Vector3d point = Eigen::Vector3d::Zero();
  /// Half the closest-approach distance between the two rays.
  double residual = 0.0;

  bool ok() const { return status == TriangulationStatus::ok; }
};

/// Midpoint of closest approach between two rays with unit directions.
/// Symmetric: swapping the rays gives a bit-identical point.
Triangulation triangulate_rays(const Eigen::Vector3d& origin_a, const Eigen::Vector3d& dir_a,
                               const Eigen::Vector3d& origin_b, const Eigen::Vector3d& dir_b,
                               double min_sine = 1e-4);

/// Back-projects two continuous pixel coordinates and triangulates them.
/// Rejects near-parallel rays and midpoints behind either camera.
Triangulation triangulate_pair(const Camera& cam_a, const Eigen::Vector2d& pix_a, const Camera& cam_b,
                               const Eigen::Vector2d& pix_b);

struct SeedPoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  ViewId src_view = 0;
  Eigen::Vector2i src_pixel = Eigen::Vector2i::Zero();
  ViewId dst_view = 0;
  Eigen::Vector2d dst_pixel = Eigen::Vector2d::Zero();
  double confidence = 0.0;
  Eigen::Vector3f color = Eigen::Vector3f::Constant(0.5f);
};

struct SeedConfig {
  double tau_alpha = 0.6;
  int stride = 4;
  /// Voxel edge for deduplication; 0 disables it, infinity keeps a single seed.
  double dedup_radius = 0.01;
  /// Seeds whose reprojection misses either supporting pixel by more than this are dropped.
  double max_reprojection_px = 2.0;

  void check() const;
};

struct SeedStats {
  std::size_t sampled = 0;
  std::size_t low_confidence = 0;
  std::size_t out_of_image = 0;
  std::size_t near_parallel = 0;
  std::size_t behind_camera = 0;
  std::size_t reprojection = 0;
  std::size_t accepted = 0;
  std::size_t after_dedup = 0;
};

/// Samples every warp on a stride grid, triangulates confident matches and
/// deduplicates on a voxel grid (highest confidence wins, then sampling order).
/// Throws EmptySceneError when nothing survives.
std::vector<SeedPoint> extract_seeds(const ViewSet& views, std::span<const WarpField> warps,
                                     const SeedConfig& config, SeedStats* stats = nullptr);

struct InitConfig {
  double scale_factor = 0.5;
  /// Neighborhood distance used when fewer than four seeds exist.
  double fallback_distance = 0.05;
  float initial_opacity = 0.8f;

  void check() const;
};

/// One isotropic Gaussian per seed, sized from the distance to its third nearest neighbor.
GaussianScene init_gaussians(std::span<const SeedPoint> seeds, const InitConfig& config);

}  // namespace profuse
