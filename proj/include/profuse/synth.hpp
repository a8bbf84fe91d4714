#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "profuse/container_io.hpp"
#include "profuse/types.hpp"

namespace profuse {

enum class ObjectKind { sphere, box, mixed };

struct SynthSpec {
  int object_count = 3;
  ObjectKind object_kind = ObjectKind::sphere;
  int descriptor_dim = 16;
  int view_count = 4;
  int width = 160;
  int height = 120;
  /// Focal length in units of image width.
  double focal_scale = 1.0;
  double camera_radius = 3.5;
  double camera_elevation_deg = 30.0;
  /// Warp jitter standard deviation in pixels.
  double warp_jitter = 0.0;
  /// Fraction of warp pixels whose confidence is replaced by a uniform draw.
  double confidence_corruption = 0.0;
  /// Probability that a visible (view, object) mask is left out.
  double mask_dropout = 0.0;
  /// Isotropic noise added to mask embeddings before renormalization.
  double embedding_noise = 0.0;
  /// Objects covering fewer pixels than this in a view get no mask there.
  int min_mask_pixels = 20;
  int neighbors_k = 2;
  double neighbor_lambda = 0.5;
  std::uint64_t seed = 7;

  void check() const;
};

SynthSpec synth_spec_from_json(const std::string& text);
std::string synth_spec_to_json(const SynthSpec& spec);

/// Analytic opaque primitive. Spheres use half_extent.x() as the radius.
struct SynthObject {
  ObjectKind kind = ObjectKind::sphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_extent = Eigen::Vector3d::Constant(0.3);
  Eigen::Vector3f color = Eigen::Vector3f::Constant(0.5f);

  /// Smallest positive ray parameter hitting the surface (unit `dir`).
  std::optional<double> intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const;
  /// Signed distance, negative inside.
  double signed_distance(const Eigen::Vector3d& p) const;
  double bounding_radius() const;
};

struct ViewTruth {
  /// Object index + 1 of the first surface hit per pixel, 0 for background.
  LabelMap object_map;
  /// World-space surface point per pixel; NaN for background.
  Grid2D<Eigen::Vector3f> surface;
  /// Object index per mask id; entry 0 is unused (-1).
  std::vector<int> mask_object;
};

struct GroundTruth {
  std::vector<SynthObject> objects;
  RowMatrixf object_embeddings;
  std::vector<ViewTruth> views;  // aligned with ViewSet::views

  /// Index of the object whose surface is nearest to p.
  int nearest_object(const Eigen::Vector3d& p) const;
};

struct SynthScene {
  ViewSet views;
  std::vector<WarpField> warps;
  GroundTruth truth;
  SynthSpec spec;
  /// Number of times the camera layout was rejected as degenerate.
  int regenerations = 0;
};

SynthScene generate(const SynthSpec& spec);

/// Writes manifest.json, per-view files, warps, ground_truth.pf and the
/// point-evaluation files (points.pf, point_labels.pf, classes.pf) into dir.
void write_synth(const SynthScene& scene, const std::filesystem::path& dir);

void save_ground_truth(const std::filesystem::path& path, const GroundTruth& truth, const ViewSet& views);
GroundTruth load_ground_truth(const std::filesystem::path& path, const ViewSet& views);

/// Visible surface points sampled on a pixel grid, with the owning object index.
struct LabeledPoints {
  std::vector<Eigen::Vector3d> points;
  std::vector<int> labels;
};
LabeledPoints sample_surface_points(const GroundTruth& truth, int stride);

/// Ranks the other cameras for `reference` by
/// cos(dir_ref, dir_j) - lambda * dist(ref, j) / max_dist, best first; ties by index.
std::vector<std::size_t> select_neighbors(std::span<const Camera> cameras, std::size_t reference, int k,
                                          double lambda = 0.5);
std::vector<ViewId> select_neighbors(const ViewSet& views, ViewId reference, int k, double lambda = 0.5);

/// Unordered pairs (a < b, view positions) formed by every reference and its k neighbors.
std::vector<std::pair<std::size_t, std::size_t>> neighbor_pairs(std::span<const Camera> cameras, int k,
                                                                 double lambda = 0.5);

/// splitmix64 finalizer, used to derive independent rng streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace profuse
