#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "profuse/grid.hpp"

namespace profuse {

using RowMatrixf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ViewId = std::uint32_t;
using MaskId = std::uint16_t;

/// Pinhole camera. Image coordinates are continuous with pixel (x, y)
/// covering [x, x+1) x [y, y+1), so its center sits at (x + 0.5, y + 0.5).
struct Camera {
  Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
  Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();
  int width = 1;
  int height = 1;

  double fx() const { return intrinsics(0, 0); }
  double fy() const { return intrinsics(1, 1); }
  double cx() const { return intrinsics(0, 2); }
  double cy() const { return intrinsics(1, 2); }

  Eigen::Matrix3d rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return world_to_camera.topRightCorner<3, 1>(); }
  Eigen::Vector3d center() const { return -rotation().transpose() * translation(); }
  /// World-space optical axis.
  Eigen::Vector3d forward() const { return rotation().row(2).transpose(); }

  Eigen::Vector3d to_camera(const Eigen::Vector3d& world) const {
    return rotation() * world + translation();
  }
  /// Continuous pixel coordinates of a world point (no depth check).
  Eigen::Vector2d project(const Eigen::Vector3d& world) const;
  /// Unit world-space direction of the ray through a continuous pixel coordinate.
  Eigen::Vector3d ray_direction(const Eigen::Vector2d& pixel) const;
  bool in_image(const Eigen::Vector2d& pixel) const {
    return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < width && pixel.y() < height;
  }

  static Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                        const Eigen::Vector3d& up, double focal, int width, int height);

  std::vector<std::string> validate() const;
};

struct Gaussian {
  Eigen::Vector3f position = Eigen::Vector3f::Zero();
  Eigen::Vector3f scale = Eigen::Vector3f::Constant(0.01f);
  Eigen::Quaternionf rotation = Eigen::Quaternionf::Identity();
  float opacity = 0.8f;
  Eigen::Vector3f color = Eigen::Vector3f::Constant(0.5f);

  /// R diag(scale^2) R^T
  Eigen::Matrix3d covariance() const;
};

struct GaussianScene {
  std::vector<Gaussian> gaussians;
  /// N x D unit rows once registered. Rows of unlabeled Gaussians are zero.
  std::optional<RowMatrixf> descriptors;
  /// 1 where the Gaussian received at least one registration contribution.
  std::vector<std::uint8_t> labeled;
  int descriptor_dim = 0;

  std::size_t size() const { return gaussians.size(); }
  bool has_descriptors() const { return descriptors.has_value(); }
};

/// Per-view dictionary of masks and their embeddings. Label 0 is "no mask";
/// label k >= 1 refers to embeddings row k - 1.
struct MaskSet {
  ViewId view_id = 0;
  LabelMap labels;
  RowMatrixf embeddings;

  int mask_count() const { return static_cast<int>(embeddings.rows()); }
  BinaryMask mask(MaskId id) const;
};

using ColorImage = Grid2D<std::array<std::uint8_t, 3>>;

struct View {
  ViewId id = 0;
  Camera camera;
  MaskSet masks;
  ColorImage colors;  // may be empty
};

struct ViewSet {
  int descriptor_dim = 0;
  std::vector<View> views;

  std::size_t size() const { return views.size(); }
  /// Position of a view id in `views`; throws ConfigError if absent.
  std::size_t index_of(ViewId id) const;
  std::vector<Camera> cameras() const;
};

/// Dense correspondence from every pixel of src_view to a continuous
/// coordinate in dst_view, with per-pixel confidence in [0, 1].
struct WarpField {
  ViewId src_view = 0;
  ViewId dst_view = 0;
  Grid2D<float> warp_x;
  Grid2D<float> warp_y;
  Grid2D<float> confidence;

  int width() const { return confidence.width(); }
  int height() const { return confidence.height(); }
};

struct ClusterConfig {
  double tau_alpha = 0.6;
  double tau_iou = 0.5;
  double tau_box = 0.5;
  int s_min = 2;
  int v_min = 2;
  int neighbors_k = 2;
  double neighbor_lambda = 0.5;
  double vis_threshold = 0.5;

  void check() const;
};

enum class TopKMode { largest_weight, front_to_back };

struct RenderConfig {
  int top_k = 10;
  double alpha_cutoff = 1.0 / 255.0;
  double sigma_cutoff = 3.0;
  double near_plane = 0.01;
  TopKMode mode = TopKMode::largest_weight;

  void check() const;
};

struct QueryConfig {
  double tau_act = 0.85;
  double gamma = 0.5;
  int shortlist_size = 128;
  /// The shortlist doubles while its weakest approximate score stays within
  /// this margin of tau_act.
  double expand_margin = 0.05;

  void check() const;
};

struct ValidationIssue {
  std::size_t index = 0;
  std::string field;
  std::string message;
};

std::vector<ValidationIssue> validate_scene(const GaussianScene& scene);

/// Throws ConfigError unless every embedding row has unit norm and labels are in range.
void check_mask_set(const MaskSet& masks, int descriptor_dim);

}  // namespace profuse
