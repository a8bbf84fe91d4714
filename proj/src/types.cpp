#include "profuse/types.hpp"

#include <cmath>
#include <sstream>

#include "profuse/errors.hpp"
#include "profuse/parallel.hpp"

namespace profuse {

namespace {
int g_threads = 1;
}

void set_thread_count(int threads) {
  g_threads = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}
int thread_count() { return g_threads; }

Eigen::Vector2d Camera::project(const Eigen::Vector3d& world) const {
  const Eigen::Vector3d c = to_camera(world);
  return {fx() * c.x() / c.z() + intrinsics(0, 1) * c.y() / c.z() + cx(), fy() * c.y() / c.z() + cy()};
}

Eigen::Vector3d Camera::ray_direction(const Eigen::Vector2d& pixel) const {
  const double y = (pixel.y() - cy()) / fy();
  const double x = (pixel.x() - cx() - intrinsics(0, 1) * y) / fx();
  return (rotation().transpose() * Eigen::Vector3d(x, y, 1.0)).normalized();
}

Camera Camera::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                       const Eigen::Vector3d& up, double focal, int width, int height) {
  const Eigen::Vector3d z = (target - eye).normalized();
  Eigen::Vector3d x = z.cross(up);
  if (x.norm() < 1e-9) x = z.unitOrthogonal();
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  Camera cam;
  Eigen::Matrix3d r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  cam.world_to_camera.setIdentity();
  cam.world_to_camera.topLeftCorner<3, 3>() = r;
  cam.world_to_camera.topRightCorner<3, 1>() = -r * eye;
  cam.intrinsics << focal, 0.0, width / 2.0, 0.0, focal, height / 2.0, 0.0, 0.0, 1.0;
  cam.width = width;
  cam.height = height;
  return cam;
}

std::vector<std::string> Camera::validate() const {
  std::vector<std::string> issues;
  if (!(fx() > 0.0)) issues.emplace_back("fx must be positive");
  if (!(fy() > 0.0)) issues.emplace_back("fy must be positive");
  if (intrinsics(1, 0) != 0.0 || intrinsics(2, 0) != 0.0 || intrinsics(2, 1) != 0.0 || intrinsics(2, 2) != 1.0)
    issues.emplace_back("intrinsics must be upper triangular with K[2][2] = 1");
  const Eigen::Matrix3d r = rotation();
  if (!(r * r.transpose()).isIdentity(1e-6) || std::abs(r.determinant() - 1.0) > 1e-6)
    issues.emplace_back("rotation block is not orthonormal");
  const Eigen::RowVector4d last = world_to_camera.row(3);
  if (!last.isApprox(Eigen::RowVector4d(0, 0, 0, 1)))
    issues.emplace_back("last row of world_to_camera must be [0 0 0 1]");
  if (width < 1 || height < 1) issues.emplace_back("image size must be at least 1x1");
  return issues;
}

Eigen::Matrix3d Gaussian::covariance() const {
  const Eigen::Matrix3d r = rotation.cast<double>().normalized().toRotationMatrix();
  const Eigen::Vector3d s2 = scale.cast<double>().array().square();
  return r * s2.asDiagonal() * r.transpose();
}

BinaryMask MaskSet::mask(MaskId id) const {
  BinaryMask out(labels.width(), labels.height(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] == id ? 1 : 0;
  return out;
}

std::size_t ViewSet::index_of(ViewId id) const {
  for (std::size_t i = 0; i < views.size(); ++i)
    if (views[i].id == id) return i;
  throw ConfigError("unknown view id " + std::to_string(id));
}

std::vector<Camera> ViewSet::cameras() const {
  std::vector<Camera> out;
  out.reserve(views.size());
  for (const auto& v : views) out.push_back(v.camera);
  return out;
}

void ClusterConfig::check() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  // Thresholds above 1 are accepted: they reject everything, which callers use to disable a gate.
  if (tau_alpha < 0.0) throw ConfigError("tau_alpha must be non-negative");
  if (tau_iou < 0.0) throw ConfigError("tau_iou must be non-negative");
  if (tau_box < 0.0) throw ConfigError("tau_box must be non-negative");
  if (s_min < 1) throw ConfigError("s_min must be >= 1");
  if (v_min < 1) throw ConfigError("v_min must be >= 1");
  if (neighbors_k < 1) throw ConfigError("neighbors_k must be >= 1");
  if (!unit(vis_threshold)) throw ConfigError("vis_threshold must be in [0, 1]");
}

void RenderConfig::check() const {
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (!(alpha_cutoff > 0.0 && alpha_cutoff < 1.0)) throw ConfigError("alpha_cutoff must be in (0, 1)");
  if (!(sigma_cutoff > 0.0)) throw ConfigError("sigma_cutoff must be positive");
  if (!(near_plane > 0.0)) throw ConfigError("near_plane must be positive");
}

void QueryConfig::check() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in [0, 1]");
  if (shortlist_size < 1) throw ConfigError("shortlist_size must be >= 1");
  if (std::isnan(tau_act)) throw ConfigError("tau_act must be a number");
  if (!(expand_margin >= 0.0)) throw ConfigError("expand_margin must be non-negative");
}

std::vector<ValidationIssue> validate_scene(const GaussianScene& scene) {
  std::vector<ValidationIssue> issues;
  auto add = [&](std::size_t i, const char* field, std::string msg) {
    issues.push_back({i, field, std::move(msg)});
  };
  for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
    const Gaussian& g = scene.gaussians[i];
    if (!g.position.allFinite()) add(i, "position", "non-finite position");
    if (!(g.scale.array() > 0.0f).all() || !g.scale.allFinite()) add(i, "scale", "scale components must be positive");
    if (std::abs(static_cast<double>(g.rotation.norm()) - 1.0) > 1e-6) add(i, "rotation", "quaternion is not unit norm");
    if (!(g.opacity >= 0.0f && g.opacity <= 1.0f)) {
      std::ostringstream os;
      os << "opacity " << g.opacity << " outside [0, 1]";
      add(i, "opacity", os.str());
    }
    if (!(g.color.array() >= 0.0f).all() || !(g.color.array() <= 1.0f).all()) add(i, "color", "color outside [0, 1]");
  }
  if (scene.descriptors) {
    const RowMatrixf& d = *scene.descriptors;
    if (static_cast<std::size_t>(d.rows()) != scene.gaussians.size())
      add(0, "descriptors", "descriptor count differs from gaussian count");
    if (d.cols() != scene.descriptor_dim) add(0, "descriptors", "descriptor width differs from descriptor_dim");
    if (!scene.labeled.empty() && scene.labeled.size() != static_cast<std::size_t>(d.rows()))
      add(0, "labeled", "label flag count differs from descriptor count");
    const auto rows = std::min<std::size_t>(static_cast<std::size_t>(d.rows()), scene.gaussians.size());
    for (std::size_t i = 0; i < rows; ++i) {
      const bool labeled = scene.labeled.empty() || scene.labeled[i] != 0;
      const double norm = d.row(static_cast<Eigen::Index>(i)).cast<double>().norm();
      if (labeled && std::abs(norm - 1.0) > 1e-5) {
        std::ostringstream os;
        os << "descriptor norm " << norm << " is not 1";
        add(i, "descriptors", os.str());
      } else if (!labeled && norm != 0.0) {
        add(i, "descriptors", "unlabeled gaussian carries a non-zero descriptor");
      }
    }
  }
  return issues;
}

void check_mask_set(const MaskSet& masks, int descriptor_dim) {
  const std::string where = "view " + std::to_string(masks.view_id);
  if (masks.embeddings.rows() > 0 && masks.embeddings.cols() != descriptor_dim)
    throw ConfigError(where + ": embedding dimension " + std::to_string(masks.embeddings.cols()) +
                      " does not match descriptor_dim " + std::to_string(descriptor_dim));
  const int k = masks.mask_count();
  for (auto v : masks.labels.data())
    if (v > k) throw ConfigError(where + ": label " + std::to_string(v) + " exceeds mask count " + std::to_string(k));
  for (Eigen::Index r = 0; r < masks.embeddings.rows(); ++r) {
    const double n = masks.embeddings.row(r).cast<double>().norm();
    if (std::abs(n - 1.0) > 1e-5)
      throw ConfigError(where + ": embedding " + std::to_string(r + 1) + " is not unit norm");
  }
}

}  // namespace profuse
