#include "profuse/triangulate.hpp"

#include <array>
#include <cmath>
#include <map>

#include "profuse/errors.hpp"
#include "profuse/parallel.hpp"
#include "profuse/spatial.hpp"

namespace profuse {

Triangulation triangulate_rays(const Eigen::Vector3d& origin_a, const Eigen::Vector3d& dir_a,
                               const Eigen::Vector3d& origin_b, const Eigen::Vector3d& dir_b, double min_sine) {
  Triangulation out;
  if (dir_a.cross(dir_b).norm() < min_sine) {
    out.status = TriangulationStatus::near_parallel;
    return out;
  }
  // Every expression below maps onto its mirror under (a <-> b), so the
  // result does not depend on argument order.
  const Eigen::Vector3d w0 = origin_a - origin_b;
  const double b = dir_a.dot(dir_b);
  const double d = dir_a.dot(w0);
  const double e = dir_b.dot(w0);
  const double denom = 1.0 - b * b;
  const double s = (b * e - d) / denom;
  const double t = (e - b * d) / denom;
  const Eigen::Vector3d pa = origin_a + s * dir_a;
  const Eigen::Vector3d pb = origin_b + t * dir_b;
  out.point = 0.5 * (pa + pb);
  out.residual = 0.5 * (pa - pb).norm();
  if (s <= 0.0 || t <= 0.0) out.status = TriangulationStatus::behind_camera;
  return out;
}

Triangulation triangulate_pair(const Camera& cam_a, const Eigen::Vector2d& pix_a, const Camera& cam_b,
                               const Eigen::Vector2d& pix_b) {
  Triangulation tri = triangulate_rays(cam_a.center(), cam_a.ray_direction(pix_a), cam_b.center(),
                                       cam_b.ray_direction(pix_b));
  if (tri.ok() && (cam_a.to_camera(tri.point).z() <= 0.0 || cam_b.to_camera(tri.point).z() <= 0.0))
    tri.status = TriangulationStatus::behind_camera;
  return tri;
}

void SeedConfig::check() const {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (std::isnan(dedup_radius) || dedup_radius < 0.0) throw ConfigError("dedup_radius must be non-negative");
  if (!(max_reprojection_px > 0.0)) throw ConfigError("max_reprojection_px must be positive");
  if (tau_alpha < 0.0) throw ConfigError("tau_alpha must be non-negative");
}

void InitConfig::check() const {
  if (!(scale_factor > 0.0)) throw ConfigError("scale_factor must be positive");
  if (!(fallback_distance > 0.0)) throw ConfigError("fallback_distance must be positive");
  if (!(initial_opacity >= 0.0f && initial_opacity <= 1.0f)) throw ConfigError("initial_opacity must be in [0, 1]");
}

std::vector<SeedPoint> extract_seeds(const ViewSet& views, std::span<const WarpField> warps,
                                     const SeedConfig& config, SeedStats* stats) {
  config.check();
  std::vector<std::vector<SeedPoint>> per_warp(warps.size());
  std::vector<SeedStats> per_stats(warps.size());
  parallel_for(0, warps.size(), [&](std::size_t wi) {
    const WarpField& warp = warps[wi];
    const View& src = views.views[views.index_of(warp.src_view)];
    const View& dst = views.views[views.index_of(warp.dst_view)];
    const WarpField* reverse = nullptr;
    for (const auto& other : warps)
      if (other.src_view == warp.dst_view && other.dst_view == warp.src_view) reverse = &other;
    SeedStats& st = per_stats[wi];
    const int offset = config.stride / 2;
    for (int y = offset; y < warp.height(); y += config.stride) {
      for (int x = offset; x < warp.width(); x += config.stride) {
        ++st.sampled;
        double conf = warp.confidence(x, y);
        if (conf < config.tau_alpha) {
          ++st.low_confidence;
          continue;
        }
        const Eigen::Vector2d target(warp.warp_x(x, y), warp.warp_y(x, y));
        if (!dst.camera.in_image(target)) {
          ++st.out_of_image;
          continue;
        }
        if (reverse) {
          const int rx = static_cast<int>(std::floor(target.x()));
          const int ry = static_cast<int>(std::floor(target.y()));
          if (reverse->confidence.contains(rx, ry)) conf = std::min(conf, static_cast<double>(reverse->confidence(rx, ry)));
          if (conf < config.tau_alpha) {
            ++st.low_confidence;
            continue;
          }
        }
        const Eigen::Vector2d source(x + 0.5, y + 0.5);
        const Triangulation tri = triangulate_pair(src.camera, source, dst.camera, target);
        if (tri.status == TriangulationStatus::near_parallel) {
          ++st.near_parallel;
          continue;
        }
        if (tri.status == TriangulationStatus::behind_camera) {
          ++st.behind_camera;
          continue;
        }
        const double err_src = (src.camera.project(tri.point) - source).norm();
        const double err_dst = (dst.camera.project(tri.point) - target).norm();
        if (err_src > config.max_reprojection_px || err_dst > config.max_reprojection_px) {
          ++st.reprojection;
          continue;
        }
        SeedPoint seed;
        seed.position = tri.point;
        seed.src_view = warp.src_view;
        seed.src_pixel = {x, y};
        seed.dst_view = warp.dst_view;
        seed.dst_pixel = target;
        seed.confidence = conf;
        if (!src.colors.empty()) {
          const auto& c = src.colors(x, y);
          seed.color = Eigen::Vector3f(c[0], c[1], c[2]) / 255.0f;
        }
        per_warp[wi].push_back(seed);
        ++st.accepted;
      }
    }
  });

  std::vector<SeedPoint> all;
  SeedStats total;
  for (std::size_t wi = 0; wi < warps.size(); ++wi) {
    all.insert(all.end(), per_warp[wi].begin(), per_warp[wi].end());
    const SeedStats& s = per_stats[wi];
    total.sampled += s.sampled;
    total.low_confidence += s.low_confidence;
    total.out_of_image += s.out_of_image;
    total.near_parallel += s.near_parallel;
    total.behind_camera += s.behind_camera;
    total.reprojection += s.reprojection;
    total.accepted += s.accepted;
  }

  std::vector<SeedPoint> kept;
  if (config.dedup_radius > 0.0 && !all.empty()) {
    const bool single_voxel = std::isinf(config.dedup_radius);
    std::map<std::array<std::int64_t, 3>, std::size_t> best;
    for (std::size_t i = 0; i < all.size(); ++i) {
      std::array<std::int64_t, 3> key{0, 0, 0};
      if (!single_voxel)
        for (int a = 0; a < 3; ++a)
          key[static_cast<std::size_t>(a)] =
              static_cast<std::int64_t>(std::floor(all[i].position[a] / config.dedup_radius));
      auto [it, inserted] = best.try_emplace(key, i);
      if (!inserted && all[i].confidence > all[it->second].confidence) it->second = i;
    }
    std::vector<std::uint8_t> keep(all.size(), 0);
    for (const auto& [key, idx] : best) keep[idx] = 1;
    for (std::size_t i = 0; i < all.size(); ++i)
      if (keep[i]) kept.push_back(all[i]);
  } else {
    kept = std::move(all);
  }
  total.after_dedup = kept.size();
  if (stats) *stats = total;
  if (kept.empty()) throw EmptySceneError("no correspondence passed the confidence and geometry checks");
  return kept;
}

GaussianScene init_gaussians(std::span<const SeedPoint> seeds, const InitConfig& config) {
  config.check();
  if (seeds.empty()) throw EmptySceneError("cannot initialize a scene without seeds");
  std::vector<Eigen::Vector3d> positions;
  positions.reserve(seeds.size());
  for (const auto& s : seeds) positions.push_back(s.position);
  const KdTree tree(positions);
  GaussianScene scene;
  scene.gaussians.resize(seeds.size());
  parallel_for(0, seeds.size(), [&](std::size_t i) {
    double dist = config.fallback_distance;
    if (seeds.size() >= 4) {
      // The query point itself is among the four results.
      const auto nn = tree.nearest(positions[i], 4);
      const double d = std::sqrt(nn.back().distance_sq);
      if (d > 0.0) dist = d;
    }
    Gaussian& g = scene.gaussians[i];
    g.position = seeds[i].position.cast<float>();
    g.scale = Eigen::Vector3f::Constant(static_cast<float>(config.scale_factor * dist));
    g.rotation = Eigen::Quaternionf::Identity();
    g.opacity = config.initial_opacity;
    g.color = seeds[i].color;
  });
  return scene;
}

}  // namespace profuse
