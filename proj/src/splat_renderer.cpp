#include "profuse/splat_renderer.hpp"

#include <algorithm>
#include <numeric>

#include "profuse/errors.hpp"
#include "profuse/parallel.hpp"

namespace profuse {

namespace {

constexpr int kTile = 16;

struct Candidate {
  std::uint32_t gaussian;
  double alpha;
  double weight;
};

}  // namespace

std::optional<ProjectedGaussian> project_gaussian(const Gaussian& g, const Camera& cam, double sigma_cutoff,
                                                  double near_plane) {
  const Eigen::Vector3d mean_world = g.position.cast<double>();
  const Eigen::Vector3d t = cam.to_camera(mean_world);
  if (t.z() <= near_plane) return std::nullopt;
  const double fx = cam.fx(), fy = cam.fy(), skew = cam.intrinsics(0, 1);
  const double iz = 1.0 / t.z();
  Eigen::Matrix<double, 2, 3> jac;
  jac << fx * iz, skew * iz, -(fx * t.x() + skew * t.y()) * iz * iz, 0.0, fy * iz, -fy * t.y() * iz * iz;
  const Eigen::Matrix3d w = cam.rotation();
  const Eigen::Matrix<double, 2, 3> jw = jac * w;
  ProjectedGaussian p;
  p.cov = jw * g.covariance() * jw.transpose();
  p.cov(0, 1) = p.cov(1, 0) = 0.5 * (p.cov(0, 1) + p.cov(1, 0));
  const double det = p.cov.determinant();
  if (!(det > 0.0) || !std::isfinite(det)) return std::nullopt;
  p.conic << p.cov(1, 1) / det, -p.cov(0, 1) / det, -p.cov(1, 0) / det, p.cov(0, 0) / det;
  p.mean = {fx * t.x() * iz + skew * t.y() * iz + cam.cx(), fy * t.y() * iz + cam.cy()};
  p.depth = t.z();
  const double mid = 0.5 * (p.cov(0, 0) + p.cov(1, 1));
  const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
  p.radius = sigma_cutoff * std::sqrt(lambda_max) + 1.0;
  if (p.mean.x() + p.radius < 0.0 || p.mean.y() + p.radius < 0.0 || p.mean.x() - p.radius > cam.width ||
      p.mean.y() - p.radius > cam.height)
    return std::nullopt;
  return p;
}

double PixelHits::retained_weight(std::size_t p) const {
  double s = 0.0;
  for (float w : weights_at(p)) s += w;
  return s;
}

PixelHits render_hits(const GaussianScene& scene, const Camera& cam, const RenderConfig& config) {
  config.check();
  PixelHits hits;
  hits.width = cam.width;
  hits.height = cam.height;
  hits.top_k = config.top_k;
  const std::size_t pixels = static_cast<std::size_t>(cam.width) * static_cast<std::size_t>(cam.height);
  const auto k = static_cast<std::size_t>(config.top_k);
  hits.index.assign(pixels * k, 0);
  hits.weight.assign(pixels * k, 0.0f);
  hits.count.assign(pixels, 0);
  hits.total_weight.assign(pixels, 0.0f);

  const std::size_t n = scene.size();
  std::vector<std::optional<ProjectedGaussian>> projected(n);
  parallel_for(0, n, [&](std::size_t i) {
    projected[i] = project_gaussian(scene.gaussians[i], cam, config.sigma_cutoff, config.near_plane);
  });

  const int tiles_x = (cam.width + kTile - 1) / kTile;
  const int tiles_y = (cam.height + kTile - 1) / kTile;
  std::vector<std::vector<std::uint32_t>> tiles(static_cast<std::size_t>(tiles_x * tiles_y));
  for (std::size_t i = 0; i < n; ++i) {
    if (!projected[i]) continue;
    const auto& p = *projected[i];
    const int x0 = std::max(0, static_cast<int>(std::floor((p.mean.x() - p.radius) / kTile)));
    const int x1 = std::min(tiles_x - 1, static_cast<int>(std::floor((p.mean.x() + p.radius) / kTile)));
    const int y0 = std::max(0, static_cast<int>(std::floor((p.mean.y() - p.radius) / kTile)));
    const int y1 = std::min(tiles_y - 1, static_cast<int>(std::floor((p.mean.y() + p.radius) / kTile)));
    for (int ty = y0; ty <= y1; ++ty)
      for (int tx = x0; tx <= x1; ++tx) tiles[static_cast<std::size_t>(ty * tiles_x + tx)].push_back(
          static_cast<std::uint32_t>(i));
  }
  for (auto& list : tiles) {
    std::sort(list.begin(), list.end(), [&](std::uint32_t a, std::uint32_t b) {
      const double da = projected[a]->depth, db = projected[b]->depth;
      return da != db ? da < db : a < b;
    });
  }

  const double cutoff_sq = config.sigma_cutoff * config.sigma_cutoff;
  parallel_for(0, static_cast<std::size_t>(cam.height), [&](std::size_t row) {
    const int y = static_cast<int>(row);
    std::vector<Candidate> list;
    std::vector<std::size_t> order;
    for (int x = 0; x < cam.width; ++x) {
      const auto& tile = tiles[static_cast<std::size_t>((y / kTile) * tiles_x + x / kTile)];
      list.clear();
      const double px = x + 0.5, py = y + 0.5;
      double transmittance = 1.0;
      double total = 0.0;
      for (std::uint32_t gi : tile) {
        const auto& p = *projected[gi];
        const double d2 = footprint_distance_sq(p, px, py);
        if (d2 > cutoff_sq) continue;
        const double alpha = hit_alpha(scene.gaussians[gi].opacity, d2);
        if (alpha < config.alpha_cutoff) continue;
        const double w = transmittance * alpha;
        list.push_back({gi, alpha, w});
        total += w;
        transmittance *= 1.0 - alpha;
      }
      const std::size_t pix = hits.pixel(x, y);
      hits.total_weight[pix] = static_cast<float>(total);
      const std::size_t keep = std::min(k, list.size());
      order.resize(list.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      if (list.size() > k && config.mode == TopKMode::largest_weight) {
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                          [&](std::size_t a, std::size_t b) {
                            return list[a].weight != list[b].weight ? list[a].weight > list[b].weight : a < b;
                          });
        std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
      }
      for (std::size_t t = 0; t < keep; ++t) {
        hits.index[pix * k + t] = list[order[t]].gaussian;
        hits.weight[pix * k + t] = static_cast<float>(list[order[t]].weight);
      }
      hits.count[pix] = static_cast<std::uint16_t>(keep);
    }
  });
  return hits;
}

BinaryMask visibility_mask(const PixelHits& hits, double threshold) {
  BinaryMask mask(hits.width, hits.height, 0);
  for (std::size_t p = 0; p < mask.size(); ++p) mask[p] = hits.retained_weight(p) >= threshold ? 1 : 0;
  return mask;
}

}  // namespace profuse
