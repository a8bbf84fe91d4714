#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <unistd.h>

namespace profuse::fixture {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "profuse_tests" / (name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Camera test_camera(int width, int height, double focal) {
  Camera cam;
  cam.intrinsics << focal, 0.0, width / 2.0, 0.0, focal, height / 2.0, 0.0, 0.0, 1.0;
  cam.width = width;
  cam.height = height;
  return cam;
}

GaussianScene random_scene(std::mt19937_64& rng, int count, int width, int height) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Camera cam = test_camera(width, height);
  GaussianScene scene;
  for (int i = 0; i < count; ++i) {
    Gaussian g;
    const double z = 1.0 + 3.0 * u(rng);
    const Eigen::Vector2d px(u(rng) * width, u(rng) * height);
    g.position = Eigen::Vector3f(static_cast<float>((px.x() - cam.cx()) * z / cam.fx()),
                                 static_cast<float>((px.y() - cam.cy()) * z / cam.fy()), static_cast<float>(z));
    g.scale = Eigen::Vector3f(static_cast<float>(0.01 + 0.1 * u(rng)), static_cast<float>(0.01 + 0.1 * u(rng)),
                              static_cast<float>(0.01 + 0.1 * u(rng)));
    g.rotation = Eigen::Quaternionf(static_cast<float>(u(rng) - 0.5), static_cast<float>(u(rng) - 0.5),
                                    static_cast<float>(u(rng) - 0.5), static_cast<float>(u(rng) - 0.5))
                     .normalized();
    g.opacity = static_cast<float>(0.05 + 0.94 * u(rng));
    scene.gaussians.push_back(g);
  }
  return scene;
}

RowMatrixf random_unit_rows(std::mt19937_64& rng, int rows, int dim) {
  std::normal_distribution<float> n(0.0f, 1.0f);
  RowMatrixf m(rows, dim);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < dim; ++c) m(r, c) = n(rng);
    m.row(r).normalize();
  }
  return m;
}

ClusterFixture random_cluster_fixture(std::uint64_t seed, int max_masks) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  ClusterFixture f;
  const int w = pick(24, 48), h = pick(20, 40);
  const int views = pick(2, 6);
  const int objects = pick(1, std::max(1, std::min(12, max_masks / views)));
  f.config.tau_alpha = 0.3 + 0.5 * u(rng);
  f.config.tau_iou = 0.2 + 0.6 * u(rng);
  f.config.tau_box = 0.2 + 0.6 * u(rng);
  f.config.s_min = pick(1, 3);
  f.config.v_min = pick(1, 3);
  f.config.neighbors_k = pick(1, 4);
  f.config.neighbor_lambda = u(rng);

  struct Rect {
    int x0, y0, x1, y1;
  };
  std::vector<Rect> rects;
  for (int o = 0; o < objects; ++o) {
    const int rw = pick(3, w / 2), rh = pick(3, h / 2);
    const int x0 = pick(0, w - rw), y0 = pick(0, h - rh);
    rects.push_back({x0, y0, x0 + rw, y0 + rh});
  }
  std::vector<Eigen::Vector2d> shift;
  f.views.descriptor_dim = 4;
  for (int v = 0; v < views; ++v) {
    shift.emplace_back(pick(-3, 3), pick(-3, 3));
    View view;
    view.id = static_cast<ViewId>(10 + 3 * v);
    const double ang = 2.0 * std::numbers::pi * v / views;
    view.camera = Camera::look_at({3.0 * std::cos(ang), 3.0 * std::sin(ang), 1.0}, Eigen::Vector3d::Zero(),
                                  Eigen::Vector3d::UnitZ(), w, w, h);
    view.masks.view_id = view.id;
    view.masks.labels = LabelMap(w, h, 0);
    int next = 0;
    for (int o = 0; o < objects; ++o) {
      if (u(rng) < 0.15) continue;
      ++next;
      const Rect& r = rects[static_cast<std::size_t>(o)];
      for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x) {
          const int sx = x + static_cast<int>(shift.back().x()), sy = y + static_cast<int>(shift.back().y());
          if (sx >= 0 && sy >= 0 && sx < w && sy < h) view.masks.labels(sx, sy) = static_cast<std::uint16_t>(next);
        }
    }
    // Overlapping rectangles may erase a label entirely; keep labels dense.
    std::vector<int> remap(static_cast<std::size_t>(next) + 1, 0);
    for (std::size_t p = 0; p < view.masks.labels.size(); ++p) remap[view.masks.labels[p]] = 1;
    int k = 0;
    for (int l = 1; l <= next; ++l) remap[static_cast<std::size_t>(l)] = remap[static_cast<std::size_t>(l)] ? ++k : 0;
    for (std::size_t p = 0; p < view.masks.labels.size(); ++p)
      view.masks.labels[p] = static_cast<std::uint16_t>(remap[view.masks.labels[p]]);
    view.masks.embeddings = random_unit_rows(rng, k, 4);
    f.views.views.push_back(view);

    BinaryMask vis(w, h, 1);
    const int hole = pick(0, 2);
    for (int i = 0; i < hole; ++i) {
      const int cx = pick(0, w - 1), cy = pick(0, h - 1), rad = pick(2, 6);
      for (int y = std::max(0, cy - rad); y < std::min(h, cy + rad); ++y)
        for (int x = std::max(0, cx - rad); x < std::min(w, cx + rad); ++x) vis(x, y) = 0;
    }
    f.vis.push_back(vis);
  }
  std::normal_distribution<double> jitter(0.0, 0.4 * u(rng));
  for (int s = 0; s < views; ++s)
    for (int d = 0; d < views; ++d) {
      if (s == d) continue;
      WarpField wf;
      wf.src_view = f.views.views[static_cast<std::size_t>(s)].id;
      wf.dst_view = f.views.views[static_cast<std::size_t>(d)].id;
      wf.warp_x = Grid2D<float>(w, h, 0.0f);
      wf.warp_y = Grid2D<float>(w, h, 0.0f);
      wf.confidence = Grid2D<float>(w, h, 0.0f);
      const Eigen::Vector2d t = shift[static_cast<std::size_t>(d)] - shift[static_cast<std::size_t>(s)];
      const int bx = pick(0, w - 1), by = pick(0, h - 1), br = pick(0, 8);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          wf.warp_x(x, y) = static_cast<float>(x + 0.5 + t.x() + jitter(rng));
          wf.warp_y(x, y) = static_cast<float>(y + 0.5 + t.y() + jitter(rng));
          const bool blotch = std::abs(x - bx) < br && std::abs(y - by) < br;
          wf.confidence(x, y) = static_cast<float>(blotch ? 0.5 * u(rng) : 0.5 + 0.5 * u(rng));
        }
      f.warps.push_back(std::move(wf));
    }
  return f;
}

SynthRun run_synth(const SynthSpec& spec, const SynthRunConfig& config) {
  SynthRun run;
  run.synth = generate(spec);
  const auto seeds = extract_seeds(run.synth.views, run.synth.warps, config.seeds);
  run.geometry = init_gaussians(seeds, config.init);
  for (const auto& v : run.synth.views.views) {
    run.hits.push_back(render_hits(run.geometry, v.camera, config.render));
    run.vis.push_back(visibility_mask(run.hits.back(), config.cluster.vis_threshold));
  }
  run.edges = build_graph(run.synth.views, run.synth.warps, run.vis, config.cluster);
  run.proposals = extract_proposals(run.edges, run.synth.views, config.cluster);
  run.registered = register_features(run.geometry, run.synth.views, run.proposals, run.hits);
  return run;
}

int mask_object(const SynthRun& run, const MaskNode& node) {
  const auto& truth = run.synth.truth.views[run.synth.views.index_of(node.view)];
  return node.mask < truth.mask_object.size() ? truth.mask_object[node.mask] : -1;
}

ProposalQuality proposal_quality(const SynthRun& run, int v_min) {
  ProposalQuality q;
  const int objects = static_cast<int>(run.synth.truth.objects.size());
  q.pure_per_object.assign(static_cast<std::size_t>(objects), 0);
  std::size_t agree = 0, members = 0;
  for (const auto& p : run.proposals.proposals) {
    std::map<int, int> count;
    for (const auto& m : p.members) ++count[mask_object(run, m)];
    int best = 0;
    for (const auto& [obj, c] : count) best = std::max(best, c);
    agree += static_cast<std::size_t>(best);
    members += p.members.size();
    ++q.proposals;
    if (count.size() == 1 && count.begin()->first >= 0) {
      ++q.pure;
      ++q.pure_per_object[static_cast<std::size_t>(count.begin()->first)];
    }
  }
  q.purity = members ? double(agree) / double(members) : 1.0;
  for (int o = 0; o < objects; ++o) {
    int views = 0;
    for (std::size_t v = 0; v < run.synth.views.size(); ++v) {
      const auto& mo = run.synth.truth.views[v].mask_object;
      views += std::find(mo.begin() + 1, mo.end(), o) != mo.end();
    }
    if (views >= v_min) q.visible_objects.push_back(o);
  }
  return q;
}

double labeled_argmax_accuracy(const SynthRun& run, const GaussianScene& registered) {
  std::size_t ok = 0, total = 0;
  for (std::size_t g = 0; g < registered.size(); ++g) {
    if (!registered.labeled[g]) continue;
    const Eigen::VectorXf s = run.synth.truth.object_embeddings * registered.descriptors->row(
                                                                      static_cast<Eigen::Index>(g)).transpose();
    Eigen::Index best = 0;
    s.maxCoeff(&best);
    ok += static_cast<int>(best) == run.synth.truth.nearest_object(registered.gaussians[g].position.cast<double>());
    ++total;
  }
  return total ? double(ok) / double(total) : 0.0;
}

}  // namespace profuse::fixture
