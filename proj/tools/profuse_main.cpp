#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "profuse/artifacts.hpp"
#include "profuse/container_io.hpp"
#include "profuse/parallel.hpp"
#include "profuse/pipeline.hpp"

namespace fs = std::filesystem;
using namespace profuse;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kStageFailure = 3;

struct Globals {
  std::string config_path;
  int threads = 0;
  std::optional<std::uint64_t> seed;
  bool force = false;
  bool verbose = false;
};

template <typename T>
void override_with(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

fs::path require_path(const std::optional<std::string>& flag, const std::optional<fs::path>& fallback,
                      const std::string& name) {
  if (flag) return *flag;
  if (fallback) return *fallback;
  throw ConfigError("--" + name + " is required (or supply --config)");
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::span<const std::byte>(reinterpret_cast<const std::byte*>(text.data()), text.size()));
}

/// Config defaults for stand-alone subcommands.
struct Context {
  PipelineConfig config;
  bool has_config = false;

  std::optional<fs::path> manifest() const {
    if (!has_config) return std::nullopt;
    if (config.synth) return config.work_dir / "synth" / "manifest.json";
    return config.manifest;
  }
  std::optional<fs::path> ground_truth() const {
    if (!has_config) return std::nullopt;
    if (config.synth) return config.work_dir / "synth" / "ground_truth.pf";
    return config.ground_truth;
  }
  std::optional<fs::path> work(const std::string& name) const {
    if (!has_config) return std::nullopt;
    return config.work_dir / name;
  }
};

Eigen::VectorXf load_embedding(const fs::path& path) {
  const Tensor t = read_tensor(path);
  if (t.dtype != DType::f32 || t.element_count() == 0 || (t.shape.size() == 2 && t.shape[0] != 1) || t.shape.size() > 2)
    throw FormatError(FormatError::Kind::schema, path.string() + ": embedding must be f32 [D] or [1, D]");
  const auto v = t.to_f32();
  return Eigen::Map<const Eigen::VectorXf>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"profuse: multi-view mask fusion onto Gaussian scenes"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Pipeline config (JSON)");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--seed", g.seed, "Seed for synthesis and codebook training");
  app.add_flag("--force", g.force, "Rerun stages even when up to date");
  app.add_flag("--verbose,-v", g.verbose, "Progress output on stderr");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multi-view scene");
  std::string synth_out;
  std::optional<std::string> synth_spec_file, synth_kind;
  std::optional<int> s_objects, s_views, s_dim, s_width, s_height;
  std::optional<double> s_jitter, s_corrupt, s_dropout, s_emb_noise;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--spec", synth_spec_file, "Scene spec (JSON)");
  synth->add_option("--objects", s_objects);
  synth->add_option("--kind", synth_kind, "sphere, box or mixed");
  synth->add_option("--views", s_views);
  synth->add_option("--dim", s_dim, "Descriptor dimension");
  synth->add_option("--width", s_width);
  synth->add_option("--height", s_height);
  synth->add_option("--jitter", s_jitter, "Warp jitter (px)");
  synth->add_option("--corruption", s_corrupt, "Confidence corruption fraction");
  synth->add_option("--dropout", s_dropout, "Mask dropout probability");
  synth->add_option("--embedding-noise", s_emb_noise);

  // init
  auto* init = app.add_subcommand("init", "Triangulate seeds and initialize Gaussians");
  std::optional<std::string> init_manifest, init_out;
  std::optional<int> init_stride;
  std::optional<double> init_tau, init_dedup, init_reproj, init_scale;
  init->add_option("--manifest", init_manifest);
  init->add_option("--out", init_out);
  init->add_option("--stride", init_stride);
  init->add_option("--tau-alpha", init_tau);
  init->add_option("--dedup-radius", init_dedup);
  init->add_option("--max-reprojection", init_reproj);
  init->add_option("--scale-factor", init_scale);

  // cluster
  auto* cluster = app.add_subcommand("cluster", "Build the mask graph and extract proposals");
  std::optional<std::string> cl_manifest, cl_scene, cl_out;
  std::optional<double> cl_tau_alpha, cl_tau_iou, cl_tau_box, cl_lambda, cl_vis;
  std::optional<int> cl_smin, cl_vmin, cl_k, cl_topk;
  cluster->add_option("--manifest", cl_manifest);
  cluster->add_option("--scene", cl_scene);
  cluster->add_option("--out", cl_out);
  cluster->add_option("--tau-alpha", cl_tau_alpha);
  cluster->add_option("--tau-iou", cl_tau_iou);
  cluster->add_option("--tau-box", cl_tau_box);
  cluster->add_option("--s-min", cl_smin);
  cluster->add_option("--v-min", cl_vmin);
  cluster->add_option("--neighbors", cl_k);
  cluster->add_option("--neighbor-lambda", cl_lambda);
  cluster->add_option("--vis-threshold", cl_vis);
  cluster->add_option("--topk", cl_topk);

  // hits
  auto* hits_cmd = app.add_subcommand("hits", "Render per-pixel top-K hits for one view");
  std::optional<std::string> h_scene, h_manifest, h_mode;
  std::string h_out;
  ViewId h_view = 0;
  std::optional<int> h_topk;
  hits_cmd->add_option("--scene", h_scene);
  hits_cmd->add_option("--manifest", h_manifest);
  hits_cmd->add_option("--view", h_view)->required();
  hits_cmd->add_option("--topk", h_topk);
  hits_cmd->add_option("--mode", h_mode, "largest_weight or front_to_back");
  hits_cmd->add_option("--out", h_out)->required();

  // register
  auto* reg = app.add_subcommand("register", "Register proposal descriptors onto Gaussians");
  std::optional<std::string> r_scene, r_manifest, r_props, r_out;
  std::optional<int> r_topk;
  std::optional<double> r_eps;
  reg->add_option("--scene", r_scene);
  reg->add_option("--manifest", r_manifest);
  reg->add_option("--proposals", r_props);
  reg->add_option("--topk", r_topk);
  reg->add_option("--epsilon", r_eps);
  reg->add_option("--out", r_out);

  // index
  auto* idx = app.add_subcommand("index", "Train the PQ codebook and encode descriptors");
  std::optional<std::string> i_scene, i_out;
  std::optional<int> i_m, i_bits, i_iters;
  idx->add_option("--scene", i_scene);
  idx->add_option("--m", i_m, "Subvector count (0 = automatic)");
  idx->add_option("--bits", i_bits);
  idx->add_option("--iterations", i_iters);
  idx->add_option("--out", i_out);

  // query
  auto* query = app.add_subcommand("query", "Select Gaussians for an embedding and render the activation mask");
  std::optional<std::string> q_scene, q_index, q_manifest;
  std::string q_embedding, q_out;
  ViewId q_view = 0;
  std::optional<double> q_tau, q_gamma;
  std::optional<int> q_topk, q_shortlist;
  bool q_exact = false;
  query->add_option("--scene", q_scene);
  query->add_option("--index", q_index);
  query->add_option("--manifest", q_manifest);
  query->add_option("--embedding", q_embedding)->required();
  query->add_option("--view", q_view)->required();
  query->add_option("--out", q_out)->required();
  query->add_option("--tau", q_tau);
  query->add_option("--gamma", q_gamma);
  query->add_option("--topk", q_topk);
  query->add_option("--shortlist", q_shortlist);
  query->add_flag("--exact", q_exact, "Score every labeled Gaussian exactly");

  // eval-select
  auto* es = app.add_subcommand("eval-select", "Object-selection mIoU / mAcc with a tau grid search");
  std::optional<std::string> es_scene, es_index, es_manifest, es_gt, es_out;
  std::optional<double> es_gamma, es_tau;
  std::optional<int> es_topk;
  bool es_exact = false;
  es->add_option("--scene", es_scene);
  es->add_option("--index", es_index);
  es->add_option("--manifest", es_manifest);
  es->add_option("--ground-truth", es_gt);
  es->add_option("--out", es_out, "Report directory");
  es->add_option("--tau", es_tau, "Configured tau_act reported next to the best grid value");
  es->add_option("--gamma", es_gamma);
  es->add_option("--topk", es_topk);
  es->add_flag("--exact", es_exact);

  // eval-points
  auto* ep = app.add_subcommand("eval-points", "Point label transfer accuracy");
  std::optional<std::string> ep_scene, ep_points, ep_labels, ep_classes, ep_out;
  std::optional<int> ep_knn;
  std::optional<double> ep_sigma, ep_temp;
  ep->add_option("--scene", ep_scene);
  ep->add_option("--points", ep_points);
  ep->add_option("--labels", ep_labels);
  ep->add_option("--classes", ep_classes);
  ep->add_option("--out", ep_out, "Report file");
  ep->add_option("--knn", ep_knn);
  ep->add_option("--sigma", ep_sigma);
  ep->add_option("--temperature", ep_temp);

  // run
  auto* run = app.add_subcommand("run", "Run every stage from a config");
  std::optional<std::string> run_work;
  run->add_option("--work", run_work, "Work directory override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  std::string stage = app.get_subcommands().front()->get_name();
  try {
    set_thread_count(g.threads);
    Context ctx;
    if (!g.config_path.empty()) {
      ctx.config = load_pipeline_config(g.config_path);
      ctx.has_config = true;
      if (g.threads == 0 && ctx.config.threads > 0) set_thread_count(ctx.config.threads);
    }
    if (g.seed) {
      if (ctx.config.synth) ctx.config.synth->seed = *g.seed;
      ctx.config.pq.seed = *g.seed;
    }
    std::ostream* log = g.verbose ? &std::cerr : nullptr;
    PipelineConfig& c = ctx.config;

    if (*synth) {
      SynthSpec spec = c.synth.value_or(SynthSpec{});
      if (synth_spec_file) {
        std::ifstream in(*synth_spec_file);
        if (!in) throw ConfigError("cannot read spec file: " + *synth_spec_file);
        spec = synth_spec_from_json(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
      }
      override_with(s_objects, spec.object_count);
      override_with(s_views, spec.view_count);
      override_with(s_dim, spec.descriptor_dim);
      override_with(s_width, spec.width);
      override_with(s_height, spec.height);
      override_with(s_jitter, spec.warp_jitter);
      override_with(s_corrupt, spec.confidence_corruption);
      override_with(s_dropout, spec.mask_dropout);
      override_with(s_emb_noise, spec.embedding_noise);
      if (synth_kind) {
        nlohmann::json j = nlohmann::json::parse(synth_spec_to_json(spec));
        j["object_kind"] = *synth_kind;
        spec = synth_spec_from_json(j.dump());
      }
      if (g.seed) spec.seed = *g.seed;
      spec.check();
      const SynthScene scene = generate(spec);
      write_synth(scene, synth_out);
      if (log) *log << "wrote " << scene.views.size() << " views, " << scene.warps.size() << " warps to " << synth_out << "\n";
    } else if (*init) {
      override_with(init_stride, c.seeds.stride);
      override_with(init_tau, c.seeds.tau_alpha);
      override_with(init_dedup, c.seeds.dedup_radius);
      override_with(init_reproj, c.seeds.max_reprojection_px);
      override_with(init_scale, c.init.scale_factor);
      const Inputs in = load_inputs(require_path(init_manifest, ctx.manifest(), "manifest"));
      SeedStats stats;
      const GaussianScene scene = initialize_scene(in, c.seeds, c.init, &stats);
      save_scene(require_path(init_out, ctx.work("scene.pf"), "out"), scene);
      if (log) *log << "seeds " << stats.accepted << " accepted, " << scene.size() << " Gaussians\n";
    } else if (*cluster) {
      override_with(cl_tau_alpha, c.cluster.tau_alpha);
      override_with(cl_tau_iou, c.cluster.tau_iou);
      override_with(cl_tau_box, c.cluster.tau_box);
      override_with(cl_smin, c.cluster.s_min);
      override_with(cl_vmin, c.cluster.v_min);
      override_with(cl_k, c.cluster.neighbors_k);
      override_with(cl_lambda, c.cluster.neighbor_lambda);
      override_with(cl_vis, c.cluster.vis_threshold);
      override_with(cl_topk, c.render.top_k);
      const Inputs in = load_inputs(require_path(cl_manifest, ctx.manifest(), "manifest"));
      const GaussianScene scene = load_scene(require_path(cl_scene, ctx.work("scene.pf"), "scene"));
      const ProposalSet p = cluster_masks(in, scene, c.render, c.cluster);
      save_proposals(require_path(cl_out, ctx.work("proposals.pf"), "out"), p);
      if (log) *log << p.size() << " proposals\n";
    } else if (*hits_cmd) {
      override_with(h_topk, c.render.top_k);
      if (h_mode) {
        if (*h_mode == "largest_weight") c.render.mode = TopKMode::largest_weight;
        else if (*h_mode == "front_to_back") c.render.mode = TopKMode::front_to_back;
        else throw ConfigError("--mode must be largest_weight or front_to_back");
      }
      const Manifest m = load_manifest(require_path(h_manifest, ctx.manifest(), "manifest"));
      const GaussianScene scene = load_scene(require_path(h_scene, ctx.work("scene.pf"), "scene"));
      const View& view = m.views.views[m.views.index_of(h_view)];
      save_hits(h_out, render_hits(scene, view.camera, c.render), scene.size());
    } else if (*reg) {
      override_with(r_topk, c.render.top_k);
      override_with(r_eps, c.registration.epsilon);
      const Inputs in = load_inputs(require_path(r_manifest, ctx.manifest(), "manifest"));
      const GaussianScene scene = load_scene(require_path(r_scene, ctx.work("scene.pf"), "scene"));
      const ProposalSet proposals = load_proposals(require_path(r_props, ctx.work("proposals.pf"), "proposals"));
      const auto hits = render_views(scene, in.views, c.render);
      const auto result = register_features(scene, in.views, proposals, hits, c.registration);
      save_scene(require_path(r_out, ctx.work("scene_sem.pf"), "out"), result.scene);
      if (log) *log << result.labeled_count << " of " << scene.size() << " Gaussians labeled\n";
    } else if (*idx) {
      override_with(i_m, c.pq.m);
      override_with(i_bits, c.pq.bits);
      override_with(i_iters, c.pq.iterations);
      const GaussianScene scene = load_scene(require_path(i_scene, ctx.work("scene_sem.pf"), "scene"));
      save_index(require_path(i_out, ctx.work("index.pf"), "out"), build_index(scene, c.pq));
    } else if (*query) {
      override_with(q_tau, c.query.tau_act);
      override_with(q_gamma, c.query.gamma);
      override_with(q_topk, c.render.top_k);
      override_with(q_shortlist, c.query.shortlist_size);
      if (q_exact) c.score_mode = ScoreMode::exact;
      const GaussianScene scene = load_scene(require_path(q_scene, ctx.work("scene_sem.pf"), "scene"));
      const PQIndex index = load_index(require_path(q_index, ctx.work("index.pf"), "index"));
      const Manifest m = load_manifest(require_path(q_manifest, ctx.manifest(), "manifest"));
      const View& view = m.views.views[m.views.index_of(q_view)];
      const Selection sel = select_gaussians(scene, index, load_embedding(q_embedding), c.query, c.score_mode);
      const PixelHits hits = render_hits(scene, view.camera, c.render);
      const BinaryMask mask = activation_mask(hits, active_flags(sel, scene.size()), c.query.gamma);
      write_tensor(q_out, mask_tensor(mask));
      std::cout << "active " << sel.active.size() << "\nmask_pixels " << count_on(mask) << "\n";
    } else if (*es) {
      override_with(es_gamma, c.query.gamma);
      override_with(es_tau, c.query.tau_act);
      override_with(es_topk, c.render.top_k);
      if (es_exact) c.score_mode = ScoreMode::exact;
      const Manifest m = load_manifest(require_path(es_manifest, ctx.manifest(), "manifest"));
      const GaussianScene scene = load_scene(require_path(es_scene, ctx.work("scene_sem.pf"), "scene"));
      const PQIndex index = load_index(require_path(es_index, ctx.work("index.pf"), "index"));
      const GroundTruth truth = load_ground_truth(require_path(es_gt, ctx.ground_truth(), "ground-truth"), m.views);
      const auto eval = evaluate_object_selection(scene, index, m.views, truth, c.render, c.query, c.score_mode,
                                                  c.tau_grid, c.cluster.vis_threshold);
      const std::string report = format_selection_report(eval);
      std::cout << report;
      if (es_out) {
        fs::create_directories(*es_out);
        write_text(fs::path(*es_out) / "selection.txt", report);
        write_text(fs::path(*es_out) / "selection_pairs.tsv", format_selection_pairs(eval, m.views));
      }
    } else if (*ep) {
      override_with(ep_knn, c.transfer.knn_k);
      override_with(ep_sigma, c.transfer.mahal_sigma);
      override_with(ep_temp, c.transfer.temperature);
      const std::optional<fs::path> gt_dir =
          ctx.ground_truth() ? std::optional<fs::path>(ctx.ground_truth()->parent_path()) : std::nullopt;
      auto in_gt = [&](const char* name) {
        return gt_dir ? std::optional<fs::path>(*gt_dir / name) : std::nullopt;
      };
      const GaussianScene scene = load_scene(require_path(ep_scene, ctx.work("scene_sem.pf"), "scene"));
      const fs::path pts_path = require_path(ep_points, in_gt("points.pf"), "points");
      const fs::path lbl_path = require_path(ep_labels, in_gt("point_labels.pf"), "labels");
      const fs::path cls_path = require_path(ep_classes, in_gt("classes.pf"), "classes");
      const Tensor pts = read_tensor(pts_path);
      if (pts.dtype != DType::f32 || pts.shape.size() != 2 || pts.shape[1] != 3)
        throw FormatError(FormatError::Kind::schema, pts_path.string() + ": points must be f32 [V, 3]");
      const auto pv = pts.to_f32();
      std::vector<Eigen::Vector3d> points(pts.shape[0]);
      for (std::size_t i = 0; i < points.size(); ++i) points[i] = {pv[3 * i], pv[3 * i + 1], pv[3 * i + 2]};
      const Tensor lbl = read_tensor(lbl_path);
      if (lbl.dtype != DType::u16) throw FormatError(FormatError::Kind::schema, lbl_path.string() + ": labels must be u16");
      const auto lv = lbl.to_u16();
      const std::vector<int> labels(lv.begin(), lv.end());
      const RowMatrixf classes = matrix_from(read_tensor(cls_path), cls_path.string());
      const std::string report = format_point_report(evaluate_points(scene, points, labels, classes, c.transfer));
      std::cout << report;
      if (ep_out) write_text(*ep_out, report);
    } else if (*run) {
      if (!ctx.has_config) throw ConfigError("run requires --config");
      if (run_work) c.work_dir = *run_work;
      RunOptions opts;
      opts.force = g.force;
      opts.log = log;
      const RunReport report = run_pipeline(c, opts);
      for (const auto& s : report.stages)
        std::cout << s.name << (s.skipped ? " skipped" : " ran") << "\n";
    }
  } catch (const StageError& e) {
    std::cerr << "profuse: " << e.what() << "\n";
    return e.config_error() ? kConfigError : kStageFailure;
  } catch (const ConfigError& e) {
    std::cerr << "profuse " << stage << ": configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "profuse: stage '" << stage << "' failed: " << e.what() << "\n";
    return kStageFailure;
  }
  return kOk;
}
