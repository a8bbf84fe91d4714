#include "profuse/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "profuse/artifacts.hpp"
#include "profuse/container_io.hpp"
#include "profuse/parallel.hpp"

namespace profuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Reads keys from one JSON object and rejects whatever was not read.
class Section {
 public:
  Section(const json& doc, std::string name) : doc_(doc), name_(std::move(name)) {
    if (!doc_.is_object()) throw ConfigError("section '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("key '" + key + "' in section '" + name_ + "' has the wrong type");
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return doc_.contains(key);
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items())
      if (!seen_.contains(key)) throw ConfigError("unknown key '" + key + "' in section '" + name_ + "'");
  }

 private:
  const json& doc_;
  std::string name_;
  std::set<std::string> seen_;
};

const char* mode_name(TopKMode m) { return m == TopKMode::largest_weight ? "largest_weight" : "front_to_back"; }
const char* score_name(ScoreMode m) { return m == ScoreMode::pq ? "pq" : "exact"; }

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::span<const std::byte> as_bytes(const std::string& s) {
  return {reinterpret_cast<const std::byte*>(s.data()), s.size()};
}

void write_text(const fs::path& path, const std::string& text) { write_file_bytes(path, as_bytes(text)); }

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

/// Manifest plus every file it references.
std::vector<fs::path> manifest_files(const fs::path& manifest) {
  std::vector<fs::path> out{manifest};
  std::ifstream in(manifest);
  if (!in) return out;
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception&) {
    return out;
  }
  const fs::path base = manifest.parent_path();
  if (doc.contains("views") && doc["views"].is_array())
    for (const auto& v : doc["views"])
      for (const char* key : {"masks", "embeddings", "colors"})
        if (v.contains(key) && v[key].is_string()) out.push_back(resolve(base, v[key].get<std::string>()));
  if (doc.contains("warps") && doc["warps"].is_array())
    for (const auto& w : doc["warps"])
      if (w.contains("file") && w["file"].is_string()) out.push_back(resolve(base, w["file"].get<std::string>()));
  return out;
}

std::uint64_t hash_files(const std::vector<fs::path>& files) {
  std::uint64_t h = fnv1a({});
  for (const auto& f : files) {
    h = fnv1a(as_bytes(f.filename().string()), h);
    if (fs::exists(f)) {
      const auto bytes = read_file_bytes(f);
      h = fnv1a(bytes, h);
    }
  }
  return h;
}

struct Stage {
  std::string name;
  std::string category;  // geometry, semantics, indexing or empty
  std::string config;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  std::function<void()> run;
};

bool up_to_date(const Stage& stage, const std::string& stamp_text, const fs::path& stamp_path) {
  if (!fs::exists(stamp_path)) return false;
  std::ifstream in(stamp_path, std::ios::binary);
  const std::string existing((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (existing != stamp_text) return false;
  fs::file_time_type oldest_output = fs::file_time_type::max();
  for (const auto& o : stage.outputs) {
    if (!fs::exists(o)) return false;
    oldest_output = std::min(oldest_output, fs::last_write_time(o));
  }
  for (const auto& i : stage.inputs)
    if (fs::exists(i) && fs::last_write_time(i) > oldest_output) return false;
  return true;
}

std::vector<Eigen::Vector3d> points_from(const Tensor& t, const std::string& origin) {
  if (t.dtype != DType::f32 || t.shape.size() != 2 || t.shape[1] != 3)
    throw FormatError(FormatError::Kind::schema, origin + ": points must be f32 [V, 3]");
  const auto v = t.to_f32();
  std::vector<Eigen::Vector3d> out(t.shape[0]);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
  return out;
}

std::vector<int> labels_from(const Tensor& t, const std::string& origin) {
  if (t.dtype != DType::u16 || t.shape.size() != 1)
    throw FormatError(FormatError::Kind::schema, origin + ": point labels must be u16 [V]");
  const auto v = t.to_u16();
  return {v.begin(), v.end()};
}

}  // namespace

StageError::StageError(std::string stage, const std::string& cause, bool config_error)
    : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)), config_error_(config_error) {}

void PipelineConfig::check() const {
  if (synth && manifest) throw ConfigError("'synth' and 'manifest' are mutually exclusive");
  if (!synth && !manifest) throw ConfigError("either 'synth' or 'manifest' is required");
  if (synth) synth->check();
  seeds.check();
  init.check();
  render.check();
  cluster.check();
  registration.check();
  pq.check();
  query.check();
  transfer.check();
  if (tau_grid.empty()) throw ConfigError("tau_grid must not be empty");
  if (threads < 0) throw ConfigError("threads must be non-negative");
}

PipelineConfig pipeline_config_from_json(const std::string& text, const fs::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  Section top(doc, "root");
  std::string work = c.work_dir.string();
  top.get("work_dir", work);
  c.work_dir = resolve(base_dir, work);
  top.get("threads", c.threads);
  if (top.has("manifest")) {
    std::string m;
    top.get("manifest", m);
    c.manifest = resolve(base_dir, m);
  }
  if (top.has("ground_truth")) {
    std::string g;
    top.get("ground_truth", g);
    c.ground_truth = resolve(base_dir, g);
  }
  if (top.has("synth")) c.synth = synth_spec_from_json(doc.at("synth").dump());
  if (top.has("seeds")) {
    Section s(doc.at("seeds"), "seeds");
    s.get("tau_alpha", c.seeds.tau_alpha);
    s.get("stride", c.seeds.stride);
    s.get("dedup_radius", c.seeds.dedup_radius);
    s.get("max_reprojection_px", c.seeds.max_reprojection_px);
    s.finish();
  }
  if (top.has("init")) {
    Section s(doc.at("init"), "init");
    s.get("scale_factor", c.init.scale_factor);
    s.get("fallback_distance", c.init.fallback_distance);
    s.get("initial_opacity", c.init.initial_opacity);
    s.finish();
  }
  if (top.has("render")) {
    Section s(doc.at("render"), "render");
    s.get("top_k", c.render.top_k);
    s.get("alpha_cutoff", c.render.alpha_cutoff);
    s.get("sigma_cutoff", c.render.sigma_cutoff);
    s.get("near_plane", c.render.near_plane);
    std::string mode = mode_name(c.render.mode);
    s.get("mode", mode);
    if (mode == "largest_weight") c.render.mode = TopKMode::largest_weight;
    else if (mode == "front_to_back") c.render.mode = TopKMode::front_to_back;
    else throw ConfigError("render.mode must be 'largest_weight' or 'front_to_back'");
    s.finish();
  }
  if (top.has("cluster")) {
    Section s(doc.at("cluster"), "cluster");
    s.get("tau_alpha", c.cluster.tau_alpha);
    s.get("tau_iou", c.cluster.tau_iou);
    s.get("tau_box", c.cluster.tau_box);
    s.get("s_min", c.cluster.s_min);
    s.get("v_min", c.cluster.v_min);
    s.get("neighbors_k", c.cluster.neighbors_k);
    s.get("neighbor_lambda", c.cluster.neighbor_lambda);
    s.get("vis_threshold", c.cluster.vis_threshold);
    s.finish();
  }
  if (top.has("register")) {
    Section s(doc.at("register"), "register");
    s.get("epsilon", c.registration.epsilon);
    s.finish();
  }
  if (top.has("pq")) {
    Section s(doc.at("pq"), "pq");
    s.get("m", c.pq.m);
    s.get("bits", c.pq.bits);
    s.get("iterations", c.pq.iterations);
    s.get("seed", c.pq.seed);
    s.finish();
  }
  if (top.has("query")) {
    Section s(doc.at("query"), "query");
    s.get("tau_act", c.query.tau_act);
    s.get("gamma", c.query.gamma);
    s.get("shortlist_size", c.query.shortlist_size);
    s.get("expand_margin", c.query.expand_margin);
    std::string mode = score_name(c.score_mode);
    s.get("score_mode", mode);
    if (mode == "pq") c.score_mode = ScoreMode::pq;
    else if (mode == "exact") c.score_mode = ScoreMode::exact;
    else throw ConfigError("query.score_mode must be 'pq' or 'exact'");
    s.get("tau_grid", c.tau_grid);
    s.finish();
  }
  if (top.has("transfer")) {
    Section s(doc.at("transfer"), "transfer");
    s.get("knn_k", c.transfer.knn_k);
    s.get("mahal_sigma", c.transfer.mahal_sigma);
    s.get("temperature", c.transfer.temperature);
    s.finish();
  }
  top.finish();
  c.check();
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return pipeline_config_from_json(text, path.parent_path());
}

std::string section_json(const PipelineConfig& c, const std::string& section) {
  json j;
  if (section == "synth") {
    if (c.synth) return synth_spec_to_json(*c.synth);
    j = {{"manifest", c.manifest ? c.manifest->string() : ""}};
  } else if (section == "seeds") {
    j = {{"tau_alpha", c.seeds.tau_alpha}, {"stride", c.seeds.stride}, {"dedup_radius", c.seeds.dedup_radius},
         {"max_reprojection_px", c.seeds.max_reprojection_px}};
  } else if (section == "init") {
    j = {{"scale_factor", c.init.scale_factor}, {"fallback_distance", c.init.fallback_distance},
         {"initial_opacity", c.init.initial_opacity}};
  } else if (section == "render") {
    j = {{"top_k", c.render.top_k}, {"alpha_cutoff", c.render.alpha_cutoff}, {"sigma_cutoff", c.render.sigma_cutoff},
         {"near_plane", c.render.near_plane}, {"mode", mode_name(c.render.mode)}};
  } else if (section == "cluster") {
    j = {{"tau_alpha", c.cluster.tau_alpha}, {"tau_iou", c.cluster.tau_iou}, {"tau_box", c.cluster.tau_box},
         {"s_min", c.cluster.s_min}, {"v_min", c.cluster.v_min}, {"neighbors_k", c.cluster.neighbors_k},
         {"neighbor_lambda", c.cluster.neighbor_lambda}, {"vis_threshold", c.cluster.vis_threshold}};
  } else if (section == "register") {
    j = {{"epsilon", c.registration.epsilon}};
  } else if (section == "pq") {
    j = {{"m", c.pq.m}, {"bits", c.pq.bits}, {"iterations", c.pq.iterations}, {"seed", c.pq.seed}};
  } else if (section == "query") {
    j = {{"tau_act", c.query.tau_act}, {"gamma", c.query.gamma}, {"shortlist_size", c.query.shortlist_size},
         {"expand_margin", c.query.expand_margin}, {"score_mode", score_name(c.score_mode)}, {"tau_grid", c.tau_grid}};
  } else if (section == "transfer") {
    j = {{"knn_k", c.transfer.knn_k}, {"mahal_sigma", c.transfer.mahal_sigma}, {"temperature", c.transfer.temperature}};
  } else {
    throw ConfigError("unknown config section '" + section + "'");
  }
  return j.dump();
}

Inputs load_inputs(const fs::path& manifest) {
  Manifest m = load_manifest(manifest);
  Inputs in;
  in.views = std::move(m.views);
  for (const auto& ref : m.warps) in.warps.push_back(load_warp(ref));
  for (const auto& w : in.warps) {
    const auto& src = in.views.views[in.views.index_of(w.src_view)].camera;
    if (w.width() != src.width || w.height() != src.height)
      throw ConfigError("warp " + std::to_string(w.src_view) + "->" + std::to_string(w.dst_view) +
                        " does not match the source view resolution");
    in.views.index_of(w.dst_view);
  }
  return in;
}

GaussianScene initialize_scene(const Inputs& inputs, const SeedConfig& seeds, const InitConfig& init,
                               SeedStats* stats) {
  const auto points = extract_seeds(inputs.views, inputs.warps, seeds, stats);
  return init_gaussians(points, init);
}

std::vector<PixelHits> render_views(const GaussianScene& scene, const ViewSet& views, const RenderConfig& render) {
  std::vector<PixelHits> hits;
  hits.reserve(views.size());
  for (const auto& v : views.views) hits.push_back(render_hits(scene, v.camera, render));
  return hits;
}

ProposalSet cluster_masks(const Inputs& inputs, const GaussianScene& scene, const RenderConfig& render,
                          const ClusterConfig& cluster) {
  std::vector<BinaryMask> vis;
  for (const auto& v : inputs.views.views)
    vis.push_back(visibility_mask(render_hits(scene, v.camera, render), cluster.vis_threshold));
  const auto edges = build_graph(inputs.views, inputs.warps, vis, cluster);
  return extract_proposals(edges, inputs.views, cluster);
}

SelectionEvaluation evaluate_object_selection(const GaussianScene& scene, const PQIndex& index, const ViewSet& views,
                                              const GroundTruth& truth, const RenderConfig& render,
                                              const QueryConfig& query, ScoreMode mode, std::span<const double> grid,
                                              double vis_threshold) {
  if (truth.views.size() != views.size()) throw ConfigError("ground truth does not match the view set");
  const auto hits = render_views(scene, views, render);
  std::vector<Eigen::VectorXf> queries;
  for (Eigen::Index o = 0; o < truth.object_embeddings.rows(); ++o)
    queries.push_back(truth.object_embeddings.row(o).transpose());
  SelectionEvaluation out;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t v = 0; v < views.size(); ++v) {
      const BinaryMask vis = visibility_mask(hits[v], vis_threshold);
      const LabelMap& objects = truth.views[v].object_map;
      BinaryMask gt(objects.width(), objects.height(), 0);
      for (std::size_t p = 0; p < gt.size(); ++p) gt[p] = (objects[p] == q + 1 && vis[p]) ? 1 : 0;
      if (count_on(gt) == 0) continue;
      out.pairs.push_back({q, v, std::move(gt)});
    }
  }
  if (out.pairs.empty()) throw ConfigError("no object is visible in any view");
  out.search = grid_search_tau(scene, index, hits, queries, out.pairs, query, grid, mode);
  out.tau_configured = query.tau_act;
  out.at_configured = evaluate_selection(scene, index, hits, queries, out.pairs, query, mode).metrics;
  QueryConfig best = query;
  best.tau_act = out.search.best_tau;
  out.at_best = evaluate_selection(scene, index, hits, queries, out.pairs, best, mode).metrics;
  return out;
}

std::string format_selection_report(const SelectionEvaluation& e) {
  std::ostringstream s;
  s << "pairs " << e.pairs.size() << "\n";
  s << "tau_configured " << fmt(e.tau_configured) << " miou " << fmt(e.at_configured.miou) << " macc "
    << fmt(e.at_configured.macc) << "\n";
  s << "tau_best " << fmt(e.search.best_tau) << " miou " << fmt(e.at_best.miou) << " macc " << fmt(e.at_best.macc)
    << "\n";
  return s.str();
}

std::string format_selection_pairs(const SelectionEvaluation& e, const ViewSet& views) {
  std::ostringstream s;
  s << "query\tview\tiou\n";
  for (std::size_t i = 0; i < e.pairs.size(); ++i)
    s << e.pairs[i].query << "\t" << views.views[e.pairs[i].view].id << "\t" << fmt(e.at_best.ious[i]) << "\n";
  return s.str();
}

PointEvaluation evaluate_points(const GaussianScene& scene, std::span<const Eigen::Vector3d> points,
                                std::span<const int> labels, const RowMatrixf& classes, const TransferConfig& transfer) {
  if (points.size() != labels.size()) throw ConfigError("points and labels differ in length");
  const TransferResult r = transfer_to_points(scene, points, classes, transfer);
  PointEvaluation e;
  e.points = points.size();
  e.unlabeled = r.unlabeled;
  e.accuracy = label_accuracy(r.labels, labels);
  return e;
}

std::string format_point_report(const PointEvaluation& e) {
  std::ostringstream s;
  s << "points " << e.points << "\nunlabeled " << e.unlabeled << "\naccuracy " << fmt(e.accuracy) << "\n";
  return s.str();
}

RunReport run_pipeline(const PipelineConfig& config, const RunOptions& options) {
  config.check();
  if (config.threads > 0) set_thread_count(config.threads);
  const fs::path work = config.work_dir;
  fs::create_directories(work / ".stamps");
  auto log = [&](const std::string& line) {
    if (options.log) *options.log << line << "\n";
  };

  const fs::path synth_dir = work / "synth";
  const fs::path manifest = config.synth ? synth_dir / "manifest.json" : *config.manifest;
  std::optional<fs::path> truth_path = config.ground_truth;
  if (config.synth) truth_path = synth_dir / "ground_truth.pf";
  const fs::path scene_path = work / "scene.pf";
  const fs::path proposals_path = work / "proposals.pf";
  const fs::path sem_path = work / "scene_sem.pf";
  const fs::path index_path = work / "index.pf";
  const fs::path eval_dir = work / "eval";

  std::vector<Stage> stages;
  std::optional<Inputs> inputs;
  auto get_inputs = [&]() -> const Inputs& {
    if (!inputs) inputs = load_inputs(manifest);
    return *inputs;
  };

  if (config.synth) {
    stages.push_back({"synth", "", section_json(config, "synth"), {}, {manifest, synth_dir / "ground_truth.pf"}, [&] {
                        write_synth(generate(*config.synth), synth_dir);
                      }});
  }
  // Input lists are resolved lazily because the synth stage creates the manifest.
  stages.push_back({"init", "geometry", section_json(config, "seeds") + section_json(config, "init"), {}, {scene_path},
                    [&] {
                      SeedStats stats;
                      const GaussianScene scene = initialize_scene(get_inputs(), config.seeds, config.init, &stats);
                      log("  seeds accepted " + std::to_string(stats.accepted) + ", kept " +
                          std::to_string(stats.after_dedup));
                      save_scene(scene_path, scene);
                    }});
  stages.push_back({"cluster", "semantics", section_json(config, "render") + section_json(config, "cluster"), {},
                    {proposals_path}, [&] {
                      const ProposalSet p =
                          cluster_masks(get_inputs(), load_scene(scene_path), config.render, config.cluster);
                      log("  proposals " + std::to_string(p.size()));
                      save_proposals(proposals_path, p);
                    }});
  stages.push_back({"register", "semantics", section_json(config, "render") + section_json(config, "register"), {},
                    {sem_path}, [&] {
                      const Inputs& in = get_inputs();
                      const GaussianScene scene = load_scene(scene_path);
                      const ProposalSet proposals = load_proposals(proposals_path);
                      const auto hits = render_views(scene, in.views, config.render);
                      const auto r = register_features(scene, in.views, proposals, hits, config.registration);
                      log("  labeled " + std::to_string(r.labeled_count) + " of " + std::to_string(scene.size()));
                      save_scene(sem_path, r.scene);
                    }});
  stages.push_back({"index", "indexing", section_json(config, "pq"), {}, {index_path}, [&] {
                      save_index(index_path, build_index(load_scene(sem_path), config.pq));
                    }});
  if (truth_path) {
    const fs::path gt_dir = truth_path->parent_path();
    stages.push_back({"eval", "",
                      section_json(config, "render") + section_json(config, "cluster") +
                          section_json(config, "query") + section_json(config, "transfer"),
                      {},
                      {eval_dir / "selection.txt", eval_dir / "selection_pairs.tsv", eval_dir / "points.txt"},
                      [&, gt_dir] {
                        const Inputs& in = get_inputs();
                        const GaussianScene scene = load_scene(sem_path);
                        const PQIndex index = load_index(index_path);
                        const GroundTruth truth = load_ground_truth(*truth_path, in.views);
                        fs::create_directories(eval_dir);
                        const auto sel = evaluate_object_selection(scene, index, in.views, truth, config.render,
                                                                   config.query, config.score_mode, config.tau_grid,
                                                                   config.cluster.vis_threshold);
                        write_text(eval_dir / "selection.txt", format_selection_report(sel));
                        write_text(eval_dir / "selection_pairs.tsv", format_selection_pairs(sel, in.views));
                        const auto pts_path = gt_dir / "points.pf";
                        const auto lbl_path = gt_dir / "point_labels.pf";
                        const auto cls_path = gt_dir / "classes.pf";
                        const auto pts = points_from(read_tensor(pts_path), pts_path.string());
                        const auto lbl = labels_from(read_tensor(lbl_path), lbl_path.string());
                        const RowMatrixf cls = matrix_from(read_tensor(cls_path), cls_path.string());
                        const auto pe = evaluate_points(scene, pts, lbl, cls, config.transfer);
                        write_text(eval_dir / "points.txt", format_point_report(pe));
                        log("  selection miou " + fmt(sel.at_best.miou) + ", point accuracy " + fmt(pe.accuracy));
                      }});
  }

  auto inputs_of = [&](const std::string& name) -> std::vector<fs::path> {
    std::vector<fs::path> files;
    if (name == "synth") return files;
    files = manifest_files(manifest);
    if (name == "cluster" || name == "register") files.push_back(scene_path);
    if (name == "register") files.push_back(proposals_path);
    if (name == "index") files = {sem_path};
    if (name == "eval") {
      files.insert(files.end(), {sem_path, index_path, *truth_path});
      const fs::path gt_dir = truth_path->parent_path();
      files.insert(files.end(), {gt_dir / "points.pf", gt_dir / "point_labels.pf", gt_dir / "classes.pf"});
    }
    return files;
  };

  RunReport report;
  std::map<std::string, double> category_seconds{{"geometry", 0.0}, {"semantics", 0.0}, {"indexing", 0.0}};
  for (auto& stage : stages) {
    StageRecord rec{stage.name, false, 0.0};
    try {
      stage.inputs = inputs_of(stage.name);
      const std::string stamp = "config " + hex64(fnv1a(as_bytes(stage.config))) + "\ninputs " +
                                hex64(hash_files(stage.inputs)) + "\n";
      const fs::path stamp_path = work / ".stamps" / (stage.name + ".stamp");
      if (!options.force && up_to_date(stage, stamp, stamp_path)) {
        rec.skipped = true;
        log("[" + stage.name + "] up to date, skipped");
      } else {
        log("[" + stage.name + "] running");
        fs::remove(stamp_path);
        const auto t0 = std::chrono::steady_clock::now();
        stage.run();
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_text(stamp_path, stamp);
        log("[" + stage.name + "] done in " + fmt(rec.seconds) + " s");
      }
    } catch (const ConfigError& e) {
      throw StageError(stage.name, e.what(), true);
    } catch (const std::exception& e) {
      throw StageError(stage.name, e.what(), false);
    }
    if (!stage.category.empty()) category_seconds[stage.category] += rec.seconds;
    report.stages.push_back(rec);
  }

  std::ostringstream timing;
  for (const char* cat : {"geometry", "semantics", "indexing"}) timing << cat << " " << fmt(category_seconds[cat]) << " s\n";
  write_text(work / "timing.txt", timing.str());
  return report;
}

}  // namespace profuse
