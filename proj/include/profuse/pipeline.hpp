#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "profuse/errors.hpp"
#include "profuse/matchgraph.hpp"
#include "profuse/pq_index.hpp"
#include "profuse/query_eval.hpp"
#include "profuse/register.hpp"
#include "profuse/splat_renderer.hpp"
#include "profuse/synth.hpp"
#include "profuse/triangulate.hpp"

namespace profuse {

/// A stage aborted. what() names the stage and the cause.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause, bool config_error);
  const std::string& stage() const { return stage_; }
  /// The cause was invalid configuration or inputs rather than a runtime failure.
  bool config_error() const { return config_error_; }

 private:
  std::string stage_;
  bool config_error_;
};

struct PipelineConfig {
  std::filesystem::path work_dir = "work";
  /// External inputs; mutually exclusive with synth.
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> ground_truth;
  std::optional<SynthSpec> synth;
  SeedConfig seeds;
  InitConfig init;
  RenderConfig render;
  ClusterConfig cluster;
  RegisterConfig registration;
  PQTrainConfig pq;
  QueryConfig query;
  ScoreMode score_mode = ScoreMode::pq;
  std::vector<double> tau_grid = default_tau_grid();
  TransferConfig transfer;
  int threads = 0;

  void check() const;
};

/// Parses the JSON config. Unknown keys anywhere are rejected; relative paths
/// are resolved against base_dir.
PipelineConfig pipeline_config_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
/// Per-section JSON, used for stage stamps and `--verbose` dumps.
std::string section_json(const PipelineConfig& config, const std::string& section);

struct Inputs {
  ViewSet views;
  std::vector<WarpField> warps;
};

Inputs load_inputs(const std::filesystem::path& manifest);

GaussianScene initialize_scene(const Inputs& inputs, const SeedConfig& seeds, const InitConfig& init,
                               SeedStats* stats = nullptr);

/// One hit buffer per view, aligned with views.views.
std::vector<PixelHits> render_views(const GaussianScene& scene, const ViewSet& views, const RenderConfig& render);

/// Renders the geometry for visibility, builds the mask graph and extracts proposals.
ProposalSet cluster_masks(const Inputs& inputs, const GaussianScene& scene, const RenderConfig& render,
                          const ClusterConfig& cluster);

struct SelectionEvaluation {
  std::vector<EvalPair> pairs;
  TauSearch search;
  double tau_configured = 0.0;
  SelectionMetrics at_configured;
  SelectionMetrics at_best;
};

/// Object queries are the ground-truth object embeddings; each (object, view)
/// pair with a non-empty visible silhouette is scored.
SelectionEvaluation evaluate_object_selection(const GaussianScene& scene, const PQIndex& index, const ViewSet& views,
                                              const GroundTruth& truth, const RenderConfig& render,
                                              const QueryConfig& query, ScoreMode mode, std::span<const double> grid,
                                              double vis_threshold);

std::string format_selection_report(const SelectionEvaluation& eval);
std::string format_selection_pairs(const SelectionEvaluation& eval, const ViewSet& views);

struct PointEvaluation {
  std::size_t points = 0;
  std::size_t unlabeled = 0;
  double accuracy = 0.0;
};

PointEvaluation evaluate_points(const GaussianScene& scene, std::span<const Eigen::Vector3d> points,
                                std::span<const int> labels, const RowMatrixf& classes, const TransferConfig& transfer);
std::string format_point_report(const PointEvaluation& eval);

struct StageRecord {
  std::string name;
  bool skipped = false;
  double seconds = 0.0;
};

struct RunOptions {
  bool force = false;
  /// Progress lines go here when set.
  std::ostream* log = nullptr;
};

struct RunReport {
  std::vector<StageRecord> stages;
};

/// synth (when configured) -> init -> cluster -> register -> index -> eval
/// (when ground truth exists). Stages whose stamp matches the current config
/// and input hashes, and whose outputs are newer than their inputs, are skipped.
/// Writes <work>/timing.txt with geometry, semantics and indexing lines.
RunReport run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

}  // namespace profuse
