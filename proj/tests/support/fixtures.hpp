#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <random>
#include <vector>

#include "profuse/matchgraph.hpp"
#include "profuse/pq_index.hpp"
#include "profuse/register.hpp"
#include "profuse/splat_renderer.hpp"
#include "profuse/synth.hpp"
#include "profuse/triangulate.hpp"

namespace profuse::fixture {

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

Camera test_camera(int width = 64, int height = 48, double focal = 60.0);

/// Gaussians scattered in front of test_camera with mixed anisotropy and opacity.
GaussianScene random_scene(std::mt19937_64& rng, int count, int width = 64, int height = 48);

/// Random unit rows.
RowMatrixf random_unit_rows(std::mt19937_64& rng, int rows, int dim);

struct ClusterFixture {
  ViewSet views;
  std::vector<WarpField> warps;
  std::vector<BinaryMask> vis;
  ClusterConfig config;
};

/// Views of shifted rectangles on a camera ring with translation warps,
/// jitter, low-confidence blotches, dropped masks and partial visibility.
ClusterFixture random_cluster_fixture(std::uint64_t seed, int max_masks = 200);

/// Everything the in-memory pipeline produces for a synthetic scene.
struct SynthRun {
  SynthScene synth;
  GaussianScene geometry;
  std::vector<PixelHits> hits;
  std::vector<BinaryMask> vis;
  std::vector<Edge> edges;
  ProposalSet proposals;
  RegistrationResult registered;
};

struct SynthRunConfig {
  SeedConfig seeds;
  InitConfig init;
  RenderConfig render;
  ClusterConfig cluster;
};

SynthRun run_synth(const SynthSpec& spec, const SynthRunConfig& config = {});

/// Object index per mask node, or -1.
int mask_object(const SynthRun& run, const MaskNode& node);

struct ProposalQuality {
  std::size_t proposals = 0;
  std::size_t pure = 0;
  /// Members agreeing with their proposal's majority object over all members.
  double purity = 1.0;
  /// Objects with masks in at least v_min views.
  std::vector<int> visible_objects;
  /// Pure proposals per object.
  std::vector<int> pure_per_object;
};

ProposalQuality proposal_quality(const SynthRun& run, int v_min = 2);

/// Fraction of labeled Gaussians whose best-matching object embedding is the
/// object nearest to their center.
double labeled_argmax_accuracy(const SynthRun& run, const GaussianScene& registered);

}  // namespace profuse::fixture
