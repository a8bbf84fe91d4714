#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "profuse/matchgraph.hpp"
#include "profuse/splat_renderer.hpp"
#include "profuse/types.hpp"

namespace profuse {

/// Sum of retained hit weights over the mask pixels.
double mask_mass(const PixelHits& hits, const BinaryMask& mask);

/// Masses of every label of a label map in one pass; entry 0 collects unmasked pixels.
std::vector<double> mask_masses(const PixelHits& hits, const LabelMap& labels, int mask_count);

struct ProposalDescriptor {
  std::uint16_t id = 0;
  Eigen::VectorXf descriptor;  // unit norm unless degenerate
  double mass = 0.0;
  bool degenerate = false;
};

/// Mass-weighted pool of member embeddings, L2-normalized. `masses` is aligned
/// with views.views and indexed by mask label.
ProposalDescriptor proposal_descriptor(const Proposal& proposal, std::uint16_t id, const ViewSet& views,
                                       std::span<const std::vector<double>> masses);

/// Per-view pixel -> proposal id maps (0 = null), aligned with views.views.
std::vector<LabelMap> build_proposal_maps(const ViewSet& views, const ProposalSet& proposals);

struct RegisterConfig {
  double epsilon = 1e-8;

  void check() const;
};

struct RegistrationResult {
  GaussianScene scene;
  std::vector<ProposalDescriptor> descriptors;  // index = proposal id - 1
  RowMatrixd accumulator;                       // N x D
  std::vector<double> weight_sum;               // N
  std::size_t labeled_count = 0;
};

/// Scatters proposal descriptors onto the Gaussians hit by proposal pixels.
/// hits is aligned with views.views. Each view accumulates into its own double
/// shard; shards are summed in ascending view id, so the result does not
/// depend on view order or thread count.
RegistrationResult register_features(const GaussianScene& scene, const ViewSet& views, const ProposalSet& proposals,
                                     std::span<const PixelHits> hits, const RegisterConfig& config = {});

}  // namespace profuse
