#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "profuse/types.hpp"

namespace profuse {

/// Mask `mask` (1-based label) of view `view`.
struct MaskNode {
  ViewId view = 0;
  MaskId mask = 0;

  friend auto operator<=>(const MaskNode&, const MaskNode&) = default;
};

/// Undirected edge with a < b. Scores are kept for diagnostics: o_ab is the
/// gated overlap measured in a's view, o_ba in b's view.
struct Edge {
  MaskNode a;
  MaskNode b;
  double o_ab = 0.0;
  double o_ba = 0.0;
  double box_ab = 0.0;
  double box_ba = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Proposal {
  std::vector<MaskNode> members;  // sorted
  std::vector<ViewId> views;      // sorted, unique

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

struct ProposalSet {
  std::vector<Proposal> proposals;
  /// view id -> table of size mask_count + 1 mapping a mask label to its
  /// 1-based proposal id, 0 when the mask is in no proposal.
  std::map<ViewId, std::vector<std::uint16_t>> lookup;

  std::size_t size() const { return proposals.size(); }
  std::uint16_t proposal_of(ViewId view, MaskId mask) const;

  friend bool operator==(const ProposalSet&, const ProposalSet&) = default;
};

/// Forward bilinear splat of the mask support through the warp (soft, dst frame).
Grid2D<float> splat_mask(const BinaryMask& mask, const WarpField& warp, int dst_width, int dst_height);

/// splat_mask binarized at 0.5.
BinaryMask warp_mask(const BinaryMask& mask, const WarpField& warp, int dst_width, int dst_height);
/// Same-size convenience for views of equal resolution.
BinaryMask warp_mask(const BinaryMask& mask, const WarpField& warp);

/// [confidence >= tau_alpha] AND vis_mask.
BinaryMask gate(const WarpField& warp, double tau_alpha, const BinaryMask& vis_mask);

/// IoU of the two masks restricted to the gate; 0 for an empty gated union.
double gated_iou(const BinaryMask& mask_a, const BinaryMask& warped_b, const BinaryMask& gate_mask);

/// IoU of the tight boxes; 0 if either mask is empty.
double bbox_iou(const BinaryMask& mask_a, const BinaryMask& warped_b);

/// Unordered view pairs (positions in views) compared by the clustering
/// stage: each view with its neighbors_k selected neighbors, deduplicated.
/// Views are ranked in id order, so score ties resolve to the smaller id.
std::vector<std::pair<std::size_t, std::size_t>> candidate_pairs(const ViewSet& views, const ClusterConfig& config);

/// Mutual agreement graph. vis_masks is aligned with views.views. Throws
/// ConfigError when a candidate pair lacks a warp in either direction.
/// Edges come out sorted and unique.
std::vector<Edge> build_graph(const ViewSet& views, std::span<const WarpField> warps,
                              std::span<const BinaryMask> vis_masks, const ClusterConfig& config);

/// Connected components filtered by s_min and v_min, ordered by smallest member.
ProposalSet extract_proposals(std::span<const Edge> edges, const ViewSet& views, const ClusterConfig& config);

}  // namespace profuse
