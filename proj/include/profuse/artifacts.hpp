#pragma once

// Stage artifacts stored as record bundles.
//
// Hits: "index" u16 [H, W, K] with 0xFFFF in unused slots when the scene has
// fewer than 65535 Gaussians, otherwise u16 [2, H, W, K] holding the high and
// low halves of each index (unused slots 0xFFFF in both planes);
// "weight" f32 [H, W, K]; "total_weight" f32 [H, W].
//
// Proposals: "members" u16 [T, 3] rows of (proposal id, view id, mask id)
// sorted by proposal then member; "lookup/<view id>" u16 [K + 1] per view.
//
// Index: "codebook" f32 [m, k, dsub], "codes" u8 [N, m], "valid" u8 [N].

#include <filesystem>

#include "profuse/container_io.hpp"
#include "profuse/matchgraph.hpp"
#include "profuse/pq_index.hpp"
#include "profuse/splat_renderer.hpp"

namespace profuse {

TensorBundle hits_bundle(const PixelHits& hits, std::size_t gaussian_count);
PixelHits hits_from(const TensorBundle& bundle, const std::string& origin);
void save_hits(const std::filesystem::path& path, const PixelHits& hits, std::size_t gaussian_count);
PixelHits load_hits(const std::filesystem::path& path);

TensorBundle proposals_bundle(const ProposalSet& proposals);
ProposalSet proposals_from(const TensorBundle& bundle, const std::string& origin);
void save_proposals(const std::filesystem::path& path, const ProposalSet& proposals);
ProposalSet load_proposals(const std::filesystem::path& path);

TensorBundle index_bundle(const PQIndex& index);
PQIndex index_from(const TensorBundle& bundle, const std::string& origin);
void save_index(const std::filesystem::path& path, const PQIndex& index);
PQIndex load_index(const std::filesystem::path& path);

}  // namespace profuse
