#include "profuse/artifacts.hpp"

#include <algorithm>
#include <string>

#include "profuse/errors.hpp"

namespace profuse {

namespace {

constexpr std::uint16_t kEmpty = 0xFFFF;

[[noreturn]] void schema(const std::string& origin, const std::string& what) {
  throw FormatError(FormatError::Kind::schema, origin + ": " + what);
}

void expect_shape(const Tensor& t, DType dtype, const std::vector<std::uint64_t>& shape, const std::string& origin,
                  const std::string& name) {
  if (t.dtype != dtype || t.shape != shape) schema(origin, "record '" + name + "' has an unexpected dtype or shape");
}

const Tensor& rec(const TensorBundle& bundle, const std::string& name, const std::string& origin) {
  if (!bundle.contains(name)) schema(origin, "missing record '" + name + "'");
  return bundle.get(name);
}

}  // namespace

TensorBundle hits_bundle(const PixelHits& hits, std::size_t gaussian_count) {
  const auto h = static_cast<std::uint64_t>(hits.height);
  const auto w = static_cast<std::uint64_t>(hits.width);
  const auto k = static_cast<std::uint64_t>(hits.top_k);
  const std::size_t slots = hits.index.size();
  const bool split = gaussian_count >= kEmpty;
  std::vector<std::uint16_t> idx(split ? 2 * slots : slots, kEmpty);
  const std::size_t pixels = hits.count.size();
  for (std::size_t p = 0; p < pixels; ++p) {
    for (std::size_t t = 0; t < hits.count[p]; ++t) {
      const std::size_t s = p * static_cast<std::size_t>(k) + t;
      const std::uint32_t g = hits.index[s];
      if (split) {
        idx[s] = static_cast<std::uint16_t>(g >> 16);
        idx[slots + s] = static_cast<std::uint16_t>(g & 0xFFFF);
      } else {
        idx[s] = static_cast<std::uint16_t>(g);
      }
    }
  }
  TensorBundle b;
  b.add("index", split ? Tensor::from_u16({2, h, w, k}, idx) : Tensor::from_u16({h, w, k}, idx));
  b.add("weight", Tensor::from_f32({h, w, k}, hits.weight));
  b.add("total_weight", Tensor::from_f32({h, w}, hits.total_weight));
  return b;
}

PixelHits hits_from(const TensorBundle& bundle, const std::string& origin) {
  const Tensor& weight = rec(bundle, "weight", origin);
  if (weight.dtype != DType::f32 || weight.shape.size() != 3) schema(origin, "record 'weight' must be f32 [H, W, K]");
  PixelHits hits;
  hits.height = static_cast<int>(weight.shape[0]);
  hits.width = static_cast<int>(weight.shape[1]);
  hits.top_k = static_cast<int>(weight.shape[2]);
  if (hits.top_k < 1) schema(origin, "top-K must be positive");
  const std::uint64_t h = weight.shape[0], w = weight.shape[1], k = weight.shape[2];
  const Tensor& index = rec(bundle, "index", origin);
  const bool split = index.shape.size() == 4;
  expect_shape(index, DType::u16, split ? std::vector<std::uint64_t>{2, h, w, k} : std::vector<std::uint64_t>{h, w, k},
               origin, "index");
  const Tensor& total = rec(bundle, "total_weight", origin);
  expect_shape(total, DType::f32, {h, w}, origin, "total_weight");
  hits.weight = weight.to_f32();
  hits.total_weight = total.to_f32();
  const std::vector<std::uint16_t> idx = index.to_u16();
  const std::size_t slots = hits.weight.size();
  hits.index.assign(slots, 0);
  hits.count.assign(static_cast<std::size_t>(h * w), 0);
  for (std::size_t p = 0; p < hits.count.size(); ++p) {
    std::uint16_t n = 0;
    for (std::size_t t = 0; t < k; ++t) {
      const std::size_t s = p * k + t;
      const bool used = split ? !(idx[s] == kEmpty && idx[slots + s] == kEmpty) : idx[s] != kEmpty;
      if (!used) break;
      hits.index[s] = split ? (std::uint32_t{idx[s]} << 16) | idx[slots + s] : idx[s];
      ++n;
    }
    hits.count[p] = n;
  }
  return hits;
}

void save_hits(const std::filesystem::path& path, const PixelHits& hits, std::size_t gaussian_count) {
  write_bundle(path, hits_bundle(hits, gaussian_count));
}

PixelHits load_hits(const std::filesystem::path& path) { return hits_from(read_bundle(path), path.string()); }

TensorBundle proposals_bundle(const ProposalSet& proposals) {
  std::vector<std::uint16_t> rows;
  for (std::size_t m = 0; m < proposals.size(); ++m)
    for (const auto& node : proposals.proposals[m].members) {
      if (node.view > 0xFFFF) throw ConfigError("view id " + std::to_string(node.view) + " does not fit the proposal file");
      rows.insert(rows.end(), {static_cast<std::uint16_t>(m + 1), static_cast<std::uint16_t>(node.view), node.mask});
    }
  TensorBundle b;
  b.add("members", Tensor::from_u16({rows.size() / 3, 3}, rows));
  for (const auto& [view, table] : proposals.lookup)
    b.add("lookup/" + std::to_string(view), Tensor::from_u16({table.size()}, table));
  return b;
}

ProposalSet proposals_from(const TensorBundle& bundle, const std::string& origin) {
  const Tensor& members = rec(bundle, "members", origin);
  if (members.dtype != DType::u16 || members.shape.size() != 2 || members.shape[1] != 3)
    schema(origin, "record 'members' must be u16 [T, 3]");
  const std::vector<std::uint16_t> rows = members.to_u16();
  ProposalSet out;
  for (std::size_t r = 0; r < rows.size(); r += 3) {
    const std::uint16_t id = rows[r];
    if (id == 0 || id > out.proposals.size() + 1) schema(origin, "proposal ids must be dense and 1-based");
    if (id == out.proposals.size() + 1) out.proposals.emplace_back();
    Proposal& p = out.proposals.back();
    p.members.push_back({rows[r + 1], rows[r + 2]});
    p.views.push_back(rows[r + 1]);
  }
  for (auto& p : out.proposals) {
    std::sort(p.members.begin(), p.members.end());
    std::sort(p.views.begin(), p.views.end());
    p.views.erase(std::unique(p.views.begin(), p.views.end()), p.views.end());
  }
  for (const auto& [name, unused] : bundle.records()) {
    if (!name.starts_with("lookup/")) continue;
    const std::string id_text = name.substr(7);
    ViewId view = 0;
    try {
      view = static_cast<ViewId>(std::stoul(id_text));
    } catch (const std::exception&) {
      schema(origin, "bad lookup record '" + name + "'");
    }
    const Tensor& t = rec(bundle, name, origin);
    if (t.dtype != DType::u16 || t.shape.size() != 1) schema(origin, "record '" + name + "' must be u16 [K + 1]");
    out.lookup[view] = t.to_u16();
    for (auto id : out.lookup[view])
      if (id > out.proposals.size()) schema(origin, "lookup refers to a missing proposal");
  }
  for (std::size_t m = 0; m < out.proposals.size(); ++m)
    for (const auto& node : out.proposals[m].members)
      if (out.proposal_of(node.view, node.mask) != m + 1) schema(origin, "lookup tables disagree with members");
  return out;
}

void save_proposals(const std::filesystem::path& path, const ProposalSet& proposals) {
  write_bundle(path, proposals_bundle(proposals));
}

ProposalSet load_proposals(const std::filesystem::path& path) {
  return proposals_from(read_bundle(path), path.string());
}

TensorBundle index_bundle(const PQIndex& index) {
  const PQCodebook& cb = index.codebook;
  TensorBundle b;
  b.add("codebook", Tensor::from_f32({static_cast<std::uint64_t>(cb.m), static_cast<std::uint64_t>(cb.k),
                                      static_cast<std::uint64_t>(cb.dsub)},
                                     cb.centroids));
  b.add("codes", Tensor::from_u8({index.codes.size(), static_cast<std::uint64_t>(index.codes.m)}, index.codes.codes));
  b.add("valid", Tensor::from_u8({index.valid.size()}, index.valid));
  return b;
}

PQIndex index_from(const TensorBundle& bundle, const std::string& origin) {
  const Tensor& cb = rec(bundle, "codebook", origin);
  if (cb.dtype != DType::f32 || cb.shape.size() != 3 || cb.shape[0] == 0 || cb.shape[1] == 0 || cb.shape[2] == 0 ||
      cb.shape[1] > 256)
    schema(origin, "record 'codebook' must be f32 [m, k <= 256, dsub]");
  PQIndex index;
  index.codebook.m = static_cast<int>(cb.shape[0]);
  index.codebook.k = static_cast<int>(cb.shape[1]);
  index.codebook.dsub = static_cast<int>(cb.shape[2]);
  index.codebook.dim = index.codebook.m * index.codebook.dsub;
  index.codebook.centroids = cb.to_f32();
  const Tensor& codes = rec(bundle, "codes", origin);
  if (codes.dtype != DType::u8 || codes.shape.size() != 2 || codes.shape[1] != cb.shape[0])
    schema(origin, "record 'codes' must be u8 [N, m]");
  index.codes.m = index.codebook.m;
  index.codes.codes = codes.to_u8();
  for (auto c : index.codes.codes)
    if (c >= index.codebook.k) schema(origin, "code exceeds the centroid count");
  const Tensor& valid = rec(bundle, "valid", origin);
  expect_shape(valid, DType::u8, {codes.shape[0]}, origin, "valid");
  index.valid = valid.to_u8();
  return index;
}

void save_index(const std::filesystem::path& path, const PQIndex& index) { write_bundle(path, index_bundle(index)); }

PQIndex load_index(const std::filesystem::path& path) { return index_from(read_bundle(path), path.string()); }

}  // namespace profuse
