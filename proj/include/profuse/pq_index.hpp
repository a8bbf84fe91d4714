#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "profuse/types.hpp"

namespace profuse {

struct PQCodebook {
  int dim = 0;
  int m = 0;     // subvectors
  int k = 0;     // centroids per subspace
  int dsub = 0;  // dim / m
  std::vector<float> centroids;  // m * k * dsub

  const float* centroid(int sub, int c) const {
    return centroids.data() + (static_cast<std::size_t>(sub) * static_cast<std::size_t>(k) +
                               static_cast<std::size_t>(c)) * static_cast<std::size_t>(dsub);
  }

  friend bool operator==(const PQCodebook&, const PQCodebook&) = default;
};

struct PQCodes {
  int m = 0;
  std::vector<std::uint8_t> codes;  // N * m

  std::size_t size() const { return m == 0 ? 0 : codes.size() / static_cast<std::size_t>(m); }
  std::span<const std::uint8_t> row(std::size_t n) const {
    return {codes.data() + n * static_cast<std::size_t>(m), static_cast<std::size_t>(m)};
  }

  friend bool operator==(const PQCodes&, const PQCodes&) = default;
};

struct PQTrainConfig {
  /// 0 picks default_subvector_count(dim).
  int m = 0;
  int bits = 8;
  int iterations = 25;
  std::uint64_t seed = 0;

  void check() const;
};

/// dim / 8 when divisible, else dim / 4 when divisible, else 1.
int default_subvector_count(int dim);

/// Per-subspace k-means (k-means++ init, Lloyd iterations, empty clusters
/// refilled from the largest cluster). k = min(2^bits, rows).
PQCodebook train_pq(const RowMatrixf& data, const PQTrainConfig& config);

PQCodes encode(const PQCodebook& codebook, const RowMatrixf& data);

/// Concatenated centroids; rows are L2-normalized when renormalize is set.
RowMatrixf decode(const PQCodebook& codebook, const PQCodes& codes, bool renormalize = true);

/// Asymmetric inner products <query, concatenated centroids> via per-subspace tables.
std::vector<double> adc_scores(const PQCodebook& codebook, const PQCodes& codes, const Eigen::VectorXf& query);

struct SearchHit {
  std::uint32_t index = 0;
  double score = 0.0;

  friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

/// Top shortlist_size entries by ADC score, ties by index. Entries whose
/// valid flag is 0 are skipped when valid is non-empty.
std::vector<SearchHit> search(const PQCodebook& codebook, const PQCodes& codes, const Eigen::VectorXf& query,
                              std::size_t shortlist_size, std::span<const std::uint8_t> valid = {});

struct PQIndex {
  PQCodebook codebook;
  PQCodes codes;
  /// 1 for labeled Gaussians; only these are searched.
  std::vector<std::uint8_t> valid;

  friend bool operator==(const PQIndex&, const PQIndex&) = default;
};

/// Trains on labeled descriptors and encodes every row.
PQIndex build_index(const GaussianScene& scene, const PQTrainConfig& config);

}  // namespace profuse
