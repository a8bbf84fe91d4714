#include "profuse/pq_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "profuse/errors.hpp"
#include "profuse/parallel.hpp"
#include "profuse/synth.hpp"

namespace profuse {

namespace {

double sq_dist(const float* a, const float* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s;
}

int nearest_centroid(const float* x, const std::vector<float>& cents, int k, int dsub, double* best_out = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int c = 0; c < k; ++c) {
    const double d = sq_dist(x, cents.data() + static_cast<std::size_t>(c) * dsub, dsub);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (best_out) *best_out = best_d;
  return best;
}

/// k-means on the rows of `pts` (n x dsub, contiguous).
std::vector<float> kmeans(const std::vector<float>& pts, std::size_t n, int dsub, int k, int iterations,
                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<float> cents(static_cast<std::size_t>(k) * dsub, 0.0f);
  auto point = [&](std::size_t i) { return pts.data() + i * static_cast<std::size_t>(dsub); };
  auto set_centroid = [&](int c, const float* src) {
    std::copy(src, src + dsub, cents.begin() + static_cast<std::ptrdiff_t>(c) * dsub);
  };

  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  set_centroid(0, point(pick(rng)));
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = sq_dist(point(i), cents.data(), dsub);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : dist) total += d;
    std::size_t chosen = 0;
    const double r = unit(rng);
    if (total > 0.0) {
      double target = r * total, run = 0.0;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        run += dist[i];
        if (dist[i] > 0.0 && run >= target) {
          chosen = i;
          break;
        }
      }
      while (dist[chosen] == 0.0 && chosen > 0) --chosen;
    } else {
      chosen = std::min(n - 1, static_cast<std::size_t>(r * static_cast<double>(n)));
    }
    set_centroid(c, point(chosen));
    const float* cc = cents.data() + static_cast<std::size_t>(c) * dsub;
    for (std::size_t i = 0; i < n; ++i) dist[i] = std::min(dist[i], sq_dist(point(i), cc, dsub));
  }

  std::vector<int> assign(n, -1);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int a = nearest_centroid(point(i), cents, k, dsub);
      if (a != assign[i]) {
        assign[i] = a;
        changed = true;
      }
    }
    if (!changed && it > 0) break;
    std::vector<double> sums(static_cast<std::size_t>(k) * dsub, 0.0);
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(assign[i]);
      ++counts[c];
      for (int j = 0; j < dsub; ++j) sums[c * dsub + j] += point(i)[j];
    }
    for (int c = 0; c < k; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      if (counts[cu] == 0) continue;
      for (int j = 0; j < dsub; ++j)
        cents[cu * dsub + j] = static_cast<float>(sums[cu * dsub + j] / static_cast<double>(counts[cu]));
    }
    // Empty clusters take the member of the largest cluster farthest from its centroid.
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] != 0) continue;
      const auto largest = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      std::size_t far = n;
      double far_d = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assign[i] != largest) continue;
        const double d = sq_dist(point(i), cents.data() + static_cast<std::size_t>(largest) * dsub, dsub);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == n) continue;
      set_centroid(c, point(far));
      assign[far] = c;
      --counts[static_cast<std::size_t>(largest)];
      counts[static_cast<std::size_t>(c)] = 1;
    }
  }
  return cents;
}

}  // namespace

void PQTrainConfig::check() const {
  if (m < 0) throw ConfigError("m must be non-negative");
  if (bits < 1 || bits > 8) throw ConfigError("bits must be in [1, 8]");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
}

int default_subvector_count(int dim) {
  if (dim >= 8 && dim % 8 == 0) return dim / 8;
  if (dim >= 4 && dim % 4 == 0) return dim / 4;
  return 1;
}

PQCodebook train_pq(const RowMatrixf& data, const PQTrainConfig& config) {
  config.check();
  const int dim = static_cast<int>(data.cols());
  const auto n = static_cast<std::size_t>(data.rows());
  if (dim <= 0) throw ConfigError("descriptors have no columns");
  if (n == 0) throw ConfigError("no training rows for the PQ codebook");
  const int m = config.m == 0 ? default_subvector_count(dim) : config.m;
  if (dim % m != 0) throw ConfigError("dimension " + std::to_string(dim) + " is not divisible by m=" + std::to_string(m));
  PQCodebook cb;
  cb.dim = dim;
  cb.m = m;
  cb.dsub = dim / m;
  cb.k = static_cast<int>(std::min<std::size_t>(std::size_t{1} << config.bits, n));
  cb.centroids.assign(static_cast<std::size_t>(m) * cb.k * cb.dsub, 0.0f);
  parallel_for(0, static_cast<std::size_t>(m), [&](std::size_t sub) {
    std::vector<float> pts(n * static_cast<std::size_t>(cb.dsub));
    for (std::size_t i = 0; i < n; ++i)
      for (int j = 0; j < cb.dsub; ++j)
        pts[i * cb.dsub + j] = data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(sub) * cb.dsub + j);
    const auto cents = kmeans(pts, n, cb.dsub, cb.k, config.iterations, mix_seed(config.seed, sub));
    std::copy(cents.begin(), cents.end(),
              cb.centroids.begin() + static_cast<std::ptrdiff_t>(sub * static_cast<std::size_t>(cb.k) * cb.dsub));
  });
  return cb;
}

PQCodes encode(const PQCodebook& codebook, const RowMatrixf& data) {
  if (data.cols() != codebook.dim) throw ConfigError("descriptor dimension does not match the codebook");
  PQCodes out;
  out.m = codebook.m;
  const auto n = static_cast<std::size_t>(data.rows());
  out.codes.assign(n * static_cast<std::size_t>(codebook.m), 0);
  parallel_for(0, n, [&](std::size_t i) {
    for (int s = 0; s < codebook.m; ++s) {
      const float* x = data.data() + i * static_cast<std::size_t>(codebook.dim) + static_cast<std::size_t>(s) * codebook.dsub;
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < codebook.k; ++c) {
        const double d = sq_dist(x, codebook.centroid(s, c), codebook.dsub);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      out.codes[i * static_cast<std::size_t>(codebook.m) + static_cast<std::size_t>(s)] = static_cast<std::uint8_t>(best);
    }
  });
  return out;
}

RowMatrixf decode(const PQCodebook& codebook, const PQCodes& codes, bool renormalize) {
  if (codes.m != codebook.m) throw ConfigError("codes do not match the codebook");
  const std::size_t n = codes.size();
  RowMatrixf out(static_cast<Eigen::Index>(n), codebook.dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = codes.row(i);
    for (int s = 0; s < codebook.m; ++s) {
      if (row[static_cast<std::size_t>(s)] >= codebook.k) throw FormatError(FormatError::Kind::schema, "code out of range");
      const float* c = codebook.centroid(s, row[static_cast<std::size_t>(s)]);
      for (int j = 0; j < codebook.dsub; ++j) out(static_cast<Eigen::Index>(i), s * codebook.dsub + j) = c[j];
    }
    if (renormalize) {
      const double norm = out.row(static_cast<Eigen::Index>(i)).cast<double>().norm();
      if (norm > 0.0)
        out.row(static_cast<Eigen::Index>(i)) =
            (out.row(static_cast<Eigen::Index>(i)).cast<double>() / norm).cast<float>();
    }
  }
  return out;
}

std::vector<double> adc_scores(const PQCodebook& codebook, const PQCodes& codes, const Eigen::VectorXf& query) {
  if (query.size() != codebook.dim) throw ConfigError("query dimension does not match the codebook");
  if (codes.m != codebook.m) throw ConfigError("codes do not match the codebook");
  std::vector<double> table(static_cast<std::size_t>(codebook.m) * codebook.k);
  for (int s = 0; s < codebook.m; ++s)
    for (int c = 0; c < codebook.k; ++c) {
      const float* cent = codebook.centroid(s, c);
      double dot = 0.0;
      for (int j = 0; j < codebook.dsub; ++j) dot += static_cast<double>(query[s * codebook.dsub + j]) * cent[j];
      table[static_cast<std::size_t>(s) * codebook.k + c] = dot;
    }
  const std::size_t n = codes.size();
  std::vector<double> out(n);
  parallel_for(0, n, [&](std::size_t i) {
    const auto row = codes.row(i);
    double s = 0.0;
    for (int sub = 0; sub < codebook.m; ++sub)
      s += table[static_cast<std::size_t>(sub) * codebook.k + row[static_cast<std::size_t>(sub)]];
    out[i] = s;
  });
  return out;
}

std::vector<SearchHit> search(const PQCodebook& codebook, const PQCodes& codes, const Eigen::VectorXf& query,
                              std::size_t shortlist_size, std::span<const std::uint8_t> valid) {
  if (!valid.empty() && valid.size() != codes.size()) throw ConfigError("valid mask size does not match the codes");
  const std::vector<double> scores = adc_scores(codebook, codes, query);
  std::vector<SearchHit> hits;
  hits.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (valid.empty() || valid[i]) hits.push_back({static_cast<std::uint32_t>(i), scores[i]});
  const std::size_t keep = std::min(shortlist_size, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(),
                    [](const SearchHit& a, const SearchHit& b) {
                      return a.score != b.score ? a.score > b.score : a.index < b.index;
                    });
  hits.resize(keep);
  return hits;
}

PQIndex build_index(const GaussianScene& scene, const PQTrainConfig& config) {
  if (!scene.descriptors) throw ConfigError("scene has no descriptors; run registration first");
  const RowMatrixf& desc = *scene.descriptors;
  if (scene.labeled.size() != static_cast<std::size_t>(desc.rows())) throw ConfigError("labeled flags do not match descriptors");
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < scene.labeled.size(); ++i)
    if (scene.labeled[i]) rows.push_back(static_cast<Eigen::Index>(i));
  if (rows.empty()) throw EmptySceneError("no labeled Gaussians to index");
  RowMatrixf train(static_cast<Eigen::Index>(rows.size()), desc.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) train.row(static_cast<Eigen::Index>(r)) = desc.row(rows[r]);
  PQIndex index;
  index.codebook = train_pq(train, config);
  index.codes = encode(index.codebook, desc);
  index.valid = scene.labeled;
  return index;
}

}  // namespace profuse
