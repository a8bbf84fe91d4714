#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "profuse/errors.hpp"
#include "profuse/pq_index.hpp"

using namespace profuse;

namespace {

double reconstruction_error(const RowMatrixf& data, const PQCodebook& cb) {
  const RowMatrixf dec = decode(cb, encode(cb, data), false);
  return (dec - data).cast<double>().rowwise().squaredNorm().mean();
}

}  // namespace

TEST_CASE("default subvector count") {
  CHECK(default_subvector_count(16) == 2);
  CHECK(default_subvector_count(12) == 3);
  CHECK(default_subvector_count(7) == 1);
  CHECK(default_subvector_count(512) == 64);
}

TEST_CASE("as many centroids as points quantize exactly") {
  std::mt19937_64 rng(1);
  const RowMatrixf data = fixture::random_unit_rows(rng, 256, 16);
  PQTrainConfig cfg;
  cfg.m = 1;
  const PQCodebook cb = train_pq(data, cfg);
  CHECK(cb.k == 256);
  CHECK(reconstruction_error(data, cb) == 0.0);
}

TEST_CASE("training is deterministic and seed dependent") {
  std::mt19937_64 rng(2);
  const RowMatrixf data = fixture::random_unit_rows(rng, 600, 16);
  PQTrainConfig cfg;
  cfg.m = 4;
  cfg.seed = 5;
  const PQCodebook a = train_pq(data, cfg);
  CHECK(train_pq(data, cfg) == a);
  CHECK(encode(a, data) == encode(train_pq(data, cfg), data));
  cfg.seed = 6;
  CHECK_FALSE(train_pq(data, cfg) == a);
}

TEST_CASE("finer product grid reconstructs no worse") {
  std::mt19937_64 rng(3);
  const RowMatrixf data = fixture::random_unit_rows(rng, 2000, 16);
  PQTrainConfig one, four;
  one.m = 1;
  four.m = 4;
  const double e1 = reconstruction_error(data, train_pq(data, one));
  const double e4 = reconstruction_error(data, train_pq(data, four));
  CHECK(e4 <= e1);
}

TEST_CASE("small data shrinks k; bad shapes are rejected") {
  std::mt19937_64 rng(4);
  const RowMatrixf data = fixture::random_unit_rows(rng, 10, 8);
  PQTrainConfig cfg;
  cfg.m = 2;
  CHECK(train_pq(data, cfg).k == 10);
  cfg.m = 3;
  CHECK_THROWS_AS(train_pq(data, cfg), ConfigError);
  cfg.m = 2;
  cfg.bits = 9;
  CHECK_THROWS_AS(train_pq(data, cfg), ConfigError);
  CHECK_THROWS_AS(train_pq(RowMatrixf(0, 8), PQTrainConfig{}), ConfigError);
}

TEST_CASE("encode / decode") {
  std::mt19937_64 rng(5);
  const RowMatrixf data = fixture::random_unit_rows(rng, 500, 16);
  PQTrainConfig cfg;
  cfg.m = 4;
  const PQCodebook cb = train_pq(data, cfg);
  const PQCodes codes = encode(cb, data);
  CHECK(codes.size() == 500);
  for (auto c : codes.codes) CHECK(c < cb.k);
  const RowMatrixf dec = decode(cb, codes);
  for (Eigen::Index r = 0; r < dec.rows(); ++r) CHECK(std::abs(dec.row(r).norm() - 1.0f) <= 1e-6f);

  // A concatenation of centroids decodes to itself.
  RowMatrixf x(1, 16);
  for (int s = 0; s < 4; ++s)
    for (int j = 0; j < cb.dsub; ++j) x(0, s * cb.dsub + j) = cb.centroid(s, (7 * s + 3) % cb.k)[j];
  const RowMatrixf back = decode(cb, encode(cb, x), false);
  CHECK((back - x).cwiseAbs().maxCoeff() <= 1e-6f);
}

TEST_CASE("ADC equals decoded dot products") {
  std::mt19937_64 rng(6);
  const RowMatrixf data = fixture::random_unit_rows(rng, 700, 16);
  for (int m : {1, 2, 4, 8}) {
    PQTrainConfig cfg;
    cfg.m = m;
    const PQCodebook cb = train_pq(data, cfg);
    const PQCodes codes = encode(cb, data);
    const RowMatrixf q = fixture::random_unit_rows(rng, 5, 16);
    for (int i = 0; i < 5; ++i) {
      const Eigen::VectorXf qi = q.row(i).transpose();
      const auto adc = adc_scores(cb, codes, qi);
      const auto ref = oracle::decoded_dots(cb, codes, qi);
      for (std::size_t n = 0; n < adc.size(); ++n) CHECK(std::abs(adc[n] - ref[n]) <= 1e-6);
    }
  }
}

TEST_CASE("search") {
  std::mt19937_64 rng(7);
  const RowMatrixf data = fixture::random_unit_rows(rng, 300, 16);
  PQTrainConfig cfg;
  cfg.m = 4;
  const PQCodebook cb = train_pq(data, cfg);
  const PQCodes codes = encode(cb, data);

  SUBCASE("exact codeword query ranks first") {
    const RowMatrixf dec = decode(cb, codes, true);
    const Eigen::VectorXf q = dec.row(42).transpose();
    const auto hits = search(cb, codes, q, 5);
    REQUIRE_FALSE(hits.empty());
    // Rows sharing row 42's codes tie with it; the lowest index wins.
    std::uint32_t first_same = 42;
    for (std::uint32_t n = 0; n < 42; ++n)
      if (std::equal(codes.row(n).begin(), codes.row(n).end(), codes.row(42).begin())) first_same = std::min(first_same, n);
    CHECK(hits[0].index == first_same);
  }
  SUBCASE("full shortlist is a permutation sorted by score") {
    const Eigen::VectorXf q = fixture::random_unit_rows(rng, 1, 16).row(0).transpose();
    const auto hits = search(cb, codes, q, 300);
    REQUIRE(hits.size() == 300);
    std::set<std::uint32_t> ids;
    for (std::size_t i = 0; i < hits.size(); ++i) {
      ids.insert(hits[i].index);
      if (i > 0) {
        CHECK(hits[i - 1].score >= hits[i].score);
        if (hits[i - 1].score == hits[i].score) CHECK(hits[i - 1].index < hits[i].index);
      }
    }
    CHECK(ids.size() == 300);
  }
  SUBCASE("invalid rows are skipped") {
    std::vector<std::uint8_t> valid(300, 0);
    valid[10] = valid[20] = 1;
    const Eigen::VectorXf q = fixture::random_unit_rows(rng, 1, 16).row(0).transpose();
    const auto hits = search(cb, codes, q, 50, valid);
    REQUIRE(hits.size() == 2);
    for (const auto& h : hits) CHECK(valid[h.index] == 1);
  }
}

TEST_CASE("m = 1 with enough centroids ranks exactly") {
  std::mt19937_64 rng(8);
  const RowMatrixf distinct = fixture::random_unit_rows(rng, 60, 12);
  RowMatrixf data(200, 12);
  for (int r = 0; r < 200; ++r) data.row(r) = distinct.row(static_cast<Eigen::Index>(rng() % 60));
  PQTrainConfig cfg;
  cfg.m = 1;
  const PQCodebook cb = train_pq(data, cfg);
  const PQCodes codes = encode(cb, data);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXf q = fixture::random_unit_rows(rng, 1, 12).row(0).transpose();
    const auto hits = search(cb, codes, q, 200);
    const auto exact = oracle::exact_top(data, {}, q, 200);
    REQUIRE(hits.size() == exact.size());
    for (std::size_t i = 0; i < hits.size(); ++i) CHECK(hits[i].index == exact[i]);
  }
}

TEST_CASE("index over a registered synth scene") {
  SynthSpec spec;
  spec.seed = 7;
  const auto run = fixture::run_synth(spec);
  const GaussianScene& scene = run.registered.scene;
  PQTrainConfig cfg;
  cfg.m = 4;
  const PQIndex index = build_index(scene, cfg);
  CHECK(index.valid == scene.labeled);
  CHECK(index.codes.size() == scene.size());
  const RowMatrixf dec = decode(index.codebook, index.codes);
  double cos = 0.0;
  std::size_t n = 0;
  for (std::size_t g = 0; g < scene.size(); ++g)
    if (scene.labeled[g]) {
      cos += dec.row(static_cast<Eigen::Index>(g)).dot(scene.descriptors->row(static_cast<Eigen::Index>(g)));
      ++n;
    }
  CHECK(cos / static_cast<double>(n) >= 0.95);
  CHECK(build_index(scene, cfg) == index);
}
