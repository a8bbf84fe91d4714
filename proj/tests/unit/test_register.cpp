#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "profuse/errors.hpp"
#include "profuse/parallel.hpp"
#include "profuse/register.hpp"

using namespace profuse;

namespace {

/// Hits where every pixel sees the same (gaussian, weight) list.
PixelHits uniform_hits(int w, int h, int k, std::vector<std::pair<std::uint32_t, float>> list) {
  PixelHits out;
  out.width = w;
  out.height = h;
  out.top_k = k;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  out.index.assign(n * k, 0);
  out.weight.assign(n * k, 0.0f);
  out.count.assign(n, static_cast<std::uint16_t>(list.size()));
  out.total_weight.assign(n, 0.0f);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t t = 0; t < list.size(); ++t) {
      out.index[p * k + t] = list[t].first;
      out.weight[p * k + t] = list[t].second;
      out.total_weight[p] += list[t].second;
    }
  return out;
}

PixelHits random_hits(std::mt19937_64& rng, int w, int h, int k, std::uint32_t n) {
  PixelHits out = uniform_hits(w, h, k, {});
  std::uniform_real_distribution<float> u(0.0f, 0.5f);
  for (std::size_t p = 0; p < out.count.size(); ++p) {
    out.count[p] = static_cast<std::uint16_t>(rng() % (k + 1));
    for (int t = 0; t < out.count[p]; ++t) {
      out.index[p * k + t] = static_cast<std::uint32_t>(rng() % n);
      out.weight[p * k + t] = u(rng);
    }
  }
  return out;
}

View view_with(ViewId id, LabelMap labels, RowMatrixf emb) {
  View v;
  v.id = id;
  v.camera = fixture::test_camera(labels.width(), labels.height());
  v.masks.view_id = id;
  v.masks.labels = std::move(labels);
  v.masks.embeddings = std::move(emb);
  return v;
}

GaussianScene blank_scene(std::size_t n) {
  GaussianScene s;
  s.gaussians.resize(n);
  return s;
}

Eigen::VectorXf unit(int d, int i) {
  Eigen::VectorXf v = Eigen::VectorXf::Zero(d);
  v[i] = 1.0f;
  return v;
}

}  // namespace

TEST_CASE("mask mass") {
  const PixelHits h = uniform_hits(5, 2, 3, {{0, 0.8f}});
  CHECK(mask_mass(h, BinaryMask(5, 2, 0)) == 0.0);
  CHECK(mask_mass(h, BinaryMask(5, 2, 1)) == doctest::Approx(8.0));
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const PixelHits r = random_hits(rng, 9, 7, 4, 30);
    LabelMap labels(9, 7, 0);
    for (std::size_t p = 0; p < labels.size(); ++p) labels[p] = static_cast<std::uint16_t>(rng() % 4);
    const auto all = mask_masses(r, labels, 3);
    REQUIRE(all.size() == 4);
    for (int k = 0; k <= 3; ++k) {
      BinaryMask m(9, 7, 0);
      for (std::size_t p = 0; p < m.size(); ++p) m[p] = labels[p] == k;
      CHECK(all[k] == doctest::Approx(oracle::mask_mass(r, m)).epsilon(1e-12));
      CHECK(mask_mass(r, m) == doctest::Approx(oracle::mask_mass(r, m)).epsilon(1e-12));
    }
  }
}

TEST_CASE("proposal descriptors") {
  ViewSet views;
  views.descriptor_dim = 4;
  RowMatrixf emb(2, 4);
  emb.row(0) = unit(4, 0).transpose();
  emb.row(1) = unit(4, 1).transpose();
  views.views.push_back(view_with(0, LabelMap(2, 2, 0), emb));
  views.views.push_back(view_with(1, LabelMap(2, 2, 0), emb));
  const std::vector<std::vector<double>> masses{{0.0, 3.2, 1.0}, {0.0, 1.0, 3.0}};

  SUBCASE("single member") {
    const Proposal p{{{0, 1}}, {0}};
    const auto d = proposal_descriptor(p, 1, views, masses);
    CHECK_FALSE(d.degenerate);
    CHECK(d.mass == doctest::Approx(3.2));
    CHECK(d.descriptor.isApprox(unit(4, 0)));
  }
  SUBCASE("equal masses on orthogonal embeddings") {
    const Proposal p{{{0, 2}, {1, 1}}, {0, 1}};
    const auto d = proposal_descriptor(p, 1, views, masses);
    CHECK(d.descriptor[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(d.descriptor[1] == doctest::Approx(1.0 / std::sqrt(2.0)));
  }
  SUBCASE("masses 1 and 3") {
    const Proposal p{{{1, 1}, {1, 2}}, {1}};
    const auto d = proposal_descriptor(p, 1, views, masses);
    CHECK(d.descriptor[0] == doctest::Approx(1.0 / std::sqrt(10.0)));
    CHECK(d.descriptor[1] == doctest::Approx(3.0 / std::sqrt(10.0)));
    CHECK(d.descriptor.norm() == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("zero mass is degenerate") {
    const std::vector<std::vector<double>> zero{{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}};
    const Proposal p{{{0, 1}, {1, 1}}, {0, 1}};
    CHECK(proposal_descriptor(p, 1, views, zero).degenerate);
  }
}

TEST_CASE("proposal maps") {
  LabelMap labels(3, 1, 0);
  labels[0] = 1;
  labels[1] = 2;
  ViewSet views;
  views.descriptor_dim = 2;
  views.views.push_back(view_with(4, labels, RowMatrixf::Identity(2, 2)));
  ProposalSet ps;
  ps.proposals.resize(5);
  ps.lookup[4] = {0, 5, 0};
  const auto maps = build_proposal_maps(views, ps);
  CHECK(maps[0][0] == 5);
  CHECK(maps[0][1] == 0);
  CHECK(maps[0][2] == 0);
}

TEST_CASE("registration on hand-built hits") {
  ViewSet views;
  views.descriptor_dim = 4;
  RowMatrixf emb(2, 4);
  emb.row(0) = unit(4, 0).transpose();
  emb.row(1) = unit(4, 1).transpose();
  LabelMap left(2, 1, 0);
  left[0] = 1;
  left[1] = 2;
  views.views.push_back(view_with(0, left, emb));
  views.views.push_back(view_with(1, left, emb));
  ProposalSet ps;
  ps.proposals = {Proposal{{{0, 1}, {1, 1}}, {0, 1}}, Proposal{{{0, 2}, {1, 2}}, {0, 1}}};
  ps.lookup[0] = {0, 1, 2};
  ps.lookup[1] = {0, 1, 2};

  SUBCASE("single touching proposal gives exactly its descriptor") {
    PixelHits h = uniform_hits(2, 1, 2, {});
    h.count = {1, 0};
    h.index[0] = 0;
    h.weight[0] = 0.7f;
    const std::vector<PixelHits> hits{h, h};
    const auto r = register_features(blank_scene(3), views, ps, hits);
    CHECK(r.scene.labeled == std::vector<std::uint8_t>{1, 0, 0});
    CHECK(r.scene.descriptors->row(0).transpose() == r.descriptors[0].descriptor);
    CHECK(r.scene.descriptors->row(1).isZero());
    CHECK(r.labeled_count == 1);
    CHECK(validate_scene(r.scene).empty());
  }
  SUBCASE("two proposals with equal weight") {
    const PixelHits h = uniform_hits(2, 1, 2, {{1, 0.5f}});
    const std::vector<PixelHits> hits{h, h};
    const auto r = register_features(blank_scene(2), views, ps, hits);
    CHECK(r.scene.labeled == std::vector<std::uint8_t>{0, 1});
    CHECK((*r.scene.descriptors)(1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK((*r.scene.descriptors)(1, 1) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(r.weight_sum[1] == doctest::Approx(2.0));
  }
  SUBCASE("hit outside the scene") {
    const PixelHits h = uniform_hits(2, 1, 2, {{7, 0.5f}});
    const std::vector<PixelHits> hits{h, h};
    CHECK_THROWS_AS(register_features(blank_scene(2), views, ps, hits), ConfigError);
  }
}

TEST_CASE("random registration: order independence, threads, cone, labeled set") {
  std::mt19937_64 rng(77);
  const int d = 6;
  const std::uint32_t n = 40;
  ViewSet views;
  views.descriptor_dim = d;
  std::vector<PixelHits> hits;
  ProposalSet ps;
  for (ViewId id = 0; id < 5; ++id) {
    LabelMap labels(8, 6, 0);
    for (std::size_t p = 0; p < labels.size(); ++p) labels[p] = static_cast<std::uint16_t>(rng() % 4);
    views.views.push_back(view_with(id * 2 + 1, labels, fixture::random_unit_rows(rng, 3, d)));
    hits.push_back(random_hits(rng, 8, 6, 3, n));
  }
  // Proposal k groups mask k of every view; mask 3 stays unassigned.
  for (int k = 1; k <= 2; ++k) {
    Proposal p;
    for (const auto& v : views.views) {
      p.members.push_back({v.id, static_cast<MaskId>(k)});
      p.views.push_back(v.id);
    }
    ps.proposals.push_back(p);
  }
  for (const auto& v : views.views) ps.lookup[v.id] = {0, 1, 2, 0};

  set_thread_count(1);
  const auto base = register_features(blank_scene(n), views, ps, hits);

  SUBCASE("permuted views") {
    std::vector<std::size_t> perm{3, 0, 4, 2, 1};
    ViewSet pv;
    pv.descriptor_dim = d;
    std::vector<PixelHits> ph;
    for (auto i : perm) {
      pv.views.push_back(views.views[i]);
      ph.push_back(hits[i]);
    }
    const auto r = register_features(blank_scene(n), pv, ps, ph);
    CHECK((r.accumulator - base.accumulator).cwiseAbs().maxCoeff() <= 1e-6);
    for (std::uint32_t g = 0; g < n; ++g) CHECK(std::abs(r.weight_sum[g] - base.weight_sum[g]) <= 1e-6);
    CHECK(*r.scene.descriptors == *base.scene.descriptors);
  }
  SUBCASE("thread counts") {
    for (int t : {2, 4, 8}) {
      set_thread_count(t);
      const auto r = register_features(blank_scene(n), views, ps, hits);
      CHECK(r.accumulator == base.accumulator);
      CHECK(*r.scene.descriptors == *base.scene.descriptors);
    }
    set_thread_count(1);
  }
  SUBCASE("labeled exactly where some proposal pixel hit") {
    std::vector<std::uint8_t> touched(n, 0);
    for (std::size_t v = 0; v < views.size(); ++v)
      for (std::size_t p = 0; p < hits[v].count.size(); ++p) {
        const auto l = views.views[v].masks.labels[p];
        if (l == 0 || l == 3) continue;
        for (auto g : hits[v].indices_at(p)) touched[g] = 1;
      }
    // Zero-weight hits cannot label; random weights are almost surely positive.
    CHECK(base.scene.labeled == touched);
  }
  SUBCASE("descriptors lie in the cone of the proposal descriptors") {
    Eigen::MatrixXd basis(d, 2);
    basis.col(0) = base.descriptors[0].descriptor.cast<double>();
    basis.col(1) = base.descriptors[1].descriptor.cast<double>();
    for (std::uint32_t g = 0; g < n; ++g) {
      if (!base.scene.labeled[g]) continue;
      const Eigen::VectorXd f = base.scene.descriptors->row(g).transpose().cast<double>();
      const Eigen::VectorXd c = basis.colPivHouseholderQr().solve(f);
      CHECK((basis * c - f).norm() < 1e-5);
      CHECK(c.minCoeff() >= -1e-6);
    }
  }
}

TEST_CASE("zero-noise synth: labeled argmax accuracy") {
  SynthSpec spec;
  spec.seed = 7;
  const auto run = fixture::run_synth(spec);
  CHECK(run.registered.labeled_count > 0);
  CHECK(fixture::labeled_argmax_accuracy(run, run.registered.scene) >= 0.95);
  CHECK(validate_scene(run.registered.scene).empty());
}
