#include "profuse/register.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "profuse/errors.hpp"
#include "profuse/parallel.hpp"

namespace profuse {

namespace {

void require_hits_shape(const PixelHits& hits, int width, int height) {
  if (hits.width != width || hits.height != height) throw ConfigError("hits and mask resolution differ");
}

struct Shard {
  RowMatrixd a;
  std::vector<double> s;
};

}  // namespace

double mask_mass(const PixelHits& hits, const BinaryMask& mask) {
  require_hits_shape(hits, mask.width(), mask.height());
  double mu = 0.0;
  for (std::size_t p = 0; p < mask.size(); ++p)
    if (mask[p]) mu += hits.retained_weight(p);
  return mu;
}

std::vector<double> mask_masses(const PixelHits& hits, const LabelMap& labels, int mask_count) {
  require_hits_shape(hits, labels.width(), labels.height());
  std::vector<double> out(static_cast<std::size_t>(mask_count) + 1, 0.0);
  for (std::size_t p = 0; p < labels.size(); ++p) {
    const std::uint16_t l = labels[p];
    if (l > mask_count) throw ConfigError("label exceeds mask count");
    out[l] += hits.retained_weight(p);
  }
  return out;
}

ProposalDescriptor proposal_descriptor(const Proposal& proposal, std::uint16_t id, const ViewSet& views,
                                       std::span<const std::vector<double>> masses) {
  if (proposal.members.empty()) throw ConfigError("proposal " + std::to_string(id) + " has no members");
  if (masses.size() != views.size()) throw ConfigError("one mass table per view is required");
  ProposalDescriptor out;
  out.id = id;
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(views.descriptor_dim);
  for (const auto& m : proposal.members) {
    const std::size_t vi = views.index_of(m.view);
    const double mu = masses[vi].at(m.mask);
    out.mass += mu;
    pooled += mu * views.views[vi].masks.embeddings.row(m.mask - 1).transpose().cast<double>();
  }
  const double norm = pooled.norm();
  if (!(out.mass > 0.0) || !(norm > 0.0)) {
    out.degenerate = true;
    out.descriptor = Eigen::VectorXf::Zero(views.descriptor_dim);
  } else {
    out.descriptor = (pooled / norm).cast<float>();
  }
  return out;
}

std::vector<LabelMap> build_proposal_maps(const ViewSet& views, const ProposalSet& proposals) {
  std::vector<LabelMap> maps;
  maps.reserve(views.size());
  for (const auto& v : views.views) {
    const auto& labels = v.masks.labels;
    LabelMap out(labels.width(), labels.height(), 0);
    const auto it = proposals.lookup.find(v.id);
    if (it != proposals.lookup.end())
      for (std::size_t p = 0; p < labels.size(); ++p)
        if (labels[p] < it->second.size()) out[p] = it->second[labels[p]];
    maps.push_back(std::move(out));
  }
  return maps;
}

void RegisterConfig::check() const {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

RegistrationResult register_features(const GaussianScene& scene, const ViewSet& views, const ProposalSet& proposals,
                                     std::span<const PixelHits> hits, const RegisterConfig& config) {
  config.check();
  if (hits.size() != views.size()) throw ConfigError("one hit buffer per view is required");
  const int d = views.descriptor_dim;
  if (d <= 0) throw ConfigError("descriptor_dim must be positive");
  const std::size_t n = scene.size();
  for (std::size_t vi = 0; vi < views.size(); ++vi) {
    const auto& cam = views.views[vi].camera;
    require_hits_shape(hits[vi], cam.width, cam.height);
  }

  std::vector<std::vector<double>> masses(views.size());
  parallel_for(0, views.size(), [&](std::size_t vi) {
    const auto& v = views.views[vi];
    masses[vi] = mask_masses(hits[vi], v.masks.labels, v.masks.mask_count());
  });

  RegistrationResult out;
  out.descriptors.resize(proposals.size());
  for (std::size_t m = 0; m < proposals.size(); ++m)
    out.descriptors[m] = proposal_descriptor(proposals.proposals[m], static_cast<std::uint16_t>(m + 1), views, masses);
  RowMatrixd pooled(static_cast<Eigen::Index>(proposals.size()), d);
  for (std::size_t m = 0; m < proposals.size(); ++m)
    pooled.row(static_cast<Eigen::Index>(m)) = out.descriptors[m].descriptor.cast<double>().transpose();

  const std::vector<LabelMap> maps = build_proposal_maps(views, proposals);

  std::vector<std::size_t> order(views.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return views.views[a].id < views.views[b].id; });

  out.accumulator = RowMatrixd::Zero(static_cast<Eigen::Index>(n), d);
  out.weight_sum.assign(n, 0.0);
  // Views are processed in batches to bound shard memory; the merge below
  // always runs in view id order.
  const std::size_t batch = std::max<std::size_t>(1, static_cast<std::size_t>(thread_count()));
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t stop = std::min(order.size(), start + batch);
    std::vector<Shard> shards(stop - start);
    parallel_for(start, stop, [&](std::size_t oi) {
      const std::size_t vi = order[oi];
      Shard& sh = shards[oi - start];
      sh.a = RowMatrixd::Zero(static_cast<Eigen::Index>(n), d);
      sh.s.assign(n, 0.0);
      const PixelHits& h = hits[vi];
      const LabelMap& map = maps[vi];
      for (std::size_t p = 0; p < map.size(); ++p) {
        const std::uint16_t m = map[p];
        if (m == 0 || out.descriptors[m - 1].degenerate) continue;
        const auto idx = h.indices_at(p);
        const auto wts = h.weights_at(p);
        for (std::size_t t = 0; t < idx.size(); ++t) {
          const std::uint32_t g = idx[t];
          if (g >= n) throw ConfigError("hit refers to Gaussian " + std::to_string(g) + " outside the scene");
          const double w = wts[t];
          sh.a.row(g) += w * pooled.row(m - 1);
          sh.s[g] += w;
        }
      }
    });
    for (auto& sh : shards) {
      out.accumulator += sh.a;
      for (std::size_t g = 0; g < n; ++g) out.weight_sum[g] += sh.s[g];
    }
  }

  out.scene = scene;
  RowMatrixf desc = RowMatrixf::Zero(static_cast<Eigen::Index>(n), d);
  out.scene.labeled.assign(n, 0);
  for (std::size_t g = 0; g < n; ++g) {
    if (!(out.weight_sum[g] > 0.0)) continue;
    const Eigen::VectorXd f =
        out.accumulator.row(static_cast<Eigen::Index>(g)).transpose() / std::max(out.weight_sum[g], config.epsilon);
    const double norm = f.norm();
    if (!(norm > 0.0)) continue;
    desc.row(static_cast<Eigen::Index>(g)) = (f / norm).cast<float>().transpose();
    out.scene.labeled[g] = 1;
    ++out.labeled_count;
  }
  out.scene.descriptors = std::move(desc);
  out.scene.descriptor_dim = d;
  return out;
}

}  // namespace profuse
