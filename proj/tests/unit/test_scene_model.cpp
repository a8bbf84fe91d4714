#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "profuse/errors.hpp"
#include "profuse/types.hpp"

using namespace profuse;

namespace {

GaussianScene two_gaussians() {
  GaussianScene s;
  s.gaussians.resize(2);
  s.gaussians[1].position = {1.0f, 2.0f, 3.0f};
  s.gaussians[1].rotation = Eigen::Quaternionf(Eigen::AngleAxisf(0.3f, Eigen::Vector3f::UnitY()));
  return s;
}

bool mentions(const std::vector<ValidationIssue>& issues, std::size_t index, const std::string& field) {
  for (const auto& i : issues)
    if (i.index == index && i.field == field) return true;
  return false;
}

}  // namespace

TEST_CASE("valid scene has an empty report") {
  CHECK(validate_scene(two_gaussians()).empty());
}

TEST_CASE("opacity out of range is reported with index and field") {
  auto s = two_gaussians();
  s.gaussians[1].opacity = 1.5f;
  const auto issues = validate_scene(s);
  REQUIRE(issues.size() == 1);
  CHECK(mentions(issues, 1, "opacity"));
  CHECK(issues[0].message.find("1.5") != std::string::npos);
}

TEST_CASE("descriptor norm 0.5 is a normalization violation") {
  auto s = two_gaussians();
  s.descriptor_dim = 3;
  s.descriptors = RowMatrixf::Zero(2, 3);
  (*s.descriptors)(0, 0) = 1.0f;
  (*s.descriptors)(1, 2) = 0.5f;
  s.labeled = {1, 1};
  const auto issues = validate_scene(s);
  REQUIRE(issues.size() == 1);
  CHECK(mentions(issues, 1, "descriptors"));
}

TEST_CASE("other scene invariants") {
  auto s = two_gaussians();
  s.gaussians[0].scale.x() = 0.0f;
  s.gaussians[1].rotation.coeffs() *= 2.0f;
  const auto issues = validate_scene(s);
  CHECK(mentions(issues, 0, "scale"));
  CHECK(mentions(issues, 1, "rotation"));

  auto d = two_gaussians();
  d.descriptor_dim = 2;
  d.descriptors = RowMatrixf::Zero(1, 2);
  CHECK(mentions(validate_scene(d), 0, "descriptors"));

  auto u = two_gaussians();
  u.descriptor_dim = 2;
  u.descriptors = RowMatrixf::Zero(2, 2);
  u.labeled = {0, 0};
  CHECK(validate_scene(u).empty());
  (*u.descriptors)(0, 0) = 0.1f;
  CHECK(mentions(validate_scene(u), 0, "descriptors"));
}

TEST_CASE("camera validation") {
  const Camera ok = Camera::look_at({0, 0, -3}, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitY(), 50, 64, 48);
  CHECK(ok.validate().empty());
  Camera bad = ok;
  bad.intrinsics(0, 0) = -1.0;
  CHECK_FALSE(bad.validate().empty());
  bad = ok;
  bad.world_to_camera(0, 0) = 2.0;
  CHECK_FALSE(bad.validate().empty());
  bad = ok;
  bad.width = 0;
  CHECK_FALSE(bad.validate().empty());
}

TEST_CASE("camera projection and back-projection agree") {
  Camera cam = Camera::look_at({1, 2, -4}, {0, 0.5, 0}, Eigen::Vector3d::UnitY(), 80, 100, 60);
  cam.intrinsics(0, 1) = 3.0;
  const Eigen::Vector3d p(0.2, -0.3, 0.4);
  const Eigen::Vector2d px = cam.project(p);
  const Eigen::Vector3d dir = cam.ray_direction(px);
  const Eigen::Vector3d to_p = (p - cam.center()).normalized();
  CHECK((dir - to_p).norm() < 1e-12);
  CHECK(cam.forward().dot((Eigen::Vector3d(0, 0.5, 0) - cam.center()).normalized()) == doctest::Approx(1.0));
}

TEST_CASE("mask sets") {
  MaskSet m;
  m.labels = LabelMap(3, 2, 0);
  m.labels(1, 0) = 1;
  m.labels(2, 1) = 2;
  m.embeddings = RowMatrixf::Identity(2, 4);
  CHECK_NOTHROW(check_mask_set(m, 4));
  CHECK(count_on(m.mask(2)) == 1);
  CHECK(m.mask(2)(2, 1) == 1);
  CHECK_THROWS_AS(check_mask_set(m, 8), ConfigError);
  m.labels(0, 0) = 3;
  CHECK_THROWS_AS(check_mask_set(m, 4), ConfigError);
  m.labels(0, 0) = 0;
  m.embeddings(1, 1) = 0.5f;
  CHECK_THROWS_AS(check_mask_set(m, 4), ConfigError);
}

TEST_CASE("config checks") {
  ClusterConfig c;
  CHECK_NOTHROW(c.check());
  c.s_min = 0;
  CHECK_THROWS_AS(c.check(), ConfigError);
  RenderConfig r;
  r.alpha_cutoff = 1.0;
  CHECK_THROWS_AS(r.check(), ConfigError);
  r = {};
  r.top_k = 0;
  CHECK_THROWS_AS(r.check(), ConfigError);
  QueryConfig q;
  q.gamma = 1.2;
  CHECK_THROWS_AS(q.check(), ConfigError);
}

TEST_CASE("covariance is R diag(s^2) R^T") {
  Gaussian g;
  g.scale = {0.1f, 0.2f, 0.3f};
  g.rotation = Eigen::Quaternionf(Eigen::AngleAxisf(0.7f, Eigen::Vector3f(1, 1, 0).normalized()));
  const Eigen::Matrix3d cov = g.covariance();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  CHECK(es.eigenvalues()(0) == doctest::Approx(0.01).epsilon(1e-5));
  CHECK(es.eigenvalues()(2) == doctest::Approx(0.09).epsilon(1e-5));
  CHECK((cov - cov.transpose()).norm() < 1e-15);
}
