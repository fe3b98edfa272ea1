#include <cmath>
#include <numbers>

#include "doctest.h"
#include "unit/helpers.hpp"

#include "radloc/geomsolve.hpp"
#include "radloc/rng.hpp"

using namespace radloc;
using namespace radloc::geomsolve;
using testing::pt;

namespace {

std::vector<double> ranges_to(const std::vector<Position>& anchors, const Position& x) {
  std::vector<double> r;
  for (const auto& a : anchors) r.push_back((x - a).norm());
  return r;
}

Eigen::Matrix2d rotation(double rad) {
  Eigen::Matrix2d r;
  r << std::cos(rad), -std::sin(rad), std::sin(rad), std::cos(rad);
  return r;
}

}  // namespace

TEST_SUITE("geomsolve") {

TEST_CASE("trilateration recovers an exact fix") {
  const std::vector<Position> anchors{pt(0, 0), pt(1, 0), pt(0, 1)};
  const auto truth = pt(0.3, 0.4);
  const auto rep = trilaterate(anchors, ranges_to(anchors, truth));
  CHECK(rep.converged);
  CHECK((rep.estimate - truth).norm() < 1e-8);
}

TEST_CASE("collinear anchors are singular") {
  const std::vector<Position> anchors{pt(0, 0), pt(1, 0), pt(2, 0)};
  const std::vector<double> r{1.0, 1.0, 1.5};
  try {
    trilaterate(anchors, r);
    FAIL("expected SingularGeometry");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularGeometry);
  }
}

TEST_CASE("starting at the solution is a fixed point") {
  const std::vector<Position> anchors{pt(0, 0), pt(1, 0), pt(0, 1), pt(1, 1)};
  const auto truth = pt(0.6, 0.2);
  const auto rep = trilaterate(anchors, ranges_to(anchors, truth), truth);
  CHECK(rep.converged);
  CHECK(rep.iterations <= 1);
  CHECK(rep.residual_norm < 1e-15);
  CHECK((rep.estimate - truth).norm() < 1e-15);
}

TEST_CASE("uniform weights reduce WLS to LS") {
  Rng rng(3);
  const std::vector<Position> anchors{pt(0, 0), pt(2, 0), pt(0, 2), pt(2, 2), pt(1, -1)};
  for (int trial = 0; trial < 20; ++trial) {
    const auto truth = pt(rng.uniform(0.2, 1.8), rng.uniform(0.2, 1.8));
    auto r = ranges_to(anchors, truth);
    for (auto& v : r) v += rng.normal(0.0, 0.05);
    const auto ls = trilaterate(anchors, r);
    const std::vector<double> w(anchors.size(), 3.7);
    const auto wls = iterative_wls(anchors, r, w);
    CHECK((ls.estimate - wls.estimate).norm() < 1e-10);
  }
}

TEST_CASE("a dominant weight pins its range constraint") {
  const std::vector<Position> anchors{pt(0, 0), pt(2, 0), pt(0, 2), pt(2, 2)};
  const std::vector<double> r{1.30, 1.45, 1.50, 1.35};
  const std::vector<double> w{1e8, 1.0, 1.0, 1.0};
  const auto rep = iterative_wls(anchors, r, w);
  CHECK(std::abs((rep.estimate - anchors[0]).norm() - r[0]) < 1e-6);
  const auto plain = iterative_wls(anchors, r, std::vector<double>(4, 1.0));
  CHECK(std::abs((plain.estimate - anchors[0]).norm() - r[0]) > 1e-3);
}

TEST_CASE("inverse-variance weighting beats uniform weighting under heteroscedastic noise") {
  Rng rng(17);
  const std::vector<Position> anchors{pt(0, 0), pt(10, 0), pt(0, 10), pt(10, 10), pt(5, -3)};
  const std::vector<double> sd{0.02, 0.5, 0.05, 0.8, 0.1};
  std::vector<double> w;
  for (double s : sd) w.push_back(1.0 / (s * s));
  double se_ls = 0.0, se_wls = 0.0;
  const int n = 500;
  for (int t = 0; t < n; ++t) {
    const auto truth = pt(rng.uniform(2, 8), rng.uniform(2, 8));
    auto r = ranges_to(anchors, truth);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += rng.normal(0.0, sd[i]);
    se_ls += (trilaterate(anchors, r).estimate - truth).squaredNorm();
    se_wls += (iterative_wls(anchors, r, w).estimate - truth).squaredNorm();
  }
  CHECK(std::sqrt(se_wls / n) <= std::sqrt(se_ls / n));
}

TEST_CASE("WLS reports a covariance under both scalings") {
  const std::vector<Position> anchors{pt(0, 0), pt(1, 0), pt(0, 1), pt(1, 1)};
  const auto truth = pt(0.4, 0.7);
  auto r = ranges_to(anchors, truth);
  r[1] += 0.01;
  const std::vector<double> w{4.0, 1.0, 2.0, 1.0};
  const auto unit = iterative_wls(anchors, r, w, std::nullopt, {}, CovarianceScale::Unit);
  REQUIRE(unit.covariance.has_value());
  // Oracle: (H^T W H)^-1 with unit line-of-sight rows at the estimate.
  Eigen::Matrix2d info = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Eigen::Vector2d u = (unit.estimate - anchors[i]).normalized();
    info += w[i] * u * u.transpose();
  }
  CHECK((*unit.covariance - info.inverse()).norm() < 1e-10);
  const auto scaled = iterative_wls(anchors, r, w, std::nullopt, {}, CovarianceScale::ResidualVariance);
  REQUIRE(scaled.covariance.has_value());
  CHECK((*scaled.covariance).norm() < (*unit.covariance).norm());
}

TEST_CASE("Foy TDoA on an exact instance") {
  TdoaSet t;
  t.reference = pt(0, 0);
  t.anchors = {pt(1, 0), pt(0, 1)};
  const auto truth = pt(0.3, 0.4);
  for (const auto& a : t.anchors) t.differences.push_back((truth - a).norm() - (truth - t.reference).norm());
  const auto rep = foy_tdoa(t, pt(0.5, 0.5));
  CHECK(rep.converged);
  CHECK((rep.estimate - truth).norm() < 1e-9);
}

TEST_CASE("Foy returns the symmetry centre when every difference is zero") {
  TdoaSet t;
  t.reference = pt(1, 0);
  for (int k = 1; k < 4; ++k) {
    const double a = k * std::numbers::pi / 2.0;
    t.anchors.push_back(pt(std::cos(a), std::sin(a)));
    t.differences.push_back(0.0);
  }
  const auto rep = foy_tdoa(t, pt(0.2, -0.1));
  CHECK(rep.converged);
  CHECK(rep.estimate.norm() < 1e-9);
}

TEST_CASE("Foy error grows with difference quantisation") {
  TdoaSet base;
  base.reference = pt(0, 0);
  base.anchors = {pt(100, 0), pt(0, 100), pt(100, 100)};
  const std::vector<double> steps{0.0, 0.5, 2.0, 5.0};
  std::vector<double> mean_err(steps.size(), 0.0);
  Rng rng(5);
  const int n = 200;
  for (int trial = 0; trial < n; ++trial) {
    const auto truth = pt(rng.uniform(20, 80), rng.uniform(20, 80));
    for (std::size_t s = 0; s < steps.size(); ++s) {
      TdoaSet t = base;
      for (const auto& a : t.anchors) {
        double d = (truth - a).norm() - truth.norm();
        if (steps[s] > 0) d = steps[s] * std::round(d / steps[s]);
        t.differences.push_back(d);
      }
      mean_err[s] += (foy_tdoa(t, pt(50, 50)).estimate - truth).norm() / n;
    }
  }
  CHECK(mean_err[0] < 1e-6);
  for (std::size_t s = 1; s < steps.size(); ++s) CHECK(mean_err[s] > mean_err[s - 1]);
}

TEST_CASE("WGDOP geometry and weight scaling") {
  const auto target = pt(0, 0);
  std::vector<Position> spread, squeezed;
  for (int k = 0; k < 3; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 3.0;
    spread.push_back(pt(10 * std::cos(a), 10 * std::sin(a)));
    const double b = (k - 1) * 10.0 * std::numbers::pi / 180.0;
    squeezed.push_back(pt(10 * std::cos(b), 10 * std::sin(b)));
  }
  const std::vector<double> w{1.0, 1.0, 1.0};
  CHECK(wgdop(spread, w, target) < wgdop(squeezed, w, target));
  // Three unit vectors 120 degrees apart: H^T H = 1.5 I, so WGDOP = sqrt(2 / 1.5).
  CHECK(wgdop(spread, w, target) == doctest::Approx(std::sqrt(2.0 / 1.5)).epsilon(1e-12));

  const std::vector<double> w4{4.0, 4.0, 4.0};
  CHECK(wgdop(spread, w4, target) == doctest::Approx(wgdop(spread, w, target) / 2.0).epsilon(1e-12));

  const std::vector<Position> line{pt(1, 0), pt(2, 0), pt(3, 0)};
  CHECK_THROWS_AS(wgdop(line, w, target), Error);
}

TEST_CASE("group fusion") {
  const std::vector<Position> all{pt(0, 0), pt(4, 0), pt(0, 4), pt(4, 4), pt(2, -2), pt(6, 2)};
  const auto truth = pt(1.7, 2.2);
  auto r = ranges_to(all, truth);
  const std::vector<double> noise{0.03, -0.02, 0.04, 0.01, -0.05, 0.02};
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += noise[i];

  SUBCASE("a single group is the WLS solve") {
    AnchorGroup g{all, r, std::vector<double>(all.size(), 2.0)};
    const auto fused = group_fuse(std::span<const AnchorGroup>(&g, 1));
    const auto wls = iterative_wls(all, r, g.weights, std::nullopt, {}, CovarianceScale::Unit);
    CHECK(fused.report.estimate == wls.estimate);
    CHECK(fused.dropped.empty());
  }
  SUBCASE("identical groups agree with each member") {
    AnchorGroup g{all, r, std::vector<double>(all.size(), 1.0)};
    const std::vector<AnchorGroup> groups{g, g};
    const auto fused = group_fuse(groups);
    const auto one = iterative_wls(all, r, g.weights, std::nullopt, {}, CovarianceScale::Unit);
    CHECK((fused.report.estimate - one.estimate).norm() < 1e-12);
    CHECK((*fused.report.covariance - *one.covariance / 2.0).norm() < 1e-12);
  }
  SUBCASE("information-weighted mean of two groups") {
    const std::vector<Position> a1{all[0], all[1], all[2]};
    const std::vector<Position> a2{all[3], all[4], all[5]};
    const std::vector<double> r1{r[0], r[1], r[2]}, r2{r[3], r[4], r[5]};
    const std::vector<AnchorGroup> groups{{a1, r1, {1.0, 1.0, 1.0}}, {a2, r2, {0.1, 0.1, 0.1}}};
    const auto g1 = iterative_wls(a1, r1, groups[0].weights, std::nullopt, {}, CovarianceScale::Unit);
    const auto g2 = iterative_wls(a2, r2, groups[1].weights, std::nullopt, {}, CovarianceScale::Unit);
    // Hand fusion of two Gaussians with explicit 2x2 inverses.
    auto inv2 = [](const Eigen::MatrixXd& m) {
      const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
      Eigen::Matrix2d out;
      out << m(1, 1) / det, -m(0, 1) / det, -m(1, 0) / det, m(0, 0) / det;
      return out;
    };
    const Eigen::Matrix2d i1 = inv2(*g1.covariance), i2 = inv2(*g2.covariance);
    const Eigen::Vector2d expected = inv2(i1 + i2) * (i1 * g1.estimate + i2 * g2.estimate);
    const auto fused = group_fuse(groups);
    CHECK((fused.report.estimate - expected).norm() < 1e-6);
    CHECK((fused.report.estimate - g1.estimate).norm() < (fused.report.estimate - g2.estimate).norm());
  }
  SUBCASE("failed groups are dropped and reported") {
    const std::vector<AnchorGroup> groups{{{pt(0, 0), pt(1, 0), pt(2, 0)}, {1, 1, 1}, {1, 1, 1}},
                                          {all, r, std::vector<double>(all.size(), 1.0)}};
    const auto fused = group_fuse(groups);
    REQUIRE(fused.dropped.size() == 1);
    CHECK(fused.dropped[0].first == 0);
    const std::vector<AnchorGroup> bad{groups[0]};
    try {
      group_fuse(bad);
      FAIL("expected AllGroupsFailed");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::AllGroupsFailed);
    }
  }
}

TEST_CASE("Procrustes alignment") {
  const std::vector<Position> truth{pt(0, 0), pt(1, 0), pt(0, 1), pt(0.3, 0.6), pt(0.8, 0.2)};
  const std::vector<std::size_t> anchor_idx{0, 1, 2};
  const std::vector<Position> anchor_truth{truth[0], truth[1], truth[2]};

  SUBCASE("rotation and shift") {
    const Eigen::Matrix2d rot = rotation(std::numbers::pi / 2);
    const Eigen::Vector2d shift(3.0, -2.0);
    std::vector<Position> rel;
    for (const auto& p : truth) rel.push_back(rot * p + shift);
    const auto al = procrustes_align(rel, anchor_idx, anchor_truth);
    const auto& t = al.transform;
    CHECK((t.rotation.transpose() * t.rotation - Eigen::Matrix2d::Identity()).norm() < 1e-10);
    CHECK_FALSE(t.reflection);
    CHECK(t.scale == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((t.rotation - rot.transpose()).norm() < 1e-10);
    for (std::size_t i = 0; i < truth.size(); ++i) CHECK((al.aligned[i] - truth[i]).norm() < 1e-10);
  }
  SUBCASE("mirror image") {
    std::vector<Position> rel;
    for (const auto& p : truth) rel.push_back(pt(-p(0), p(1)));
    const auto al = procrustes_align(rel, anchor_idx, anchor_truth);
    CHECK(al.transform.reflection);
    for (std::size_t i = 0; i < truth.size(); ++i) CHECK((al.aligned[i] - truth[i]).norm() < 1e-10);
  }
  SUBCASE("agent noise passes through at its own level") {
    Rng rng(9);
    std::vector<Position> big_truth{pt(0, 0), pt(1, 0), pt(0, 1), pt(1, 1)};
    for (int k = 0; k < 400; ++k) big_truth.push_back(pt(rng.uniform(), rng.uniform()));
    const std::vector<std::size_t> idx{0, 1, 2, 3};
    const std::vector<Position> at{big_truth[0], big_truth[1], big_truth[2], big_truth[3]};
    std::vector<Position> rel = big_truth;
    for (std::size_t i = 4; i < rel.size(); ++i) rel[i] += pt(rng.normal(0, 0.01), rng.normal(0, 0.01));
    const auto al = procrustes_align(rel, idx, at);
    double se = 0.0;
    for (std::size_t i = 4; i < rel.size(); ++i) se += (al.aligned[i] - big_truth[i]).squaredNorm();
    const double per_axis = std::sqrt(se / (2.0 * (rel.size() - 4)));
    CHECK(per_axis == doctest::Approx(0.01).epsilon(0.1));
  }
  SUBCASE("collinear anchors are degenerate") {
    const std::vector<Position> line{pt(0, 0), pt(1, 0), pt(2, 0)};
    try {
      procrustes_align(line, anchor_idx, line);
      FAIL("expected DegenerateAnchors");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateAnchors);
    }
  }
}

TEST_CASE("track smoothing") {
  std::vector<Position> alt;
  for (int k = 0; k < 7; ++k) alt.push_back(pt(k % 2 == 0 ? 1.0 : -1.0, 2.0));
  SUBCASE("window 1 is the identity") {
    const auto out = smooth_track(alt, 1);
    for (std::size_t i = 0; i < alt.size(); ++i) CHECK(out[i] == alt[i]);
  }
  SUBCASE("a constant track is unchanged") {
    const std::vector<Position> c(5, pt(0.25, -4.0));
    for (const auto& p : smooth_track(c, 3)) CHECK((p - pt(0.25, -4.0)).norm() < 1e-15);
  }
  SUBCASE("alternating track, window 3") {
    // Interior: (s - 2s + s)/3 with the centre sign flipped, i.e. -x/3; the two-point
    // windows at the ends average +1 and -1 to zero.
    const auto out = smooth_track(alt, 3);
    CHECK(out.front()(0) == doctest::Approx(0.0));
    CHECK(out.back()(0) == doctest::Approx(0.0));
    for (std::size_t i = 1; i + 1 < alt.size(); ++i) {
      CHECK(out[i](0) == doctest::Approx(-alt[i](0) / 3.0));
      CHECK(out[i](1) == doctest::Approx(2.0));
    }
  }
}

TEST_CASE("trilateration is rigid-motion equivariant") {
  const std::vector<Position> anchors{pt(0, 0), pt(3, 0), pt(0, 3), pt(3, 3)};
  const std::vector<double> r{2.1, 2.3, 1.9, 2.2};
  const auto base = trilaterate(anchors, r);
  const Eigen::Matrix2d rot = rotation(0.7);
  const Eigen::Vector2d shift(-5.0, 11.0);
  std::vector<Position> moved;
  for (const auto& a : anchors) moved.push_back(rot * a + shift);
  const auto m = trilaterate(moved, r);
  CHECK((m.estimate - (rot * base.estimate + shift)).norm() < 1e-8);
}

TEST_CASE("solver report json is row-major") {
  SolverReport rep;
  rep.estimate = pt(1, 2);
  rep.iterations = 3;
  rep.converged = true;
  rep.residual_norm = 0.5;
  Eigen::Matrix2d c;
  c << 1, 2, 3, 4;
  rep.covariance = c;
  const auto j = to_json(rep);
  CHECK(j["estimate"] == nlohmann::json({1.0, 2.0}));
  CHECK(j["covariance"] == nlohmann::json({1.0, 2.0, 3.0, 4.0}));
  CHECK(j["residual"] == 0.5);
}

}  // TEST_SUITE
