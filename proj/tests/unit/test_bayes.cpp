#include <cmath>
#include <sstream>

#include "doctest.h"
#include "unit/helpers.hpp"

#include "radloc/bayes.hpp"

using namespace radloc;
using namespace radloc::bayes;
using scenario::make_edge;
using scenario::NetworkScenario;
using scenario::RangeSet;
using testing::agent;
using testing::anchor;
using testing::exact_ranges;
using testing::pt;

namespace {

Grid unit_grid(int cells) { return Grid(pt(0, 0), pt(1, 1), cells); }

// One agent heard by three random anchors; ranges with 5% multiplicative noise.
struct TreeInstance {
  NetworkScenario sc;
  RangeSet ranges;
};

TreeInstance random_tree_instance(std::uint64_t seed, double sigma) {
  Rng rng(seed);
  std::vector<scenario::Node> nodes;
  for (std::uint32_t k = 0; k < 3; ++k) nodes.push_back(anchor(k, rng.uniform(), rng.uniform()));
  nodes.push_back(agent(3, rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)));
  auto e = [](int a, int b) { return make_edge(node_id(a), node_id(b)); };
  NetworkScenario sc(2, 2.0, nodes, {e(0, 3), e(1, 3), e(2, 3)});
  return {sc, scenario::synthesize_ranges(sc, sigma, RngSeed{seed})};
}

GridBelief random_belief(const Grid& g, Rng& rng) {
  GridBelief b{g, std::vector<double>(g.size())};
  double s = 0.0;
  for (auto& v : b.p) s += (v = rng.uniform());
  for (auto& v : b.p) v /= s;
  return b;
}

}  // namespace

TEST_SUITE("bayes") {

TEST_CASE("grid indexing") {
  const Grid g(pt(-1, 0), pt(1, 4), std::vector<int>{4, 2});
  CHECK(g.size() == 8);
  CHECK(g.cell_volume() == doctest::Approx(1.0));
  CHECK((g.center(0) - pt(-0.75, 1.0)).norm() < 1e-15);
  CHECK((g.center(5) - pt(-0.25, 3.0)).norm() < 1e-15);
  CHECK(g.nearest(pt(-0.3, 3.9)) == 5);
  CHECK(g.nearest(pt(-10, -10)) == 0);
  CHECK(g.nearest(pt(10, 10)) == 7);
  CHECK(g.contains(pt(0, 0)));
  CHECK_FALSE(g.contains(pt(1.5, 0)));
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.centers().col(static_cast<Eigen::Index>(i)) == g.center(i));
}

TEST_CASE("anchors are always deltas at the truth") {
  const auto sc = NetworkScenario::with_range_edges(2, 2.0, {anchor(0, 0.2, 0.2), agent(1, 0.5, 0.5)});
  GridPrior prior{unit_grid(10), {{node_id(0), UniformPrior{}}}};
  const auto p = prior.prior_for(sc, node_id(0));
  REQUIRE(std::holds_alternative<DeltaPrior>(p));
  CHECK(std::get<DeltaPrior>(p).at == pt(0.2, 0.2));
  CHECK(std::holds_alternative<UniformPrior>(prior.prior_for(sc, node_id(1))));
}

TEST_CASE("likelihood is positive everywhere") {
  for (auto lik : {RangeLikelihood::multiplicative(0.01), RangeLikelihood::additive(1e-3), RangeLikelihood::flat()}) {
    for (double d : {0.0, 1e-9, 0.3, 5.0, 1e6}) CHECK(lik.density(0.3, d) > 0.0);
  }
}

TEST_CASE("grid posterior") {
  SUBCASE("sharp noiseless likelihood concentrates on the true cell") {
    const auto sc = NetworkScenario::with_range_edges(
        2, 2.0, {anchor(0, 0, 0), anchor(1, 1, 0), anchor(2, 0, 1), agent(3, 0.5125, 0.3125)});
    const auto post = grid_posterior(sc, exact_ranges(sc), {unit_grid(40), {}}, RangeLikelihood::additive(1e-3));
    const auto& b = post.at(node_id(3));
    CHECK(b.total() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.p[b.grid.nearest(pt(0.5125, 0.3125))] > 0.99);
  }
  SUBCASE("two anchors leave a mirror-symmetric posterior") {
    const auto sc = NetworkScenario::with_range_edges(
        2, 2.0, {anchor(0, 0.3, 0.5), anchor(1, 0.7, 0.5), agent(2, 0.45, 0.8)});
    const auto post = grid_posterior(sc, exact_ranges(sc), {unit_grid(40), {}}, RangeLikelihood::multiplicative(0.05));
    const auto& p = post.at(node_id(2)).p;
    double worst = 0.0;
    for (int i = 0; i < 40; ++i)
      for (int j = 0; j < 40; ++j) worst = std::max(worst, std::abs(p[i + 40 * j] - p[i + 40 * (39 - j)]));
    CHECK(worst <= 1e-12);
    // Bimodal: the MMSE sits on the anchor axis, far from either mode.
    const auto mmse = estimate_mmse(post.at(node_id(2)));
    CHECK(std::abs(mmse(1) - 0.5) < 1e-9);
  }
  SUBCASE("three uniform agents are refused") {
    const auto sc = NetworkScenario::with_range_edges(
        2, 2.0, {anchor(0, 0, 0), anchor(1, 1, 0), anchor(2, 0, 1), agent(3, 0.5, 0.5), agent(4, 0.4, 0.4),
                 agent(5, 0.6, 0.3)});
    try {
      grid_posterior(sc, exact_ranges(sc), {unit_grid(5), {}}, RangeLikelihood::multiplicative(0.05));
      FAIL("expected GridTooLarge");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::GridTooLarge);
    }
  }
}

TEST_CASE("point estimates") {
  const Grid g = Grid(pt(0, 0), pt(1, 0.8), std::vector<int>{5, 4});
  SUBCASE("delta") {
    GridBelief b{g, std::vector<double>(g.size(), 0.0)};
    b.p[13] = 1.0;
    CHECK((estimate_mmse(b) - g.center(13)).norm() < 1e-15);
    CHECK(estimate_map(b) == g.center(13));
  }
  SUBCASE("uniform posterior: mean at the centre, MAP at the first cell") {
    GridBelief b{g, std::vector<double>(g.size(), 1.0 / g.size())};
    CHECK((estimate_mmse(b) - pt(0.5, 0.4)).norm() < 1e-12);
    CHECK(estimate_map(b) == g.center(0));
  }
  SUBCASE("brute-force mean and argmax") {
    Rng rng(2);
    for (int t = 0; t < 10; ++t) {
      const auto b = random_belief(g, rng);
      double mx = 0, my = 0;
      std::size_t best = 0;
      for (int j = 0; j < 4; ++j) {
        for (int i = 0; i < 5; ++i) {
          const std::size_t k = static_cast<std::size_t>(i + 5 * j);
          mx += b.p[k] * (0.1 + 0.2 * i);
          my += b.p[k] * (0.1 + 0.2 * j);
          if (b.p[k] > b.p[best]) best = k;
        }
      }
      CHECK((estimate_mmse(b) - pt(mx, my)).norm() < 1e-12);
      CHECK((estimate_map(b) - pt(0.1 + 0.2 * (best % 5), 0.1 + 0.2 * (best / 5))).norm() < 1e-12);
    }
  }
  SUBCASE("the mean minimises expected squared error over every cell centre") {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
      const auto b = random_belief(g, rng);
      auto mse = [&](const Position& x) {
        double s = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) s += b.p[k] * (g.center(k) - x).squaredNorm();
        return s;
      };
      const double at_mean = mse(estimate_mmse(b));
      for (std::size_t k = 0; k < g.size(); ++k) CHECK(at_mean <= mse(g.center(k)) + 1e-15);
    }
  }
}

TEST_CASE("BP is exact on a tree") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto inst = random_tree_instance(seed, 0.05);
    const GridPrior prior{unit_grid(30), {}};
    const auto lik = RangeLikelihood::multiplicative(0.05);
    const auto exact = grid_posterior(inst.sc, inst.ranges, prior, lik).at(node_id(3));
    const auto bp = run_bp(inst.sc, inst.ranges, prior, lik);
    CHECK_FALSE(bp.damped);
    CHECK(bp.converged);
    const auto& q = bp.beliefs.at(node_id(3)).p;
    double worst = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) worst = std::max(worst, std::abs(q[k] - exact.p[k]));
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("BP is exact on a two-agent chain") {
  // Agents 3 and 4 share one edge; each also hears anchors. The agent graph is a tree.
  auto e = [](int a, int b) { return make_edge(node_id(a), node_id(b)); };
  const NetworkScenario sc(2, 2.0,
                           {anchor(0, 0.1, 0.1), anchor(1, 0.9, 0.2), anchor(2, 0.2, 0.9), agent(3, 0.35, 0.4),
                            agent(4, 0.7, 0.65)},
                           {e(0, 3), e(1, 3), e(3, 4), e(1, 4), e(2, 4)});
  const auto r = scenario::synthesize_ranges(sc, 0.05, RngSeed{4});
  const GridPrior prior{unit_grid(18), {}};
  const auto lik = RangeLikelihood::multiplicative(0.05);
  const auto exact = grid_posterior(sc, r, prior, lik);
  const auto bp = run_bp(sc, r, prior, lik);
  CHECK_FALSE(bp.damped);
  for (auto id : {node_id(3), node_id(4)}) {
    double worst = 0.0;
    for (std::size_t k = 0; k < exact.at(id).p.size(); ++k)
      worst = std::max(worst, std::abs(bp.beliefs.at(id).p[k] - exact.at(id).p[k]));
    CHECK(worst <= 1e-9);
  }
}

TEST_CASE("BP degenerate cases") {
  SUBCASE("a flat likelihood leaves the uniform prior") {
    const auto inst = random_tree_instance(9, 0.05);
    const auto bp = run_bp(inst.sc, inst.ranges, {unit_grid(12), {}}, RangeLikelihood::flat());
    for (double v : bp.beliefs.at(node_id(3)).p) CHECK(v == doctest::Approx(1.0 / 144).epsilon(1e-12));
  }
  SUBCASE("anchors only") {
    const auto sc = NetworkScenario::with_range_edges(2, 2.0, {anchor(0, 0.1, 0.1), anchor(1, 0.9, 0.2)});
    const auto bp = run_bp(sc, exact_ranges(sc), {unit_grid(10), {}}, RangeLikelihood::multiplicative(0.05));
    for (const auto& [id, b] : bp.beliefs) {
      int ones = 0;
      for (double v : b.p) ones += v == 1.0;
      CHECK(ones == 1);
      CHECK(b.total() == 1.0);
    }
  }
  SUBCASE("a loop of agents is damped and stays normalised") {
    const auto sc = NetworkScenario::with_range_edges(
        2, 0.6, {anchor(0, 0.1, 0.1), anchor(1, 0.9, 0.1), anchor(2, 0.5, 0.9), agent(3, 0.35, 0.35),
                 agent(4, 0.65, 0.35), agent(5, 0.5, 0.6)});
    const auto r = scenario::synthesize_ranges(sc, 0.05, RngSeed{6});
    const auto bp = run_bp(sc, r, {unit_grid(20), {}}, RangeLikelihood::multiplicative(0.05));
    CHECK(bp.damped);
    for (auto id : sc.agents()) {
      CHECK(bp.beliefs.at(id).total() == doctest::Approx(1.0).epsilon(1e-9));
      CHECK((bp.mmse.at(id) - sc.position(id)).norm() < 0.1);
    }
  }
}

TEST_CASE("particles") {
  Rng rng(5);
  ParticleBelief pb;
  for (int k = 0; k < 100; ++k) {
    pb.particles.push_back(pt(k, 0));
    pb.weights.push_back(k < 50 ? 0.0 : 1.0 / 50);
  }
  pb.validate();
  CHECK(pb.effective_sample_size() == doctest::Approx(50.0));
  const auto rs = systematic_resample(pb, rng);
  rs.validate();
  CHECK(rs.particles.size() == 100);
  for (double w : rs.weights) CHECK(w == 0.01);
  for (const auto& p : rs.particles) CHECK(p(0) >= 50.0);
  // Systematic resampling gives every live particle exactly n * w = 2 copies here.
  std::map<double, int> copies;
  for (const auto& p : rs.particles) ++copies[p(0)];
  for (const auto& [x, c] : copies) CHECK(c == 2);

  ParticleBelief bad = pb;
  bad.weights[60] += 1e-6;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("NBP") {
  const auto sc = NetworkScenario::with_range_edges(
      2, 2.0, {anchor(0, 0.05, 0.1), anchor(1, 0.95, 0.2), anchor(2, 0.3, 0.95), agent(3, 0.55, 0.45)});
  const auto r = scenario::synthesize_ranges(sc, 0.02, RngSeed{3});
  const GridPrior prior{unit_grid(100), {}};
  const auto lik = RangeLikelihood::multiplicative(0.02);
  const auto grid_mmse = estimate_mmse(grid_posterior(sc, r, prior, lik).at(node_id(3)));

  SUBCASE("agrees with the grid oracle") {
    const auto nbp = run_nbp(sc, r, prior, lik, 2000, {}, RngSeed{1});
    CHECK((nbp.mmse.at(node_id(3)) - grid_mmse).norm() <= 3 * 0.01);
    nbp.beliefs.at(node_id(3)).validate();
  }
  SUBCASE("deterministic for a seed") {
    const auto a = run_nbp(sc, r, prior, lik, 300, {}, RngSeed{8});
    const auto b = run_nbp(sc, r, prior, lik, 300, {}, RngSeed{8});
    CHECK(a.beliefs.at(node_id(3)).particles == b.beliefs.at(node_id(3)).particles);
    CHECK(a.mmse.at(node_id(3)) == b.mmse.at(node_id(3)));
  }
  SUBCASE("more particles, smaller error") {
    double small = 0.0, large = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      small += (run_nbp(sc, r, prior, lik, 500, {}, RngSeed{seed}).mmse.at(node_id(3)) - grid_mmse).norm();
      large += (run_nbp(sc, r, prior, lik, 5000, {}, RngSeed{seed}).mmse.at(node_id(3)) - grid_mmse).norm();
    }
    CHECK(large < small);
  }
  SUBCASE("too few particles") {
    CHECK_THROWS_AS(run_nbp(sc, r, prior, lik, 10, {}, RngSeed{1}), Error);
  }
}

TEST_CASE("linear-Gaussian MMSE matches the information form") {
  Rng rng(12);
  Eigen::MatrixXd a(6, 3);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  Eigen::VectorXd r(6);
  for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = rng.normal();
  const double sigma = 0.4;
  // Posterior for x ~ N(0, I), r = A x + N(0, sigma^2 I).
  const Eigen::MatrixXd post_cov = (Eigen::MatrixXd::Identity(3, 3) + a.transpose() * a / (sigma * sigma)).inverse();
  const Eigen::VectorXd mean = post_cov * a.transpose() * r / (sigma * sigma);
  CHECK((linear_gaussian_mmse(a, r, sigma) - mean).norm() < 1e-12);
}

TEST_CASE("belief csv") {
  GridBelief b{Grid(pt(0, 0), pt(1, 1), 2), {0.1, 0.2, 0.3, 0.4}};
  std::ostringstream out;
  write_belief_csv(out, b);
  std::istringstream in(out.str());
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows >= 4);
  CHECK(out.str().find("0.75") != std::string::npos);
}

}  // TEST_SUITE
