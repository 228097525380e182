#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gnnkit/dataio.hpp"
#include "gnnkit/smoothness.hpp"
#include "gnnkit/stationary.hpp"
#include "oracles.hpp"

using namespace gnnkit;

TEST_CASE("node and graph smoothness on hand-checked inputs") {
  SUBCASE("identical nonzero rows are fully smooth") {
    Tensor x = Tensor::from_rows({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}});
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(node_smoothness(x, i) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(graph_smoothness(x) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("orthogonal rows have zero smoothness") {
    Tensor x = Tensor::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    CHECK(node_smoothness(x, 0) == doctest::Approx(0.0));
    CHECK(graph_smoothness(x) == doctest::Approx(0.0));
  }
  SUBCASE("two-node cosine is 1/sqrt(2)") {
    Tensor x = Tensor::from_rows({{1.0, 0.0}, {1.0, 1.0}});
    CHECK(node_smoothness(x, 0) ==
          doctest::Approx(0.7071067811865475).epsilon(1e-12));
    CHECK(node_smoothness(x, 1) ==
          doctest::Approx(0.7071067811865475).epsilon(1e-12));
  }
  SUBCASE("zero rows contribute similarity zero") {
    Tensor x = Tensor::from_rows({{0.0, 0.0}, {1.0, 1.0}, {1.0, 1.0}});
    CHECK(node_smoothness(x, 0) == 0.0);
    // Node 1 sees one zero row (0) and one aligned row (1/1 cosine).
    CHECK(node_smoothness(x, 1) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("fewer than two nodes is an error") {
    Tensor x(1, 3);
    CHECK_THROWS_AS(graph_smoothness(x), std::invalid_argument);
  }
}

TEST_CASE("graph smoothness agrees with the pairwise brute-force oracle") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial) * 3;
    Tensor x = oracle::random_tensor(n, 6, rng);
    if (trial % 2 == 1)  // exercise the zero-row convention
      for (std::size_t j = 0; j < 6; ++j) x.at(0, j) = 0.0;
    CHECK(graph_smoothness(x) ==
          doctest::Approx(oracle::pairwise_gsl(x)).epsilon(1e-12));
  }
}

TEST_CASE("smoothness is invariant under positive per-row scaling") {
  std::mt19937_64 rng(37);
  Tensor x = oracle::random_tensor(12, 5, rng);
  Tensor scaled = x.clone();
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (std::size_t i = 0; i < 12; ++i) {
    const double s = scale(rng);
    for (std::size_t j = 0; j < 5; ++j) scaled.at(i, j) *= s;
  }
  const auto a = node_smoothness_all(x);
  const auto b = node_smoothness_all(scaled);
  for (std::size_t i = 0; i < 12; ++i)
    CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-10));
}

TEST_CASE("all smoothness outputs are finite and within [-1, 1]") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = oracle::random_tensor(9, 4, rng, -1000.0, 1000.0);
    for (double v : node_smoothness_all(x)) {
      CHECK(std::isfinite(v));
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("gsl_trajectory") {
  SUBCASE("step zero is the raw-feature smoothness") {
    std::mt19937_64 rng(43);
    Dataset ds = synth_sbm(20, 2, 0.4, 0.1, 5, 1.0, 3);
    Graph looped = add_self_loops(ds.graph);
    auto report = gsl_trajectory(looped, ds.features, 3, 0.5);
    CHECK(report.gsl_per_step.size() == 4);
    CHECK(report.gsl_per_step[0] ==
          doctest::Approx(graph_smoothness(ds.features)).epsilon(1e-12));
  }
  SUBCASE("triangle with identity features collapses at the first step") {
    Graph looped = add_self_loops(oracle::triangle());
    Tensor eye(3, 3);
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    auto report = gsl_trajectory(looped, eye, 2, 0.5);
    CHECK(report.gsl_per_step[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.gsl_per_step[2] == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(report.stationary_gsl.has_value());
    CHECK(*report.stationary_gsl == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("long trajectories reach the stationary smoothness") {
    Dataset ds = synth_sbm(40, 3, 0.4, 0.15, 6, 1.0, 11);
    REQUIRE(ds.graph.is_connected());
    Graph looped = add_self_loops(ds.graph);
    auto report = gsl_trajectory(looped, ds.features, 200, 0.5);
    REQUIRE(report.stationary_gsl.has_value());
    CHECK(std::abs(report.gsl_per_step.back() - *report.stationary_gsl) <=
          1e-4);
  }
  SUBCASE("rank-one stationary representations are fully smooth") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      Dataset ds = synth_sbm(30, 2, 0.4, 0.1, 5, 1.0, seed);
      REQUIRE(ds.graph.is_connected());
      Graph looped = add_self_loops(ds.graph);
      // Positive features keep every stationary row a positive multiple of
      // one common vector.
      Tensor pos = ds.features.clone();
      for (std::size_t i = 0; i < pos.size(); ++i)
        pos.data()[i] = std::abs(pos.data()[i]) + 0.1;
      Tensor rep = stationary_representation(looped, pos, 0.5);
      CHECK(graph_smoothness(rep) >= 1.0 - 1e-9);
    }
  }
  SUBCASE("requires self-loop provenance and a positive horizon") {
    Dataset ds = synth_sbm(10, 2, 0.5, 0.2, 3, 1.0, 5);
    CHECK_THROWS_AS(gsl_trajectory(ds.graph, ds.features, 5, 0.5),
                    std::invalid_argument);
    Graph looped = add_self_loops(ds.graph);
    CHECK_THROWS_AS(gsl_trajectory(looped, ds.features, 0, 0.5),
                    std::invalid_argument);
  }
}
