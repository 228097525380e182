#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gnnkit/gnn_ops.hpp"
#include "gnnkit/gradient_check.hpp"
#include "gnnkit/stationary.hpp"
#include "oracles.hpp"

using namespace gnnkit;

namespace {

NormalizedAdjacency identity_operator(std::size_t n) {
  Graph g = add_self_loops(Graph::from_undirected_edges(
      n, std::span<const std::pair<std::uint32_t, std::uint32_t>>{}));
  return normalize_adjacency(g, 0.5);
}

NormalizedAdjacency triangle_operator() {
  return normalize_adjacency(add_self_loops(oracle::triangle()), 0.5);
}

}  // namespace

TEST_CASE("p_op") {
  std::mt19937_64 rng(3);
  SUBCASE("identity operator leaves h unchanged") {
    Tensor h = oracle::random_tensor(5, 4, rng);
    Tensor out = p_op(identity_operator(5), h);
    CHECK(oracle::max_abs_diff(h, out) == 0.0);
  }
  SUBCASE("triangle operator averages the identity") {
    Tensor eye(3, 3);
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    Tensor out = p_op(triangle_operator(), eye);
    for (std::size_t i = 0; i < 9; ++i)
      CHECK(out.data()[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  }
  SUBCASE("single-edge operator halves") {
    NormalizedAdjacency adj =
        normalize_adjacency(add_self_loops(oracle::k2()), 0.5);
    Tensor eye = Tensor::from_rows({{1.0, 0.0}, {0.0, 1.0}});
    Tensor out = p_op(adj, eye);
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(out.data()[i] == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("shape mismatch is rejected") {
    Tensor h(4, 2);
    CHECK_THROWS_AS(p_op(triangle_operator(), h), std::invalid_argument);
  }
}

TEST_CASE("t_op") {
  std::mt19937_64 rng(5);
  SUBCASE("identity weights with relu pass nonnegative input through") {
    Tensor h = oracle::random_tensor(4, 3, rng, 0.0, 1.0);
    Tensor w(3, 3);
    for (int i = 0; i < 3; ++i) w.at(i, i) = 1.0;
    CHECK(oracle::max_abs_diff(t_op(h, w, Activation::ReLU), h) == 0.0);
  }
  SUBCASE("relu clips a negative sum") {
    Tensor h = Tensor::from_rows({{1.0, -1.0}});
    Tensor w = Tensor::from_rows({{1.0}, {1.0}});
    Tensor out = t_op(h, w, Activation::ReLU);
    CHECK(out.item() == 0.0);
  }
  SUBCASE("matches the naive oracle") {
    Tensor h = oracle::random_tensor(6, 5, rng);
    Tensor w = oracle::random_tensor(5, 4, rng);
    Tensor expect = oracle::naive_matmul(h, w);
    for (std::size_t i = 0; i < expect.size(); ++i)
      expect.data()[i] = std::max(0.0, expect.data()[i]);
    CHECK(oracle::max_abs_diff(t_op(h, w, Activation::ReLU), expect) <= 1e-12);
  }
}

TEST_CASE("graph_conv") {
  std::mt19937_64 rng(7);
  SUBCASE("is exactly T after P") {
    NormalizedAdjacency adj = triangle_operator();
    Tensor h = oracle::random_tensor(3, 4, rng);
    Tensor w = oracle::random_tensor(4, 2, rng);
    Tensor composed = t_op(p_op(adj, h), w, Activation::ReLU);
    Tensor fused = graph_conv(adj, h, w, Activation::ReLU);
    CHECK(oracle::max_abs_diff(composed, fused) == 0.0);
  }
  SUBCASE("identity adjacency degenerates to an MLP layer") {
    NormalizedAdjacency adj = identity_operator(4);
    Tensor h = oracle::random_tensor(4, 3, rng);
    Tensor w = oracle::random_tensor(3, 2, rng);
    CHECK(oracle::max_abs_diff(graph_conv(adj, h, w, Activation::ReLU),
                               t_op(h, w, Activation::ReLU)) == 0.0);
  }
  SUBCASE("triangle with identity weight and features gives the flat matrix") {
    Tensor eye(3, 3);
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    Tensor out = graph_conv(triangle_operator(), eye, eye, Activation::Identity);
    for (std::size_t i = 0; i < 9; ++i)
      CHECK(out.data()[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  }
}

TEST_CASE("air_alpha") {
  std::mt19937_64 rng(11);
  SUBCASE("zero gate vector fixes every alpha at one half") {
    AirGate gate{Tensor(6, 1), 2, {}};
    Tensor h = oracle::random_tensor(5, 3, rng);
    Tensor h0 = oracle::random_tensor(5, 3, rng);
    Tensor alpha = air_alpha(gate, h, h0);
    CHECK(alpha.rows() == 5);
    CHECK(alpha.cols() == 1);
    for (std::size_t i = 0; i < 5; ++i) CHECK(alpha.data()[i] == 0.5);
  }
  SUBCASE("a unit gate entry reads through the concatenation") {
    AirGate gate{Tensor(4, 1), 2, {}};
    gate.u.at(0, 0) = 1.0;
    Tensor h = Tensor::from_rows({{1.0, 0.0}});
    Tensor h0 = Tensor::from_rows({{0.0, 1.0}});
    Tensor alpha = air_alpha(gate, h, h0);
    CHECK(alpha.item() ==
          doctest::Approx(0.7310585786300049).epsilon(1e-12));
  }
  SUBCASE("alpha stays strictly inside (0,1) even at saturation") {
    for (int trial = 0; trial < 100; ++trial) {
      AirGate gate{oracle::random_tensor(8, 1, rng, -100.0, 100.0), 2, {}};
      Tensor h = oracle::random_tensor(6, 4, rng, -100.0, 100.0);
      Tensor h0 = oracle::random_tensor(6, 4, rng, -100.0, 100.0);
      Tensor alpha = air_alpha(gate, h, h0);
      for (std::size_t i = 0; i < alpha.size(); ++i) {
        CHECK(alpha.data()[i] > 0.0);
        CHECK(alpha.data()[i] < 1.0);
      }
    }
  }
  SUBCASE("width mismatch with the gate vector is rejected") {
    AirGate gate{Tensor(5, 1), 2, {}};
    Tensor h(4, 3), h0(4, 3);
    CHECK_THROWS_AS(air_alpha(gate, h, h0), std::invalid_argument);
  }
  SUBCASE("fused gate scores match the concatenate-then-dot route") {
    for (int trial = 0; trial < 20; ++trial) {
      Tensor h = oracle::random_tensor(7, 5, rng);
      Tensor h0 = oracle::random_tensor(7, 5, rng);
      Tensor u = oracle::random_tensor(10, 1, rng);
      Tensor fused = air_gate_scores(h, h0, u);
      Tensor composed = row_dot(concat_cols(h, h0), u);
      CHECK(oracle::max_abs_diff(fused, composed) <= 1e-14);
    }
  }
}

TEST_CASE("p_with_air endpoint reductions") {
  std::mt19937_64 rng(13);
  NormalizedAdjacency adj = triangle_operator();
  Tensor h = oracle::random_tensor(3, 4, rng);
  Tensor h0 = oracle::random_tensor(3, 4, rng);
  AirGate gate{oracle::random_tensor(8, 1, rng), 2, {}};
  SUBCASE("alpha pinned to zero reduces to propagation of h_prev") {
    gate.pinned_alpha = 0.0;
    CHECK(oracle::max_abs_diff(p_with_air(adj, h, h0, gate), p_op(adj, h)) <=
          1e-12);
  }
  SUBCASE("alpha pinned to one reduces to propagation of h0") {
    gate.pinned_alpha = 1.0;
    CHECK(oracle::max_abs_diff(p_with_air(adj, h, h0, gate), p_op(adj, h0)) <=
          1e-12);
  }
  SUBCASE("identical mixture operands make the gate irrelevant") {
    CHECK(oracle::max_abs_diff(p_with_air(adj, h0, h0, gate), p_op(adj, h0)) <=
          1e-12);
  }
}

TEST_CASE("t_with_air") {
  std::mt19937_64 rng(17);
  SUBCASE("zero initial input reduces to a plain T operation") {
    Tensor h = oracle::random_tensor(4, 3, rng);
    Tensor h0(4, 3);
    Tensor w = oracle::random_tensor(3, 2, rng);
    CHECK(oracle::max_abs_diff(t_with_air(h, h0, w, Activation::ReLU),
                               t_op(h, w, Activation::ReLU)) <= 1e-12);
  }
  SUBCASE("identity weight sums the operands") {
    Tensor h = oracle::random_tensor(4, 3, rng);
    Tensor h0 = oracle::random_tensor(4, 3, rng);
    Tensor eye(3, 3);
    for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    Tensor out = t_with_air(h, h0, eye, Activation::Identity);
    CHECK(oracle::max_abs_diff(out, add(h, h0)) <= 1e-12);
  }
  SUBCASE("matches the naive (h + h0) W oracle") {
    Tensor h = oracle::random_tensor(5, 3, rng);
    Tensor h0 = oracle::random_tensor(5, 3, rng);
    Tensor w = oracle::random_tensor(3, 4, rng);
    Tensor expect = oracle::naive_matmul(add(h, h0), w);
    for (std::size_t i = 0; i < expect.size(); ++i)
      expect.data()[i] = std::max(0.0, expect.data()[i]);
    CHECK(oracle::max_abs_diff(t_with_air(h, h0, w, Activation::ReLU),
                               expect) <= 1e-12);
  }
  SUBCASE("width mismatch without a projection is rejected") {
    Tensor h(4, 3), h0(4, 5), w(3, 2);
    CHECK_THROWS_AS(t_with_air(h, h0, w, Activation::ReLU),
                    std::invalid_argument);
  }
  SUBCASE("a projection aligns the initial input") {
    Tensor h = oracle::random_tensor(4, 3, rng);
    Tensor h0 = oracle::random_tensor(4, 5, rng);
    Tensor proj = oracle::random_tensor(5, 3, rng);
    Tensor w = oracle::random_tensor(3, 2, rng);
    Tensor expect = oracle::naive_matmul(
        add(h, oracle::naive_matmul(h0, proj)), w);
    CHECK(oracle::max_abs_diff(
              t_with_air(h, h0, w, Activation::Identity, &proj), expect) <=
          1e-12);
  }
}

TEST_CASE("gc_with_air") {
  std::mt19937_64 rng(19);
  NormalizedAdjacency adj = triangle_operator();
  Tensor h = oracle::random_tensor(3, 4, rng);
  Tensor h0 = oracle::random_tensor(3, 4, rng);
  Tensor w = oracle::random_tensor(4, 2, rng);
  AirGate gate{oracle::random_tensor(8, 1, rng), 2, {}};
  SUBCASE("equals its composition bitwise") {
    Tensor composed = t_op(p_with_air(adj, h, h0, gate), w, Activation::ReLU);
    Tensor fused = gc_with_air(adj, h, h0, gate, w, Activation::ReLU);
    CHECK(oracle::max_abs_diff(composed, fused) == 0.0);
  }
  SUBCASE("alpha pinned to zero reduces to a plain graph convolution") {
    gate.pinned_alpha = 0.0;
    CHECK(oracle::max_abs_diff(gc_with_air(adj, h, h0, gate, w, Activation::ReLU),
                               graph_conv(adj, h, w, Activation::ReLU)) <=
          1e-12);
  }
}

TEST_CASE("skip combinators") {
  std::mt19937_64 rng(23);
  SUBCASE("residual with a zero branch is the identity") {
    Tensor h = oracle::random_tensor(4, 3, rng);
    Tensor zero(4, 3);
    CHECK(oracle::max_abs_diff(residual_combine(h, zero), h) == 0.0);
  }
  SUBCASE("residual rejects width mismatches") {
    Tensor a(4, 3), b(4, 2);
    CHECK_THROWS_AS(residual_combine(a, b), std::invalid_argument);
  }
  SUBCASE("dense concatenation stacks widths") {
    std::vector<Tensor> hist{oracle::random_tensor(4, 3, rng),
                             oracle::random_tensor(4, 2, rng),
                             oracle::random_tensor(4, 5, rng)};
    Tensor out = dense_combine(std::span<const Tensor>(hist));
    CHECK(out.rows() == 4);
    CHECK(out.cols() == 10);
    CHECK(out.at(1, 3) == hist[1].at(1, 0));
    CHECK(out.at(2, 5) == hist[2].at(2, 0));
  }
}

TEST_CASE("AIR-equipped ops pass the finite-difference gradient check") {
  std::mt19937_64 rng(29);
  // Small two-community graph standing in for the usual testbed.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges{
      {0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}, {5, 6}, {6, 7},
      {7, 8}, {8, 9}, {9, 5}, {0, 5}};
  Graph g = add_self_loops(Graph::from_undirected_edges(10, edges));
  NormalizedAdjacency adj = normalize_adjacency(g, 0.5);
  Tensor x = oracle::random_tensor(10, 4, rng);
  std::vector<std::int32_t> labels{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  std::vector<std::uint8_t> mask(10, 1);

  SUBCASE("gated propagation stack") {
    std::vector<Tensor> params{
        oracle::random_tensor(8, 1, rng),   // gate u over width-4 rows
        glorot_uniform<double>(4, 3, rng),  // w
        Tensor(1, 3),                       // bias
    };
    for (auto& p : params) p.set_requires_grad(true);
    AirGate gate{params[0], 2, {}};
    auto forward = [&]() {
      Tensor h1 = p_op(adj, x);
      Tensor h2 = p_with_air(adj, h1, x, gate);
      Tensor logits = t_op(h2, params[1], Activation::Identity, &params[2]);
      return masked_softmax_cross_entropy(logits, labels, mask);
    };
    auto report = gradient_check(forward, params, 1e-4, rng, 100);
    CAPTURE(report.max_rel_error);
    CHECK(report.pass);
  }
  SUBCASE("fused convolution with a gate") {
    std::vector<Tensor> params{
        oracle::random_tensor(6, 1, rng),   // gate u over width-3 rows
        glorot_uniform<double>(4, 3, rng),  // first conv weight
        glorot_uniform<double>(3, 3, rng),  // gated conv weight
        Tensor(1, 3),                       // shared bias width
    };
    for (auto& p : params) p.set_requires_grad(true);
    AirGate gate{params[0], 2, {}};
    auto forward = [&]() {
      Tensor h1 = graph_conv(adj, x, params[1], Activation::ReLU, &params[3]);
      Tensor logits = gc_with_air(adj, h1, h1, gate, params[2],
                                  Activation::Identity, &params[3]);
      return masked_softmax_cross_entropy(logits, labels, mask);
    };
    auto report = gradient_check(forward, params, 1e-4, rng, 100);
    CAPTURE(report.max_rel_error);
    CHECK(report.pass);
  }
}
