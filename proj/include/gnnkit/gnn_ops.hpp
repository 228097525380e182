#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>

#include "gnnkit/graph.hpp"
#include "gnnkit/tensor.hpp"

// The operator layer: propagation (P), transformation (T), their entangled
// composition, and the adaptive-initial-residual (AIR) variants that gate in
// a fraction of a part's original input at every operation after the first.

namespace gnnkit {

enum class Activation { ReLU, Identity };

template <class T>
TensorT<T> apply_activation(const TensorT<T>& x, Activation act) {
  return act == Activation::ReLU ? relu(x) : x;
}

// P: one multiplication by the normalized adjacency.  Parameter free.
template <class T>
TensorT<T> p_op(const NormalizedAdjacency& adj, const TensorT<T>& h) {
  return spmm(adj, h);
}

// T: sigma(h W + b) with an optional bias row.
template <class T>
TensorT<T> t_op(const TensorT<T>& h, const TensorT<T>& w, Activation act,
                const TensorT<T>* bias = nullptr) {
  TensorT<T> z = matmul(h, w);
  if (bias) z = add_bias(z, *bias);
  return apply_activation(z, act);
}

// Entangled graph convolution: exactly T after P.
template <class T>
TensorT<T> graph_conv(const NormalizedAdjacency& adj, const TensorT<T>& h,
                      const TensorT<T>& w, Activation act,
                      const TensorT<T>* bias = nullptr) {
  return t_op(p_op(adj, h), w, act, bias);
}

// Per-operation gate deciding, node by node, how much of the part's initial
// input to mix back in.  u maps the concatenated (current || initial) row to
// a scalar; zero initialization starts every node at alpha = 0.5.
template <class T>
struct AirGateT {
  TensorT<T> u;        // (2 * width) x 1
  int layer_index = 2; // operation index within its part; gates exist for l >= 2
  std::optional<double> pinned_alpha;  // test hook; never set in production
};

using AirGate = AirGateT<double>;

// Per-row scores (h_prev_i || h0_i) . u without materializing the
// concatenation.  Accumulates in the same element order as the
// concat-then-dot form; the routes agree to rounding.
template <class T>
TensorT<T> air_gate_scores(const TensorT<T>& h_prev, const TensorT<T>& h0,
                           const TensorT<T>& u) {
  const std::size_t n = h_prev.rows(), w = h_prev.cols();
  detail::check_inputs<T>({&h_prev, &h0, &u});
  TensorT<T> out(n, 1);
  const T* ut = u.data();
  const T* ub = u.data() + w;
  for (std::size_t i = 0; i < n; ++i) {
    const T* hp = h_prev.data() + i * w;
    const T* hz = h0.data() + i * w;
    T acc = T(0);
    for (std::size_t j = 0; j < w; ++j) acc += hp[j] * ut[j];
    for (std::size_t j = 0; j < w; ++j) acc += hz[j] * ub[j];
    out.data()[i] = acc;
  }
  auto* tape = TapeT<T>::active();
  if (tape &&
      (h_prev.requires_grad() || h0.requires_grad() || u.requires_grad())) {
    auto ps = h_prev.storage(), zs = h0.storage(), us = u.storage(),
         os = out.storage();
    tape->record(os, [ps, zs, us, os, n, w]() {
      const auto& go = os->grad;
      const T* ut = us->values.data();
      const T* ub = us->values.data() + w;
      if (ps->requires_grad) {
        auto& g = ps->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < w; ++j) g[i * w + j] += go[i] * ut[j];
      }
      if (zs->requires_grad) {
        auto& g = zs->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < w; ++j) g[i * w + j] += go[i] * ub[j];
      }
      if (us->requires_grad) {
        auto& g = us->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < w; ++j)
            g[j] += go[i] * ps->values[i * w + j];
          for (std::size_t j = 0; j < w; ++j)
            g[w + j] += go[i] * zs->values[i * w + j];
        }
      }
    });
  }
  return out;
}

// alpha_i = sigmoid((h_prev_i || h0_i) . u), one scalar per node, clamped
// strictly inside (0,1).
template <class T>
TensorT<T> air_alpha(const AirGateT<T>& gate, const TensorT<T>& h_prev,
                     const TensorT<T>& h0) {
  if (h_prev.rows() != h0.rows() || h_prev.cols() != h0.cols())
    throw std::invalid_argument("air_alpha: representation shapes differ, " +
                                h_prev.shape() + " vs " + h0.shape());
  if (gate.pinned_alpha) {
    TensorT<T> pinned(h_prev.rows(), 1, static_cast<T>(*gate.pinned_alpha));
    return pinned;
  }
  if (gate.u.rows() != 2 * h_prev.cols() || gate.u.cols() != 1)
    throw std::invalid_argument(
        "air_alpha: gate vector is " + gate.u.shape() + " but inputs of " +
        h_prev.shape() + " require " + std::to_string(2 * h_prev.cols()) +
        "x1");
  return clamp_unit_interval(
      sigmoid(air_gate_scores(h_prev, h0, gate.u)));
}

// P with AIR:  adj * [(1 - alpha) ⊙ h_prev + alpha ⊙ h0].
template <class T>
TensorT<T> p_with_air(const NormalizedAdjacency& adj, const TensorT<T>& h_prev,
                      const TensorT<T>& h0, const AirGateT<T>& gate) {
  TensorT<T> alpha = air_alpha(gate, h_prev, h0);
  return p_op(adj, mix_rowwise(h_prev, h0, alpha));
}

// T with a fixed-coefficient initial residual:  sigma((h_prev + P h0) W + b).
// The projection is required when the part input's width differs from the
// operating width.
template <class T>
TensorT<T> t_with_air(const TensorT<T>& h_prev, const TensorT<T>& h0,
                      const TensorT<T>& w, Activation act,
                      const TensorT<T>* input_projection = nullptr,
                      const TensorT<T>* bias = nullptr) {
  TensorT<T> h0_aligned = h0;
  if (h0.cols() != h_prev.cols()) {
    if (!input_projection)
      throw std::invalid_argument(
          "t_with_air: initial input is " + h0.shape() +
          " but the layer operates at " + h_prev.shape() +
          "; an input projection is required");
    h0_aligned = matmul(h0, *input_projection);
  }
  return t_op(add(h_prev, h0_aligned), w, act, bias);
}

// Graph convolution with AIR: the gated P followed by a plain T.
template <class T>
TensorT<T> gc_with_air(const NormalizedAdjacency& adj, const TensorT<T>& h_prev,
                       const TensorT<T>& h0, const AirGateT<T>& gate,
                       const TensorT<T>& w, Activation act,
                       const TensorT<T>* bias = nullptr) {
  return t_op(p_with_air(adj, h_prev, h0, gate), w, act, bias);
}

// Plain skip combinators.
template <class T>
TensorT<T> residual_combine(const TensorT<T>& h_prev, const TensorT<T>& f_out) {
  if (h_prev.rows() != f_out.rows() || h_prev.cols() != f_out.cols())
    throw std::invalid_argument("residual_combine: width mismatch, " +
                                h_prev.shape() + " vs " + f_out.shape());
  return add(h_prev, f_out);
}

template <class T>
TensorT<T> dense_combine(std::span<const TensorT<T>> history) {
  if (history.empty())
    throw std::invalid_argument("dense_combine: empty history");
  TensorT<T> out = history[0];
  for (std::size_t i = 1; i < history.size(); ++i)
    out = concat_cols(out, history[i]);
  return out;
}

}  // namespace gnnkit
