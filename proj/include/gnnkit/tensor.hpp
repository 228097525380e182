#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gnnkit/graph.hpp"
#include "gnnkit/kernels.hpp"

// Dense 2-D tensors with reverse-mode differentiation.  A TensorT is a cheap
// handle onto shared storage; ops are free functions that record their
// backward rule onto the thread-local active tape when any input requires
// gradients.  One tape per forward pass, consumed by backward().

namespace gnnkit {

template <class T>
class TapeT;

namespace detail {

template <class T>
struct TensorStorage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> values;
  std::vector<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  const void* tape_tag = nullptr;  // tape this tensor currently belongs to
  std::int64_t tape_node = -1;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), T(0));
    return grad;
  }
};

inline std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace detail

template <class T>
class TensorT {
 public:
  using Storage = detail::TensorStorage<T>;

  TensorT() = default;
  TensorT(std::size_t rows, std::size_t cols, T fill = T(0))
      : p_(std::make_shared<Storage>()) {
    p_->rows = rows;
    p_->cols = cols;
    p_->values.assign(rows * cols, fill);
  }

  static TensorT from_rows(std::initializer_list<std::initializer_list<T>> rs) {
    TensorT t(rs.size(), rs.size() ? rs.begin()->size() : 0);
    std::size_t i = 0;
    for (const auto& row : rs) {
      if (row.size() != t.cols())
        throw std::invalid_argument("from_rows: ragged initializer");
      std::copy(row.begin(), row.end(), t.data() + i * t.cols());
      ++i;
    }
    return t;
  }

  static TensorT scalar(T v) {
    TensorT t(1, 1);
    t.data()[0] = v;
    return t;
  }

  bool defined() const { return p_ != nullptr; }
  std::size_t rows() const { return p_ ? p_->rows : 0; }
  std::size_t cols() const { return p_ ? p_->cols : 0; }
  std::size_t size() const { return p_ ? p_->values.size() : 0; }
  std::string shape() const { return detail::shape_str(rows(), cols()); }

  T* data() { return p_->values.data(); }
  const T* data() const { return p_->values.data(); }
  std::vector<T>& values() { return p_->values; }
  const std::vector<T>& values() const { return p_->values; }

  T& at(std::size_t i, std::size_t j) { return p_->values[i * cols() + j]; }
  const T& at(std::size_t i, std::size_t j) const {
    return p_->values[i * cols() + j];
  }
  T item() const {
    if (size() != 1)
      throw std::logic_error("item(): tensor has shape " + shape());
    return p_->values[0];
  }

  bool requires_grad() const { return p_ && p_->requires_grad; }
  TensorT& set_requires_grad(bool b) {
    if (p_->tape_tag)
      throw std::logic_error("cannot toggle requires_grad mid-tape");
    p_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return p_ && !p_->grad.empty(); }
  const std::vector<T>& grad() const {
    if (!has_grad()) throw std::logic_error("grad not populated");
    return p_->grad;
  }
  void zero_grad() {
    if (p_) std::fill(p_->grad.begin(), p_->grad.end(), T(0));
  }

  TensorT clone() const {
    TensorT t(rows(), cols());
    t.p_->values = p_->values;
    return t;
  }

  std::shared_ptr<Storage> storage() const { return p_; }

 private:
  std::shared_ptr<Storage> p_;
};

template <class T>
class TapeT {
 public:
  TapeT() { stack_().push_back(this); }
  ~TapeT() {
    release_nodes();
    auto& s = stack_();
    s.erase(std::remove(s.begin(), s.end(), this), s.end());
  }
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  static TapeT* active() noexcept {
    auto& s = stack_();
    return s.empty() ? nullptr : s.back();
  }

  void record(std::shared_ptr<detail::TensorStorage<T>> out,
              std::function<void()> backward_fn) {
    out->tape_tag = this;
    out->tape_node = static_cast<std::int64_t>(nodes_.size());
    out->requires_grad = true;
    nodes_.push_back(Node{std::move(out), std::move(backward_fn)});
  }

  // Checks that an op input either lives outside any tape or belongs here.
  void check_input(const detail::TensorStorage<T>& s) const {
    if (s.tape_tag && s.tape_tag != this)
      throw std::logic_error("tensor already participates in another tape");
  }

  void backward(const TensorT<T>& loss) {
    if (consumed_) throw std::logic_error("tape already consumed");
    if (loss.size() != 1)
      throw std::invalid_argument("backward requires a scalar loss, got " +
                                  loss.shape());
    auto st = loss.storage();
    if (st->tape_tag != this)
      throw std::logic_error("loss was not produced by the active tape");
    st->ensure_grad()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->out->grad.empty()) it->fn();
    }
    release_nodes();
    consumed_ = true;
  }

  bool consumed() const { return consumed_; }
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<detail::TensorStorage<T>> out;
    std::function<void()> fn;
  };

  void release_nodes() {
    for (auto& n : nodes_) {
      n.out->tape_tag = nullptr;
      n.out->tape_node = -1;
    }
    nodes_.clear();
  }

  static std::vector<TapeT*>& stack_() {
    thread_local std::vector<TapeT*> s;
    return s;
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

namespace testhooks {
// Deliberately wrong sigmoid backward, used as a negative control for the
// finite-difference gradient checker.
inline bool corrupt_sigmoid_backward = false;
}  // namespace testhooks

namespace detail {

template <class T>
bool track(const TensorT<T>& a) {
  return TapeT<T>::active() && a.requires_grad();
}

template <class T>
void check_inputs(std::initializer_list<const TensorT<T>*> ins) {
  if (auto* tape = TapeT<T>::active()) {
    for (const auto* t : ins) tape->check_input(*t->storage());
  }
}

[[noreturn]] inline void shape_error(const std::string& op,
                                     const std::string& lhs,
                                     const std::string& rhs) {
  throw std::invalid_argument(op + ": shape mismatch between " + lhs +
                              " and " + rhs);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Differentiable ops
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.cols() != b.rows()) detail::shape_error("matmul", a.shape(), b.shape());
  detail::check_inputs<T>({&a, &b});
  const std::int64_t m = a.rows(), k = a.cols(), n = b.cols();
  TensorT<T> out(m, n);
  kernels::gemm_nn_acc(a.data(), b.data(), out.data(), m, k, n);
  auto* tape = TapeT<T>::active();
  if (tape && (a.requires_grad() || b.requires_grad())) {
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    tape->record(os, [as, bs, os, m, k, n]() {
      const T* go = os->grad.data();
      if (as->requires_grad)
        kernels::gemm_nt_acc(go, bs->values.data(), as->ensure_grad().data(),
                             m, n, k);
      if (bs->requires_grad)
        kernels::gemm_tn_acc(as->values.data(), go, bs->ensure_grad().data(),
                             m, k, n);
    });
  }
  return out;
}

// Per-row dot product against a column vector: h (N x d) . u (d x 1).
template <class T>
TensorT<T> row_dot(const TensorT<T>& h, const TensorT<T>& u) {
  if (u.cols() != 1)
    throw std::invalid_argument("row_dot: u must be a column vector, got " +
                                u.shape());
  return matmul(h, u);
}

template <class T>
TensorT<T> spmm(const NormalizedAdjacency& s, const TensorT<T>& h) {
  if (s.num_nodes() != h.rows())
    detail::shape_error("spmm", detail::shape_str(s.num_nodes(), s.num_nodes()),
                        h.shape());
  detail::check_inputs<T>({&h});
  const auto& m = s.matrix();
  const std::int64_t rows = m.n, c = h.cols();
  TensorT<T> out(rows, c);
  kernels::spmm_acc(m.row_ptr.data(), m.col.data(), m.val.data(), rows,
                    h.data(), c, out.data());
  auto* tape = TapeT<T>::active();
  if (tape && h.requires_grad()) {
    auto hs = h.storage(), os = out.storage();
    const CsrMatrix* mat = &s.matrix();
    const std::vector<double>* tval = &s.transposed_values();
    tape->record(os, [hs, os, mat, tval, rows, c]() {
      kernels::spmm_acc(mat->row_ptr.data(), mat->col.data(), tval->data(),
                        rows, os->grad.data(), c, hs->ensure_grad().data());
    });
  }
  return out;
}

namespace detail {

// Shared body for add/sub/hadamard.
template <class T, class Fwd>
TensorT<T> binary_elementwise(const char* name, const TensorT<T>& a,
                              const TensorT<T>& b, Fwd fwd,
                              std::function<void(const std::vector<T>&,
                                                 TensorStorage<T>&,
                                                 TensorStorage<T>&)>
                                  bwd) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    shape_error(name, a.shape(), b.shape());
  check_inputs<T>({&a, &b});
  TensorT<T> out(a.rows(), a.cols());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (std::size_t i = 0; i < a.size(); ++i) po[i] = fwd(pa[i], pb[i]);
  auto* tape = TapeT<T>::active();
  if (tape && (a.requires_grad() || b.requires_grad())) {
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    tape->record(os, [as, bs, os, bwd]() { bwd(os->grad, *as, *bs); });
  }
  return out;
}

}  // namespace detail

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  return detail::binary_elementwise<T>(
      "add", a, b, [](T x, T y) { return x + y; },
      [](const std::vector<T>& go, detail::TensorStorage<T>& as,
         detail::TensorStorage<T>& bs) {
        if (as.requires_grad) {
          auto& ga = as.ensure_grad();
          for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        }
        if (bs.requires_grad) {
          auto& gb = bs.ensure_grad();
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
        }
      });
}

template <class T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  return detail::binary_elementwise<T>(
      "sub", a, b, [](T x, T y) { return x - y; },
      [](const std::vector<T>& go, detail::TensorStorage<T>& as,
         detail::TensorStorage<T>& bs) {
        if (as.requires_grad) {
          auto& ga = as.ensure_grad();
          for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
        }
        if (bs.requires_grad) {
          auto& gb = bs.ensure_grad();
          for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
        }
      });
}

template <class T>
TensorT<T> hadamard(const TensorT<T>& a, const TensorT<T>& b) {
  return detail::binary_elementwise<T>(
      "hadamard", a, b, [](T x, T y) { return x * y; },
      [](const std::vector<T>& go, detail::TensorStorage<T>& as,
         detail::TensorStorage<T>& bs) {
        if (as.requires_grad) {
          auto& ga = as.ensure_grad();
          for (std::size_t i = 0; i < go.size(); ++i)
            ga[i] += go[i] * bs.values[i];
        }
        if (bs.requires_grad) {
          auto& gb = bs.ensure_grad();
          for (std::size_t i = 0; i < go.size(); ++i)
            gb[i] += go[i] * as.values[i];
        }
      });
}

// out = mul * x + shift, elementwise.  Covers scale() and (1 - alpha).
template <class T>
TensorT<T> affine(const TensorT<T>& x, T mul, T shift) {
  detail::check_inputs<T>({&x});
  TensorT<T> out(x.rows(), x.cols());
  const T* px = x.data();
  T* po = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) po[i] = mul * px[i] + shift;
  auto* tape = TapeT<T>::active();
  if (tape && x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record(os, [xs, os, mul]() {
      auto& gx = xs->ensure_grad();
      const auto& go = os->grad;
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += mul * go[i];
    });
  }
  return out;
}

template <class T>
TensorT<T> scale(const TensorT<T>& x, T mul) {
  return affine(x, mul, T(0));
}

template <class T>
TensorT<T> relu(const TensorT<T>& x) {
  detail::check_inputs<T>({&x});
  TensorT<T> out(x.rows(), x.cols());
  const T* px = x.data();
  T* po = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
  auto* tape = TapeT<T>::active();
  if (tape && x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record(os, [xs, os]() {
      auto& gx = xs->ensure_grad();
      const auto& go = os->grad;
      for (std::size_t i = 0; i < go.size(); ++i)
        if (xs->values[i] > T(0)) gx[i] += go[i];
    });
  }
  return out;
}

template <class T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  detail::check_inputs<T>({&x});
  TensorT<T> out(x.rows(), x.cols());
  const T* px = x.data();
  T* po = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T v = px[i];
    po[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                      : std::exp(v) / (T(1) + std::exp(v));
  }
  auto* tape = TapeT<T>::active();
  if (tape && x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record(os, [xs, os]() {
      auto& gx = xs->ensure_grad();
      const auto& go = os->grad;
      const T corrupt =
          testhooks::corrupt_sigmoid_backward ? T(1.25) : T(1);
      for (std::size_t i = 0; i < go.size(); ++i) {
        const T y = os->values[i];
        gx[i] += corrupt * go[i] * y * (T(1) - y);
      }
    });
  }
  return out;
}

// Clamps values into [eps, 1 - eps]; gradient passes through unclamped
// entries only.  Keeps sigmoid-derived mixing weights strictly inside (0,1)
// even where the exponential saturates.
template <class T>
TensorT<T> clamp_unit_interval(const TensorT<T>& x) {
  detail::check_inputs<T>({&x});
  const T lo = std::numeric_limits<T>::epsilon();
  const T hi = T(1) - std::numeric_limits<T>::epsilon();
  TensorT<T> out(x.rows(), x.cols());
  const T* px = x.data();
  T* po = out.data();
  for (std::size_t i = 0; i < x.size(); ++i)
    po[i] = std::min(hi, std::max(lo, px[i]));
  auto* tape = TapeT<T>::active();
  if (tape && x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record(os, [xs, os, lo, hi]() {
      auto& gx = xs->ensure_grad();
      const auto& go = os->grad;
      for (std::size_t i = 0; i < go.size(); ++i) {
        const T v = xs->values[i];
        if (v > lo && v < hi) gx[i] += go[i];
      }
    });
  }
  return out;
}

template <class T>
TensorT<T> concat_cols(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rows() != b.rows())
    detail::shape_error("concat_cols", a.shape(), b.shape());
  detail::check_inputs<T>({&a, &b});
  const std::size_t n = a.rows(), ca = a.cols(), cb = b.cols();
  TensorT<T> out(n, ca + cb);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(a.data() + i * ca, a.data() + (i + 1) * ca,
              out.data() + i * (ca + cb));
    std::copy(b.data() + i * cb, b.data() + (i + 1) * cb,
              out.data() + i * (ca + cb) + ca);
  }
  auto* tape = TapeT<T>::active();
  if (tape && (a.requires_grad() || b.requires_grad())) {
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    tape->record(os, [as, bs, os, n, ca, cb]() {
      const auto& go = os->grad;
      if (as->requires_grad) {
        auto& ga = as->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < ca; ++j)
            ga[i * ca + j] += go[i * (ca + cb) + j];
      }
      if (bs->requires_grad) {
        auto& gb = bs->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < cb; ++j)
            gb[i * cb + j] += go[i * (ca + cb) + ca + j];
      }
    });
  }
  return out;
}

// Scales row i of h by s[i] (s is N x 1).
template <class T>
TensorT<T> mul_rowwise(const TensorT<T>& h, const TensorT<T>& s) {
  if (s.cols() != 1 || s.rows() != h.rows())
    detail::shape_error("mul_rowwise", h.shape(), s.shape());
  detail::check_inputs<T>({&h, &s});
  const std::size_t n = h.rows(), c = h.cols();
  TensorT<T> out(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    const T si = s.data()[i];
    const T* hr = h.data() + i * c;
    T* o = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) o[j] = si * hr[j];
  }
  auto* tape = TapeT<T>::active();
  if (tape && (h.requires_grad() || s.requires_grad())) {
    auto hs = h.storage(), ss = s.storage(), os = out.storage();
    tape->record(os, [hs, ss, os, n, c]() {
      const auto& go = os->grad;
      if (hs->requires_grad) {
        auto& gh = hs->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          const T si = ss->values[i];
          for (std::size_t j = 0; j < c; ++j)
            gh[i * c + j] += si * go[i * c + j];
        }
      }
      if (ss->requires_grad) {
        auto& gs = ss->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          T acc = T(0);
          for (std::size_t j = 0; j < c; ++j)
            acc += go[i * c + j] * hs->values[i * c + j];
          gs[i] += acc;
        }
      }
    });
  }
  return out;
}

// Convex row-wise mixture: out[i] = (1 - s[i]) * a[i] + s[i] * b[i] with
// s an N x 1 column.  Fused form of the mixing used by gated propagation.
template <class T>
TensorT<T> mix_rowwise(const TensorT<T>& a, const TensorT<T>& b,
                       const TensorT<T>& s) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    detail::shape_error("mix_rowwise", a.shape(), b.shape());
  if (s.cols() != 1 || s.rows() != a.rows())
    detail::shape_error("mix_rowwise", a.shape(), s.shape());
  detail::check_inputs<T>({&a, &b, &s});
  const std::size_t n = a.rows(), c = a.cols();
  TensorT<T> out(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    const T si = s.data()[i];
    const T ri = T(1) - si;
    const T* ar = a.data() + i * c;
    const T* br = b.data() + i * c;
    T* o = out.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) o[j] = ri * ar[j] + si * br[j];
  }
  auto* tape = TapeT<T>::active();
  if (tape && (a.requires_grad() || b.requires_grad() || s.requires_grad())) {
    auto as = a.storage(), bs = b.storage(), ss = s.storage(),
         os = out.storage();
    tape->record(os, [as, bs, ss, os, n, c]() {
      const auto& go = os->grad;
      if (as->requires_grad) {
        auto& ga = as->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          const T ri = T(1) - ss->values[i];
          for (std::size_t j = 0; j < c; ++j)
            ga[i * c + j] += ri * go[i * c + j];
        }
      }
      if (bs->requires_grad) {
        auto& gb = bs->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          const T si = ss->values[i];
          for (std::size_t j = 0; j < c; ++j)
            gb[i * c + j] += si * go[i * c + j];
        }
      }
      if (ss->requires_grad) {
        auto& gs = ss->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          T acc = T(0);
          for (std::size_t j = 0; j < c; ++j)
            acc += go[i * c + j] *
                   (bs->values[i * c + j] - as->values[i * c + j]);
          gs[i] += acc;
        }
      }
    });
  }
  return out;
}

// Adds a 1 x c bias row to every row of h.
template <class T>
TensorT<T> add_bias(const TensorT<T>& h, const TensorT<T>& bias) {
  if (bias.rows() != 1 || bias.cols() != h.cols())
    detail::shape_error("add_bias", h.shape(), bias.shape());
  detail::check_inputs<T>({&h, &bias});
  const std::size_t n = h.rows(), c = h.cols();
  TensorT<T> out(n, c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out.data()[i * c + j] = h.data()[i * c + j] + bias.data()[j];
  auto* tape = TapeT<T>::active();
  if (tape && (h.requires_grad() || bias.requires_grad())) {
    auto hs = h.storage(), bs = bias.storage(), os = out.storage();
    tape->record(os, [hs, bs, os, n, c]() {
      const auto& go = os->grad;
      if (hs->requires_grad) {
        auto& gh = hs->ensure_grad();
        for (std::size_t i = 0; i < go.size(); ++i) gh[i] += go[i];
      }
      if (bs->requires_grad) {
        auto& gb = bs->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) gb[j] += go[i * c + j];
      }
    });
  }
  return out;
}

// Inverted dropout on elements of x; identity when not training or rate == 0.
template <class T>
TensorT<T> dropout(const TensorT<T>& x, double rate, std::mt19937_64& rng,
                   bool training) {
  if (rate < 0.0 || rate >= 1.0)
    throw std::invalid_argument("dropout rate must be in [0,1), got " +
                                std::to_string(rate));
  if (!training || rate == 0.0) return x;
  detail::check_inputs<T>({&x});
  const T inv_keep = T(1) / static_cast<T>(1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  auto mask = std::make_shared<std::vector<T>>(x.size());
  TensorT<T> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T m = keep(rng) ? inv_keep : T(0);
    (*mask)[i] = m;
    out.data()[i] = m * x.data()[i];
  }
  auto* tape = TapeT<T>::active();
  if (tape && x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record(os, [xs, os, mask]() {
      auto& gx = xs->ensure_grad();
      const auto& go = os->grad;
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += (*mask)[i] * go[i];
    });
  }
  return out;
}

template <class T>
TensorT<T> sum(const TensorT<T>& x) {
  detail::check_inputs<T>({&x});
  T acc = T(0);
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  TensorT<T> out = TensorT<T>::scalar(acc);
  auto* tape = TapeT<T>::active();
  if (tape && x.requires_grad()) {
    auto xs = x.storage(), os = out.storage();
    tape->record(os, [xs, os]() {
      auto& gx = xs->ensure_grad();
      const T g = os->grad[0];
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

// Mean over masked rows of -log softmax(logits)[label].  Row-max subtraction
// keeps the exponentials bounded.
template <class T>
TensorT<T> masked_softmax_cross_entropy(const TensorT<T>& logits,
                                        const std::vector<std::int32_t>& labels,
                                        const std::vector<std::uint8_t>& mask) {
  const std::size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n)
    throw std::invalid_argument("cross_entropy: " + std::to_string(n) +
                                " logit rows vs " +
                                std::to_string(labels.size()) + " labels");
  if (mask.size() != n)
    throw std::invalid_argument("cross_entropy: mask length " +
                                std::to_string(mask.size()) + " vs " +
                                std::to_string(n) + " rows");
  detail::check_inputs<T>({&logits});
  std::size_t count = 0;
  for (auto m : mask) count += (m != 0);
  if (count == 0) throw std::invalid_argument("cross_entropy: empty mask");

  auto probs = std::make_shared<std::vector<T>>(n * c, T(0));
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
      throw std::invalid_argument("cross_entropy: label " +
                                  std::to_string(labels[i]) +
                                  " out of range for " + std::to_string(c) +
                                  " classes at row " + std::to_string(i));
    const T* row = logits.data() + i * c;
    T mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      denom += std::exp(static_cast<double>(row[j] - mx));
    for (std::size_t j = 0; j < c; ++j)
      (*probs)[i * c + j] = static_cast<T>(
          std::exp(static_cast<double>(row[j] - mx)) / denom);
    total -= static_cast<double>(row[labels[i]] - mx) - std::log(denom);
  }
  TensorT<T> out = TensorT<T>::scalar(static_cast<T>(total / count));
  auto* tape = TapeT<T>::active();
  if (tape && logits.requires_grad()) {
    auto ls = logits.storage(), os = out.storage();
    auto lab = labels;  // copy; caller may mutate
    auto msk = mask;
    tape->record(os, [ls, os, probs, lab = std::move(lab),
                      msk = std::move(msk), n, c, count]() {
      auto& gl = ls->ensure_grad();
      const T g = os->grad[0] / static_cast<T>(count);
      for (std::size_t i = 0; i < n; ++i) {
        if (!msk[i]) continue;
        for (std::size_t j = 0; j < c; ++j)
          gl[i * c + j] += g * (*probs)[i * c + j];
        gl[i * c + static_cast<std::size_t>(lab[i])] -= g;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Non-differentiable helpers
// ---------------------------------------------------------------------------

template <class U, class T>
TensorT<U> cast(const TensorT<T>& x) {
  TensorT<U> out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i)
    out.data()[i] = static_cast<U>(x.data()[i]);
  return out;
}

template <class T>
TensorT<T> glorot_uniform(std::size_t rows, std::size_t cols,
                          std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  TensorT<T> t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i)
    t.data()[i] = static_cast<T>(dist(rng));
  return t;
}

template <class T>
bool all_finite(const TensorT<T>& x) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(static_cast<double>(x.data()[i]))) return false;
  return true;
}

using Tensor = TensorT<double>;
using Tape = TapeT<double>;

}  // namespace gnnkit
