#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gnnkit/adam.hpp"
#include "gnnkit/dataio.hpp"
#include "gnnkit/gnn_ops.hpp"
#include "gnnkit/graph.hpp"
#include "gnnkit/tensor.hpp"

// Assembles the operator layer into trainable models.  An architecture is a
// fixed ordering of P and T operations: fully interleaved (PTPT), propagate
// then transform (PPTT), transform then propagate (TTPP), or transform only
// (MLP).  AIR replaces plain skip connections with per-part initial-residual
// mixing; the two are mutually exclusive.

namespace gnnkit {

enum class Architecture { PPTT, TTPP, PTPT, MLP };
enum class SkipMode { None, Residual, Dense };
enum class Precision { Float32, Float64 };

std::string to_string(Architecture a);
std::string to_string(SkipMode s);
std::string to_string(Precision p);
Architecture parse_architecture(const std::string& s);
SkipMode parse_skip(const std::string& s);

struct ModelConfig {
  Architecture architecture = Architecture::PTPT;
  int d_p = 2;
  int d_t = 2;
  bool air = false;
  SkipMode skip = SkipMode::None;
  int hidden_width = 64;
  int num_classes = 0;  // 0: take from the dataset at training time
  double dropout_rate = 0.5;
  double learning_rate = 0.01;
  double weight_decay = 5e-4;
  int epochs = 500;
  std::uint64_t seed = 1;
  double r_exponent = 0.5;
  int adjacency_power = 1;
  std::optional<std::pair<int, int>> pt_split;
  Precision precision = Precision::Float32;
  bool grad_probe = false;
  bool capture_representations = false;

  void validate() const;
};

// Marks a config as the repeated-propagation analysis variant (each layer
// applies the operator `power` times, so total propagation is power * d_t).
ModelConfig with_adjacency_power(ModelConfig cfg, int power);
// Marks a config as the two-layer split variant: the first layer applies the
// operator floor(d_p/2) times and the second ceil(d_p/2) times.
ModelConfig with_pt_split(ModelConfig cfg);

struct TrainReport {
  std::vector<double> loss;        // evaluation-mode loss on the train mask
  std::vector<double> train_acc;
  std::vector<double> val_acc;
  std::vector<double> test_acc;
  std::vector<double> epoch_ms;
  std::vector<double> first_layer_grad;  // filled when grad_probe is set
  int best_val_epoch = -1;
  double best_val_acc = 0.0;
  double test_acc_at_best_val = 0.0;
  double final_train_acc = 0.0;
  double precompute_ms = 0.0;
  double total_ms = 0.0;
  Tensor final_representations;  // defined when capture_representations is set
};

template <class T>
struct NamedParam {
  std::string name;
  TensorT<T> tensor;
  bool decay = false;  // weight decay applies to transformation matrices only
};

// Applies the propagation operator k times outside any tape.
template <class T>
TensorT<T> propagate_features(const NormalizedAdjacency& adj,
                              const TensorT<T>& features, int k) {
  TensorT<T> h = features;
  for (int i = 0; i < k; ++i) h = p_op(adj, h);
  return h;
}

template <class T>
class ModelT {
 public:
  ModelT(const ModelConfig& cfg, std::size_t input_dim, std::mt19937_64& rng)
      : cfg_(cfg), input_dim_(input_dim) {
    cfg_.validate();
    if (cfg_.num_classes <= 0)
      throw std::invalid_argument("model requires num_classes > 0");
    build(rng);
  }

  const ModelConfig& config() const { return cfg_; }
  std::size_t input_dim() const { return input_dim_; }

  std::vector<NamedParam<T>>& parameters() { return named_; }
  const std::vector<NamedParam<T>>& parameters() const { return named_; }

  const TensorT<T>& first_transform_weight() const { return weights_.front(); }

  void zero_grads() {
    for (auto& p : named_) p.tensor.zero_grad();
  }

  std::vector<std::vector<T>> snapshot_values() const {
    std::vector<std::vector<T>> out;
    out.reserve(named_.size());
    for (const auto& p : named_) out.push_back(p.tensor.values());
    return out;
  }
  void restore_values(const std::vector<std::vector<T>>& snap) {
    for (std::size_t i = 0; i < named_.size(); ++i)
      named_[i].tensor.values() = snap[i];
  }

  // Pin every AIR gate to a constant mixing weight (tests only).
  void pin_gates(std::optional<double> alpha) {
    for (auto& g : gates_) g.pinned_alpha = alpha;
  }
  std::vector<AirGateT<T>>& gates() { return gates_; }

  // Logits for the whole node set.  `adj` may be null for MLP; `preprop`
  // optionally supplies cached propagated features for the plain PPTT path.
  TensorT<T> forward(const TensorT<T>& features, const NormalizedAdjacency* adj,
                     bool training, std::mt19937_64* dropout_rng,
                     const TensorT<T>* preprop = nullptr) {
    if (features.cols() != input_dim_)
      throw std::invalid_argument("forward: features are " + features.shape() +
                                  " but the model was built for width " +
                                  std::to_string(input_dim_));
    if (cfg_.architecture != Architecture::MLP && adj == nullptr)
      throw std::invalid_argument("forward: this architecture needs an adjacency");
    if (adj && adj->num_nodes() != features.rows())
      throw std::invalid_argument("forward: adjacency covers " +
                                  std::to_string(adj->num_nodes()) +
                                  " nodes, features " + features.shape());
    switch (cfg_.architecture) {
      case Architecture::MLP:
        return t_stack(features, training, dropout_rng);
      case Architecture::PPTT: {
        TensorT<T> propagated;
        if (cfg_.air)
          propagated = p_stack(features, *adj);
        else if (preprop)
          propagated = *preprop;
        else
          propagated = propagate_features(*adj, features, cfg_.d_p);
        return t_stack(propagated, training, dropout_rng);
      }
      case Architecture::TTPP: {
        TensorT<T> logits = t_stack(features, training, dropout_rng);
        return p_stack(logits, *adj);
      }
      case Architecture::PTPT:
        return conv_stack(features, *adj, training, dropout_rng);
    }
    throw std::logic_error("unreachable");
  }

 private:
  void build(std::mt19937_64& rng) {
    const int L = cfg_.d_t;
    const std::size_t h = static_cast<std::size_t>(cfg_.hidden_width);
    for (int l = 1; l <= L; ++l) {
      const auto [in, out] = layer_dims(l);
      weights_.push_back(glorot_uniform<T>(in, out, rng));
      biases_.push_back(TensorT<T>(1, out));
      named_.push_back({"w" + std::to_string(l), weights_.back(), true});
      named_.push_back({"b" + std::to_string(l), biases_.back(), false});
    }
    if (cfg_.air && L >= 2 && input_dim_ != h) {
      projection_ = glorot_uniform<T>(input_dim_, h, rng);
      named_.push_back({"proj", projection_, true});
    }
    const int gate_count = gated_op_count();
    const std::size_t gate_width = gated_op_width();
    for (int g = 0; g < gate_count; ++g) {
      // Zero init: every alpha starts at exactly 0.5.
      gates_.push_back(AirGateT<T>{TensorT<T>(2 * gate_width, 1), g + 2, {}});
      named_.push_back({"u" + std::to_string(g + 2), gates_.back().u, false});
    }
    for (auto& p : named_) p.tensor.set_requires_grad(true);
  }

  int gated_op_count() const {
    if (!cfg_.air) return 0;
    switch (cfg_.architecture) {
      case Architecture::PPTT:
      case Architecture::TTPP:
        return std::max(0, cfg_.d_p - 1);
      case Architecture::PTPT:
        return std::max(0, cfg_.d_t - 1);
      case Architecture::MLP:
        return 0;
    }
    return 0;
  }

  std::size_t gated_op_width() const {
    switch (cfg_.architecture) {
      case Architecture::PPTT:
        return input_dim_;
      case Architecture::TTPP:
        return static_cast<std::size_t>(cfg_.num_classes);
      default:
        return static_cast<std::size_t>(cfg_.hidden_width);
    }
  }

  std::pair<std::size_t, std::size_t> layer_dims(int l) const {
    const int L = cfg_.d_t;
    const std::size_t h = static_cast<std::size_t>(cfg_.hidden_width);
    const std::size_t C = static_cast<std::size_t>(cfg_.num_classes);
    std::size_t in;
    if (l == 1) {
      in = input_dim_;
    } else if (cfg_.skip == SkipMode::Dense) {
      in = input_dim_ + static_cast<std::size_t>(l - 1) * h;
    } else {
      in = h;
    }
    const std::size_t out = (l == L) ? C : h;
    return {in, out};
  }

  TensorT<T> maybe_dropout(const TensorT<T>& x, bool training,
                           std::mt19937_64* rng) {
    if (!training || cfg_.dropout_rate == 0.0) return x;
    if (!rng)
      throw std::invalid_argument("training forward needs a dropout rng");
    return dropout(x, cfg_.dropout_rate, *rng, true);
  }

  // Stack of T operations with optional dense/residual skips or AIR initial
  // residuals.  The part input plays the role of H^(0).
  TensorT<T> t_stack(const TensorT<T>& part_input, bool training,
                     std::mt19937_64* rng) {
    const int L = cfg_.d_t;
    TensorT<T> h = part_input;
    std::vector<TensorT<T>> history{part_input};
    for (int l = 1; l <= L; ++l) {
      const Activation act = l < L ? Activation::ReLU : Activation::Identity;
      TensorT<T> base =
          cfg_.skip == SkipMode::Dense
              ? dense_combine(std::span<const TensorT<T>>(history))
              : h;
      TensorT<T> dropped = maybe_dropout(base, training, rng);
      TensorT<T> out;
      if (cfg_.air && l >= 2) {
        const TensorT<T>* proj =
            projection_.defined() ? &projection_ : nullptr;
        out = t_with_air(dropped, part_input, weights_[l - 1], act, proj,
                         &biases_[l - 1]);
      } else {
        out = t_op(dropped, weights_[l - 1], act, &biases_[l - 1]);
      }
      if (cfg_.skip == SkipMode::Residual && h.cols() == out.cols())
        out = residual_combine(h, out);
      h = out;
      history.push_back(h);
    }
    return h;
  }

  // Stack of P operations; with AIR each operation past the first gates in a
  // fraction of the part input.
  TensorT<T> p_stack(const TensorT<T>& part_input,
                     const NormalizedAdjacency& adj) {
    TensorT<T> h = part_input;
    for (int l = 1; l <= cfg_.d_p; ++l) {
      if (cfg_.air && l >= 2)
        h = p_with_air(adj, h, part_input, gates_[l - 2]);
      else
        h = p_op(adj, h);
    }
    return h;
  }

  // Interleaved graph convolutions; AIR mixes against the (projected) input.
  TensorT<T> conv_stack(const TensorT<T>& features,
                        const NormalizedAdjacency& adj, bool training,
                        std::mt19937_64* rng) {
    const int L = cfg_.d_t;
    TensorT<T> h0;
    if (cfg_.air && L >= 2)
      h0 = projection_.defined() ? matmul(features, projection_) : features;
    TensorT<T> h = features;
    std::vector<TensorT<T>> history{features};
    for (int l = 1; l <= L; ++l) {
      const Activation act = l < L ? Activation::ReLU : Activation::Identity;
      int reps = cfg_.adjacency_power;
      if (cfg_.pt_split) reps = l == 1 ? cfg_.pt_split->first : cfg_.pt_split->second;
      TensorT<T> base =
          cfg_.skip == SkipMode::Dense
              ? dense_combine(std::span<const TensorT<T>>(history))
              : h;
      TensorT<T> dropped = maybe_dropout(base, training, rng);
      TensorT<T> out;
      if (cfg_.air && l >= 2) {
        out = gc_with_air(adj, dropped, h0, gates_[l - 2], weights_[l - 1],
                          act, &biases_[l - 1]);
      } else {
        TensorT<T> prop = dropped;
        for (int rep = 0; rep < reps; ++rep) prop = p_op(adj, prop);
        out = t_op(prop, weights_[l - 1], act, &biases_[l - 1]);
      }
      if (cfg_.skip == SkipMode::Residual && h.cols() == out.cols())
        out = residual_combine(h, out);
      h = out;
      history.push_back(h);
    }
    return h;
  }

  ModelConfig cfg_;
  std::size_t input_dim_ = 0;
  std::vector<TensorT<T>> weights_;
  std::vector<TensorT<T>> biases_;
  std::vector<AirGateT<T>> gates_;
  TensorT<T> projection_;
  std::vector<NamedParam<T>> named_;
};

template <class T>
ModelT<T> build_model(const ModelConfig& cfg, std::size_t input_dim,
                      std::mt19937_64& rng) {
  return ModelT<T>(cfg, input_dim, rng);
}

double masked_accuracy(const Tensor& logits,
                       const std::vector<std::int32_t>& labels,
                       const std::vector<std::uint8_t>& mask);

template <class T>
double masked_accuracy_t(const TensorT<T>& logits,
                         const std::vector<std::int32_t>& labels,
                         const std::vector<std::uint8_t>& mask) {
  std::size_t correct = 0, total = 0;
  const std::size_t c = logits.cols();
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!mask[i]) continue;
    const T* row = logits.data() + i * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    correct += (static_cast<std::int32_t>(best) == labels[i]);
    ++total;
  }
  if (total == 0) throw std::invalid_argument("accuracy over an empty mask");
  return static_cast<double>(correct) / static_cast<double>(total);
}

// Full-batch training with masked cross entropy and best-validation
// checkpointing.  The report's test accuracy is the one observed at the best
// validation epoch; the returned model state is restored to that epoch.
TrainReport train(const ModelConfig& cfg, const Dataset& ds);

struct GradCheckReport;

// Finite-difference check of the full model loss at 64-bit, evaluation-mode
// forward (dropout off, deterministic).  Samples every parameter tensor.
GradCheckReport model_gradient_check(const ModelConfig& cfg, const Dataset& ds,
                                     double tolerance, std::uint64_t seed);

template <class T>
TrainReport train_impl(const ModelConfig& cfg_in, const Dataset& ds) {
  using clock = std::chrono::steady_clock;
  const auto run_start = clock::now();
  auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };

  ModelConfig cfg = cfg_in;
  if (cfg.num_classes == 0) cfg.num_classes = ds.class_count;
  cfg.validate();
  ds.validate();
  if (ds.mask_count(ds.train_mask) == 0 || ds.mask_count(ds.val_mask) == 0 ||
      ds.mask_count(ds.test_mask) == 0)
    throw std::invalid_argument(
        "training requires nonempty train/val/test masks");

  const Graph looped = add_self_loops(ds.graph);
  const NormalizedAdjacency adj = normalize_adjacency(looped, cfg.r_exponent);
  const TensorT<T> features = cast<T>(ds.features);

  std::mt19937_64 init_rng(cfg.seed);
  ModelT<T> model(cfg, ds.feature_dim(), init_rng);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

  AdamStateT<T> opt;
  opt.learning_rate = cfg.learning_rate;
  opt.weight_decay = cfg.weight_decay;
  std::vector<TensorT<T>> params;
  for (auto& p : model.parameters()) {
    params.push_back(p.tensor);
    opt.register_param(p.tensor, p.decay);
  }

  TrainReport report;

  // The plain PPTT propagation has no learnable pieces, so it runs once.
  TensorT<T> preprop;
  const bool use_preprop = cfg.architecture == Architecture::PPTT &&
                           !cfg.air && cfg.d_p > 0;
  if (use_preprop) {
    const auto t0 = clock::now();
    preprop = propagate_features(adj, features, cfg.d_p);
    report.precompute_ms = ms_since(t0);
  }
  const TensorT<T>* preprop_ptr = use_preprop ? &preprop : nullptr;

  std::vector<std::vector<T>> best_snapshot;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = clock::now();
    model.zero_grads();
    {
      TapeT<T> tape;
      TensorT<T> logits =
          model.forward(features, &adj, true, &dropout_rng, preprop_ptr);
      TensorT<T> loss =
          masked_softmax_cross_entropy(logits, ds.labels, ds.train_mask);
      const double loss_value = static_cast<double>(loss.item());
      if (!std::isfinite(loss_value))
        throw std::runtime_error(
            "non-finite training loss at epoch " + std::to_string(epoch) +
            " (arch=" + to_string(cfg.architecture) +
            ", lr=" + std::to_string(cfg.learning_rate) + ")");
      tape.backward(loss);
    }
    if (cfg.grad_probe) {
      const auto& w1 = model.first_transform_weight();
      double mean_abs = 0.0;
      if (w1.has_grad()) {
        for (T g : w1.grad()) mean_abs += std::abs(static_cast<double>(g));
        mean_abs /= static_cast<double>(w1.size());
      }
      report.first_layer_grad.push_back(mean_abs);
    }
    adam_step(params, opt);

    TensorT<T> eval_logits =
        model.forward(features, &adj, false, nullptr, preprop_ptr);
    TensorT<T> eval_loss =
        masked_softmax_cross_entropy(eval_logits, ds.labels, ds.train_mask);
    report.loss.push_back(static_cast<double>(eval_loss.item()));
    report.train_acc.push_back(
        masked_accuracy_t(eval_logits, ds.labels, ds.train_mask));
    report.val_acc.push_back(
        masked_accuracy_t(eval_logits, ds.labels, ds.val_mask));
    report.test_acc.push_back(
        masked_accuracy_t(eval_logits, ds.labels, ds.test_mask));
    if (report.val_acc.back() > report.best_val_acc ||
        report.best_val_epoch < 0) {
      report.best_val_acc = report.val_acc.back();
      report.best_val_epoch = epoch;
      report.test_acc_at_best_val = report.test_acc.back();
      best_snapshot = model.snapshot_values();
    }
    report.epoch_ms.push_back(ms_since(t0));
  }

  if (!best_snapshot.empty()) model.restore_values(best_snapshot);
  if (!report.train_acc.empty()) report.final_train_acc = report.train_acc.back();
  if (cfg.capture_representations) {
    TensorT<T> reps = model.forward(features, &adj, false, nullptr, preprop_ptr);
    report.final_representations = cast<double>(reps);
  }
  report.total_ms = ms_since(run_start);
  return report;
}

}  // namespace gnnkit
