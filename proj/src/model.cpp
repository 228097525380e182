#include "gnnkit/model.hpp"

#include "gnnkit/gradient_check.hpp"

namespace gnnkit {

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::PPTT: return "pptt";
    case Architecture::TTPP: return "ttpp";
    case Architecture::PTPT: return "ptpt";
    case Architecture::MLP: return "mlp";
  }
  return "?";
}

std::string to_string(SkipMode s) {
  switch (s) {
    case SkipMode::None: return "none";
    case SkipMode::Residual: return "res";
    case SkipMode::Dense: return "dense";
  }
  return "?";
}

std::string to_string(Precision p) {
  return p == Precision::Float32 ? "fp32" : "fp64";
}

Architecture parse_architecture(const std::string& s) {
  if (s == "pptt") return Architecture::PPTT;
  if (s == "ttpp") return Architecture::TTPP;
  if (s == "ptpt") return Architecture::PTPT;
  if (s == "mlp") return Architecture::MLP;
  throw std::invalid_argument("unknown architecture '" + s +
                              "'; expected pptt|ttpp|ptpt|mlp");
}

SkipMode parse_skip(const std::string& s) {
  if (s == "none") return SkipMode::None;
  if (s == "res") return SkipMode::Residual;
  if (s == "dense") return SkipMode::Dense;
  throw std::invalid_argument("unknown skip mode '" + s +
                              "'; expected none|res|dense");
}

void ModelConfig::validate() const {
  if (d_t < 1)
    throw std::invalid_argument("d_t must be >= 1, got " + std::to_string(d_t));
  if (d_p < 0)
    throw std::invalid_argument("d_p must be >= 0, got " + std::to_string(d_p));
  if (hidden_width < 1)
    throw std::invalid_argument("hidden width must be >= 1");
  if (epochs < 1)
    throw std::invalid_argument("epochs must be >= 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw std::invalid_argument("dropout rate must be in [0,1)");
  if (r_exponent < 0.0 || r_exponent > 1.0)
    throw std::invalid_argument("normalization exponent r must be in [0,1]");
  if (adjacency_power < 1)
    throw std::invalid_argument("adjacency power must be >= 1, got " +
                                std::to_string(adjacency_power));
  if (air && skip != SkipMode::None)
    throw std::invalid_argument(
        "AIR replaces plain skip connections; drop --skip or --air");

  switch (architecture) {
    case Architecture::MLP:
      if (d_p != 0)
        throw std::invalid_argument("an MLP has no propagation; set d_p to 0");
      break;
    case Architecture::PTPT:
      if (pt_split) {
        if (d_t != 2)
          throw std::invalid_argument(
              "the split-propagation variant requires exactly two layers "
              "(d_t=2)");
        if (pt_split->first + pt_split->second != d_p)
          throw std::invalid_argument(
              "pt_split halves must sum to d_p: " +
              std::to_string(pt_split->first) + "+" +
              std::to_string(pt_split->second) + " vs d_p=" +
              std::to_string(d_p));
        if (air || skip != SkipMode::None || adjacency_power != 1)
          throw std::invalid_argument(
              "the split-propagation variant is a plain-GCN analysis; drop "
              "--air/--skip/--power");
      } else if (d_p != adjacency_power * d_t) {
        if (adjacency_power == 1)
          throw std::invalid_argument(
              "interleaved architectures tie the depths together: PTPT "
              "requires d_p = d_t (got d_p=" + std::to_string(d_p) +
              ", d_t=" + std::to_string(d_t) +
              "); use --power or --pt-split for the analysis variants");
        throw std::invalid_argument(
            "with adjacency power " + std::to_string(adjacency_power) +
            ", PTPT requires d_p = power*d_t = " +
            std::to_string(adjacency_power * d_t));
      } else if (air && adjacency_power != 1) {
        throw std::invalid_argument(
            "the repeated-propagation variant is a plain-GCN analysis; drop "
            "--air");
      }
      break;
    case Architecture::PPTT:
    case Architecture::TTPP:
      break;
  }
  if (architecture != Architecture::PTPT && adjacency_power != 1)
    throw std::invalid_argument(
        "adjacency power applies to the PTPT architecture only");
  if (architecture != Architecture::PTPT && pt_split)
    throw std::invalid_argument("pt_split applies to the PTPT architecture only");
}

ModelConfig with_adjacency_power(ModelConfig cfg, int power) {
  if (power < 1)
    throw std::invalid_argument("adjacency power must be >= 1");
  cfg.adjacency_power = power;
  cfg.d_p = power * cfg.d_t;
  cfg.validate();
  return cfg;
}

ModelConfig with_pt_split(ModelConfig cfg) {
  cfg.pt_split = std::make_pair(cfg.d_p / 2, cfg.d_p - cfg.d_p / 2);
  cfg.validate();
  return cfg;
}

double masked_accuracy(const Tensor& logits,
                       const std::vector<std::int32_t>& labels,
                       const std::vector<std::uint8_t>& mask) {
  return masked_accuracy_t(logits, labels, mask);
}

TrainReport train(const ModelConfig& cfg, const Dataset& ds) {
  return cfg.precision == Precision::Float64 ? train_impl<double>(cfg, ds)
                                             : train_impl<float>(cfg, ds);
}

GradCheckReport model_gradient_check(const ModelConfig& cfg_in,
                                     const Dataset& ds, double tolerance,
                                     std::uint64_t seed) {
  ModelConfig cfg = cfg_in;
  if (cfg.num_classes == 0) cfg.num_classes = ds.class_count;
  cfg.precision = Precision::Float64;
  cfg.validate();
  ds.validate();

  const Graph looped = add_self_loops(ds.graph);
  const NormalizedAdjacency adj = normalize_adjacency(looped, cfg.r_exponent);
  std::mt19937_64 init_rng(cfg.seed);
  ModelT<double> model(cfg, ds.feature_dim(), init_rng);

  std::vector<Tensor> params;
  for (auto& p : model.parameters()) params.push_back(p.tensor);
  auto forward = [&]() {
    Tensor logits = model.forward(ds.features, &adj, false, nullptr);
    return masked_softmax_cross_entropy(logits, ds.labels, ds.train_mask);
  };
  std::mt19937_64 pick_rng(seed);
  return gradient_check(forward, params, tolerance, pick_rng, 120);
}

}  // namespace gnnkit
