#include "gnnkit/smoothness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gnnkit/model.hpp"
#include "gnnkit/stationary.hpp"

namespace gnnkit {

namespace {

// Normalized rows plus their column sum.  With unit rows the cosine against
// the rest of the graph collapses to one dot product per node:
//   sum_{j != i} cos(i,j) = xhat_i . S - ||xhat_i||^2.
struct NormalizedRows {
  Tensor rows;                 // zero rows stay zero
  std::vector<double> colsum;  // length d
  std::vector<std::uint8_t> nonzero;
};

NormalizedRows normalize_rows(const Tensor& x) {
  const std::size_t n = x.rows(), d = x.cols();
  NormalizedRows out;
  out.rows = Tensor(n, d);
  out.colsum.assign(d, 0.0);
  out.nonzero.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += x.at(i, j) * x.at(i, j);
    if (sq > 0.0) {
      const double inv = 1.0 / std::sqrt(sq);
      out.nonzero[i] = 1;
      for (std::size_t j = 0; j < d; ++j) {
        out.rows.at(i, j) = x.at(i, j) * inv;
        out.colsum[j] += out.rows.at(i, j);
      }
    }
  }
  return out;
}

double nsl_from(const NormalizedRows& nr, std::size_t i, std::size_t n) {
  double dot = 0.0;
  for (std::size_t j = 0; j < nr.rows.cols(); ++j)
    dot += nr.rows.at(i, j) * nr.colsum[j];
  if (nr.nonzero[i]) dot -= 1.0;  // remove the self pair
  const double v = dot / static_cast<double>(n - 1);
  return std::clamp(v, -1.0, 1.0);
}

}  // namespace

double node_smoothness(const Tensor& features, std::size_t node) {
  const std::size_t n = features.rows();
  if (n < 2)
    throw std::invalid_argument("node_smoothness needs at least two nodes");
  if (node >= n) throw std::invalid_argument("node index out of range");
  return nsl_from(normalize_rows(features), node, n);
}

std::vector<double> node_smoothness_all(const Tensor& features) {
  const std::size_t n = features.rows();
  if (n < 2)
    throw std::invalid_argument("node_smoothness needs at least two nodes");
  const NormalizedRows nr = normalize_rows(features);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = nsl_from(nr, i, n);
  return out;
}

double graph_smoothness(const Tensor& features) {
  const auto nsl = node_smoothness_all(features);
  double total = 0.0;
  for (double v : nsl) total += v;
  return total / static_cast<double>(nsl.size());
}

SmoothnessReport gsl_trajectory(const Graph& graph, const Tensor& features,
                                int k_max, double r, bool record_nsl) {
  if (k_max < 1)
    throw std::invalid_argument("gsl_trajectory requires k_max >= 1");
  if (!graph.has_self_loops())
    throw std::invalid_argument("gsl_trajectory expects a self-looped graph");
  if (features.rows() != graph.num_nodes())
    throw std::invalid_argument("gsl_trajectory: feature rows " +
                                std::to_string(features.rows()) +
                                " vs graph nodes " +
                                std::to_string(graph.num_nodes()));
  const NormalizedAdjacency adj = normalize_adjacency(graph, r);
  SmoothnessReport report;
  Tensor h = features;
  for (int k = 0; k <= k_max; ++k) {
    report.gsl_per_step.push_back(graph_smoothness(h));
    if (record_nsl) report.nsl_per_step.push_back(node_smoothness_all(h));
    if (k < k_max) h = spmm(adj, h);
  }
  if (graph.is_connected())
    report.stationary_gsl =
        graph_smoothness(stationary_representation(graph, features, r));
  return report;
}

std::vector<DtProbePoint> gsl_vs_dt_probe(const ModelConfig& base,
                                          const Dataset& dataset,
                                          const std::vector<int>& dt_values) {
  if (base.architecture != Architecture::PPTT)
    throw std::invalid_argument(
        "gsl_vs_dt_probe sweeps the transformation stack of a PPTT model");
  std::vector<DtProbePoint> out;
  for (int dt : dt_values) {
    ModelConfig cfg = base;
    cfg.d_t = dt;
    cfg.capture_representations = true;
    TrainReport report = train(cfg, dataset);
    out.push_back({dt, graph_smoothness(report.final_representations),
                   report.test_acc_at_best_val});
  }
  return out;
}

}  // namespace gnnkit
