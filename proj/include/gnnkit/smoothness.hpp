#pragma once

#include <optional>
#include <vector>

#include "gnnkit/dataio.hpp"
#include "gnnkit/graph.hpp"
#include "gnnkit/tensor.hpp"

// Smoothness metrics: the node smoothing level is a node's mean cosine
// similarity against every other node, the graph smoothing level is the mean
// over nodes.  Zero rows contribute similarity 0.  Both live in [-1, 1].

namespace gnnkit {

double node_smoothness(const Tensor& features, std::size_t node);
std::vector<double> node_smoothness_all(const Tensor& features);
double graph_smoothness(const Tensor& features);

struct SmoothnessReport {
  std::vector<double> gsl_per_step;  // index k holds GSL of A^k X, k = 0..k_max
  std::optional<double> stationary_gsl;  // present for connected graphs
  std::vector<std::vector<double>> nsl_per_step;  // filled when requested
};

// GSL of the propagated features for k = 0..k_max under the exponent-r
// operator, plus the infinite-propagation GSL when the graph is connected.
// The graph must carry self-loop provenance.
SmoothnessReport gsl_trajectory(const Graph& graph, const Tensor& features,
                                int k_max, double r, bool record_nsl = false);

struct ModelConfig;

struct DtProbePoint {
  int d_t = 0;
  double gsl = 0.0;
  double test_acc = 0.0;
};

// Trains one model per d_t value (propagation depth held fixed by the base
// config) and reports the GSL of the final-layer representations.
std::vector<DtProbePoint> gsl_vs_dt_probe(const ModelConfig& base,
                                          const Dataset& dataset,
                                          const std::vector<int>& dt_values);

}  // namespace gnnkit
