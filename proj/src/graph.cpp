#include "gnnkit/graph.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>

#include "gnnkit/stationary.hpp"

namespace gnnkit {

namespace {

std::uint64_t next_graph_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

void check_index(std::uint32_t v, std::size_t n) {
  if (v >= n)
    throw std::invalid_argument("edge endpoint " + std::to_string(v) +
                                " out of range for " + std::to_string(n) +
                                " nodes");
}

}  // namespace

Graph Graph::from_undirected_edges(std::size_t num_nodes,
                                   std::span<const WeightedEdge> edges) {
  // Merge duplicates (either orientation) by accumulating weight.
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> merged;
  std::size_t duplicates = 0;
  for (const auto& e : edges) {
    check_index(e.u, num_nodes);
    check_index(e.v, num_nodes);
    if (e.u == e.v)
      throw std::invalid_argument("raw self loop (" + std::to_string(e.u) +
                                  "," + std::to_string(e.v) +
                                  ") rejected; self loops are added by the "
                                  "pipeline exactly once");
    const auto key = std::minmax(e.u, e.v);
    auto [it, inserted] = merged.emplace(key, e.w);
    if (!inserted) {
      it->second += e.w;
      ++duplicates;
    }
  }
  if (duplicates > 0)
    std::cerr << "[gnnkit] warning: merged " << duplicates
              << " duplicate edge(s) by weight accumulation\n";

  Graph g;
  g.n_ = num_nodes;
  g.m_ = merged.size();
  g.id_ = next_graph_id();

  std::vector<std::size_t> counts(num_nodes, 0);
  for (const auto& [key, w] : merged) {
    ++counts[key.first];
    ++counts[key.second];
  }
  g.adj_.n = num_nodes;
  g.adj_.row_ptr.assign(num_nodes + 1, 0);
  for (std::size_t i = 0; i < num_nodes; ++i)
    g.adj_.row_ptr[i + 1] = g.adj_.row_ptr[i] + counts[i];
  g.adj_.col.resize(2 * merged.size());
  g.adj_.val.resize(2 * merged.size());
  std::vector<std::size_t> cursor(g.adj_.row_ptr.begin(),
                                  g.adj_.row_ptr.end() - 1);
  // The ordered map iterates (min,max) keys ascending, which fills every
  // row's columns in sorted order: row i first receives neighbors j < i from
  // keys (j,i), then neighbors k > i from keys (i,k).
  for (const auto& [key, w] : merged) {
    const auto [u, v] = key;
    g.adj_.col[cursor[u]] = v;
    g.adj_.val[cursor[u]++] = w;
    g.adj_.col[cursor[v]] = u;
    g.adj_.val[cursor[v]++] = w;
  }

  g.degrees_.assign(num_nodes, 0.0);
  for (std::size_t i = 0; i < num_nodes; ++i)
    for (std::size_t k = g.adj_.row_ptr[i]; k < g.adj_.row_ptr[i + 1]; ++k)
      g.degrees_[i] += g.adj_.val[k];
  return g;
}

Graph Graph::from_undirected_edges(
    std::size_t num_nodes,
    std::span<const std::pair<std::uint32_t, std::uint32_t>> edges) {
  std::vector<WeightedEdge> ws;
  ws.reserve(edges.size());
  for (const auto& [u, v] : edges) ws.push_back({u, v, 1.0});
  return from_undirected_edges(num_nodes, ws);
}

bool Graph::is_connected() const {
  if (n_ == 0) return true;
  std::vector<std::uint8_t> seen(n_, 0);
  std::vector<std::uint32_t> stack{0};
  seen[0] = 1;
  std::size_t visited = 1;
  while (!stack.empty()) {
    const std::uint32_t u = stack.back();
    stack.pop_back();
    for (std::size_t k = adj_.row_ptr[u]; k < adj_.row_ptr[u + 1]; ++k) {
      const std::uint32_t v = adj_.col[k];
      if (!seen[v]) {
        seen[v] = 1;
        ++visited;
        stack.push_back(v);
      }
    }
  }
  return visited == n_;
}

std::vector<WeightedEdge> Graph::undirected_edges() const {
  std::vector<WeightedEdge> out;
  out.reserve(m_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t k = adj_.row_ptr[i]; k < adj_.row_ptr[i + 1]; ++k) {
      const std::uint32_t j = adj_.col[k];
      if (j > i)
        out.push_back({static_cast<std::uint32_t>(i), j, adj_.val[k]});
    }
  return out;
}

Graph add_self_loops(const Graph& g) {
  if (g.self_loops_)
    throw std::logic_error(
        "add_self_loops applied twice; the provenance flag forbids "
        "re-application");
  Graph out;
  out.n_ = g.n_;
  out.m_ = g.m_;
  out.self_loops_ = true;
  out.id_ = next_graph_id();
  out.adj_.n = g.n_;
  out.adj_.row_ptr.assign(g.n_ + 1, 0);
  for (std::size_t i = 0; i < g.n_; ++i)
    out.adj_.row_ptr[i + 1] =
        out.adj_.row_ptr[i] + (g.adj_.row_ptr[i + 1] - g.adj_.row_ptr[i]) + 1;
  out.adj_.col.resize(g.adj_.nnz() + g.n_);
  out.adj_.val.resize(g.adj_.nnz() + g.n_);
  for (std::size_t i = 0; i < g.n_; ++i) {
    std::size_t w = out.adj_.row_ptr[i];
    bool placed = false;
    for (std::size_t k = g.adj_.row_ptr[i]; k < g.adj_.row_ptr[i + 1]; ++k) {
      if (!placed && g.adj_.col[k] > i) {
        out.adj_.col[w] = static_cast<std::uint32_t>(i);
        out.adj_.val[w++] = 1.0;
        placed = true;
      }
      out.adj_.col[w] = g.adj_.col[k];
      out.adj_.val[w++] = g.adj_.val[k];
    }
    if (!placed) {
      out.adj_.col[w] = static_cast<std::uint32_t>(i);
      out.adj_.val[w++] = 1.0;
    }
  }
  out.degrees_.resize(g.n_);
  for (std::size_t i = 0; i < g.n_; ++i) out.degrees_[i] = g.degrees_[i] + 1.0;
  return out;
}

NormalizedAdjacency normalize_adjacency(const Graph& g, double r) {
  if (r < 0.0 || r > 1.0)
    throw std::invalid_argument("normalization exponent r must be in [0,1], "
                                "got " + std::to_string(r));
  if (!g.has_self_loops())
    throw std::invalid_argument(
        "normalize_adjacency requires a self-looped graph (a zero-degree "
        "node would divide by zero)");
  const std::size_t n = g.num_nodes();
  std::vector<double> pow_row(n), pow_col(n);
  for (std::size_t i = 0; i < n; ++i) {
    pow_row[i] = std::pow(g.degrees()[i], r - 1.0);
    pow_col[i] = std::pow(g.degrees()[i], -r);
  }
  NormalizedAdjacency out;
  out.mat_ = g.adjacency();
  out.val_t_.resize(out.mat_.nnz());
  out.r_ = r;
  out.source_id_ = g.id();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = out.mat_.row_ptr[i]; k < out.mat_.row_ptr[i + 1];
         ++k) {
      const std::size_t j = out.mat_.col[k];
      const double w = g.adjacency().val[k];
      out.mat_.val[k] = (pow_row[i] * pow_col[j]) * w;
      out.val_t_[k] = (pow_row[j] * pow_col[i]) * w;
    }
  return out;
}

Tensor stationary_limit(const Graph& g, double r) {
  if (!g.has_self_loops())
    throw std::invalid_argument("stationary_limit requires a self-looped graph");
  if (!g.is_connected())
    throw std::invalid_argument(
        "stationary_limit requires a connected graph; the limit holds only "
        "per connected component");
  const std::size_t n = g.num_nodes();
  double mass = 0.0;
  for (double d : g.degrees()) mass += d;
  std::vector<double> pr(n), pc(n);
  for (std::size_t i = 0; i < n; ++i) {
    pr[i] = std::pow(g.degrees()[i], r);
    pc[i] = std::pow(g.degrees()[i], 1.0 - r);
  }
  Tensor out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = pr[i] * pc[j] / mass;
  return out;
}

Tensor stationary_representation(const Graph& g, const Tensor& features,
                                 double r) {
  if (features.rows() != g.num_nodes())
    throw std::invalid_argument("stationary_representation: feature rows " +
                                std::to_string(features.rows()) +
                                " vs graph nodes " +
                                std::to_string(g.num_nodes()));
  if (!g.has_self_loops())
    throw std::invalid_argument(
        "stationary_representation requires a self-looped graph");
  if (!g.is_connected())
    throw std::invalid_argument(
        "stationary_representation requires a connected graph");
  const std::size_t n = g.num_nodes(), d = features.cols();
  double mass = 0.0;
  for (double deg : g.degrees()) mass += deg;
  // limit = (pr * pc^T) / mass, so limit * X = pr * (pc^T X) / mass.
  std::vector<double> proj(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double pc = std::pow(g.degrees()[i], 1.0 - r);
    for (std::size_t j = 0; j < d; ++j) proj[j] += pc * features.at(i, j);
  }
  Tensor out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double pr = std::pow(g.degrees()[i], r) / mass;
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = pr * proj[j];
  }
  return out;
}

Tensor to_dense(const NormalizedAdjacency& adj) {
  const auto& m = adj.matrix();
  Tensor out(m.n, m.n);
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k)
      out.at(i, m.col[k]) = m.val[k];
  return out;
}

}  // namespace gnnkit
