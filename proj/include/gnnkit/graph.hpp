#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

// Immutable sparse graph representation.  Graphs are built once from an
// undirected edge list, optionally augmented with self loops, and then
// shared freely across threads.

namespace gnnkit {

struct CsrMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;  // n + 1 entries
  std::vector<std::uint32_t> col;    // sorted within each row
  std::vector<double> val;
  std::size_t nnz() const { return col.size(); }
};

struct WeightedEdge {
  std::uint32_t u = 0;
  std::uint32_t v = 0;
  double w = 1.0;
};

class Graph {
 public:
  Graph() = default;

  // Builds a symmetric graph from undirected edges.  Edges are normalized to
  // (min,max) pairs; duplicates (either orientation) are merged by weight
  // accumulation with a warning.  Raw self loops are rejected.
  static Graph from_undirected_edges(std::size_t num_nodes,
                                     std::span<const WeightedEdge> edges);
  static Graph from_undirected_edges(
      std::size_t num_nodes,
      std::span<const std::pair<std::uint32_t, std::uint32_t>> edges);

  std::size_t num_nodes() const { return n_; }
  // Unique undirected edges, self loops excluded.
  std::size_t num_edges() const { return m_; }
  const CsrMatrix& adjacency() const { return adj_; }
  const std::vector<double>& degrees() const { return degrees_; }
  bool has_self_loops() const { return self_loops_; }
  std::uint64_t id() const { return id_; }

  bool is_connected() const;

  // Unique undirected edges as (u < v, weight), self loops excluded.
  std::vector<WeightedEdge> undirected_edges() const;

 private:
  friend Graph add_self_loops(const Graph& g);

  std::size_t n_ = 0;
  std::size_t m_ = 0;
  CsrMatrix adj_;
  std::vector<double> degrees_;
  bool self_loops_ = false;
  std::uint64_t id_ = 0;
};

// Returns a copy with the identity added to the adjacency.  Applying twice is
// an error; the provenance flag records the augmentation.
Graph add_self_loops(const Graph& g);

// Degree-normalized operator  D^(r-1) * A * D^(-r)  over a self-looped graph.
class NormalizedAdjacency {
 public:
  NormalizedAdjacency() = default;

  std::size_t num_nodes() const { return mat_.n; }
  double exponent() const { return r_; }
  std::uint64_t source_graph_id() const { return source_id_; }
  const CsrMatrix& matrix() const { return mat_; }
  // Values of the transposed operator on the same (symmetric) pattern.
  const std::vector<double>& transposed_values() const { return val_t_; }

 private:
  friend NormalizedAdjacency normalize_adjacency(const Graph& g, double r);

  CsrMatrix mat_;
  std::vector<double> val_t_;
  double r_ = 0.5;
  std::uint64_t source_id_ = 0;
};

// Requires 0 <= r <= 1 and self-loop provenance (a zero-degree node would
// otherwise divide by zero).  At r = 0.5 the result is symmetric entry for
// entry: values are formed as (scale_i * scale_j) * w so the two orientations
// round identically.
NormalizedAdjacency normalize_adjacency(const Graph& g, double r);

}  // namespace gnnkit
