#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gnnkit/graph.hpp"
#include "gnnkit/tensor.hpp"

// Dataset loading, synthetic generation, split construction and sparsity
// perturbation.  Datasets carry the raw graph (self loops are added by the
// training pipeline, never stored here) and are immutable once built.

namespace gnnkit {

struct Dataset {
  Graph graph;
  Tensor features;                   // N x d
  std::vector<std::int32_t> labels;  // length N, values in [0, class_count)
  std::vector<std::uint8_t> train_mask, val_mask, test_mask;
  std::int32_t class_count = 0;
  std::string name;
  // Set when the generator had to add a spanning path to connect the sample.
  bool connectivity_path_added = false;

  std::size_t num_nodes() const { return graph.num_nodes(); }
  std::size_t feature_dim() const { return features.cols(); }
  std::size_t mask_count(const std::vector<std::uint8_t>& m) const;

  void validate() const;
  std::uint64_t content_hash() const;
};

// Plain-text citation format: one content line per node
// ("<id> <tok_1> ... <tok_d> <class>", whitespace separated) plus one cite
// line per directed reference ("<id> <id>").  String ids map to dense indices
// in first-appearance order; class tokens map alphabetically.  Edges are
// deduplicated and symmetrized; references to unknown ids and raw
// self-citations are dropped with a counted warning.  No split is assigned.
Dataset load_citation_plaintext(const std::string& content_path,
                                const std::string& cites_path);

// Canonical directory format: edges.tsv (u TAB v, 0-based), features.tsv
// (one row of reals per node), labels.tsv (one integer per node), split.tsv
// (node TAB train|val|test|none).  save followed by load is exact.
Dataset load_canonical(const std::string& dir);
void save_canonical(const Dataset& ds, const std::string& dir);

// Seeded split: per_class_train nodes per class, then val_count and
// test_count from the remainder, all drawn from one shuffled node order.
Dataset make_split(const Dataset& ds, int per_class_train, int val_count,
                   int test_count, std::uint64_t seed);

// Stochastic block model with class-informative Gaussian features
// (per-class mean * signal_strength + unit noise).  Disconnected samples are
// joined by a spanning path over a seeded node order and flagged.
Dataset synth_sbm(std::size_t n, int classes, double p_in, double p_out,
                  std::size_t feat_dim, double signal_strength,
                  std::uint64_t seed);

// Each undirected edge is kept independently with probability keep_rate.
Dataset perturb_edges(const Dataset& ds, double keep_rate, std::uint64_t seed);
// Each node's feature row is kept or zeroed with probability keep_rate.
Dataset perturb_features(const Dataset& ds, double keep_rate,
                         std::uint64_t seed);
// Shrinks the train mask to per_class seeded picks per class.
Dataset subsample_labels(const Dataset& ds, int per_class, std::uint64_t seed);

// L1-normalizes every nonzero feature row.
Dataset row_normalize(const Dataset& ds);

}  // namespace gnnkit
