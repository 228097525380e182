#include "gnnkit/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace gnnkit {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(std::move(tok));
  return out;
}

double parse_real(const std::string& tok, const std::string& where) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": cannot parse '" + tok + "' as a real");
  }
  if (pos != tok.size())
    throw std::runtime_error(where + ": trailing characters in '" + tok + "'");
  return v;
}

long parse_int(const std::string& tok, const std::string& where) {
  std::size_t pos = 0;
  long v;
  try {
    v = std::stol(tok, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error(where + ": cannot parse '" + tok +
                             "' as an integer");
  }
  if (pos != tok.size())
    throw std::runtime_error(where + ": trailing characters in '" + tok + "'");
  return v;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ull;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 round over seed ^ salt
  std::uint64_t z = (seed ^ salt) + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

std::size_t Dataset::mask_count(const std::vector<std::uint8_t>& m) const {
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), 1));
}

void Dataset::validate() const {
  const std::size_t n = graph.num_nodes();
  if (features.rows() != n)
    throw std::runtime_error("dataset " + name + ": " +
                             std::to_string(features.rows()) +
                             " feature rows for " + std::to_string(n) +
                             " nodes");
  if (labels.size() != n)
    throw std::runtime_error("dataset " + name + ": label count mismatch");
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] < 0 || labels[i] >= class_count)
      throw std::runtime_error("dataset " + name + ": label " +
                               std::to_string(labels[i]) + " at node " +
                               std::to_string(i) + " outside [0," +
                               std::to_string(class_count) + ")");
  for (const auto* m : {&train_mask, &val_mask, &test_mask})
    if (m->size() != n)
      throw std::runtime_error("dataset " + name + ": mask length mismatch");
  for (std::size_t i = 0; i < n; ++i)
    if (train_mask[i] + val_mask[i] + test_mask[i] > 1)
      throw std::runtime_error("dataset " + name + ": node " +
                               std::to_string(i) + " in multiple masks");
}

std::uint64_t Dataset::content_hash() const {
  Fnv1a f;
  f.u64(graph.num_nodes());
  f.u64(graph.num_edges());
  for (const auto& e : graph.undirected_edges()) {
    f.u64(e.u);
    f.u64(e.v);
    f.f64(e.w);
  }
  f.u64(features.rows());
  f.u64(features.cols());
  for (std::size_t i = 0; i < features.size(); ++i) f.f64(features.data()[i]);
  for (auto l : labels) f.u64(static_cast<std::uint64_t>(l));
  for (const auto* m : {&train_mask, &val_mask, &test_mask})
    f.bytes(m->data(), m->size());
  f.u64(static_cast<std::uint64_t>(class_count));
  return f.h;
}

Dataset load_citation_plaintext(const std::string& content_path,
                                const std::string& cites_path) {
  std::ifstream content = open_or_throw(content_path);
  std::map<std::string, std::uint32_t> id_of;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> class_tokens;
  std::set<std::string> class_set;
  std::string line;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  while (std::getline(content, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto toks = split_ws(line);
    const std::string where = content_path + ":" + std::to_string(lineno);
    if (toks.size() < 3)
      throw std::runtime_error(where + ": expected id, features, class");
    if (dim == 0) dim = toks.size() - 2;
    if (toks.size() - 2 != dim)
      throw std::runtime_error(where + ": " + std::to_string(toks.size() - 2) +
                               " feature tokens, expected " +
                               std::to_string(dim));
    auto [it, inserted] =
        id_of.emplace(toks.front(), static_cast<std::uint32_t>(rows.size()));
    if (!inserted)
      throw std::runtime_error(where + ": duplicate node id '" + toks.front() +
                               "'");
    (void)it;
    std::vector<double> feat(dim);
    for (std::size_t k = 0; k < dim; ++k)
      feat[k] = parse_real(toks[k + 1], where);
    rows.push_back(std::move(feat));
    class_tokens.push_back(toks.back());
    class_set.insert(toks.back());
  }
  if (rows.empty())
    throw std::runtime_error(content_path + ": no content lines");

  std::map<std::string, std::int32_t> class_of;  // alphabetical order
  for (const auto& c : class_set)
    class_of.emplace(c, static_cast<std::int32_t>(class_of.size()));

  const std::size_t n = rows.size();
  Dataset ds;
  ds.features = Tensor(n, dim);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(rows[i].begin(), rows[i].end(), ds.features.data() + i * dim);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = class_of.at(class_tokens[i]);
  ds.class_count = static_cast<std::int32_t>(class_of.size());

  std::ifstream cites = open_or_throw(cites_path);
  std::set<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::size_t dangling = 0, self_refs = 0;
  lineno = 0;
  while (std::getline(cites, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto toks = split_ws(line);
    if (toks.size() != 2)
      throw std::runtime_error(cites_path + ":" + std::to_string(lineno) +
                               ": expected two node ids");
    const auto a = id_of.find(toks[0]);
    const auto b = id_of.find(toks[1]);
    if (a == id_of.end() || b == id_of.end()) {
      ++dangling;
      continue;
    }
    if (a->second == b->second) {
      ++self_refs;
      continue;
    }
    edges.insert(std::minmax(a->second, b->second));
  }
  if (dangling > 0)
    std::cerr << "[gnnkit] warning: dropped " << dangling
              << " reference(s) to unknown ids in " << cites_path << "\n";
  if (self_refs > 0)
    std::cerr << "[gnnkit] warning: dropped " << self_refs
              << " self-reference(s) in " << cites_path << "\n";

  std::vector<std::pair<std::uint32_t, std::uint32_t>> edge_list(edges.begin(),
                                                                 edges.end());
  ds.graph = Graph::from_undirected_edges(n, edge_list);
  ds.train_mask.assign(n, 0);
  ds.val_mask.assign(n, 0);
  ds.test_mask.assign(n, 0);
  ds.name = fs::path(content_path).stem().string();
  ds.validate();
  return ds;
}

Dataset load_canonical(const std::string& dir) {
  const fs::path base(dir);
  for (const char* f : {"edges.tsv", "features.tsv", "labels.tsv", "split.tsv"})
    if (!fs::exists(base / f))
      throw std::runtime_error("canonical dataset " + dir + " is missing " +
                               std::string(f));

  Dataset ds;
  // features first: they define N.
  {
    std::ifstream in = open_or_throw((base / "features.tsv").string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0, dim = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto toks = split_ws(line);
      if (dim == 0) dim = toks.size();
      if (toks.size() != dim)
        throw std::runtime_error("features.tsv:" + std::to_string(lineno) +
                                 ": inconsistent arity");
      std::vector<double> row(dim);
      for (std::size_t k = 0; k < dim; ++k)
        row[k] = parse_real(toks[k], "features.tsv:" + std::to_string(lineno));
      rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("features.tsv: empty");
    ds.features = Tensor(rows.size(), dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
      std::copy(rows[i].begin(), rows[i].end(), ds.features.data() + i * dim);
  }
  const std::size_t n = ds.features.rows();

  {
    std::ifstream in = open_or_throw((base / "labels.tsv").string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const long v = parse_int(line, "labels.tsv:" + std::to_string(lineno));
      ds.labels.push_back(static_cast<std::int32_t>(v));
    }
    if (ds.labels.size() != n)
      throw std::runtime_error("labels.tsv: " +
                               std::to_string(ds.labels.size()) +
                               " labels for " + std::to_string(n) + " nodes");
    const auto mx = std::max_element(ds.labels.begin(), ds.labels.end());
    ds.class_count = *mx + 1;
  }

  {
    std::ifstream in = open_or_throw((base / "edges.tsv").string());
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto toks = split_ws(line);
      if (toks.size() != 2)
        throw std::runtime_error("edges.tsv:" + std::to_string(lineno) +
                                 ": expected two endpoints");
      const long u = parse_int(toks[0], "edges.tsv:" + std::to_string(lineno));
      const long v = parse_int(toks[1], "edges.tsv:" + std::to_string(lineno));
      if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n ||
          static_cast<std::size_t>(v) >= n)
        throw std::runtime_error("edges.tsv:" + std::to_string(lineno) +
                                 ": endpoint out of range");
      edges.push_back({static_cast<std::uint32_t>(u),
                       static_cast<std::uint32_t>(v)});
    }
    ds.graph = Graph::from_undirected_edges(n, edges);
  }

  {
    std::ifstream in = open_or_throw((base / "split.tsv").string());
    ds.train_mask.assign(n, 0);
    ds.val_mask.assign(n, 0);
    ds.test_mask.assign(n, 0);
    std::vector<std::uint8_t> seen(n, 0);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto toks = split_ws(line);
      const std::string where = "split.tsv:" + std::to_string(lineno);
      if (toks.size() != 2)
        throw std::runtime_error(where + ": expected node and tag");
      const long node = parse_int(toks[0], where);
      if (node < 0 || static_cast<std::size_t>(node) >= n)
        throw std::runtime_error(where + ": node out of range");
      if (seen[node])
        throw std::runtime_error(where + ": node " + std::to_string(node) +
                                 " assigned twice (mask overlap)");
      seen[node] = 1;
      if (toks[1] == "train")
        ds.train_mask[node] = 1;
      else if (toks[1] == "val")
        ds.val_mask[node] = 1;
      else if (toks[1] == "test")
        ds.test_mask[node] = 1;
      else if (toks[1] != "none")
        throw std::runtime_error(where + ": unknown tag '" + toks[1] + "'");
    }
  }

  ds.name = base.filename().string();
  ds.validate();
  return ds;
}

void save_canonical(const Dataset& ds, const std::string& dir) {
  ds.validate();
  const fs::path base(dir);
  fs::create_directories(base);
  const std::size_t n = ds.num_nodes();

  {
    std::ofstream out(base / "edges.tsv");
    for (const auto& e : ds.graph.undirected_edges()) {
      if (e.w != 1.0)
        throw std::runtime_error(
            "canonical format stores unweighted edges; edge (" +
            std::to_string(e.u) + "," + std::to_string(e.v) + ") has weight " +
            std::to_string(e.w));
      out << e.u << "\t" << e.v << "\n";
    }
  }
  {
    std::ofstream out(base / "features.tsv");
    char buf[32];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < ds.features.cols(); ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", ds.features.at(i, j));
        out << (j ? "\t" : "") << buf;
      }
      out << "\n";
    }
  }
  {
    std::ofstream out(base / "labels.tsv");
    for (auto l : ds.labels) out << l << "\n";
  }
  {
    std::ofstream out(base / "split.tsv");
    for (std::size_t i = 0; i < n; ++i) {
      const char* tag = ds.train_mask[i]  ? "train"
                        : ds.val_mask[i]  ? "val"
                        : ds.test_mask[i] ? "test"
                                          : "none";
      out << i << "\t" << tag << "\n";
    }
  }
}

Dataset make_split(const Dataset& ds, int per_class_train, int val_count,
                   int test_count, std::uint64_t seed) {
  if (per_class_train < 1 || val_count < 0 || test_count < 0)
    throw std::invalid_argument("make_split: counts must be positive");
  const std::size_t n = ds.num_nodes();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  Dataset out = ds;
  out.train_mask.assign(n, 0);
  out.val_mask.assign(n, 0);
  out.test_mask.assign(n, 0);

  std::vector<int> needed(ds.class_count, per_class_train);
  std::size_t train_total = 0;
  for (auto node : order) {
    auto& left = needed[ds.labels[node]];
    if (left > 0) {
      out.train_mask[node] = 1;
      --left;
      ++train_total;
    }
  }
  if (train_total !=
      static_cast<std::size_t>(per_class_train) * ds.class_count)
    throw std::runtime_error(
        "make_split: insufficient nodes for " +
        std::to_string(per_class_train) + " train picks per class");

  int val_left = val_count, test_left = test_count;
  for (auto node : order) {
    if (out.train_mask[node]) continue;
    if (val_left > 0) {
      out.val_mask[node] = 1;
      --val_left;
    } else if (test_left > 0) {
      out.test_mask[node] = 1;
      --test_left;
    }
  }
  if (val_left > 0 || test_left > 0)
    throw std::runtime_error("make_split: insufficient nodes for val/test of " +
                             std::to_string(val_count) + "/" +
                             std::to_string(test_count));
  out.validate();
  return out;
}

Dataset synth_sbm(std::size_t n, int classes, double p_in, double p_out,
                  std::size_t feat_dim, double signal_strength,
                  std::uint64_t seed) {
  if (!(0.0 <= p_out && p_out <= p_in && p_in <= 1.0))
    throw std::invalid_argument("synth_sbm requires 0 <= p_out <= p_in <= 1");
  if (n < 2 || classes < 1 || feat_dim < 1)
    throw std::invalid_argument("synth_sbm: degenerate dimensions");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::int32_t> labels(n);
  for (std::size_t i = 0; i < n; ++i)
    labels[i] = static_cast<std::int32_t>(i % classes);

  Tensor means(classes, feat_dim);
  for (std::size_t i = 0; i < means.size(); ++i) means.data()[i] = normal(rng);

  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j) {
      const double p = labels[i] == labels[j] ? p_in : p_out;
      if (std::bernoulli_distribution(p)(rng)) edges.push_back({i, j});
    }

  Tensor features(n, feat_dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < feat_dim; ++k)
      features.at(i, k) =
          signal_strength * means.at(labels[i], k) + normal(rng);

  Dataset ds;
  ds.graph = Graph::from_undirected_edges(n, edges);
  if (!ds.graph.is_connected()) {
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::set<std::pair<std::uint32_t, std::uint32_t>> have;
    for (const auto& e : edges) have.insert(std::minmax(e.first, e.second));
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const auto key = std::minmax(order[k], order[k + 1]);
      if (!have.count(key)) edges.push_back(key);
    }
    ds.graph = Graph::from_undirected_edges(n, edges);
    ds.connectivity_path_added = true;
  }

  ds.features = features;
  ds.labels = labels;
  ds.class_count = classes;
  ds.name = "sbm_n" + std::to_string(n) + "_c" + std::to_string(classes);

  const int per_class = std::clamp<int>(
      static_cast<int>(std::lround(0.05 * static_cast<double>(n) / classes)),
      1, 20);
  const int val = static_cast<int>(std::min<std::size_t>(500, n / 4));
  const int test =
      static_cast<int>(n) - per_class * classes - val;
  ds.train_mask.assign(n, 0);
  ds.val_mask.assign(n, 0);
  ds.test_mask.assign(n, 0);
  Dataset split =
      make_split(ds, per_class, val, std::max(test, 0), derive_seed(seed, 0x5eed));
  split.name = ds.name;
  split.connectivity_path_added = ds.connectivity_path_added;
  return split;
}

Dataset perturb_edges(const Dataset& ds, double keep_rate, std::uint64_t seed) {
  if (!(keep_rate > 0.0 && keep_rate <= 1.0))
    throw std::invalid_argument("perturb_edges: keep_rate must be in (0,1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(keep_rate);
  std::vector<WeightedEdge> kept;
  for (const auto& e : ds.graph.undirected_edges())
    if (keep(rng)) kept.push_back(e);
  Dataset out = ds;
  out.graph = Graph::from_undirected_edges(ds.num_nodes(), kept);
  return out;
}

Dataset perturb_features(const Dataset& ds, double keep_rate,
                         std::uint64_t seed) {
  if (!(keep_rate > 0.0 && keep_rate <= 1.0))
    throw std::invalid_argument("perturb_features: keep_rate must be in (0,1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(keep_rate);
  Dataset out = ds;
  out.features = ds.features.clone();
  const std::size_t d = ds.feature_dim();
  for (std::size_t i = 0; i < ds.num_nodes(); ++i)
    if (!keep(rng))
      std::fill_n(out.features.data() + i * d, d, 0.0);
  return out;
}

Dataset subsample_labels(const Dataset& ds, int per_class, std::uint64_t seed) {
  if (per_class < 1)
    throw std::invalid_argument("subsample_labels: per_class must be >= 1");
  std::vector<std::vector<std::uint32_t>> by_class(ds.class_count);
  for (std::size_t i = 0; i < ds.num_nodes(); ++i)
    if (ds.train_mask[i])
      by_class[ds.labels[i]].push_back(static_cast<std::uint32_t>(i));
  std::mt19937_64 rng(seed);
  Dataset out = ds;
  out.train_mask.assign(ds.num_nodes(), 0);
  for (std::int32_t c = 0; c < ds.class_count; ++c) {
    auto& nodes = by_class[c];
    if (nodes.empty())
      throw std::runtime_error("subsample_labels: class " + std::to_string(c) +
                               " has no train nodes");
    std::shuffle(nodes.begin(), nodes.end(), rng);
    const std::size_t take =
        std::min<std::size_t>(nodes.size(), static_cast<std::size_t>(per_class));
    for (std::size_t k = 0; k < take; ++k) out.train_mask[nodes[k]] = 1;
  }
  return out;
}

Dataset row_normalize(const Dataset& ds) {
  Dataset out = ds;
  out.features = ds.features.clone();
  const std::size_t d = ds.feature_dim();
  for (std::size_t i = 0; i < ds.num_nodes(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += std::abs(out.features.at(i, j));
    if (s > 0.0)
      for (std::size_t j = 0; j < d; ++j) out.features.at(i, j) /= s;
  }
  return out;
}

}  // namespace gnnkit
