#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "gnnkit/dataio.hpp"
#include "oracles.hpp"

using namespace gnnkit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("gnnkit_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

bool datasets_equal(const Dataset& a, const Dataset& b) {
  if (a.num_nodes() != b.num_nodes()) return false;
  if (a.class_count != b.class_count) return false;
  if (a.labels != b.labels) return false;
  if (a.train_mask != b.train_mask || a.val_mask != b.val_mask ||
      a.test_mask != b.test_mask)
    return false;
  if (a.features.cols() != b.features.cols()) return false;
  for (std::size_t i = 0; i < a.features.size(); ++i)
    if (a.features.data()[i] != b.features.data()[i]) return false;
  auto ea = a.graph.undirected_edges(), eb = b.graph.undirected_edges();
  if (ea.size() != eb.size()) return false;
  for (std::size_t i = 0; i < ea.size(); ++i)
    if (ea[i].u != eb[i].u || ea[i].v != eb[i].v || ea[i].w != eb[i].w)
      return false;
  return true;
}

}  // namespace

TEST_CASE("citation plaintext loader") {
  TempDir dir;
  SUBCASE("toy files parse with inferred dimensionality") {
    write_file(dir.path / "toy.content",
               "n1\t1\t0\t0\tml\n"
               "n2\t0\t1\t0\tdb\n"
               "n3\t0\t0\t1\tml\n");
    write_file(dir.path / "toy.cites", "n1\tn2\nn2\tn3\n");
    Dataset ds = load_citation_plaintext((dir.path / "toy.content").string(),
                                         (dir.path / "toy.cites").string());
    CHECK(ds.num_nodes() == 3);
    CHECK(ds.graph.num_edges() == 2);
    CHECK(ds.feature_dim() == 3);
    CHECK(ds.class_count == 2);
    // Classes map alphabetically: db=0, ml=1.
    CHECK(ds.labels[0] == 1);
    CHECK(ds.labels[1] == 0);
    CHECK(ds.name == "toy");
  }
  SUBCASE("reversed duplicates count once, dangling and self refs drop") {
    write_file(dir.path / "d.content",
               "a\t1\tx\n"
               "b\t0\tx\n");
    write_file(dir.path / "d.cites",
               "a\tb\n"
               "b\ta\n"
               "a\tmissing\n"
               "a\ta\n");
    Dataset ds = load_citation_plaintext((dir.path / "d.content").string(),
                                         (dir.path / "d.cites").string());
    CHECK(ds.graph.num_edges() == 1);
  }
  SUBCASE("malformed lines report their position") {
    write_file(dir.path / "bad.content", "a\t1\tx\nb\n");
    write_file(dir.path / "bad.cites", "");
    CHECK_THROWS_WITH_AS(
        load_citation_plaintext((dir.path / "bad.content").string(),
                                (dir.path / "bad.cites").string()),
        doctest::Contains(":2"), std::runtime_error);
  }
  SUBCASE("inconsistent feature arity is an error") {
    write_file(dir.path / "ar.content", "a\t1\t2\tx\nb\t1\ty\n");
    write_file(dir.path / "ar.cites", "");
    CHECK_THROWS_AS(
        load_citation_plaintext((dir.path / "ar.content").string(),
                                (dir.path / "ar.cites").string()),
        std::runtime_error);
  }
}

TEST_CASE("canonical format round trip") {
  TempDir dir;
  SUBCASE("save then load is exact") {
    Dataset ds = synth_sbm(10, 2, 0.8, 0.2, 4, 1.0, 7);
    save_canonical(ds, (dir.path / "ds").string());
    Dataset back = load_canonical((dir.path / "ds").string());
    CHECK(datasets_equal(ds, back));
    CHECK(ds.content_hash() == back.content_hash());
  }
  SUBCASE("nodes omitted from split.tsv get no mask") {
    write_file(dir.path / "edges.tsv", "0\t1\n");
    write_file(dir.path / "features.tsv", "1.0\n2.0\n3.0\n");
    write_file(dir.path / "labels.tsv", "0\n1\n0\n");
    write_file(dir.path / "split.tsv", "0\ttrain\n2\ttest\n");
    Dataset ds = load_canonical(dir.path.string());
    CHECK(ds.train_mask[0] == 1);
    CHECK(ds.val_mask[1] == 0);
    CHECK(ds.train_mask[1] == 0);
    CHECK(ds.test_mask[1] == 0);
    CHECK(ds.test_mask[2] == 1);
  }
  SUBCASE("raw self loops in edges.tsv are rejected") {
    write_file(dir.path / "edges.tsv", "1\t1\n");
    write_file(dir.path / "features.tsv", "1.0\n2.0\n");
    write_file(dir.path / "labels.tsv", "0\n0\n");
    write_file(dir.path / "split.tsv", "0\ttrain\n");
    CHECK_THROWS_AS(load_canonical(dir.path.string()), std::invalid_argument);
  }
  SUBCASE("missing files are reported") {
    CHECK_THROWS_WITH_AS(load_canonical((dir.path / "nope").string()),
                         doctest::Contains("edges.tsv"), std::runtime_error);
  }
  SUBCASE("double split assignment is a mask overlap") {
    write_file(dir.path / "edges.tsv", "0\t1\n");
    write_file(dir.path / "features.tsv", "1.0\n2.0\n");
    write_file(dir.path / "labels.tsv", "0\n0\n");
    write_file(dir.path / "split.tsv", "0\ttrain\n0\tval\n");
    CHECK_THROWS_WITH_AS(load_canonical(dir.path.string()),
                         doctest::Contains("overlap"), std::runtime_error);
  }
}

TEST_CASE("make_split") {
  Dataset ds = synth_sbm(700, 7, 0.05, 0.005, 8, 1.0, 3);
  SUBCASE("requested sizes are honored") {
    Dataset split = make_split(ds, 20, 200, 300, 11);
    CHECK(split.mask_count(split.train_mask) == 140);
    CHECK(split.mask_count(split.val_mask) == 200);
    CHECK(split.mask_count(split.test_mask) == 300);
    split.validate();
  }
  SUBCASE("one per class trains class_count nodes") {
    Dataset split = make_split(ds, 1, 10, 10, 11);
    CHECK(split.mask_count(split.train_mask) ==
          static_cast<std::size_t>(ds.class_count));
  }
  SUBCASE("identical seeds give identical masks") {
    Dataset a = make_split(ds, 5, 100, 100, 42);
    Dataset b = make_split(ds, 5, 100, 100, 42);
    CHECK(a.train_mask == b.train_mask);
    CHECK(a.val_mask == b.val_mask);
    CHECK(a.test_mask == b.test_mask);
  }
  SUBCASE("impossible requests are rejected") {
    CHECK_THROWS_AS(make_split(ds, 200, 10, 10, 1), std::runtime_error);
    CHECK_THROWS_AS(make_split(ds, 1, 700, 700, 1), std::runtime_error);
  }
}

TEST_CASE("synth_sbm") {
  SUBCASE("cliques plus connecting path when p_out is zero") {
    Dataset ds = synth_sbm(10, 2, 1.0, 0.0, 4, 1.0, 5);
    CHECK(ds.graph.is_connected());
    CHECK(ds.connectivity_path_added);
    // Two 5-cliques contribute 2 * C(5,2) = 20 edges; the path adds at most 9.
    CHECK(ds.graph.num_edges() >= 20);
    CHECK(ds.graph.num_edges() <= 29);
  }
  SUBCASE("intra-block edge count matches binomial statistics") {
    const std::size_t n = 60;
    const int classes = 2;
    const double p_in = 0.3, p_out = 0.1;
    // Round-robin labels: 30 per class, C(30,2) pairs each.
    const double pairs = 2.0 * (30.0 * 29.0 / 2.0);
    const double mean = p_in * pairs;
    const double sigma = std::sqrt(pairs * p_in * (1 - p_in));
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Dataset ds = synth_sbm(n, classes, p_in, p_out, 3, 0.0, 1000 + seed);
      // This regime is connected, so no spanning path skews the count.
      REQUIRE_FALSE(ds.connectivity_path_added);
      std::size_t intra = 0;
      for (const auto& e : ds.graph.undirected_edges())
        if (ds.labels[e.u] == ds.labels[e.v]) ++intra;
      total += static_cast<double>(intra);
    }
    const double avg = total / 20.0;
    CHECK(std::abs(avg - mean) <= 3.0 * sigma / std::sqrt(20.0));
  }
  SUBCASE("identical seeds reproduce the dataset") {
    Dataset a = synth_sbm(40, 3, 0.3, 0.05, 6, 1.0, 9);
    Dataset b = synth_sbm(40, 3, 0.3, 0.05, 6, 1.0, 9);
    CHECK(a.content_hash() == b.content_hash());
  }
  SUBCASE("invalid probabilities are rejected") {
    CHECK_THROWS_AS(synth_sbm(10, 2, 0.1, 0.5, 3, 1.0, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(synth_sbm(10, 2, 1.5, 0.5, 3, 1.0, 1),
                    std::invalid_argument);
  }
}

TEST_CASE("perturb_edges") {
  // Deterministic graph with exactly 1000 edges.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (std::uint32_t i = 0; i < 200 && edges.size() < 1000; ++i)
    for (std::uint32_t j = i + 1; j < 200 && edges.size() < 1000; ++j)
      edges.push_back({i, j});
  Dataset ds;
  ds.graph = Graph::from_undirected_edges(200, edges);
  ds.features = Tensor(200, 2);
  ds.labels.assign(200, 0);
  ds.class_count = 1;
  ds.train_mask.assign(200, 0);
  ds.val_mask.assign(200, 0);
  ds.test_mask.assign(200, 0);

  SUBCASE("keep_rate one preserves the graph") {
    Dataset out = perturb_edges(ds, 1.0, 3);
    CHECK(out.content_hash() == ds.content_hash());
  }
  SUBCASE("keep_rate one half lands within the 3-sigma band") {
    Dataset out = perturb_edges(ds, 0.5, 3);
    CHECK(out.graph.num_edges() >= 400);
    CHECK(out.graph.num_edges() <= 600);
  }
  SUBCASE("identical seeds keep identical edge sets") {
    Dataset a = perturb_edges(ds, 0.7, 17);
    Dataset b = perturb_edges(ds, 0.7, 17);
    CHECK(a.content_hash() == b.content_hash());
  }
  SUBCASE("invalid rates are rejected") {
    CHECK_THROWS_AS(perturb_edges(ds, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(perturb_edges(ds, 1.1, 1), std::invalid_argument);
  }
}

TEST_CASE("perturb_features") {
  Dataset ds = synth_sbm(50, 2, 0.3, 0.1, 5, 1.0, 13);
  SUBCASE("keep_rate one is the identity") {
    Dataset out = perturb_features(ds, 1.0, 5);
    CHECK(out.content_hash() == ds.content_hash());
  }
  SUBCASE("dropped nodes are fully zeroed; seeds reproduce") {
    Dataset a = perturb_features(ds, 0.5, 5);
    Dataset b = perturb_features(ds, 0.5, 5);
    CHECK(a.content_hash() == b.content_hash());
    std::size_t zeroed = 0;
    for (std::size_t i = 0; i < a.num_nodes(); ++i) {
      bool all_zero = true;
      for (std::size_t j = 0; j < a.feature_dim(); ++j)
        if (a.features.at(i, j) != 0.0) all_zero = false;
      if (all_zero) ++zeroed;
    }
    CHECK(zeroed > 5);
    CHECK(zeroed < 45);
  }
}

TEST_CASE("subsample_labels") {
  Dataset ds = synth_sbm(300, 3, 0.1, 0.01, 8, 1.0, 21);
  const std::size_t before = ds.mask_count(ds.train_mask);
  REQUIRE(before >= 6);
  SUBCASE("one per class remains") {
    Dataset out = subsample_labels(ds, 1, 2);
    CHECK(out.mask_count(out.train_mask) == 3);
    // Subset of the original train mask, val/test untouched.
    for (std::size_t i = 0; i < ds.num_nodes(); ++i) {
      if (out.train_mask[i]) CHECK(ds.train_mask[i] == 1);
    }
    CHECK(out.val_mask == ds.val_mask);
    CHECK(out.test_mask == ds.test_mask);
  }
  SUBCASE("identical seeds agree") {
    Dataset a = subsample_labels(ds, 2, 9);
    Dataset b = subsample_labels(ds, 2, 9);
    CHECK(a.train_mask == b.train_mask);
  }
  SUBCASE("class without train nodes errors") {
    Dataset empty = ds;
    empty.train_mask.assign(ds.num_nodes(), 0);
    CHECK_THROWS_AS(subsample_labels(empty, 1, 1), std::runtime_error);
  }
}

TEST_CASE("row_normalize") {
  Dataset ds;
  ds.graph = Graph::from_undirected_edges(
      3, std::vector<std::pair<std::uint32_t, std::uint32_t>>{{0, 1}, {1, 2}});
  ds.features = Tensor::from_rows({{2.0, 2.0}, {0.0, 0.0}, {-3.0, 1.0}});
  ds.labels = {0, 0, 0};
  ds.class_count = 1;
  ds.train_mask.assign(3, 0);
  ds.val_mask.assign(3, 0);
  ds.test_mask.assign(3, 0);
  Dataset out = row_normalize(ds);
  CHECK(out.features.at(0, 0) == doctest::Approx(0.5));
  CHECK(out.features.at(1, 0) == 0.0);  // zero rows stay zero
  CHECK(out.features.at(2, 0) == doctest::Approx(-0.75));
  CHECK(out.features.at(2, 1) == doctest::Approx(0.25));
}

TEST_CASE("content hash tracks content") {
  Dataset a = synth_sbm(30, 2, 0.4, 0.1, 4, 1.0, 8);
  Dataset b = a;
  b.features = a.features.clone();
  b.features.at(0, 0) += 1.0;
  CHECK(a.content_hash() != b.content_hash());
}
