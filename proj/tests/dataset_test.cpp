#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "esage/esage.hpp"
#include "support.hpp"

using namespace esage;
using Catch::Approx;

namespace {

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

}  // namespace

TEST_CASE("load_dataset round-trips save_dataset exactly") {
  testsupport::TempDir dir("roundtrip");
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const Graph g = testsupport::random_graph(17, 4, 3, 0.2, seed);
    Splits s;
    s.train = {0, 1, 2};
    s.val = {3, 4};
    s.test = {5, 6, 7, 8};
    const auto sub = dir.path() / std::to_string(seed);
    save_dataset(sub, g, s);
    const auto [g2, s2] = load_dataset(sub);
    REQUIRE(g2.arcs == g.arcs);
    REQUIRE(g2.features == g.features);
    REQUIRE(g2.labels == g.labels);
    REQUIRE(g2.edge_of_arc == g.edge_of_arc);
    REQUIRE(s2 == s);
  }
}

TEST_CASE("load_dataset handles a single node without edges") {
  testsupport::TempDir dir("one");
  write_file(dir.path() / "nodes.tsv", "0\t0\t1,0\n");
  write_file(dir.path() / "edges.tsv", "");
  write_file(dir.path() / "splits.tsv", "0\ttrain\n");
  const auto [g, s] = load_dataset(dir.path());
  REQUIRE(g.num_nodes() == 1);
  REQUIRE(g.arcs.empty());
  REQUIRE(s.train == std::vector<NodeId>{0});
}

TEST_CASE("load_dataset reports file and line on errors") {
  testsupport::TempDir dir("err");
  write_file(dir.path() / "nodes.tsv", "0\t0\t1,0\n1\t0\t0,1\n2\t0\t1,1\n3\t0\t0,0\n");
  SECTION("self-loop") {
    write_file(dir.path() / "edges.tsv", "0\t1\n3\t3\n");
    try {
      load_dataset(dir.path());
      FAIL("expected a load error");
    } catch (const Error& e) {
      REQUIRE(std::string(e.what()).find("edges.tsv:2") != std::string::npos);
      REQUIRE(std::string(e.what()).find("self-loop") != std::string::npos);
    }
  }
  SECTION("missing file") {
    REQUIRE_THROWS_AS(load_dataset(dir.path() / "absent"), Error);
  }
  SECTION("inconsistent feature dimension") {
    write_file(dir.path() / "nodes.tsv", "0\t0\t1,0\n1\t0\t0,1,1\n");
    write_file(dir.path() / "edges.tsv", "");
    try {
      load_dataset(dir.path());
      FAIL("expected a load error");
    } catch (const Error& e) {
      REQUIRE(std::string(e.what()).find("nodes.tsv:2") != std::string::npos);
    }
  }
  SECTION("out-of-range edge id") {
    write_file(dir.path() / "edges.tsv", "0\t9\n");
    REQUIRE_THROWS_AS(load_dataset(dir.path()), Error);
  }
  SECTION("duplicate edge") {
    write_file(dir.path() / "edges.tsv", "0\t1\n0\t1\n");
    REQUIRE_THROWS_AS(load_dataset(dir.path()), Error);
  }
}

TEST_CASE("import_content_cites maps ids, normalizes rows and splits") {
  testsupport::TempDir dir("cc");
  write_file(dir.path() / "c.content",
             "p9\t1\t1\t0\tA\n"
             "p3\t0\t1\t0\tB\n"
             "p7\t1\t0\t1\tA\n");
  write_file(dir.path() / "c.cites",
             "p9\tp3\n"
             "p3\tp9\n"    // duplicate (reverse direction)
             "p9\tp9\n"    // self citation
             "p9\tp777\n"  // unknown id
             "p7\tp3\n");
  const ImportResult r =
      import_content_cites(dir.path() / "c.content", dir.path() / "c.cites");
  REQUIRE(r.graph.num_nodes() == 3);
  REQUIRE(r.graph.num_edges() == 2);
  REQUIRE(r.skipped_unknown == 1);
  REQUIRE(r.skipped_duplicate == 2);
  // L1 normalization: (1,1,0) -> (0.5,0.5,0)
  REQUIRE(r.graph.features(0, 0) == Approx(0.5));
  REQUIRE(r.graph.features(0, 1) == Approx(0.5));
  REQUIRE(r.graph.features(0, 2) == 0.0);
  // labels in lexicographic order: A=0, B=1
  REQUIRE(r.graph.labels == std::vector<int>{0, 1, 0});
  REQUIRE(r.graph.num_classes == 2);
  // every node is in exactly one split
  REQUIRE(r.splits.train.size() + r.splits.val.size() + r.splits.test.size() == 3);
}

TEST_CASE("import_content_cites single node with empty cites") {
  testsupport::TempDir dir("cc1");
  write_file(dir.path() / "c.content", "n1\t1\t0\tX\n");
  write_file(dir.path() / "c.cites", "");
  const ImportResult r =
      import_content_cites(dir.path() / "c.content", dir.path() / "c.cites");
  REQUIRE(r.graph.num_nodes() == 1);
  REQUIRE(r.graph.num_edges() == 0);
  REQUIRE(r.splits.train == std::vector<NodeId>{0});
}

TEST_CASE("import_content_cites rejects malformed rows") {
  testsupport::TempDir dir("ccbad");
  write_file(dir.path() / "c.content", "p1\t1\n");
  write_file(dir.path() / "c.cites", "");
  REQUIRE_THROWS_AS(
      import_content_cites(dir.path() / "c.content", dir.path() / "c.cites"), Error);
}

TEST_CASE("generate_planted_partition extremes make disjoint cliques") {
  const auto [g, s] = generate_planted_partition(20, 2, 1.0, 0.0, 4, 0.0, 1);
  REQUIRE(g.num_nodes() == 20);
  // two 10-cliques: 2 * C(10,2) = 90 edges
  REQUIRE(g.num_edges() == 90);
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    auto [u, v] = g.edge_endpoints(e);
    REQUIRE(u % 2 == v % 2);
  }
  validate_splits(s, g.num_nodes());
  REQUIRE(s.train.size() == 12);
  REQUIRE(s.val.size() == 4);
  REQUIRE(s.test.size() == 4);
}

TEST_CASE("generate_planted_partition hits the expected average degree") {
  // p_in/p_out chosen from the expected-degree identity so the mean degree
  // is 10; the generated mean must land within +-1 over three seeds.
  const std::size_t n = 20000;
  const int classes = 7;
  const double per_class = static_cast<double>(n) / classes;
  const double target = 10.0, homophily = 0.8;
  const double p_in = homophily * target / (per_class - 1.0);
  const double p_out = (1.0 - homophily) * target / (n - per_class);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto [g, s] = generate_planted_partition(n, classes, p_in, p_out, 8, 0.3, seed);
    const double avg = 2.0 * static_cast<double>(g.num_edges()) / n;
    REQUIRE(avg == Approx(target).margin(1.0));
  }
}

TEST_CASE("generate_planted_partition is a pure function of its arguments") {
  const auto [g1, s1] = generate_planted_partition(200, 3, 0.1, 0.01, 5, 0.2, 42);
  const auto [g2, s2] = generate_planted_partition(200, 3, 0.1, 0.01, 5, 0.2, 42);
  REQUIRE(g1 == g2);
  REQUIRE(s1 == s2);
  testsupport::TempDir dir("pp");
  save_dataset(dir.path() / "a", g1, s1);
  save_dataset(dir.path() / "b", g2, s2);
  REQUIRE(testsupport::slurp(dir.path() / "a" / "nodes.tsv") ==
          testsupport::slurp(dir.path() / "b" / "nodes.tsv"));
  REQUIRE(testsupport::slurp(dir.path() / "a" / "edges.tsv") ==
          testsupport::slurp(dir.path() / "b" / "edges.tsv"));
}

TEST_CASE("generate_planted_partition validates parameters") {
  REQUIRE_THROWS_AS(generate_planted_partition(10, 2, 0.5, 0.5, 4, 0.1, 1), Error);
  REQUIRE_THROWS_AS(generate_planted_partition(10, 2, 1.2, 0.1, 4, 0.1, 1), Error);
  REQUIRE_THROWS_AS(generate_planted_partition(1, 2, 0.5, 0.1, 4, 0.1, 1), Error);
}

TEST_CASE("citation corpus imports with the requested shape") {
  testsupport::TempDir dir("corpus");
  CorpusParams p;
  p.nodes = 300;
  p.classes = 4;
  p.vocab = 120;
  p.edges = 500;
  p.seed = 5;
  make_citation_corpus(dir.path() / "x.content", dir.path() / "x.cites", p);
  const ImportResult r =
      import_content_cites(dir.path() / "x.content", dir.path() / "x.cites");
  REQUIRE(r.graph.num_nodes() == 300);
  REQUIRE(r.graph.num_edges() == 500);
  REQUIRE(r.graph.num_classes == 4);
  REQUIRE(r.graph.feat_dim() == 120);
  REQUIRE(r.skipped_unknown == 0);
  REQUIRE(r.skipped_duplicate == 0);
  // deterministic regeneration
  make_citation_corpus(dir.path() / "y.content", dir.path() / "y.cites", p);
  REQUIRE(testsupport::slurp(dir.path() / "x.content") ==
          testsupport::slurp(dir.path() / "y.content"));
  REQUIRE(testsupport::slurp(dir.path() / "x.cites") ==
          testsupport::slurp(dir.path() / "y.cites"));
}
