#include <catch2/catch_amalgamated.hpp>

#include "esage/esage.hpp"
#include "support.hpp"

using namespace esage;
using Catch::Approx;

namespace {

Graph path_graph(std::size_t n, std::size_t feat_dim = 2) {
  Matrix feats(n, feat_dim);
  for (std::size_t i = 0; i < n; ++i) feats(i, 0) = static_cast<double>(i);
  std::vector<int> labels(n, 0);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (std::size_t i = 0; i + 1 < n; ++i)
    edges.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(i + 1));
  return make_graph(std::move(feats), std::move(labels), 2, edges);
}

}  // namespace

TEST_CASE("make_graph stores twin arcs sharing one edge index") {
  const Graph g = path_graph(3);
  REQUIRE(g.num_edges() == 2);
  REQUIRE(g.arcs.size() == 4);
  REQUIRE(g.arcs[0] == Arc{0, 1});
  REQUIRE(g.arcs[1] == Arc{1, 0});
  REQUIRE(g.edge_of_arc[0] == g.edge_of_arc[1]);
  REQUIRE(g.edge_of_arc[2] == g.edge_of_arc[3]);
  REQUIRE(g.edge_of_arc[2] == 1);
}

TEST_CASE("make_graph rejects self-loops, duplicates and bad labels") {
  Matrix feats(2, 1);
  std::vector<int> labels{0, 1};
  REQUIRE_THROWS_AS(make_graph(feats, labels, 2, {{0, 0}}), Error);
  REQUIRE_THROWS_AS(make_graph(feats, labels, 2, {{0, 1}, {1, 0}}), Error);
  REQUIRE_THROWS_AS(make_graph(feats, labels, 2, {{0, 2}}), Error);
  REQUIRE_THROWS_AS(make_graph(feats, {0, 5}, 2, {}), Error);
}

TEST_CASE("degree counts distinct undirected neighbors") {
  SECTION("isolated node") {
    Matrix feats(1, 1);
    const Graph g = make_graph(feats, {0}, 1, {});
    REQUIRE(degree(g, 0) == 0);
  }
  SECTION("node in a 10-clique") {
    Matrix feats(10, 1);
    std::vector<int> labels(10, 0);
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId u = 0; u < 10; ++u)
      for (NodeId v = u + 1; v < 10; ++v) edges.emplace_back(u, v);
    const Graph g = make_graph(feats, labels, 1, edges);
    for (NodeId u = 0; u < 10; ++u) REQUIRE(degree(g, u) == 9);
  }
  SECTION("out of range") {
    const Graph g = path_graph(2);
    REQUIRE_THROWS_AS(degree(g, 2), Error);
  }
}

TEST_CASE("cosine_similarity basics") {
  std::vector<double> a{1.0, 2.0, 3.0};
  REQUIRE(cosine_similarity(a, a) == Approx(1.0));
  std::vector<double> e1{1.0, 0.0}, e2{0.0, 1.0};
  REQUIRE(cosine_similarity(e1, e2) == Approx(0.0));
  std::vector<double> d{1.0, 1.0};
  REQUIRE(cosine_similarity(e1, d) == Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  std::vector<double> zero{0.0, 0.0};
  REQUIRE(cosine_similarity(zero, d) == 0.0);
  std::vector<double> bad{1.0};
  REQUIRE_THROWS_AS(cosine_similarity(bad, d), Error);
}

TEST_CASE("khop_subgraph on a path") {
  // a-b-c-d, center a, k=2 -> {a,b,c} with 2 edges
  const Graph g = path_graph(4);
  const Subgraph sub = khop_subgraph(g, 0, 2);
  REQUIRE(sub.graph.num_nodes() == 3);
  REQUIRE(sub.graph.num_edges() == 2);
  REQUIRE(sub.node_map == std::vector<NodeId>{0, 1, 2});
  REQUIRE(sub.edge_map == std::vector<EdgeId>{0, 1});
}

TEST_CASE("khop_subgraph of an isolated center") {
  Matrix feats(3, 1);
  const Graph g = make_graph(feats, {0, 0, 0}, 1, {{1, 2}});
  const Subgraph sub = khop_subgraph(g, 0, 2);
  REQUIRE(sub.graph.num_nodes() == 1);
  REQUIRE(sub.graph.num_edges() == 0);
}

TEST_CASE("khop_subgraph from a star leaf reaches the whole star") {
  Matrix feats(6, 1);
  std::vector<int> labels(6, 0);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId leaf = 1; leaf < 6; ++leaf) edges.emplace_back(0, leaf);
  const Graph g = make_graph(feats, labels, 1, edges);
  const Subgraph sub = khop_subgraph(g, 3, 2);
  REQUIRE(sub.graph.num_nodes() == 6);
  REQUIRE(sub.graph.num_edges() == 5);
}

TEST_CASE("khop_subgraph matches independent BFS distances") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Graph g = testsupport::random_graph(24, 3, 2, 0.12, seed);
    const auto dist = testsupport::bfs_distances(g, 5);
    for (std::size_t k = 1; k <= 3; ++k) {
      const Subgraph sub = khop_subgraph(g, 5, k);
      std::vector<char> in_sub(g.num_nodes(), 0);
      for (NodeId orig : sub.node_map) in_sub[orig] = 1;
      for (std::size_t u = 0; u < g.num_nodes(); ++u) {
        const bool expected = dist[u] >= 0 && dist[u] <= static_cast<int>(k);
        REQUIRE(static_cast<bool>(in_sub[u]) == expected);
      }
    }
  }
}

TEST_CASE("gcn_coefficients formula and symmetry") {
  SECTION("isolated node self coefficient is 1") {
    Matrix feats(1, 1);
    const Graph g = make_graph(feats, {0}, 1, {});
    REQUIRE(gcn_coefficients(g).self_loop[0] == Approx(1.0));
  }
  SECTION("edge between two degree-1 nodes") {
    const Graph g = path_graph(2);
    const auto c = gcn_coefficients(g);
    REQUIRE(c.arc[0] == Approx(0.5));
    REQUIRE(c.arc[1] == Approx(0.5));
  }
  SECTION("edge between degree-1 and degree-3 nodes") {
    Matrix feats(4, 1);
    const Graph g = make_graph(feats, {0, 0, 0, 0}, 1, {{0, 1}, {1, 2}, {1, 3}});
    const auto c = gcn_coefficients(g);
    REQUIRE(c.arc[0] == Approx(1.0 / std::sqrt(8.0)).epsilon(1e-12));
  }
  SECTION("twin arcs share their coefficient on random graphs") {
    const Graph g = testsupport::random_graph(20, 2, 2, 0.2, 3);
    const auto c = gcn_coefficients(g);
    for (std::size_t e = 0; e < g.num_edges(); ++e)
      REQUIRE(c.arc[2 * e] == c.arc[2 * e + 1]);
  }
}

TEST_CASE("remove_edge drops both arcs and keeps the anchor") {
  Graph g = path_graph(4);
  const Graph pruned = remove_edge(g, 1);
  REQUIRE(pruned.num_edges() == 2);
  REQUIRE(pruned.edge_endpoints(0) == std::pair<NodeId, NodeId>{0, 1});
  REQUIRE(pruned.edge_endpoints(1) == std::pair<NodeId, NodeId>{2, 3});
  // normalization anchor still reflects the unpruned degrees
  REQUIRE(pruned.norm_degree[1] == Approx(2.0));
  REQUIRE(pruned.norm_degree[2] == Approx(2.0));
}

TEST_CASE("subgraphs preserve the parent normalization anchor") {
  const Graph g = testsupport::random_graph(30, 2, 2, 0.15, 11);
  const Subgraph sub = khop_subgraph(g, 3, 2);
  for (std::size_t i = 0; i < sub.node_map.size(); ++i)
    REQUIRE(sub.graph.norm_degree[i] == g.norm_degree[sub.node_map[i]]);
}
