#pragma once

#include <algorithm>
#include <cstdint>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "esage/matrix.hpp"

namespace esage {

using NodeId = std::uint32_t;
using EdgeId = std::uint32_t;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct Arc {
  NodeId src = 0;
  NodeId dst = 0;
  bool operator==(const Arc&) const = default;
};

// Sparse undirected attributed graph. Every undirected edge {u,v} is stored
// as the twin arcs (min,max) and (max,min) at positions 2e and 2e+1, both
// mapping to undirected-edge index e. Self-loops are never stored; the model
// adds its own self term.
//
// norm_degree anchors the GCN symmetric normalization. Freshly built graphs
// anchor to their structural degree; subgraph extraction and edge pruning
// copy the anchor from the parent so that masked, pruned and extracted
// evaluations agree exactly with the parent graph (zeroing a mask entry and
// deleting the edge must be the same computation).
//
// Immutable after construction; concurrent readers are safe.
struct Graph {
  Matrix features;                  // num_nodes x feat_dim
  std::vector<int> labels;          // class id per node, in [0, num_classes)
  int num_classes = 0;
  std::vector<Arc> arcs;            // 2 * num_edges, twins adjacent
  std::vector<EdgeId> edge_of_arc;  // arc index -> undirected edge id
  std::vector<double> norm_degree;  // normalization anchor per node

  // Derived adjacency: arc ids grouped by dst node.
  std::vector<std::uint32_t> in_offset;  // size num_nodes + 1
  std::vector<std::uint32_t> in_arcs;    // arc ids sorted by dst

  std::size_t num_nodes() const { return labels.size(); }
  std::size_t num_edges() const { return arcs.size() / 2; }
  std::size_t feat_dim() const { return features.cols; }

  std::span<const std::uint32_t> in_arcs_of(NodeId u) const {
    return {in_arcs.data() + in_offset[u], in_arcs.data() + in_offset[u + 1]};
  }

  // Endpoints of undirected edge e in canonical (min,max) order.
  std::pair<NodeId, NodeId> edge_endpoints(EdgeId e) const {
    const Arc& a = arcs[2 * static_cast<std::size_t>(e)];
    return {a.src, a.dst};
  }

  std::size_t degree(NodeId u) const { return in_offset[u + 1] - in_offset[u]; }

  bool operator==(const Graph&) const = default;
};

namespace detail {

inline void build_adjacency(Graph& g) {
  const std::size_t n = g.num_nodes();
  g.in_offset.assign(n + 1, 0);
  for (const Arc& a : g.arcs) ++g.in_offset[a.dst + 1];
  for (std::size_t u = 0; u < n; ++u) g.in_offset[u + 1] += g.in_offset[u];
  g.in_arcs.resize(g.arcs.size());
  std::vector<std::uint32_t> cursor(g.in_offset.begin(), g.in_offset.end() - 1);
  for (std::uint32_t a = 0; a < g.arcs.size(); ++a) {
    g.in_arcs[cursor[g.arcs[a].dst]++] = a;
  }
}

}  // namespace detail

// Validating constructor. Edges are given as unordered endpoint pairs; their
// list order defines the undirected-edge indices.
inline Graph make_graph(Matrix features, std::vector<int> labels, int num_classes,
                        const std::vector<std::pair<NodeId, NodeId>>& edges) {
  const std::size_t n = labels.size();
  if (features.rows != n) throw Error("make_graph: feature row count != node count");
  if (num_classes <= 0) throw Error("make_graph: num_classes must be positive");
  if (!all_finite(features)) throw Error("make_graph: non-finite feature value");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw Error("make_graph: label out of range at node " + std::to_string(i));
  }
  Graph g;
  g.features = std::move(features);
  g.labels = std::move(labels);
  g.num_classes = num_classes;
  g.arcs.reserve(edges.size() * 2);
  g.edge_of_arc.reserve(edges.size() * 2);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(edges.size() * 2);
  for (EdgeId e = 0; e < edges.size(); ++e) {
    NodeId u = edges[e].first;
    NodeId v = edges[e].second;
    if (u >= n || v >= n)
      throw Error("make_graph: edge endpoint out of range: (" + std::to_string(u) +
                  "," + std::to_string(v) + ")");
    if (u == v) throw Error("make_graph: self-loop at node " + std::to_string(u));
    if (u > v) std::swap(u, v);
    const std::uint64_t key = (static_cast<std::uint64_t>(u) << 32) | v;
    if (!seen.insert(key).second)
      throw Error("make_graph: duplicate edge (" + std::to_string(u) + "," +
                  std::to_string(v) + ")");
    g.arcs.push_back({u, v});
    g.arcs.push_back({v, u});
    g.edge_of_arc.push_back(e);
    g.edge_of_arc.push_back(e);
  }
  detail::build_adjacency(g);
  g.norm_degree.resize(n);
  for (std::size_t u = 0; u < n; ++u)
    g.norm_degree[u] = static_cast<double>(g.degree(static_cast<NodeId>(u)));
  return g;
}

// Disjoint node-id sets; vectors kept sorted ascending.
struct Splits {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;

  bool operator==(const Splits&) const = default;
};

inline void validate_splits(const Splits& s, std::size_t num_nodes) {
  std::vector<char> seen(num_nodes, 0);
  auto check = [&](const std::vector<NodeId>& ids, const char* name) {
    for (NodeId id : ids) {
      if (id >= num_nodes)
        throw Error(std::string("splits: node id out of range in ") + name);
      if (seen[id]) throw Error("splits: node " + std::to_string(id) + " in two sets");
      seen[id] = 1;
    }
  };
  check(s.train, "train");
  check(s.val, "val");
  check(s.test, "test");
}

inline std::size_t degree(const Graph& g, NodeId u) {
  if (u >= g.num_nodes()) throw Error("degree: node out of range");
  return g.degree(u);
}

inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw Error("cosine_similarity: dimension mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;  // featureless nodes never look similar
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

inline double cosine_similarity(const Graph& g, NodeId u, NodeId v) {
  return cosine_similarity(
      std::span<const double>(g.features.row(u), g.feat_dim()),
      std::span<const double>(g.features.row(v), g.feat_dim()));
}

// A graph cut out of a parent graph, remembering where it came from.
struct Subgraph {
  Graph graph;
  std::vector<NodeId> node_map;  // subgraph node id -> parent node id
  std::vector<EdgeId> edge_map;  // subgraph edge id -> parent edge id
};

namespace detail {

// Induce a subgraph on `keep_edges` (parent edge ids, ascending). Nodes are
// the endpoints plus `extra_nodes`, numbered by ascending parent id. The
// normalization anchor is copied from the parent.
inline Subgraph induce(const Graph& g, const std::vector<EdgeId>& keep_edges,
                       const std::vector<NodeId>& extra_nodes) {
  std::vector<NodeId> nodes = extra_nodes;
  for (EdgeId e : keep_edges) {
    auto [u, v] = g.edge_endpoints(e);
    nodes.push_back(u);
    nodes.push_back(v);
  }
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

  std::vector<NodeId> local(g.num_nodes(), 0);
  for (std::size_t i = 0; i < nodes.size(); ++i) local[nodes[i]] = static_cast<NodeId>(i);

  Subgraph out;
  out.node_map = nodes;
  out.edge_map = keep_edges;

  Matrix feats(nodes.size(), g.feat_dim());
  std::vector<int> labels(nodes.size());
  std::vector<double> nd(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const double* src = g.features.row(nodes[i]);
    std::copy(src, src + g.feat_dim(), feats.row(i));
    labels[i] = g.labels[nodes[i]];
    nd[i] = g.norm_degree[nodes[i]];
  }
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(keep_edges.size());
  for (EdgeId e : keep_edges) {
    auto [u, v] = g.edge_endpoints(e);
    edges.emplace_back(local[u], local[v]);
  }
  out.graph = make_graph(std::move(feats), std::move(labels), g.num_classes, edges);
  out.graph.norm_degree = std::move(nd);
  return out;
}

}  // namespace detail

// Induced subgraph on the nodes within k hops of center. Edge order follows
// the parent's undirected-edge order; node ids are assigned by ascending
// parent id.
inline Subgraph khop_subgraph(const Graph& g, NodeId center, std::size_t k) {
  if (center >= g.num_nodes()) throw Error("khop_subgraph: center out of range");
  if (k < 1) throw Error("khop_subgraph: k must be >= 1");
  std::vector<std::uint32_t> dist(g.num_nodes(), UINT32_MAX);
  std::queue<NodeId> q;
  dist[center] = 0;
  q.push(center);
  while (!q.empty()) {
    const NodeId u = q.front();
    q.pop();
    if (dist[u] == k) continue;
    for (std::uint32_t a : g.in_arcs_of(u)) {
      const NodeId v = g.arcs[a].src;
      if (dist[v] == UINT32_MAX) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
    }
  }
  std::vector<EdgeId> keep;
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    auto [u, v] = g.edge_endpoints(e);
    if (dist[u] != UINT32_MAX && dist[v] != UINT32_MAX) keep.push_back(e);
  }
  return detail::induce(g, keep, {center});
}

struct GcnCoefficients {
  std::vector<double> arc;        // per arc: 1/sqrt((d_u+1)(d_v+1))
  std::vector<double> self_loop;  // per node: 1/(d_u+1)
};

// Symmetric normalization with implicit self-loops, anchored to norm_degree.
// Computed once per graph; mask application never rescales it.
inline GcnCoefficients gcn_coefficients(const Graph& g) {
  GcnCoefficients c;
  c.arc.resize(g.arcs.size());
  c.self_loop.resize(g.num_nodes());
  for (std::size_t u = 0; u < g.num_nodes(); ++u)
    c.self_loop[u] = 1.0 / (g.norm_degree[u] + 1.0);
  for (std::size_t a = 0; a < g.arcs.size(); ++a) {
    const Arc& arc = g.arcs[a];
    c.arc[a] = 1.0 / std::sqrt((g.norm_degree[arc.src] + 1.0) *
                               (g.norm_degree[arc.dst] + 1.0));
  }
  return c;
}

// New graph without undirected edge e (both arcs). Edge ids above e shift
// down by one; the normalization anchor is preserved.
inline Graph remove_edge(const Graph& g, EdgeId e) {
  if (e >= g.num_edges()) throw Error("remove_edge: edge out of range");
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(g.num_edges() - 1);
  for (EdgeId i = 0; i < g.num_edges(); ++i) {
    if (i == e) continue;
    edges.push_back(g.edge_endpoints(i));
  }
  Graph out = make_graph(g.features, g.labels, g.num_classes, edges);
  out.norm_degree = g.norm_degree;
  return out;
}

}  // namespace esage
