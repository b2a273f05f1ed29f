#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include "esage/explainer.hpp"
#include "esage/graph.hpp"
#include "esage/model.hpp"
#include "esage/rng.hpp"

namespace esage {

struct DefenseConfig {
  std::size_t theta_e = 300;  // edge-count threshold that triggers sampling
  std::size_t theta_n = 5;    // second-hop neighbors retained per neighbor
  std::size_t steps = 32;     // IG steps
  double prune_tau = 0.2;     // cosine threshold of the Prune baseline
  std::uint64_t seed = 0;
  std::optional<double> beta_override;  // fixed beta instead of sigmoid*
  std::size_t max_rounds = 0;           // 0 = the max_cut formula; else a cap
};

// Degree-adaptive pruning threshold: decreasing from just under 0.8 toward
// 0.45 as the degree grows, lenient on low-degree nodes.
//
//   sigmoid*(deg) = 0.45 + 0.35 * (1 + e^{1.2 (deg - 3.5)})^{-1}
inline double sigmoid_star(double deg) {
  return 0.45 + 0.35 / (1.0 + std::exp(1.2 * (deg - 3.5)));
}

// 2-hop extraction with neighbor sampling. If the 2-hop subgraph has at most
// theta_e edges it is returned unchanged; otherwise every direct edge of the
// target is kept and each direct neighbor keeps only theta_n seeded-uniform
// second-hop neighbors. The sampling stream is seeded from (seed, target) so
// per-node results do not depend on evaluation order.
inline Subgraph neighbor_sample(const Graph& g, NodeId target,
                                const DefenseConfig& cfg) {
  if (target >= g.num_nodes()) throw Error("neighbor_sample: target out of range");
  Subgraph two_hop = khop_subgraph(g, target, 2);
  if (two_hop.graph.num_edges() <= cfg.theta_e) return two_hop;

  Rng rng(cfg.seed, mix64(0x5a3b1e, target));
  std::vector<EdgeId> keep;
  std::vector<NodeId> neighbors;
  for (std::uint32_t a : g.in_arcs_of(target)) {
    keep.push_back(g.edge_of_arc[a]);
    neighbors.push_back(g.arcs[a].src);
  }
  for (NodeId ni : neighbors) {
    std::vector<EdgeId> candidate_edges;
    for (std::uint32_t a : g.in_arcs_of(ni)) {
      if (g.arcs[a].src == target) continue;
      candidate_edges.push_back(g.edge_of_arc[a]);
    }
    for (EdgeId e : rng.sample(std::move(candidate_edges), cfg.theta_n))
      keep.push_back(e);
  }
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  return detail::induce(g, keep, {target});
}

struct DefenseRound {
  EdgeId edge = 0;       // parent-graph edge id of the round's top edge
  NodeId src = 0, dst = 0;
  double top_score = 0.0;
  bool pruned = false;   // false = threshold not reached, loop stopped
};

struct DefenseOutcome {
  std::vector<EdgeId> pruned_edges;  // parent-graph edge ids, in prune order
  std::size_t rounds = 0;            // explainer evaluations executed
  std::vector<double> top_scores;    // S_imp[0] seen each round
  int final_prediction = 0;
  double beta = 0.0;
  std::size_t max_cut = 0;
  std::vector<DefenseRound> log;
};

// Algorithm: beta and max_cut come from the target's degree in the input
// graph; the working graph is the (possibly sampled) 2-hop subgraph; each
// round re-runs the explainer and prunes the top edge while its score clears
// beta, for at most max_cut rounds. The final prediction is taken on the
// pruned working graph.
inline DefenseOutcome esage_defend(const ModelParams& params, const Graph& g,
                                   NodeId target, const DefenseConfig& cfg) {
  if (target >= g.num_nodes()) throw Error("esage_defend: target out of range");
  DefenseOutcome out;
  const std::size_t deg = g.degree(target);
  if (deg == 0) {
    out.final_prediction = predict(params, g, target).class_id;
    return out;
  }
  out.beta = cfg.beta_override.value_or(sigmoid_star(static_cast<double>(deg)));
  out.max_cut = std::max<std::size_t>(deg / 4, 1);
  std::size_t allowed = out.max_cut;
  if (cfg.max_rounds > 0) allowed = std::min(allowed, cfg.max_rounds);

  Subgraph work = neighbor_sample(g, target, cfg);
  const NodeId local = static_cast<NodeId>(
      std::lower_bound(work.node_map.begin(), work.node_map.end(), target) -
      work.node_map.begin());

  std::size_t cut = 0;
  while (cut < allowed && work.graph.num_edges() > 0) {
    const EdgeImportance imp = explain_node(params, work.graph, local, cfg.steps);
    const EdgeId top_local = imp.order[0];
    const double top = imp.scores[top_local];
    ++out.rounds;
    out.top_scores.push_back(top);
    DefenseRound round;
    round.edge = work.edge_map[top_local];
    auto [su, sv] = work.graph.edge_endpoints(top_local);
    round.src = work.node_map[su];
    round.dst = work.node_map[sv];
    round.top_score = top;
    round.pruned = top >= out.beta;
    out.log.push_back(round);
    if (!round.pruned) break;
    out.pruned_edges.push_back(round.edge);
    work.graph = remove_edge(work.graph, top_local);
    work.edge_map.erase(work.edge_map.begin() + top_local);
    ++cut;
  }
  out.final_prediction = predict(params, work.graph, local).class_id;
  return out;
}

// Prune baseline: drop every edge whose endpoint feature cosine similarity
// falls below tau.
inline Graph prune_cosine(const Graph& g, double tau) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    auto [u, v] = g.edge_endpoints(e);
    if (cosine_similarity(g, u, v) >= tau) edges.emplace_back(u, v);
  }
  return make_graph(g.features, g.labels, g.num_classes, edges);
}

enum class DefenseKind { none, prune, esage };

inline std::string to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::none: return "none";
    case DefenseKind::prune: return "prune";
    default: return "esage";
  }
}

inline DefenseKind defense_kind_from_string(const std::string& s) {
  if (s == "none") return DefenseKind::none;
  if (s == "prune") return DefenseKind::prune;
  if (s == "esage") return DefenseKind::esage;
  throw Error("unknown defense kind '" + s + "'");
}

inline int defended_predict(const ModelParams& params, const Graph& g, NodeId node,
                            DefenseKind kind, const DefenseConfig& cfg) {
  switch (kind) {
    case DefenseKind::none:
      return predict(params, g, node).class_id;
    case DefenseKind::prune:
      return predict(params, prune_cosine(g, cfg.prune_tau), node).class_id;
    default:
      return esage_defend(params, g, node, cfg).final_prediction;
  }
}

// Per-node audit log rows: node_id,round,edge_id,src,dst,score,beta,action
inline void append_audit_rows(std::ofstream& out, NodeId node,
                              const DefenseOutcome& o) {
  for (std::size_t r = 0; r < o.log.size(); ++r) {
    const DefenseRound& round = o.log[r];
    out << node << ',' << r << ',' << round.edge << ',' << round.src << ','
        << round.dst << ',' << detail::fmt17(round.top_score) << ','
        << detail::fmt17(o.beta) << ',' << (round.pruned ? "pruned" : "stop") << '\n';
  }
}

inline void write_audit_csv(const std::filesystem::path& path,
                            const std::vector<std::pair<NodeId, DefenseOutcome>>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("write_audit_csv: cannot write " + path.string());
  out << "node_id,round,edge_id,src,dst,score,beta,action\n";
  for (const auto& [node, outcome] : rows) append_audit_rows(out, node, outcome);
}

}  // namespace esage
