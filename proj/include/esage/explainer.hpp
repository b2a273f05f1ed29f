#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "esage/graph.hpp"
#include "esage/model.hpp"

namespace esage {

// Raw path-integral attribution of the predicted-class probability at a node
// with respect to every undirected-edge mask entry. Baseline is the all-zero
// mask, input the all-one mask, so (x_i - x'_i) = 1 and the attribution is
// the averaged gradient along the path. The integral uses the midpoint rule
// at alpha = (k - 0.5)/steps.
struct IgResult {
  std::vector<double> raw;  // signed attribution per undirected edge
  int target_class = 0;     // fixed from the full-mask prediction
  double f_input = 0.0;     // F at the all-one mask
  double f_baseline = 0.0;  // F at the all-zero mask
};

inline IgResult integrated_gradients(const ModelParams& params, const Graph& g,
                                     NodeId target_node, std::size_t steps) {
  if (target_node >= g.num_nodes())
    throw Error("integrated_gradients: node out of range");
  if (steps < 1) throw Error("integrated_gradients: steps must be >= 1");
  const std::size_t m = g.num_edges();
  const std::size_t classes = params.num_classes();
  IgResult out;
  out.raw.assign(m, 0.0);

  const detail::FeatureCache cache = detail::make_feature_cache(params, g);
  std::vector<double> probs(classes);
  auto prob_at = [&](std::span<const double> mask, int cls) {
    const detail::Trace t = detail::forward_trace(params, g, mask, &cache);
    detail::softmax_row(t.logits.row(target_node), classes, probs.data());
    return probs[cls];
  };

  EdgeMask mask = EdgeMask::ones(m);
  {
    const detail::Trace t = detail::forward_trace(params, g, mask.values, &cache);
    const Prediction full = predict_from_logits(t.logits.row(target_node), classes);
    out.target_class = full.class_id;
    out.f_input = full.probs[full.class_id];
  }
  out.f_baseline = prob_at(EdgeMask::zeros(m).values, out.target_class);
  if (m == 0) return out;

  for (std::size_t k = 0; k < steps; ++k) {
    const double alpha = (static_cast<double>(k) + 0.5) / static_cast<double>(steps);
    std::fill(mask.values.begin(), mask.values.end(), alpha);
    const detail::Trace t = detail::forward_trace(params, g, mask.values, &cache);
    detail::softmax_row(t.logits.row(target_node), classes, probs.data());
    Matrix dlogits(g.num_nodes(), classes);
    const double py = probs[out.target_class];
    double* drow = dlogits.row(target_node);
    for (std::size_t c = 0; c < classes; ++c)
      drow[c] = py * ((static_cast<int>(c) == out.target_class ? 1.0 : 0.0) - probs[c]);
    const std::vector<double> grad =
        detail::backward_mask(params, g, mask.values, t, dlogits);
    for (std::size_t e = 0; e < m; ++e) out.raw[e] += grad[e];
  }
  const double inv = 1.0 / static_cast<double>(steps);
  for (double& v : out.raw) v *= inv;
  return out;
}

// Normalized importance: each edge's share of the total absolute attribution,
// ordered descending with ties broken toward the higher edge index.
struct EdgeImportance {
  std::vector<double> scores;   // in [0,1], summing to 1 when any raw != 0
  std::vector<EdgeId> order;    // edge ids sorted by score descending
  std::vector<double> raw;      // signed attributions
  double completeness_gap = 0.0;  // |sum raw - (F(x) - F(x'))|
};

inline EdgeImportance edge_importance(const std::vector<double>& raw) {
  EdgeImportance out;
  out.raw = raw;
  out.scores.assign(raw.size(), 0.0);
  double total = 0.0;
  for (double v : raw) {
    if (!std::isfinite(v)) throw Error("edge_importance: non-finite attribution");
    total += std::abs(v);
  }
  const double denom = std::max(total, 1e-12);
  for (std::size_t e = 0; e < raw.size(); ++e) out.scores[e] = std::abs(raw[e]) / denom;
  out.order.resize(raw.size());
  std::iota(out.order.begin(), out.order.end(), 0);
  std::sort(out.order.begin(), out.order.end(), [&](EdgeId a, EdgeId b) {
    if (out.scores[a] != out.scores[b]) return out.scores[a] > out.scores[b];
    return a > b;
  });
  return out;
}

// The explainer call of the defense loop: attribution plus ordering plus the
// completeness diagnostic in one result.
inline EdgeImportance explain_node(const ModelParams& params, const Graph& g,
                                   NodeId target_node, std::size_t steps) {
  const IgResult ig = integrated_gradients(params, g, target_node, steps);
  EdgeImportance imp = edge_importance(ig.raw);
  const double total = std::accumulate(ig.raw.begin(), ig.raw.end(), 0.0);
  imp.completeness_gap = std::abs(total - (ig.f_input - ig.f_baseline));
  return imp;
}

// Per-node summary of the strongest edge, computed on the node's 2-hop
// subgraph: the top normalized score and the top edge's relative position in
// the subgraph's edge order (adversarial attachments sit at the end).
struct TopEdgeStat {
  NodeId node = 0;
  double top_score = 0.0;
  double relative_position = 0.0;
};

inline std::vector<TopEdgeStat> most_important_edge_stats(
    const ModelParams& params, const Graph& g, std::span<const NodeId> nodes,
    std::size_t steps) {
  if (nodes.empty()) throw Error("most_important_edge_stats: empty node set");
  std::vector<TopEdgeStat> out;
  out.reserve(nodes.size());
  for (NodeId u : nodes) {
    const Subgraph sub = khop_subgraph(g, u, 2);
    const NodeId local = static_cast<NodeId>(
        std::lower_bound(sub.node_map.begin(), sub.node_map.end(), u) -
        sub.node_map.begin());
    TopEdgeStat stat;
    stat.node = u;
    const std::size_t m = sub.graph.num_edges();
    if (m > 0) {
      const EdgeImportance imp = explain_node(params, sub.graph, local, steps);
      const EdgeId top = imp.order[0];
      stat.top_score = imp.scores[top];
      stat.relative_position =
          static_cast<double>(top) / static_cast<double>(std::max<std::size_t>(m - 1, 1));
    }
    out.push_back(stat);
  }
  return out;
}

struct ScoreRow {
  TopEdgeStat stat;
  bool is_triggered = false;
};

inline void write_score_csv(const std::filesystem::path& path,
                            const std::vector<ScoreRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("write_score_csv: cannot write " + path.string());
  out << "node_id,top_score,top_edge_relative_position,is_triggered\n";
  for (const auto& r : rows) {
    out << r.stat.node << ',' << detail::fmt17(r.stat.top_score) << ','
        << detail::fmt17(r.stat.relative_position) << ',' << (r.is_triggered ? 1 : 0)
        << '\n';
  }
}

}  // namespace esage
