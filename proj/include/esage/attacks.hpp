#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "esage/graph.hpp"
#include "esage/model.hpp"
#include "esage/rng.hpp"

namespace esage {

// A small attachable subgraph: node features, internal wiring and the node
// that links to the victim.
struct Trigger {
  Matrix features;  // size x feat_dim
  std::vector<std::pair<std::uint32_t, std::uint32_t>> internal_edges;
  std::uint32_t attach_index = 0;

  std::size_t size() const { return features.rows; }
};

enum class AttackKind { sba, gta, ugba };

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::sba: return "sba";
    case AttackKind::gta: return "gta";
    default: return "ugba";
  }
}

inline AttackKind attack_kind_from_string(const std::string& s) {
  if (s == "sba") return AttackKind::sba;
  if (s == "gta") return AttackKind::gta;
  if (s == "ugba") return AttackKind::ugba;
  throw Error("unknown attack kind '" + s + "'");
}

struct AttackConfig {
  AttackKind kind = AttackKind::gta;
  int target_class = 0;          // y_t
  double poison_rate = 0.005;    // fraction of the test-set size
  std::size_t trigger_size = 3;
  double trigger_density = 0.5;  // internal edge probability
  double lambda_sim = 0.0;       // cosine regularizer weight (ugba)
  std::size_t opt_iters = 100;
  std::uint64_t seed = 0;
};

// Per-dimension empirical feature statistics of a dataset; drives trigger
// feature sampling and the clamping box for optimized triggers.
struct FeatureStats {
  std::vector<double> mean, stddev, min, max;
  std::vector<bool> is_binary;  // every observed value is exactly 0 or 1
  double max_row_l1 = 0.0;      // largest observed feature-row L1 norm
};

inline FeatureStats feature_stats(const Graph& g) {
  const std::size_t n = g.num_nodes(), f = g.feat_dim();
  FeatureStats s;
  s.mean.assign(f, 0.0);
  s.stddev.assign(f, 0.0);
  s.min.assign(f, std::numeric_limits<double>::infinity());
  s.max.assign(f, -std::numeric_limits<double>::infinity());
  s.is_binary.assign(f, true);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = g.features.row(i);
    double l1 = 0.0;
    for (std::size_t j = 0; j < f; ++j) {
      const double v = row[j];
      s.mean[j] += v;
      s.min[j] = std::min(s.min[j], v);
      s.max[j] = std::max(s.max[j], v);
      if (v != 0.0 && v != 1.0) s.is_binary[j] = false;
      l1 += std::abs(v);
    }
    s.max_row_l1 = std::max(s.max_row_l1, l1);
  }
  for (std::size_t j = 0; j < f; ++j) s.mean[j] /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = g.features.row(i);
    for (std::size_t j = 0; j < f; ++j) {
      const double d = row[j] - s.mean[j];
      s.stddev[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < f; ++j)
    s.stddev[j] = std::sqrt(s.stddev[j] / static_cast<double>(n));
  return s;
}

// Random universal trigger: i.i.d. internal edges, features drawn from the
// per-dimension empirical distribution (Bernoulli on binary dimensions,
// Gaussian elsewhere).
inline Trigger make_random_trigger(const FeatureStats& stats, std::size_t trigger_size,
                                   double density, std::uint64_t seed) {
  if (trigger_size < 1) throw Error("make_random_trigger: trigger_size must be >= 1");
  Trigger t;
  t.attach_index = 0;
  const std::size_t f = stats.mean.size();
  t.features = Matrix(trigger_size, f);
  Rng rng(seed, /*stream=*/0x7169);
  for (std::size_t i = 0; i < trigger_size; ++i)
    for (std::size_t j = 0; j < f; ++j)
      t.features(i, j) = stats.is_binary[j]
                             ? (rng.bernoulli(stats.mean[j]) ? 1.0 : 0.0)
                             : rng.normal(stats.mean[j], stats.stddev[j]);
  for (std::uint32_t i = 0; i + 1 < trigger_size; ++i)
    for (std::uint32_t j = i + 1; j < trigger_size; ++j)
      if (rng.bernoulli(density)) t.internal_edges.emplace_back(i, j);
  return t;
}

// Optimized trigger features must stay on the dataset's scale: inside the
// observed per-dimension box, and no row heavier (in L1) than any real
// feature row. Without the row cap an optimizer drives hundreds of
// dimensions to their box corner at once, which both collapses the poisoned
// model's clean accuracy and is trivially detectable.
inline void project_rows_to_scale(Matrix& feats, const FeatureStats& stats) {
  if (stats.max_row_l1 <= 0.0) return;
  for (std::size_t i = 0; i < feats.rows; ++i) {
    double* row = feats.row(i);
    double l1 = 0.0;
    for (std::size_t j = 0; j < feats.cols; ++j) l1 += std::abs(row[j]);
    if (l1 > stats.max_row_l1) {
      const double scale = stats.max_row_l1 / l1;
      for (std::size_t j = 0; j < feats.cols; ++j) row[j] *= scale;
    }
  }
}

// New graph with the trigger appended: trigger nodes after all existing
// nodes, internal edges first, the attachment edge last. The input graph is
// untouched; every original node, feature row, edge and label is preserved
// verbatim. Trigger nodes carry placeholder label 0 and belong to no split.
inline Graph inject_trigger(const Graph& g, NodeId victim, const Trigger& t) {
  if (victim >= g.num_nodes()) throw Error("inject_trigger: victim out of range");
  if (t.features.cols != g.feat_dim())
    throw Error("inject_trigger: trigger feature dimension mismatch");
  const std::size_t n = g.num_nodes();
  Matrix feats(n + t.size(), g.feat_dim());
  std::copy(g.features.data.begin(), g.features.data.end(), feats.data.begin());
  std::copy(t.features.data.begin(), t.features.data.end(),
            feats.data.begin() + static_cast<std::ptrdiff_t>(n * g.feat_dim()));
  std::vector<int> labels = g.labels;
  labels.resize(n + t.size(), 0);
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(g.num_edges() + t.internal_edges.size() + 1);
  for (EdgeId e = 0; e < g.num_edges(); ++e) edges.push_back(g.edge_endpoints(e));
  const NodeId base = static_cast<NodeId>(n);
  for (auto [a, b] : t.internal_edges) edges.emplace_back(base + a, base + b);
  edges.emplace_back(victim, base + t.attach_index);
  return make_graph(std::move(feats), std::move(labels), g.num_classes, edges);
}

inline Graph inject_multiple(const Graph& g, NodeId victim,
                             std::span<const Trigger> triggers) {
  Graph out = g;
  for (const Trigger& t : triggers) out = inject_trigger(out, victim, t);
  return out;
}

// Seeded uniform choice of poisoning victims among non-test nodes; shared by
// poison_training_graph and the trigger optimizer so both see the same set.
inline std::vector<NodeId> select_poison_victims(std::size_t num_nodes,
                                                 const Splits& splits,
                                                 const AttackConfig& cfg) {
  const std::size_t budget = static_cast<std::size_t>(
      std::ceil(cfg.poison_rate * static_cast<double>(splits.test.size())));
  std::vector<char> is_test(num_nodes, 0);
  for (NodeId id : splits.test) is_test[id] = 1;
  std::vector<NodeId> candidates;
  for (std::size_t u = 0; u < num_nodes; ++u)
    if (!is_test[u]) candidates.push_back(static_cast<NodeId>(u));
  if (budget > candidates.size())
    throw Error("poison: budget " + std::to_string(budget) + " exceeds " +
                std::to_string(candidates.size()) + " candidates");
  Rng rng(cfg.seed, /*stream=*/0xb1057);
  std::vector<NodeId> victims = rng.sample(std::move(candidates), budget);
  std::sort(victims.begin(), victims.end());
  return victims;
}

struct PoisonResult {
  Graph graph;
  Splits splits;
  std::vector<NodeId> victims;
};

// Attach one fresh trigger copy per victim and relabel the victims to the
// target class. Victims are drawn from non-test nodes and moved into the
// train split (attacker-contributed labeled data); the test set is untouched.
inline PoisonResult poison_training_graph(const Graph& g, const Splits& splits,
                                          const Trigger& trigger,
                                          const AttackConfig& cfg) {
  PoisonResult out;
  out.victims = select_poison_victims(g.num_nodes(), splits, cfg);
  out.graph = g;
  for (NodeId v : out.victims) out.graph = inject_trigger(out.graph, v, trigger);
  for (NodeId v : out.victims) out.graph.labels[v] = cfg.target_class;
  if (cfg.target_class < 0 || cfg.target_class >= g.num_classes)
    throw Error("poison: target class out of range");

  out.splits = splits;
  std::vector<char> is_victim(g.num_nodes(), 0);
  for (NodeId v : out.victims) is_victim[v] = 1;
  auto drop = [&](std::vector<NodeId>& ids) {
    ids.erase(std::remove_if(ids.begin(), ids.end(),
                             [&](NodeId id) { return is_victim[id]; }),
              ids.end());
  };
  drop(out.splits.val);
  for (NodeId v : out.victims)
    if (!std::binary_search(out.splits.train.begin(), out.splits.train.end(), v))
      out.splits.train.push_back(v);
  std::sort(out.splits.train.begin(), out.splits.train.end());
  return out;
}

namespace detail {

// One victim's optimization view: the 2-hop subgraph around the victim after
// virtual injection, with the trigger rows located inside it.
struct VictimView {
  Subgraph sub;
  NodeId local_victim = 0;
  std::vector<NodeId> local_trigger;   // local row per trigger node (or absent)
  std::vector<std::uint32_t> trigger_row;  // matching trigger row indices
};

inline VictimView victim_view(const Graph& g, NodeId victim, const Trigger& t) {
  VictimView view;
  const Graph injected = inject_trigger(g, victim, t);
  view.sub = khop_subgraph(injected, victim, 2);
  const auto& nm = view.sub.node_map;
  auto local_of = [&](NodeId orig) -> long {
    const auto it = std::lower_bound(nm.begin(), nm.end(), orig);
    if (it == nm.end() || *it != orig) return -1;
    return it - nm.begin();
  };
  view.local_victim = static_cast<NodeId>(local_of(victim));
  for (std::uint32_t r = 0; r < t.size(); ++r) {
    const long l = local_of(static_cast<NodeId>(g.num_nodes() + r));
    if (l >= 0) {
      view.local_trigger.push_back(static_cast<NodeId>(l));
      view.trigger_row.push_back(r);
    }
  }
  return view;
}

inline void write_trigger_rows(VictimView& view, const Trigger& t) {
  for (std::size_t i = 0; i < view.local_trigger.size(); ++i) {
    const double* src = t.features.row(view.trigger_row[i]);
    double* dst = view.sub.graph.features.row(view.local_trigger[i]);
    std::copy(src, src + t.features.cols, dst);
  }
}

// One Frank-Wolfe step per feature row over the feasible set
// { x : min_j <= x_j <= max_j, ||x||_1 <= max_row_l1 }. The linear oracle is
// a fractional-knapsack fill of the strongest-gradient dimensions, so the
// iterates concentrate the row's mass on the most indicative features -
// exactly the shape a bag-of-words trigger needs. `ascend` flips the
// objective sign.
inline void frank_wolfe_row(double* row, const double* grad, std::size_t f,
                            const FeatureStats& stats, double gamma, bool ascend) {
  std::vector<std::pair<double, std::size_t>> rank;
  rank.reserve(f);
  for (std::size_t j = 0; j < f; ++j) {
    const double gj = ascend ? grad[j] : -grad[j];
    if (gj > 0.0 && stats.max[j] > 0.0)
      rank.emplace_back(-gj, j);  // ascending sort key = descending gain
    else if (gj < 0.0 && stats.min[j] < 0.0)
      rank.emplace_back(gj, j);
  }
  std::sort(rank.begin(), rank.end());
  std::vector<double> vertex(f, 0.0);
  double budget = stats.max_row_l1 > 0.0
                      ? stats.max_row_l1
                      : std::numeric_limits<double>::infinity();
  for (const auto& [key, j] : rank) {
    if (budget <= 0.0) break;
    const double gj = ascend ? grad[j] : -grad[j];
    const double extent = gj > 0.0 ? stats.max[j] : -stats.min[j];
    const double take = std::min(extent, budget);
    vertex[j] = gj > 0.0 ? take : -take;
    budget -= take;
  }
  for (std::size_t j = 0; j < f; ++j)
    row[j] = (1.0 - gamma) * row[j] + gamma * vertex[j];
}

}  // namespace detail

// Gradient-optimized trigger. Starting from a random trigger, sign-ascent on
// the mean target-class log-probability of the victims after virtual
// injection, minus lambda_sim * mean(1 - cos(attach features, victim
// features)). Features move by 2.5*range/opt_iters per step and stay clamped
// to the observed per-dimension range. lambda_sim = 0 is the plain adaptive
// trigger; lambda_sim > 0 additionally drags the attach node toward the
// victims' feature profile.
inline Trigger optimize_trigger(const ModelParams& surrogate, const Graph& g,
                                std::span<const NodeId> victims,
                                const AttackConfig& cfg,
                                const FeatureStats* cached_stats = nullptr) {
  const FeatureStats stats = cached_stats ? *cached_stats : feature_stats(g);
  Trigger t = make_random_trigger(stats, cfg.trigger_size, cfg.trigger_density, cfg.seed);
  if (cfg.opt_iters == 0 || victims.empty()) return t;
  project_rows_to_scale(t.features, stats);  // Frank-Wolfe needs a feasible start

  const std::size_t f = g.feat_dim();
  std::vector<detail::VictimView> views;
  views.reserve(victims.size());
  for (NodeId v : victims) views.push_back(detail::victim_view(g, v, t));

  const double inv_k = 1.0 / static_cast<double>(victims.size());
  for (std::size_t iter = 0; iter < cfg.opt_iters; ++iter) {
    Matrix grad(t.size(), f);
    double objective = 0.0;
    for (std::size_t vi = 0; vi < views.size(); ++vi) {
      auto& view = views[vi];
      detail::write_trigger_rows(view, t);
      const Prediction pred = predict(surrogate, view.sub.graph, view.local_victim);
      objective += std::log(std::max(pred.probs[cfg.target_class], 1e-300)) * inv_k;
      const Matrix gsub = grad_logprob_wrt_features(
          surrogate, view.sub.graph, view.local_victim, cfg.target_class,
          view.local_trigger);
      for (std::size_t i = 0; i < view.local_trigger.size(); ++i)
        for (std::size_t j = 0; j < f; ++j)
          grad(view.trigger_row[i], j) += inv_k * gsub(i, j);
    }
    if (cfg.lambda_sim > 0.0) {
      const double* a = t.features.row(t.attach_index);
      double na = 0.0;
      for (std::size_t j = 0; j < f; ++j) na += a[j] * a[j];
      na = std::sqrt(na);
      for (NodeId v : victims) {
        const double* x = g.features.row(v);
        double nx = 0.0, dot = 0.0;
        for (std::size_t j = 0; j < f; ++j) {
          nx += x[j] * x[j];
          dot += a[j] * x[j];
        }
        nx = std::sqrt(nx);
        if (na == 0.0 || nx == 0.0) continue;
        const double cosv = dot / (na * nx);
        objective -= cfg.lambda_sim * (1.0 - cosv) * inv_k;
        for (std::size_t j = 0; j < f; ++j)
          grad(t.attach_index, j) +=
              cfg.lambda_sim * inv_k * (x[j] / (na * nx) - cosv * a[j] / (na * na));
      }
    }
    if (!std::isfinite(objective) || !all_finite(grad))
      throw Error("optimize_trigger: non-finite objective at iteration " +
                  std::to_string(iter));
    const double gamma = 2.0 / (static_cast<double>(iter) + 2.0);
    for (std::size_t i = 0; i < t.size(); ++i)
      detail::frank_wolfe_row(t.features.row(i), grad.row(i), f, stats, gamma,
                              /*ascend=*/true);
  }
  return t;
}

// Test-time injection attack on a clean model: k subgraphs are injected
// sequentially, each optimized (after the previous one is committed) to
// minimize the victim's true-class probability. No training-time poisoning.
inline Graph adversarial_inject(const ModelParams& clean_params, const Graph& g,
                                NodeId victim, std::size_t k, const AttackConfig& cfg) {
  if (victim >= g.num_nodes()) throw Error("adversarial_inject: victim out of range");
  const FeatureStats stats = feature_stats(g);
  const int true_class = g.labels[victim];
  const std::size_t f = g.feat_dim();
  Graph current = g;
  for (std::size_t slot = 0; slot < k; ++slot) {
    Trigger t = make_random_trigger(stats, cfg.trigger_size, cfg.trigger_density,
                                    mix64(cfg.seed, slot));
    project_rows_to_scale(t.features, stats);
    detail::VictimView view = detail::victim_view(current, victim, t);
    for (std::size_t iter = 0; iter < cfg.opt_iters; ++iter) {
      detail::write_trigger_rows(view, t);
      const Prediction pred = predict(clean_params, view.sub.graph, view.local_victim);
      if (!std::isfinite(pred.probs[true_class]))
        throw Error("adversarial_inject: non-finite probability at iteration " +
                    std::to_string(iter));
      const Matrix gsub = grad_logprob_wrt_features(
          clean_params, view.sub.graph, view.local_victim, true_class,
          view.local_trigger);
      const double gamma = 2.0 / (static_cast<double>(iter) + 2.0);
      for (std::size_t i = 0; i < view.local_trigger.size(); ++i)
        detail::frank_wolfe_row(t.features.row(view.trigger_row[i]), gsub.row(i), f,
                                stats, gamma, /*ascend=*/false);
    }
    current = inject_trigger(current, victim, t);
  }
  return current;
}

// --- Trigger checkpoints -----------------------------------------------------

inline void save_trigger(const std::filesystem::path& path, const Trigger& t) {
  std::ofstream out(path);
  if (!out) throw Error("save_trigger: cannot write " + path.string());
  out << "esage-trigger v1\n";
  out << "size " << t.size() << " featdim " << t.features.cols << '\n';
  out << "attach " << t.attach_index << '\n';
  out << "features\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = 0; j < t.features.cols; ++j) {
      if (j) out << ' ';
      out << detail::fmt17(t.features(i, j));
    }
    out << '\n';
  }
  out << "edges " << t.internal_edges.size() << '\n';
  for (auto [a, b] : t.internal_edges) out << a << ' ' << b << '\n';
  out << "end\n";
}

inline Trigger load_trigger(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_trigger: cannot open " + path.string());
  std::string word, ver;
  in >> word >> ver;
  if (word != "esage-trigger" || ver != "v1")
    throw Error("load_trigger: bad header in " + path.string());
  Trigger t;
  std::size_t size = 0, featdim = 0, edges = 0;
  in >> word >> size >> word >> featdim;
  in >> word >> t.attach_index;
  in >> word;  // features
  t.features = Matrix(size, featdim);
  for (double& v : t.features.data) in >> v;
  in >> word >> edges;
  t.internal_edges.resize(edges);
  for (auto& [a, b] : t.internal_edges) in >> a >> b;
  in >> word;
  if (word != "end" || !in) throw Error("load_trigger: truncated file " + path.string());
  return t;
}

}  // namespace esage
