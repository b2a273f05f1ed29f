#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "esage/dataset.hpp"
#include "esage/graph.hpp"
#include "esage/matrix.hpp"
#include "esage/rng.hpp"

namespace esage {

enum class ModelKind { gcn, sage };

inline std::string to_string(ModelKind k) { return k == ModelKind::gcn ? "gcn" : "sage"; }

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "gcn") return ModelKind::gcn;
  if (s == "sage") return ModelKind::sage;
  throw Error("unknown model kind '" + s + "'");
}

// Two-layer message-passing classifier. For gcn only w1/w2 are used; sage
// additionally carries the self-transform weights u1/u2.
struct ModelParams {
  ModelKind kind = ModelKind::gcn;
  Matrix w1;  // feat_dim x hidden_dim
  Matrix w2;  // hidden_dim x num_classes
  Matrix u1;  // sage self weights, shape of w1
  Matrix u2;  // sage self weights, shape of w2
  std::uint64_t seed = 0;

  std::size_t feat_dim() const { return w1.rows; }
  std::size_t hidden_dim() const { return w1.cols; }
  std::size_t num_classes() const { return w2.cols; }

  bool operator==(const ModelParams&) const = default;
};

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 0.05;
  double weight_decay = 5e-4;
  int hidden_dim = 64;
  std::uint64_t seed = 0;
};

// Continuous [0,1] multiplier per undirected edge; both arcs of an edge share
// one entry.
struct EdgeMask {
  std::vector<double> values;

  static EdgeMask ones(std::size_t n) {
    EdgeMask m;
    m.values.assign(n, 1.0);
    return m;
  }
  static EdgeMask zeros(std::size_t n) {
    EdgeMask m;
    m.values.assign(n, 0.0);
    return m;
  }
};

inline ModelParams init_params(ModelKind kind, std::size_t feat_dim,
                               std::size_t hidden_dim, std::size_t num_classes,
                               std::uint64_t seed) {
  if (feat_dim == 0 || hidden_dim == 0 || num_classes == 0)
    throw Error("init_params: dimensions must be positive");
  ModelParams p;
  p.kind = kind;
  p.seed = seed;
  Rng rng(seed, /*stream=*/0x1417);
  auto glorot = [&](std::size_t r, std::size_t c) {
    Matrix m(r, c);
    const double b = std::sqrt(6.0 / static_cast<double>(r + c));
    for (double& v : m.data) v = rng.uniform(-b, b);
    return m;
  };
  p.w1 = glorot(feat_dim, hidden_dim);
  p.w2 = glorot(hidden_dim, num_classes);
  if (kind == ModelKind::sage) {
    p.u1 = glorot(feat_dim, hidden_dim);
    p.u2 = glorot(hidden_dim, num_classes);
  }
  return p;
}

namespace detail {

// out[u] = self[u]*M[u] + sum over arcs (v->u) of coeff[a]*mask[e(a)]*M[v].
// Symmetric as a linear operator (twin arcs share coefficient and mask), so
// it is its own adjoint.
inline Matrix gcn_aggregate(const Graph& g, const GcnCoefficients& c,
                            std::span<const double> mask, const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (std::size_t u = 0; u < g.num_nodes(); ++u) {
    double* orow = out.row(u);
    const double* srow = m.row(u);
    const double cs = c.self_loop[u];
    for (std::size_t j = 0; j < m.cols; ++j) orow[j] = cs * srow[j];
    for (std::uint32_t a : g.in_arcs_of(static_cast<NodeId>(u))) {
      const double w = c.arc[a] * mask[g.edge_of_arc[a]];
      if (w == 0.0) continue;
      const double* vrow = m.row(g.arcs[a].src);
      for (std::size_t j = 0; j < m.cols; ++j) orow[j] += w * vrow[j];
    }
  }
  return out;
}

inline std::vector<double> sage_mask_sums(const Graph& g, std::span<const double> mask) {
  std::vector<double> s(g.num_nodes(), 0.0);
  for (std::size_t u = 0; u < g.num_nodes(); ++u)
    for (std::uint32_t a : g.in_arcs_of(static_cast<NodeId>(u)))
      s[u] += mask[g.edge_of_arc[a]];
  return s;
}

// Mask-weighted neighbor mean; nodes whose mask sum is zero aggregate to 0.
inline Matrix sage_aggregate(const Graph& g, std::span<const double> mask,
                             const std::vector<double>& sums, const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (std::size_t u = 0; u < g.num_nodes(); ++u) {
    if (sums[u] <= 0.0) continue;
    double* orow = out.row(u);
    for (std::uint32_t a : g.in_arcs_of(static_cast<NodeId>(u))) {
      const double w = mask[g.edge_of_arc[a]] / sums[u];
      if (w == 0.0) continue;
      const double* vrow = m.row(g.arcs[a].src);
      for (std::size_t j = 0; j < m.cols; ++j) orow[j] += w * vrow[j];
    }
  }
  return out;
}

inline Matrix sage_aggregate_adjoint(const Graph& g, std::span<const double> mask,
                                     const std::vector<double>& sums, const Matrix& d) {
  Matrix out(d.rows, d.cols);
  for (std::size_t u = 0; u < g.num_nodes(); ++u) {
    if (sums[u] <= 0.0) continue;
    const double* drow = d.row(u);
    for (std::uint32_t a : g.in_arcs_of(static_cast<NodeId>(u))) {
      const double w = mask[g.edge_of_arc[a]] / sums[u];
      if (w == 0.0) continue;
      double* vrow = out.row(g.arcs[a].src);
      for (std::size_t j = 0; j < d.cols; ++j) vrow[j] += w * drow[j];
    }
  }
  return out;
}

struct Trace {
  // gcn
  GcnCoefficients coeff;
  // sage
  std::vector<double> sums;
  Matrix xu1, agg1, agg2;
  // common
  Matrix xw1, p1, h1, hw2, logits;
};

// The feature transforms and normalization coefficients do not depend on the
// mask; callers walking a mask path (the attribution integral) compute them
// once.
struct FeatureCache {
  GcnCoefficients coeff;
  Matrix xw1, xu1;
};

inline FeatureCache make_feature_cache(const ModelParams& p, const Graph& g) {
  FeatureCache c;
  c.coeff = gcn_coefficients(g);
  c.xw1 = matmul(g.features, p.w1);
  if (p.kind == ModelKind::sage) c.xu1 = matmul(g.features, p.u1);
  return c;
}

inline Trace forward_trace(const ModelParams& p, const Graph& g,
                           std::span<const double> mask,
                           const FeatureCache* cache = nullptr) {
  if (mask.size() != g.num_edges())
    throw Error("forward: mask length != number of undirected edges");
  if (p.feat_dim() != g.feat_dim())
    throw Error("forward: feature dimension mismatch");
  Trace t;
  t.xw1 = cache ? cache->xw1 : matmul(g.features, p.w1);
  if (p.kind == ModelKind::gcn) {
    t.coeff = cache ? cache->coeff : gcn_coefficients(g);
    t.p1 = gcn_aggregate(g, t.coeff, mask, t.xw1);
  } else {
    t.sums = sage_mask_sums(g, mask);
    t.xu1 = cache ? cache->xu1 : matmul(g.features, p.u1);
    t.agg1 = sage_aggregate(g, mask, t.sums, t.xw1);
    t.p1 = t.xu1;
    axpy(t.p1, 1.0, t.agg1);
  }
  t.h1 = t.p1;
  for (double& v : t.h1.data) v = v > 0.0 ? v : 0.0;
  t.hw2 = matmul(t.h1, p.w2);
  if (p.kind == ModelKind::gcn) {
    t.logits = gcn_aggregate(g, t.coeff, mask, t.hw2);
  } else {
    t.agg2 = sage_aggregate(g, mask, t.sums, t.hw2);
    t.logits = matmul(t.h1, p.u2);
    axpy(t.logits, 1.0, t.agg2);
  }
  return t;
}

inline void softmax_row(const double* logits, std::size_t n, double* out) {
  double mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(logits[i] - mx);
    z += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= z;
}

// Backpropagate d(scalar)/d(logits) to d(scalar)/d(mask entries). Shared by
// the attribution path (F = class probability) and any other scalar of the
// logits; dlogits may be sparse in rows.
inline std::vector<double> backward_mask(const ModelParams& p, const Graph& g,
                                         std::span<const double> mask, const Trace& t,
                                         const Matrix& dlogits) {
  std::vector<double> grad(g.num_edges(), 0.0);
  Matrix dp1(t.p1.rows, t.p1.cols);
  if (p.kind == ModelKind::gcn) {
    // layer-2 structural term
    for (std::size_t a = 0; a < g.arcs.size(); ++a) {
      const NodeId v = g.arcs[a].src, u = g.arcs[a].dst;
      const double* du = dlogits.row(u);
      const double* hv = t.hw2.row(v);
      double s = 0.0;
      for (std::size_t j = 0; j < dlogits.cols; ++j) s += du[j] * hv[j];
      grad[g.edge_of_arc[a]] += t.coeff.arc[a] * s;
    }
    const Matrix dhw2 = gcn_aggregate(g, t.coeff, mask, dlogits);
    const Matrix dh1 = matmul_a_bt(dhw2, p.w2);
    for (std::size_t i = 0; i < dp1.data.size(); ++i)
      dp1.data[i] = t.p1.data[i] > 0.0 ? dh1.data[i] : 0.0;
    // layer-1 structural term
    for (std::size_t a = 0; a < g.arcs.size(); ++a) {
      const NodeId v = g.arcs[a].src, u = g.arcs[a].dst;
      const double* du = dp1.row(u);
      const double* xv = t.xw1.row(v);
      double s = 0.0;
      for (std::size_t j = 0; j < dp1.cols; ++j) s += du[j] * xv[j];
      grad[g.edge_of_arc[a]] += t.coeff.arc[a] * s;
    }
  } else {
    for (std::size_t a = 0; a < g.arcs.size(); ++a) {
      const NodeId v = g.arcs[a].src, u = g.arcs[a].dst;
      if (t.sums[u] <= 0.0) continue;
      const double* du = dlogits.row(u);
      const double* hv = t.hw2.row(v);
      const double* av = t.agg2.row(u);
      double s = 0.0;
      for (std::size_t j = 0; j < dlogits.cols; ++j) s += du[j] * (hv[j] - av[j]);
      grad[g.edge_of_arc[a]] += s / t.sums[u];
    }
    const Matrix dhw2 = sage_aggregate_adjoint(g, mask, t.sums, dlogits);
    Matrix dh1 = matmul_a_bt(dlogits, p.u2);
    axpy(dh1, 1.0, matmul_a_bt(dhw2, p.w2));
    for (std::size_t i = 0; i < dp1.data.size(); ++i)
      dp1.data[i] = t.p1.data[i] > 0.0 ? dh1.data[i] : 0.0;
    for (std::size_t a = 0; a < g.arcs.size(); ++a) {
      const NodeId v = g.arcs[a].src, u = g.arcs[a].dst;
      if (t.sums[u] <= 0.0) continue;
      const double* du = dp1.row(u);
      const double* xv = t.xw1.row(v);
      const double* av = t.agg1.row(u);
      double s = 0.0;
      for (std::size_t j = 0; j < dp1.cols; ++j) s += du[j] * (xv[j] - av[j]);
      grad[g.edge_of_arc[a]] += s / t.sums[u];
    }
  }
  return grad;
}

}  // namespace detail

inline Matrix forward(const ModelParams& p, const Graph& g, const EdgeMask& mask) {
  return detail::forward_trace(p, g, mask.values).logits;
}

inline Matrix forward(const ModelParams& p, const Graph& g) {
  return forward(p, g, EdgeMask::ones(g.num_edges()));
}

struct Prediction {
  int class_id = 0;
  std::vector<double> probs;
};

inline Prediction predict_from_logits(const double* row, std::size_t classes) {
  Prediction out;
  out.probs.resize(classes);
  detail::softmax_row(row, classes, out.probs.data());
  out.class_id = 0;
  for (std::size_t c = 1; c < classes; ++c)
    if (out.probs[c] > out.probs[out.class_id]) out.class_id = static_cast<int>(c);
  return out;
}

inline Prediction predict(const ModelParams& p, const Graph& g, NodeId node) {
  if (node >= g.num_nodes()) throw Error("predict: node out of range");
  const Matrix logits = forward(p, g);
  return predict_from_logits(logits.row(node), p.num_classes());
}

inline double accuracy(const ModelParams& p, const Graph& g,
                       std::span<const NodeId> nodes) {
  if (nodes.empty()) throw Error("accuracy: empty node set");
  const Matrix logits = forward(p, g);
  std::size_t hit = 0;
  for (NodeId u : nodes) {
    if (u >= g.num_nodes()) throw Error("accuracy: node out of range");
    const Prediction pr = predict_from_logits(logits.row(u), p.num_classes());
    if (pr.class_id == g.labels[u]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(nodes.size());
}

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_history;
};

namespace detail {

// Adam moments for one weight matrix; fully deterministic.
struct AdamState {
  Matrix m, v;
  double beta1t = 1.0, beta2t = 1.0;

  void step(Matrix& w, const Matrix& grad, double lr) {
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    if (m.data.empty()) {
      m = Matrix(w.rows, w.cols);
      v = Matrix(w.rows, w.cols);
    }
    beta1t *= kBeta1;
    beta2t *= kBeta2;
    for (std::size_t i = 0; i < w.data.size(); ++i) {
      const double gi = grad.data[i];
      m.data[i] = kBeta1 * m.data[i] + (1.0 - kBeta1) * gi;
      v.data[i] = kBeta2 * v.data[i] + (1.0 - kBeta2) * gi * gi;
      const double mhat = m.data[i] / (1.0 - beta1t);
      const double vhat = v.data[i] / (1.0 - beta2t);
      w.data[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
};

}  // namespace detail

// Full-batch gradient training (Adam steps) on softmax cross-entropy over
// the train mask with L2 weight decay; the edge mask stays at all-ones
// throughout.
inline TrainResult train(ModelParams params, const Graph& g, const Splits& splits,
                         const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw Error("train: epochs must be >= 1");
  if (cfg.learning_rate <= 0.0) throw Error("train: learning_rate must be positive");
  if (splits.train.empty()) throw Error("train: empty train set");
  const EdgeMask mask = EdgeMask::ones(g.num_edges());
  const double inv_n = 1.0 / static_cast<double>(splits.train.size());
  const std::size_t classes = params.num_classes();

  TrainResult out;
  out.loss_history.reserve(cfg.epochs);
  std::vector<double> probs(classes);
  detail::AdamState opt_w1, opt_w2, opt_u1, opt_u2;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::Trace t = detail::forward_trace(params, g, mask.values);
    double loss = 0.0;
    Matrix dlogits(g.num_nodes(), classes);
    for (NodeId u : splits.train) {
      detail::softmax_row(t.logits.row(u), classes, probs.data());
      loss -= std::log(std::max(probs[g.labels[u]], 1e-300)) * inv_n;
      double* drow = dlogits.row(u);
      for (std::size_t c = 0; c < classes; ++c) drow[c] = probs[c] * inv_n;
      drow[g.labels[u]] -= inv_n;
    }
    loss += 0.5 * cfg.weight_decay *
            (sum_squares(params.w1) + sum_squares(params.w2) +
             sum_squares(params.u1) + sum_squares(params.u2));
    if (!std::isfinite(loss))
      throw Error("train: diverged (non-finite loss) at epoch " + std::to_string(epoch));
    out.loss_history.push_back(loss);

    if (params.kind == ModelKind::gcn) {
      const Matrix dhw2 = detail::gcn_aggregate(g, t.coeff, mask.values, dlogits);
      Matrix dw2 = matmul_at_b(t.h1, dhw2);
      axpy(dw2, cfg.weight_decay, params.w2);
      Matrix dh1 = matmul_a_bt(dhw2, params.w2);
      for (std::size_t i = 0; i < dh1.data.size(); ++i)
        if (t.p1.data[i] <= 0.0) dh1.data[i] = 0.0;
      const Matrix dxw1 = detail::gcn_aggregate(g, t.coeff, mask.values, dh1);
      Matrix dw1 = matmul_at_b(g.features, dxw1);
      axpy(dw1, cfg.weight_decay, params.w1);
      opt_w1.step(params.w1, dw1, cfg.learning_rate);
      opt_w2.step(params.w2, dw2, cfg.learning_rate);
    } else {
      const Matrix dhw2 = detail::sage_aggregate_adjoint(g, mask.values, t.sums, dlogits);
      Matrix du2 = matmul_at_b(t.h1, dlogits);
      axpy(du2, cfg.weight_decay, params.u2);
      Matrix dw2 = matmul_at_b(t.h1, dhw2);
      axpy(dw2, cfg.weight_decay, params.w2);
      Matrix dh1 = matmul_a_bt(dlogits, params.u2);
      axpy(dh1, 1.0, matmul_a_bt(dhw2, params.w2));
      for (std::size_t i = 0; i < dh1.data.size(); ++i)
        if (t.p1.data[i] <= 0.0) dh1.data[i] = 0.0;
      Matrix du1 = matmul_at_b(g.features, dh1);
      axpy(du1, cfg.weight_decay, params.u1);
      const Matrix dxw1 = detail::sage_aggregate_adjoint(g, mask.values, t.sums, dh1);
      Matrix dw1 = matmul_at_b(g.features, dxw1);
      axpy(dw1, cfg.weight_decay, params.w1);
      opt_w1.step(params.w1, dw1, cfg.learning_rate);
      opt_w2.step(params.w2, dw2, cfg.learning_rate);
      opt_u1.step(params.u1, du1, cfg.learning_rate);
      opt_u2.step(params.u2, du2, cfg.learning_rate);
    }
  }
  out.params = std::move(params);
  return out;
}

// Exact reverse-mode gradient of F = softmax probability of target_class at
// target_node with respect to each undirected-edge mask entry (twin arcs
// summed).
inline std::vector<double> grad_wrt_edge_mask(const ModelParams& p, const Graph& g,
                                              const EdgeMask& mask, NodeId target_node,
                                              int target_class) {
  if (target_node >= g.num_nodes()) throw Error("grad_wrt_edge_mask: node out of range");
  if (target_class < 0 || target_class >= static_cast<int>(p.num_classes()))
    throw Error("grad_wrt_edge_mask: class out of range");
  const detail::Trace t = detail::forward_trace(p, g, mask.values);
  const std::size_t classes = p.num_classes();
  std::vector<double> probs(classes);
  detail::softmax_row(t.logits.row(target_node), classes, probs.data());
  Matrix dlogits(g.num_nodes(), classes);
  const double py = probs[target_class];
  double* drow = dlogits.row(target_node);
  for (std::size_t c = 0; c < classes; ++c)
    drow[c] = py * ((static_cast<int>(c) == target_class ? 1.0 : 0.0) - probs[c]);
  return detail::backward_mask(p, g, mask.values, t, dlogits);
}

// Gradient of log softmax probability of target_class at target_node with
// respect to the feature rows listed in `rows` (attack machinery).
inline Matrix grad_logprob_wrt_features(const ModelParams& p, const Graph& g,
                                        NodeId target_node, int target_class,
                                        std::span<const NodeId> rows) {
  const EdgeMask mask = EdgeMask::ones(g.num_edges());
  const detail::Trace t = detail::forward_trace(p, g, mask.values);
  const std::size_t classes = p.num_classes();
  std::vector<double> probs(classes);
  detail::softmax_row(t.logits.row(target_node), classes, probs.data());
  Matrix dlogits(g.num_nodes(), classes);
  double* drow = dlogits.row(target_node);
  for (std::size_t c = 0; c < classes; ++c)
    drow[c] = (static_cast<int>(c) == target_class ? 1.0 : 0.0) - probs[c];

  Matrix dxw1, dp1;
  if (p.kind == ModelKind::gcn) {
    const Matrix dhw2 = detail::gcn_aggregate(g, t.coeff, mask.values, dlogits);
    Matrix dh1 = matmul_a_bt(dhw2, p.w2);
    for (std::size_t i = 0; i < dh1.data.size(); ++i)
      if (t.p1.data[i] <= 0.0) dh1.data[i] = 0.0;
    dxw1 = detail::gcn_aggregate(g, t.coeff, mask.values, dh1);
  } else {
    const Matrix dhw2 = detail::sage_aggregate_adjoint(g, mask.values, t.sums, dlogits);
    Matrix dh1 = matmul_a_bt(dlogits, p.u2);
    axpy(dh1, 1.0, matmul_a_bt(dhw2, p.w2));
    for (std::size_t i = 0; i < dh1.data.size(); ++i)
      if (t.p1.data[i] <= 0.0) dh1.data[i] = 0.0;
    dp1 = dh1;
    dxw1 = detail::sage_aggregate_adjoint(g, mask.values, t.sums, dh1);
  }
  Matrix out(rows.size(), g.feat_dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const NodeId r = rows[i];
    for (std::size_t f = 0; f < g.feat_dim(); ++f) {
      double s = 0.0;
      for (std::size_t h = 0; h < p.hidden_dim(); ++h)
        s += dxw1(r, h) * p.w1(f, h);
      if (p.kind == ModelKind::sage)
        for (std::size_t h = 0; h < p.hidden_dim(); ++h)
          s += dp1(r, h) * p.u1(f, h);
      out(i, f) = s;
    }
  }
  return out;
}

// --- Checkpoints --------------------------------------------------------------
//
// Single text file, 17-significant-digit weights; read/write round-trips are
// exact.

inline void save_model(const std::filesystem::path& path, const ModelParams& p) {
  std::ofstream out(path);
  if (!out) throw Error("save_model: cannot write " + path.string());
  out << "esage-model v1\n";
  out << "kind " << to_string(p.kind) << '\n';
  out << "dims " << p.feat_dim() << ' ' << p.hidden_dim() << ' ' << p.num_classes() << '\n';
  out << "seed " << p.seed << '\n';
  auto dump = [&](const char* name, const Matrix& m) {
    out << "matrix " << name << ' ' << m.rows << ' ' << m.cols << '\n';
    for (std::size_t i = 0; i < m.rows; ++i) {
      for (std::size_t j = 0; j < m.cols; ++j) {
        if (j) out << ' ';
        out << detail::fmt17(m(i, j));
      }
      out << '\n';
    }
  };
  dump("W1", p.w1);
  dump("W2", p.w2);
  if (p.kind == ModelKind::sage) {
    dump("U1", p.u1);
    dump("U2", p.u2);
  }
  out << "end\n";
}

inline ModelParams load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_model: cannot open " + path.string());
  std::string word;
  in >> word;
  std::string ver;
  in >> ver;
  if (word != "esage-model" || ver != "v1")
    throw Error("load_model: bad header in " + path.string());
  ModelParams p;
  std::size_t feat = 0, hidden = 0, classes = 0;
  std::string kind_s;
  in >> word >> kind_s;  // kind
  p.kind = model_kind_from_string(kind_s);
  in >> word >> feat >> hidden >> classes;  // dims
  in >> word >> p.seed;                     // seed
  auto read_matrix = [&](Matrix& m) {
    std::string name;
    std::size_t r = 0, c = 0;
    in >> word >> name >> r >> c;
    if (word != "matrix") throw Error("load_model: malformed checkpoint " + path.string());
    m = Matrix(r, c);
    for (double& v : m.data) in >> v;
  };
  read_matrix(p.w1);
  read_matrix(p.w2);
  if (p.kind == ModelKind::sage) {
    read_matrix(p.u1);
    read_matrix(p.u2);
  }
  in >> word;
  if (word != "end" || !in) throw Error("load_model: truncated checkpoint " + path.string());
  return p;
}

}  // namespace esage
