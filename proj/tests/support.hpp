#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "esage/esage.hpp"

namespace testsupport {

// Unique scratch directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("esage_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small random graph with Gaussian features; edge density keeps most nodes
// connected without saturating.
inline esage::Graph random_graph(std::size_t n, std::size_t feat_dim, int classes,
                                 double edge_prob, std::uint64_t seed) {
  esage::Rng rng(seed, 0x96ad);
  esage::Matrix feats(n, feat_dim);
  for (double& v : feats.data) v = rng.normal();
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(rng.below(classes));
  std::vector<std::pair<esage::NodeId, esage::NodeId>> edges;
  for (std::size_t u = 0; u + 1 < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.bernoulli(edge_prob))
        edges.emplace_back(static_cast<esage::NodeId>(u), static_cast<esage::NodeId>(v));
  return esage::make_graph(std::move(feats), std::move(labels), classes, edges);
}

// Independent BFS distances (adjacency rebuilt from scratch, no library reuse).
inline std::vector<int> bfs_distances(const esage::Graph& g, esage::NodeId source) {
  std::vector<std::vector<esage::NodeId>> adj(g.num_nodes());
  for (esage::EdgeId e = 0; e < g.num_edges(); ++e) {
    auto [u, v] = g.edge_endpoints(e);
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<int> dist(g.num_nodes(), -1);
  std::vector<esage::NodeId> frontier{source};
  dist[source] = 0;
  while (!frontier.empty()) {
    std::vector<esage::NodeId> next;
    for (esage::NodeId u : frontier)
      for (esage::NodeId v : adj[u])
        if (dist[v] < 0) {
          dist[v] = dist[u] + 1;
          next.push_back(v);
        }
    frontier = std::move(next);
  }
  return dist;
}

// Central finite differences of F = softmax probability of target_class at
// target_node with respect to each edge-mask entry.
inline std::vector<double> fd_mask_gradient(const esage::ModelParams& params,
                                            const esage::Graph& g,
                                            const esage::EdgeMask& mask,
                                            esage::NodeId target, int target_class,
                                            double h) {
  auto f = [&](const esage::EdgeMask& m) {
    const esage::Matrix logits = esage::forward(params, g, m);
    const esage::Prediction pr =
        esage::predict_from_logits(logits.row(target), params.num_classes());
    return pr.probs[target_class];
  };
  std::vector<double> grad(g.num_edges());
  esage::EdgeMask probe = mask;
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    const double v = mask.values[e];
    probe.values[e] = v + h;
    const double fp = f(probe);
    probe.values[e] = v - h;
    const double fm = f(probe);
    probe.values[e] = v;
    grad[e] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace testsupport
