#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "esage/esage.hpp"
#include "support.hpp"

using namespace esage;
using Catch::Approx;

namespace {

Graph two_node_graph(double x0, double x1) {
  Matrix feats(2, 1);
  feats(0, 0) = x0;
  feats(1, 0) = x1;
  return make_graph(std::move(feats), {0, 0}, 1, {{0, 1}});
}

ModelParams tiny_params(ModelKind kind, double w1, double w2) {
  ModelParams p;
  p.kind = kind;
  p.w1 = Matrix(1, 1);
  p.w1(0, 0) = w1;
  p.w2 = Matrix(1, 1);
  p.w2(0, 0) = w2;
  if (kind == ModelKind::sage) {
    p.u1 = Matrix(1, 1);
    p.u2 = Matrix(1, 1);
  }
  return p;
}

}  // namespace

TEST_CASE("init_params is deterministic with Glorot-bounded entries") {
  const ModelParams a = init_params(ModelKind::gcn, 4, 8, 3, 7);
  const ModelParams b = init_params(ModelKind::gcn, 4, 8, 3, 7);
  REQUIRE(a == b);
  REQUIRE(a.w1.rows == 4);
  REQUIRE(a.w1.cols == 8);
  REQUIRE(a.w2.rows == 8);
  REQUIRE(a.w2.cols == 3);
  const double bound = std::sqrt(6.0 / (4 + 8));
  for (double v : a.w1.data) {
    REQUIRE(v <= bound);
    REQUIRE(v >= -bound);
  }
  const ModelParams c = init_params(ModelKind::gcn, 4, 8, 3, 8);
  REQUIRE(!(a == c));
  REQUIRE_THROWS_AS(init_params(ModelKind::gcn, 0, 8, 3, 1), Error);
}

TEST_CASE("gcn forward matches the closed form on a 2-node graph") {
  const Graph g = two_node_graph(1.0, 3.0);
  const ModelParams p = tiny_params(ModelKind::gcn, 2.0, 0.5);
  EdgeMask m = EdgeMask::ones(1);
  m.values[0] = 0.7;
  const Matrix z = forward(p, g, m);
  // degrees 1 -> self coeff 1/2, arc coeff 1/2
  // p1 = (0.5*2 + 0.5*0.7*6, 0.5*6 + 0.5*0.7*2) = (3.1, 3.7); h*w2 = (1.55, 1.85)
  // z0 = 0.5*1.55 + 0.35*1.85 = 1.4225 ; z1 = 0.5*1.85 + 0.35*1.55 = 1.4675
  REQUIRE(z(0, 0) == Approx(1.4225).margin(1e-12));
  REQUIRE(z(1, 0) == Approx(1.4675).margin(1e-12));
}

TEST_CASE("zero mask equals deleting every edge") {
  for (auto kind : {ModelKind::gcn, ModelKind::sage}) {
    const Graph g = testsupport::random_graph(14, 3, 2, 0.25, 3);
    const ModelParams p = init_params(kind, 3, 5, 2, 1);
    const Matrix masked = forward(p, g, EdgeMask::zeros(g.num_edges()));
    Graph edgeless = g;
    while (edgeless.num_edges() > 0) edgeless = remove_edge(edgeless, 0);
    const Matrix deleted = forward(p, edgeless);
    REQUIRE(masked.data.size() == deleted.data.size());
    for (std::size_t i = 0; i < masked.data.size(); ++i)
      REQUIRE(masked.data[i] == deleted.data[i]);
  }
}

TEST_CASE("zeroing one mask entry equals deleting that edge") {
  for (auto kind : {ModelKind::gcn, ModelKind::sage}) {
    const Graph g = testsupport::random_graph(12, 3, 2, 0.3, 9);
    REQUIRE(g.num_edges() >= 3);
    const ModelParams p = init_params(kind, 3, 4, 2, 2);
    const EdgeId victim = 2;
    EdgeMask m = EdgeMask::ones(g.num_edges());
    m.values[victim] = 0.0;
    const Matrix masked = forward(p, g, m);
    Matrix deleted = forward(p, remove_edge(g, victim));
    for (std::size_t i = 0; i < masked.data.size(); ++i)
      REQUIRE(masked.data[i] == deleted.data[i]);
  }
}

TEST_CASE("all-ones mask is the plain forward") {
  const Graph g = testsupport::random_graph(10, 3, 2, 0.3, 5);
  const ModelParams p = init_params(ModelKind::gcn, 3, 4, 2, 3);
  REQUIRE(forward(p, g, EdgeMask::ones(g.num_edges())).data == forward(p, g).data);
}

TEST_CASE("forward rejects a mask of the wrong length") {
  const Graph g = testsupport::random_graph(6, 2, 2, 0.4, 1);
  const ModelParams p = init_params(ModelKind::gcn, 2, 3, 2, 1);
  REQUIRE_THROWS_AS(forward(p, g, EdgeMask::ones(g.num_edges() + 1)), Error);
}

TEST_CASE("predict: softmax, argmax and tie-breaking") {
  SECTION("uniform logits pick class 0") {
    const double logits[3] = {1.0, 1.0, 1.0};
    const Prediction pr = predict_from_logits(logits, 3);
    REQUIRE(pr.class_id == 0);
    for (double v : pr.probs) REQUIRE(v == Approx(1.0 / 3.0));
  }
  SECTION("hand-set logits (0, ln 3) give probs (0.25, 0.75)") {
    const double logits[2] = {0.0, std::log(3.0)};
    const Prediction pr = predict_from_logits(logits, 2);
    REQUIRE(pr.probs[0] == Approx(0.25).epsilon(1e-12));
    REQUIRE(pr.probs[1] == Approx(0.75).epsilon(1e-12));
    REQUIRE(pr.class_id == 1);
  }
  SECTION("probabilities sum to one for random params") {
    const Graph g = testsupport::random_graph(9, 3, 3, 0.3, 2);
    const ModelParams p = init_params(ModelKind::gcn, 3, 4, 3, 4);
    for (NodeId u = 0; u < g.num_nodes(); ++u) {
      const Prediction pr = predict(p, g, u);
      double s = 0.0;
      for (double v : pr.probs) s += v;
      REQUIRE(s == Approx(1.0).margin(1e-9));
    }
  }
  SECTION("out of range") {
    const Graph g = testsupport::random_graph(4, 2, 2, 0.5, 1);
    const ModelParams p = init_params(ModelKind::gcn, 2, 3, 2, 1);
    REQUIRE_THROWS_AS(predict(p, g, 4), Error);
  }
}

TEST_CASE("accuracy bounds and errors") {
  const Graph g = testsupport::random_graph(10, 3, 2, 0.3, 6);
  const ModelParams p = init_params(ModelKind::gcn, 3, 4, 2, 5);
  std::vector<NodeId> all(g.num_nodes());
  std::iota(all.begin(), all.end(), 0);
  const double acc = accuracy(p, g, all);
  REQUIRE(acc >= 0.0);
  REQUIRE(acc <= 1.0);
  REQUIRE_THROWS_AS(accuracy(p, g, std::span<const NodeId>{}), Error);
}

TEST_CASE("training separates the two-clique toy") {
  const auto [g, s] = generate_planted_partition(20, 2, 1.0, 0.0, 6, 0.2, 11);
  for (auto kind : {ModelKind::gcn, ModelKind::sage}) {
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.hidden_dim = 16;
    cfg.seed = 3;
    const ModelParams init = init_params(kind, g.feat_dim(), cfg.hidden_dim,
                                         g.num_classes, cfg.seed);
    const TrainResult r = train(init, g, s, cfg);
    REQUIRE(r.loss_history.size() == 200);
    REQUIRE(r.loss_history.back() < r.loss_history.front());
    REQUIRE(accuracy(r.params, g, s.train) == 1.0);
  }
}

TEST_CASE("training rejects bad configs") {
  const auto [g, s] = generate_planted_partition(12, 2, 0.9, 0.05, 4, 0.1, 2);
  const ModelParams p = init_params(ModelKind::gcn, 4, 4, 2, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  REQUIRE_THROWS_AS(train(p, g, s, cfg), Error);
  cfg.epochs = 10;
  cfg.learning_rate = 0.0;
  REQUIRE_THROWS_AS(train(p, g, s, cfg), Error);
  cfg.learning_rate = 0.1;
  Splits empty = s;
  empty.train.clear();
  REQUIRE_THROWS_AS(train(p, g, empty, cfg), Error);
}

TEST_CASE("train is deterministic") {
  const auto [g, s] = generate_planted_partition(30, 3, 0.6, 0.05, 5, 0.2, 4);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.hidden_dim = 8;
  cfg.seed = 9;
  const ModelParams init = init_params(ModelKind::gcn, g.feat_dim(), 8, 3, 9);
  const TrainResult a = train(init, g, s, cfg);
  const TrainResult b = train(init, g, s, cfg);
  REQUIRE(a.params == b.params);
  REQUIRE(a.loss_history == b.loss_history);
}

TEST_CASE("analytic mask gradient matches central finite differences") {
  // 50 random graphs, both model kinds, h = 1e-4, relative error <= 1e-4 on
  // entries with magnitude above 1e-8.
  const double h = 1e-4;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng(seed, 0xfd);
    const std::size_t n = 6 + rng.below(15);  // <= 20 nodes
    const Graph g = testsupport::random_graph(n, 3, 3, 0.25, seed * 31 + 1);
    if (g.num_edges() == 0) continue;
    EdgeMask mask = EdgeMask::ones(g.num_edges());
    for (double& v : mask.values) v = rng.uniform(0.3, 0.7);
    const NodeId target = static_cast<NodeId>(rng.below(n));
    const int target_class = static_cast<int>(rng.below(3));
    for (auto kind : {ModelKind::gcn, ModelKind::sage}) {
      const ModelParams p = init_params(kind, 3, 5, 3, seed * 13 + 5);
      const auto analytic = grad_wrt_edge_mask(p, g, mask, target, target_class);
      const auto fd =
          testsupport::fd_mask_gradient(p, g, mask, target, target_class, h);
      for (std::size_t e = 0; e < g.num_edges(); ++e) {
        if (std::abs(analytic[e]) <= 1e-8) continue;
        const double rel = std::abs(analytic[e] - fd[e]) / std::abs(analytic[e]);
        INFO("seed " << seed << " kind " << to_string(kind) << " edge " << e
                     << " analytic " << analytic[e] << " fd " << fd[e]);
        REQUIRE(rel <= 1e-4);
      }
    }
  }
}

TEST_CASE("mask gradient vanishes outside the 2-hop receptive field") {
  // path 0-1-2-3-4, target 0: edges {2,3} and {3,4} cannot reach it
  Matrix feats(5, 2);
  for (std::size_t i = 0; i < 5; ++i) feats(i, 0) = 0.3 * (1.0 + i);
  const Graph g = make_graph(std::move(feats), {0, 1, 0, 1, 0}, 2,
                             {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  for (auto kind : {ModelKind::gcn, ModelKind::sage}) {
    const ModelParams p = init_params(kind, 2, 4, 2, 21);
    const auto grad = grad_wrt_edge_mask(p, g, EdgeMask::ones(g.num_edges()), 0, 1);
    REQUIRE(grad[2] == 0.0);
    REQUIRE(grad[3] == 0.0);
  }
}

TEST_CASE("gcn mask gradient is all zero when features vanish") {
  Matrix feats(6, 3);  // all-zero features kill every message
  const Graph g = make_graph(std::move(feats), {0, 1, 0, 1, 0, 1}, 2,
                             {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 5}});
  const ModelParams p = init_params(ModelKind::gcn, 3, 4, 2, 2);
  const auto grad = grad_wrt_edge_mask(p, g, EdgeMask::ones(g.num_edges()), 0, 0);
  for (double v : grad) REQUIRE(v == 0.0);
}

TEST_CASE("relabeling nodes permutes logits identically") {
  const Graph g = testsupport::random_graph(12, 3, 2, 0.3, 17);
  std::vector<NodeId> perm(g.num_nodes());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(99, 0);
  rng.shuffle(perm);

  Matrix feats(g.num_nodes(), g.feat_dim());
  std::vector<int> labels(g.num_nodes());
  for (std::size_t u = 0; u < g.num_nodes(); ++u) {
    std::copy(g.features.row(u), g.features.row(u) + g.feat_dim(),
              feats.row(perm[u]));
    labels[perm[u]] = g.labels[u];
  }
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (EdgeId e = 0; e < g.num_edges(); ++e) {
    auto [u, v] = g.edge_endpoints(e);
    edges.emplace_back(perm[u], perm[v]);
  }
  const Graph pg = make_graph(std::move(feats), std::move(labels), 2, edges);
  for (auto kind : {ModelKind::gcn, ModelKind::sage}) {
    const ModelParams p = init_params(kind, 3, 4, 2, 23);
    const Matrix z = forward(p, g);
    const Matrix pz = forward(p, pg);
    for (std::size_t u = 0; u < g.num_nodes(); ++u)
      for (std::size_t c = 0; c < 2; ++c)
        REQUIRE(pz(perm[u], c) == Approx(z(u, c)).margin(1e-12));
  }
}

TEST_CASE("model checkpoints round-trip exactly") {
  testsupport::TempDir dir("ckpt");
  for (auto kind : {ModelKind::gcn, ModelKind::sage}) {
    const ModelParams p = init_params(kind, 7, 5, 3, 77);
    const auto path = dir.path() / (to_string(kind) + ".txt");
    save_model(path, p);
    const ModelParams q = load_model(path);
    REQUIRE(p == q);
  }
  REQUIRE_THROWS_AS(load_model(dir.path() / "missing.txt"), Error);
}
