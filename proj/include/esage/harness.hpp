#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "esage/attacks.hpp"
#include "esage/dataset.hpp"
#include "esage/defense.hpp"
#include "esage/explainer.hpp"
#include "esage/graph.hpp"
#include "esage/model.hpp"

namespace esage {

// --- Flat key = value configuration ------------------------------------------
//
// One `section.key = value` per line, '#' comments. Every default is
// overridable; the CLI feeds `--set section.key=value` through the same path.

struct KeyValueConfig {
  std::map<std::string, std::string> values;

  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    std::size_t b = s.find_last_not_of(" \t");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
  }

  void set_line(const std::string& line, const std::string& where) {
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config: expected key = value in " + where + ": '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw Error("config: empty key in " + where);
    values[key] = val;
  }

  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("config: cannot open " + path.string());
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
      ++ln;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      set_line(line, path.filename().string() + ":" + std::to_string(ln));
    }
  }

  bool has(const std::string& key) const { return values.count(key) > 0; }

  std::string get(const std::string& key, const std::string& dflt) const {
    const auto it = values.find(key);
    return it == values.end() ? dflt : it->second;
  }

  double get_double(const std::string& key, double dflt) const {
    const auto it = values.find(key);
    if (it == values.end()) return dflt;
    try {
      return std::stod(it->second);
    } catch (...) {
      throw Error("config: bad number for " + key + ": '" + it->second + "'");
    }
  }

  long long get_int(const std::string& key, long long dflt) const {
    const auto it = values.find(key);
    if (it == values.end()) return dflt;
    try {
      return std::stoll(it->second);
    } catch (...) {
      throw Error("config: bad integer for " + key + ": '" + it->second + "'");
    }
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t dflt) const {
    return static_cast<std::uint64_t>(get_int(key, static_cast<long long>(dflt)));
  }
};

struct ExperimentConfig {
  KeyValueConfig raw;  // echoed into reports

  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";

  // dataset
  std::string dataset_kind = "corpus";  // dir | content_cites | corpus | planted
  std::filesystem::path dataset_path;
  std::filesystem::path content_path, cites_path;
  CorpusParams corpus;
  struct Planted {
    std::size_t n = 2000;
    int classes = 7;
    std::size_t feat_dim = 16;
    double noise = 0.35;
    double p_in = 0.0, p_out = 0.0;  // derived from avg_degree when zero
    double avg_degree = 10.0;
    double homophily = 0.8;
  } planted;
  std::uint64_t dataset_seed = 0;

  ModelKind model_kind = ModelKind::gcn;
  TrainConfig train;

  std::string attack = "none";  // none | sba | gta | ugba | tdgia
  AttackConfig attack_cfg;
  std::size_t num_triggers = 1;

  DefenseKind defense = DefenseKind::none;
  DefenseConfig defense_cfg;

  double eval_fraction = 0.2;
  std::uint64_t eval_seed = 0;
};

inline ExperimentConfig resolve_config(const KeyValueConfig& kv) {
  ExperimentConfig c;
  c.raw = kv;
  c.seed = kv.get_u64("seed", 0);
  c.out_dir = kv.get("out", "out");

  c.dataset_kind = kv.get("dataset.kind", "corpus");
  c.dataset_path = kv.get("dataset.path", "");
  c.content_path = kv.get("dataset.content", "");
  c.cites_path = kv.get("dataset.cites", "");
  c.dataset_seed = kv.get_u64("dataset.seed", c.seed);
  c.corpus.nodes = static_cast<std::size_t>(kv.get_int("dataset.nodes", 2708));
  c.corpus.classes = static_cast<int>(kv.get_int("dataset.classes", 7));
  c.corpus.vocab = static_cast<std::size_t>(kv.get_int("dataset.vocab", 1433));
  c.corpus.edges = static_cast<std::size_t>(kv.get_int("dataset.edges", 5278));
  c.corpus.homophily = kv.get_double("dataset.homophily", 0.72);
  c.corpus.topic_words =
      static_cast<std::size_t>(kv.get_int("dataset.topic_words", 48));
  c.corpus.p_topic = kv.get_double("dataset.p_topic", 0.048);
  c.corpus.p_background = kv.get_double("dataset.p_background", 0.011);
  c.corpus.seed = c.dataset_seed;
  c.planted.n = static_cast<std::size_t>(kv.get_int("dataset.n", 2000));
  c.planted.classes = static_cast<int>(kv.get_int("dataset.classes", 7));
  c.planted.feat_dim = static_cast<std::size_t>(kv.get_int("dataset.feat_dim", 16));
  c.planted.noise = kv.get_double("dataset.noise", 0.35);
  c.planted.p_in = kv.get_double("dataset.p_in", 0.0);
  c.planted.p_out = kv.get_double("dataset.p_out", 0.0);
  c.planted.avg_degree = kv.get_double("dataset.avg_degree", 10.0);
  c.planted.homophily = kv.get_double("dataset.homophily", 0.8);

  c.model_kind = model_kind_from_string(kv.get("model.kind", "gcn"));
  c.train.epochs = static_cast<int>(kv.get_int("train.epochs", 200));
  c.train.learning_rate = kv.get_double("train.lr", 0.05);
  c.train.weight_decay = kv.get_double("train.weight_decay", 5e-4);
  c.train.hidden_dim = static_cast<int>(kv.get_int("train.hidden", 64));
  c.train.seed = kv.get_u64("train.seed", c.seed);

  c.attack = kv.get("attack.kind", "none");
  if (c.attack != "none" && c.attack != "tdgia")
    c.attack_cfg.kind = attack_kind_from_string(c.attack);
  c.attack_cfg.target_class = static_cast<int>(kv.get_int("attack.target_class", 0));
  c.attack_cfg.poison_rate = kv.get_double("attack.poison_rate", 0.005);
  c.attack_cfg.trigger_size =
      static_cast<std::size_t>(kv.get_int("attack.trigger_size", 3));
  c.attack_cfg.trigger_density = kv.get_double("attack.density", 0.5);
  c.attack_cfg.lambda_sim = kv.get_double("attack.lambda_sim",
                                          c.attack == "ugba" ? 10.0 : 0.0);
  c.attack_cfg.opt_iters = static_cast<std::size_t>(kv.get_int("attack.opt_iters", 100));
  c.attack_cfg.seed = kv.get_u64("attack.seed", c.seed);
  c.num_triggers = static_cast<std::size_t>(kv.get_int("attack.num_triggers", 1));

  c.defense = defense_kind_from_string(kv.get("defense.kind", "none"));
  c.defense_cfg.theta_e = static_cast<std::size_t>(kv.get_int("defense.theta_e", 300));
  c.defense_cfg.theta_n = static_cast<std::size_t>(kv.get_int("defense.theta_n", 5));
  c.defense_cfg.steps = static_cast<std::size_t>(kv.get_int("defense.steps", 32));
  c.defense_cfg.prune_tau = kv.get_double("defense.prune_tau", 0.2);
  c.defense_cfg.seed = kv.get_u64("defense.seed", c.seed);
  if (kv.has("defense.beta")) c.defense_cfg.beta_override = kv.get_double("defense.beta", 0.0);
  c.defense_cfg.max_rounds =
      static_cast<std::size_t>(kv.get_int("defense.max_rounds", 0));

  c.eval_fraction = kv.get_double("eval.fraction", 0.2);
  if (!(c.eval_fraction > 0.0 && c.eval_fraction <= 1.0))
    throw Error("config: eval.fraction must be in (0,1]");
  c.eval_seed = kv.get_u64("eval.seed", c.seed);
  return c;
}

// --- Pipeline stages ----------------------------------------------------------

struct Pipeline {
  Graph graph;  // clean data
  Splits splits;
  ModelParams clean_model;
  double clean_model_acc = 0.0;

  bool backdoor = false;  // sba/gta/ugba ran
  Trigger trigger;
  Graph poisoned_graph;
  Splits poisoned_splits;
  std::vector<NodeId> poison_victims;
  ModelParams eval_model;  // poisoned model, or the clean model otherwise

  const Graph& eval_graph() const { return backdoor ? poisoned_graph : graph; }
};

namespace detail {

template <typename F>
auto stage(const std::string& name, F&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw Error("stage " + name + ": " + e.what());
  }
}

}  // namespace detail

inline std::pair<Graph, Splits> load_stage_dataset(const ExperimentConfig& c) {
  if (c.dataset_kind == "dir") {
    if (c.dataset_path.empty()) throw Error("dataset.path is required for kind=dir");
    return load_dataset(c.dataset_path);
  }
  if (c.dataset_kind == "content_cites") {
    ImportOptions opt;
    opt.seed = c.dataset_seed;
    ImportResult r = import_content_cites(c.content_path, c.cites_path, opt);
    return {std::move(r.graph), std::move(r.splits)};
  }
  if (c.dataset_kind == "corpus") {
    namespace fs = std::filesystem;
    fs::create_directories(c.out_dir);
    const fs::path content = c.out_dir / "corpus.content";
    const fs::path cites = c.out_dir / "corpus.cites";
    make_citation_corpus(content, cites, c.corpus);
    ImportOptions opt;
    opt.seed = c.dataset_seed;
    ImportResult r = import_content_cites(content, cites, opt);
    return {std::move(r.graph), std::move(r.splits)};
  }
  if (c.dataset_kind == "planted") {
    double p_in = c.planted.p_in, p_out = c.planted.p_out;
    if (p_in <= 0.0) {
      // derive from the target average degree and homophily
      const double n = static_cast<double>(c.planted.n);
      const double per_class = n / c.planted.classes;
      p_in = c.planted.homophily * c.planted.avg_degree / (per_class - 1.0);
      p_out = (1.0 - c.planted.homophily) * c.planted.avg_degree / (n - per_class);
    }
    return generate_planted_partition(c.planted.n, c.planted.classes, p_in, p_out,
                                      c.planted.feat_dim, c.planted.noise,
                                      c.dataset_seed);
  }
  throw Error("unknown dataset.kind '" + c.dataset_kind + "'");
}

inline Pipeline run_pipeline(const ExperimentConfig& c) {
  Pipeline p;
  std::tie(p.graph, p.splits) =
      detail::stage("dataset", [&] { return load_stage_dataset(c); });

  detail::stage("train-clean", [&] {
    ModelParams init = init_params(c.model_kind, p.graph.feat_dim(),
                                   c.train.hidden_dim, p.graph.num_classes,
                                   c.train.seed);
    p.clean_model = train(std::move(init), p.graph, p.splits, c.train).params;
    p.clean_model_acc = accuracy(p.clean_model, p.graph, p.splits.test);
    return 0;
  });

  if (c.attack == "sba" || c.attack == "gta" || c.attack == "ugba") {
    detail::stage("attack", [&] {
      p.backdoor = true;
      const FeatureStats stats = feature_stats(p.graph);
      if (c.attack == "sba") {
        p.trigger = make_random_trigger(stats, c.attack_cfg.trigger_size,
                                        c.attack_cfg.trigger_density,
                                        c.attack_cfg.seed);
      } else {
        TrainConfig surrogate_cfg = c.train;
        surrogate_cfg.seed = mix64(c.train.seed, 0x5a9e);
        ModelParams surrogate =
            train(init_params(c.model_kind, p.graph.feat_dim(), c.train.hidden_dim,
                              p.graph.num_classes, surrogate_cfg.seed),
                  p.graph, p.splits, surrogate_cfg)
                .params;
        const std::vector<NodeId> victims =
            select_poison_victims(p.graph.num_nodes(), p.splits, c.attack_cfg);
        p.trigger = optimize_trigger(surrogate, p.graph, victims, c.attack_cfg);
      }
      PoisonResult poisoned =
          poison_training_graph(p.graph, p.splits, p.trigger, c.attack_cfg);
      p.poisoned_graph = std::move(poisoned.graph);
      p.poisoned_splits = std::move(poisoned.splits);
      p.poison_victims = std::move(poisoned.victims);
      return 0;
    });
    detail::stage("train-poisoned", [&] {
      ModelParams init = init_params(c.model_kind, p.graph.feat_dim(),
                                     c.train.hidden_dim, p.graph.num_classes,
                                     c.train.seed);
      p.eval_model =
          train(std::move(init), p.poisoned_graph, p.poisoned_splits, c.train).params;
      if (c.attack != "sba") {
        // Adaptive deployment trigger: the attacker controls the poisoned
        // training data, so it can replicate the poisoned model and re-tune
        // the trigger it injects at prediction time against it. Tuning still
        // happens on the training-side victims only.
        AttackConfig deploy_cfg = c.attack_cfg;
        deploy_cfg.seed = mix64(c.attack_cfg.seed, 0xde91);
        p.trigger =
            optimize_trigger(p.eval_model, p.graph, p.poison_victims, deploy_cfg);
      }
      return 0;
    });
  } else {
    p.eval_model = p.clean_model;
  }
  return p;
}

// Seeded sample of test nodes used for per-node (defended) evaluation.
inline std::vector<NodeId> sample_eval_nodes(const Splits& splits, double fraction,
                                             std::uint64_t seed) {
  const std::size_t k = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(splits.test.size())));
  Rng rng(seed, /*stream=*/0xe7a1);
  std::vector<NodeId> sample = rng.sample(splits.test, std::max<std::size_t>(k, 1));
  std::sort(sample.begin(), sample.end());
  return sample;
}

using Injector = std::function<Graph(const Graph&, NodeId)>;

// ASR = fraction of victims classified as the target class after injection,
// under the given defense.
inline double attack_success_rate(const ModelParams& params, const Graph& base,
                                  std::span<const NodeId> victims,
                                  const Injector& inject, int target_class,
                                  DefenseKind defense, const DefenseConfig& cfg) {
  if (victims.empty()) throw Error("attack_success_rate: empty victim set");
  std::size_t hits = 0;
  for (NodeId v : victims) {
    const Graph attacked = inject(base, v);
    if (defended_predict(params, attacked, v, defense, cfg) == target_class) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(victims.size());
}

// --- Reports -------------------------------------------------------------------

struct ExperimentReport {
  std::optional<double> clean_model_acc;  // clean-trained baseline, full test set
  std::optional<double> clean_acc;        // evaluated model, trigger-free full test set
  std::optional<double> defended_acc;     // defense applied, trigger-free eval sample
  std::optional<double> asr_undefended;
  std::optional<double> asr_defended;
  std::optional<double> acc_triggered_undefended;  // accuracy measured on triggered samples
  std::optional<double> acc_triggered_defended;
  std::optional<double> attacked_acc_undefended;   // tdgia: accuracy under injection
  std::optional<double> attacked_acc_defended;
  std::size_t eval_sample_size = 0;
  std::size_t poison_victims = 0;
  nlohmann::json dataset_summary;

  nlohmann::json to_json(const KeyValueConfig& echo) const {
    nlohmann::json j;
    auto put = [&](const char* key, const std::optional<double>& v) {
      j["metrics"][key] = v ? nlohmann::json(*v) : nlohmann::json();
    };
    put("clean_model_acc", clean_model_acc);
    put("clean_acc", clean_acc);
    put("defended_acc", defended_acc);
    put("asr_undefended", asr_undefended);
    put("asr_defended", asr_defended);
    put("acc_triggered_undefended", acc_triggered_undefended);
    put("acc_triggered_defended", acc_triggered_defended);
    put("attacked_acc_undefended", attacked_acc_undefended);
    put("attacked_acc_defended", attacked_acc_defended);
    j["metrics"]["eval_sample_size"] = eval_sample_size;
    j["metrics"]["poison_victims"] = poison_victims;
    j["dataset"] = dataset_summary;
    j["config"] = echo.values;
    return j;
  }
};

inline nlohmann::json dataset_summary_json(const Graph& g, const Splits& s) {
  nlohmann::json j;
  j["nodes"] = g.num_nodes();
  j["edges"] = g.num_edges();
  j["feat_dim"] = g.feat_dim();
  j["classes"] = g.num_classes;
  j["avg_degree"] = 2.0 * static_cast<double>(g.num_edges()) /
                    static_cast<double>(g.num_nodes());
  j["train"] = s.train.size();
  j["val"] = s.val.size();
  j["test"] = s.test.size();
  return j;
}

// Removes the artifacts of a failed run; keeps them when committed.
class ArtifactGuard {
 public:
  void track(const std::filesystem::path& p) { paths_.push_back(p); }
  void commit() { committed_ = true; }
  ~ArtifactGuard() {
    if (committed_) return;
    for (const auto& p : paths_) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
  }

 private:
  std::vector<std::filesystem::path> paths_;
  bool committed_ = false;
};

inline Injector make_injector(const ExperimentConfig& c, const Pipeline& p) {
  if (c.attack == "tdgia") {
    return [&c, &p](const Graph& base, NodeId v) {
      return adversarial_inject(p.clean_model, base, v, c.num_triggers, c.attack_cfg);
    };
  }
  if (c.attack == "sba") {
    // universal random trigger, injected as-is
    std::vector<Trigger> triggers(c.num_triggers, p.trigger);
    return [triggers](const Graph& base, NodeId v) {
      return inject_multiple(base, v, triggers);
    };
  }
  // gta/ugba deploy adaptive triggers: the attacker re-tunes the trigger per
  // target against its replica of the poisoned model (it poisoned the
  // training data, so it can reproduce training). The victim's features and
  // neighborhood condition the result, which is what makes these attacks
  // adaptive.
  auto stats = std::make_shared<FeatureStats>(feature_stats(p.eval_graph()));
  const ModelParams model = p.eval_model;
  const AttackConfig cfg = c.attack_cfg;
  const std::size_t k = c.num_triggers;
  return [stats, model, cfg, k](const Graph& base, NodeId v) {
    AttackConfig per = cfg;
    per.seed = mix64(cfg.seed, v);
    const std::vector<NodeId> one{v};
    const Trigger t = optimize_trigger(model, base, one, per, stats.get());
    const std::vector<Trigger> triggers(k, t);
    return inject_multiple(base, v, triggers);
  };
}

// Full pipeline: data -> (attack) -> train -> metrics -> report.json plus
// metrics.csv (and audit.csv for the esage defense). Bit-deterministic given
// (config, seed); no wall-clock values are recorded.
inline ExperimentReport run_experiment(const ExperimentConfig& c) {
  namespace fs = std::filesystem;
  fs::create_directories(c.out_dir);
  ArtifactGuard guard;
  if (c.dataset_kind == "corpus") {
    guard.track(c.out_dir / "corpus.content");
    guard.track(c.out_dir / "corpus.cites");
  }

  const Pipeline p = run_pipeline(c);
  ExperimentReport report;
  report.dataset_summary = dataset_summary_json(p.graph, p.splits);
  report.clean_model_acc = p.clean_model_acc;
  report.poison_victims = p.poison_victims.size();

  const Graph& base = p.eval_graph();
  detail::stage("evaluate", [&] {
    report.clean_acc = accuracy(p.eval_model, base, p.splits.test);
    const std::vector<NodeId> sample =
        sample_eval_nodes(p.splits, c.eval_fraction, c.eval_seed);
    report.eval_sample_size = sample.size();

    std::vector<std::pair<NodeId, DefenseOutcome>> audit;
    if (c.defense != DefenseKind::none) {
      std::size_t hits = 0;
      for (NodeId u : sample) {
        int cls;
        if (c.defense == DefenseKind::esage) {
          DefenseOutcome o = esage_defend(p.eval_model, base, u, c.defense_cfg);
          cls = o.final_prediction;
          audit.emplace_back(u, std::move(o));
        } else {
          cls = defended_predict(p.eval_model, base, u, c.defense, c.defense_cfg);
        }
        if (cls == base.labels[u]) ++hits;
      }
      report.defended_acc =
          static_cast<double>(hits) / static_cast<double>(sample.size());
    }

    if (c.attack != "none") {
      const Injector injector = make_injector(c, p);
      const int y_t = c.attack_cfg.target_class;
      std::size_t asr_plain = 0, asr_def = 0, acc_plain = 0, acc_def = 0;
      for (NodeId v : sample) {
        const Graph attacked = injector(base, v);
        const int plain =
            defended_predict(p.eval_model, attacked, v, DefenseKind::none, c.defense_cfg);
        int defended = plain;
        if (c.defense != DefenseKind::none) {
          if (c.defense == DefenseKind::esage) {
            DefenseOutcome o = esage_defend(p.eval_model, attacked, v, c.defense_cfg);
            defended = o.final_prediction;
            audit.emplace_back(v, std::move(o));
          } else {
            defended = defended_predict(p.eval_model, attacked, v, c.defense, c.defense_cfg);
          }
        }
        if (plain == y_t) ++asr_plain;
        if (defended == y_t) ++asr_def;
        if (plain == base.labels[v]) ++acc_plain;
        if (defended == base.labels[v]) ++acc_def;
      }
      const double n = static_cast<double>(sample.size());
      if (c.attack == "tdgia") {
        report.attacked_acc_undefended = acc_plain / n;
        if (c.defense != DefenseKind::none) report.attacked_acc_defended = acc_def / n;
      } else {
        report.asr_undefended = asr_plain / n;
        report.acc_triggered_undefended = acc_plain / n;
        if (c.defense != DefenseKind::none) {
          report.asr_defended = asr_def / n;
          report.acc_triggered_defended = acc_def / n;
        }
      }
    }

    if (!audit.empty()) {
      const fs::path audit_path = c.out_dir / "audit.csv";
      guard.track(audit_path);
      write_audit_csv(audit_path, audit);
    }
    return 0;
  });

  detail::stage("report", [&] {
    const fs::path report_path = c.out_dir / "report.json";
    const fs::path metrics_path = c.out_dir / "metrics.csv";
    guard.track(report_path);
    guard.track(metrics_path);
    std::ofstream rj(report_path);
    rj << report.to_json(c.raw).dump(2) << '\n';
    std::ofstream mc(metrics_path);
    mc << "metric,value\n";
    auto row = [&](const char* k, const std::optional<double>& v) {
      if (v) mc << k << ',' << detail::fmt17(*v) << '\n';
    };
    row("clean_model_acc", report.clean_model_acc);
    row("clean_acc", report.clean_acc);
    row("defended_acc", report.defended_acc);
    row("asr_undefended", report.asr_undefended);
    row("asr_defended", report.asr_defended);
    row("acc_triggered_undefended", report.acc_triggered_undefended);
    row("acc_triggered_defended", report.acc_triggered_defended);
    row("attacked_acc_undefended", report.attacked_acc_undefended);
    row("attacked_acc_defended", report.attacked_acc_defended);
    mc << "eval_sample_size," << report.eval_sample_size << '\n';
    mc << "poison_victims," << report.poison_victims << '\n';
    return 0;
  });

  guard.commit();
  return report;
}

// --- Beta sweep -----------------------------------------------------------------

struct BetaPoint {
  double beta = 0.0;
  double acc = 0.0;  // defended accuracy on the trigger-free eval sample
  double asr = 0.0;  // defended ASR
};

// Re-evaluates the fixed attack scenario with sigmoid* replaced by each beta.
inline std::vector<BetaPoint> sweep_beta(const ExperimentConfig& c,
                                         std::span<const double> betas) {
  if (betas.empty()) throw Error("sweep_beta: empty beta list");
  if (c.attack == "none" || c.attack == "tdgia")
    throw Error("sweep_beta: needs a backdoor attack scenario");
  const Pipeline p = run_pipeline(c);
  const Graph& base = p.eval_graph();
  const Injector injector = make_injector(c, p);
  const std::vector<NodeId> sample =
      sample_eval_nodes(p.splits, c.eval_fraction, c.eval_seed);

  std::vector<BetaPoint> out;
  for (double beta : betas) {
    DefenseConfig cfg = c.defense_cfg;
    cfg.beta_override = beta;
    BetaPoint pt;
    pt.beta = beta;
    std::size_t hits = 0;
    for (NodeId u : sample)
      if (esage_defend(p.eval_model, base, u, cfg).final_prediction == base.labels[u])
        ++hits;
    pt.acc = static_cast<double>(hits) / static_cast<double>(sample.size());
    pt.asr = attack_success_rate(p.eval_model, base, sample, injector,
                                 c.attack_cfg.target_class, DefenseKind::esage, cfg);
    out.push_back(pt);
  }
  return out;
}

inline void write_beta_csv(const std::filesystem::path& path,
                           const std::vector<BetaPoint>& points) {
  std::ofstream out(path);
  if (!out) throw Error("write_beta_csv: cannot write " + path.string());
  out << "beta,acc,asr\n";
  for (const auto& p : points)
    out << detail::fmt17(p.beta) << ',' << detail::fmt17(p.acc) << ','
        << detail::fmt17(p.asr) << '\n';
}

// --- Runtime benchmark ------------------------------------------------------------
//
// Mean per-node defense latency with and without neighbor sampling on a
// synthetic graph, plus the paired defended ASR so the speedup can be checked
// for fidelity. Sampling is toggled by theta_e: below the typical 2-hop edge
// count versus effectively infinite. Timing runs strictly sequentially.

struct BenchRow {
  std::size_t nodes = 0;
  double mean_ms_sampled = 0.0;
  double mean_ms_unsampled = 0.0;
  double median_ms_sampled = 0.0;
  double median_ms_unsampled = 0.0;
  double reduction = 0.0;  // relative mean latency reduction
  double asr_sampled = 0.0;
  double asr_unsampled = 0.0;
};

inline BenchRow bench_runtime(const ExperimentConfig& base_config, std::size_t n) {
  ExperimentConfig c = base_config;
  c.dataset_kind = "planted";
  c.planted.n = n;
  const Pipeline p = run_pipeline(c);
  const Graph& base = p.eval_graph();
  const Injector injector = make_injector(c, p);
  std::vector<NodeId> sample = sample_eval_nodes(p.splits, c.eval_fraction, c.eval_seed);
  const std::size_t min_victims =
      static_cast<std::size_t>(c.raw.get_int("bench.victims", 100));
  if (sample.size() > min_victims) sample.resize(min_victims);

  std::vector<Graph> attacked;
  attacked.reserve(sample.size());
  for (NodeId v : sample) attacked.push_back(injector(base, v));

  DefenseConfig sampled_cfg = c.defense_cfg;
  sampled_cfg.theta_e =
      static_cast<std::size_t>(c.raw.get_int("bench.theta_on", 80));
  DefenseConfig unsampled_cfg = c.defense_cfg;
  unsampled_cfg.theta_e = std::numeric_limits<std::size_t>::max();

  BenchRow row;
  row.nodes = n;
  auto measure = [&](const DefenseConfig& cfg, double& mean_ms, double& median_ms,
                     double& asr) {
    std::vector<double> ms;
    ms.reserve(sample.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const DefenseOutcome o = esage_defend(p.eval_model, attacked[i], sample[i], cfg);
      const auto t1 = std::chrono::steady_clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      if (o.final_prediction == c.attack_cfg.target_class) ++hits;
    }
    double total = 0.0;
    for (double v : ms) total += v;
    mean_ms = total / static_cast<double>(ms.size());
    std::sort(ms.begin(), ms.end());
    median_ms = ms[ms.size() / 2];
    asr = static_cast<double>(hits) / static_cast<double>(sample.size());
  };
  measure(unsampled_cfg, row.mean_ms_unsampled, row.median_ms_unsampled,
          row.asr_unsampled);
  measure(sampled_cfg, row.mean_ms_sampled, row.median_ms_sampled, row.asr_sampled);
  row.reduction = 1.0 - row.mean_ms_sampled / row.mean_ms_unsampled;
  return row;
}

inline void write_bench_csv(const std::filesystem::path& path,
                            const std::vector<BenchRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("write_bench_csv: cannot write " + path.string());
  out << "nodes,mean_ms_sampled,mean_ms_unsampled,median_ms_sampled,"
         "median_ms_unsampled,reduction,asr_sampled,asr_unsampled\n";
  for (const auto& r : rows)
    out << r.nodes << ',' << r.mean_ms_sampled << ',' << r.mean_ms_unsampled << ','
        << r.median_ms_sampled << ',' << r.median_ms_unsampled << ',' << r.reduction
        << ',' << r.asr_sampled << ',' << r.asr_unsampled << '\n';
}

// --- Score distribution dump --------------------------------------------------

// Top-edge score and position for a clean and a triggered node population on
// the same (possibly poisoned) model; rows feed the score CSV.
inline std::vector<ScoreRow> score_distribution(const ExperimentConfig& c,
                                                const Pipeline& p) {
  const Graph& base = p.eval_graph();
  const std::vector<NodeId> sample =
      sample_eval_nodes(p.splits, c.eval_fraction, c.eval_seed);
  std::vector<ScoreRow> rows;
  const auto clean_stats = most_important_edge_stats(p.eval_model, base, sample,
                                                     c.defense_cfg.steps);
  for (const auto& st : clean_stats) rows.push_back({st, false});
  if (c.attack != "none" && c.attack != "tdgia") {
    const Injector injector = make_injector(c, p);
    for (NodeId v : sample) {
      const Graph attacked = injector(base, v);
      const std::vector<NodeId> one{v};
      const auto st = most_important_edge_stats(p.eval_model, attacked, one,
                                                c.defense_cfg.steps);
      rows.push_back({st[0], true});
    }
  }
  return rows;
}

inline std::vector<ScoreRow> emit_score_distribution(const ExperimentConfig& c) {
  const Pipeline p = run_pipeline(c);
  const auto rows = score_distribution(c, p);
  std::filesystem::create_directories(c.out_dir);
  write_score_csv(c.out_dir / "scores.csv", rows);
  return rows;
}

}  // namespace esage
