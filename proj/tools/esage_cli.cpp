// esage: train / attack / defend / explain / eval / bench / sweep-beta
//
// Every subcommand reads the same flat `section.key = value` configuration
// (see README) from --config, then applies --set overrides, then --seed and
// --out. Exit code 0 on success; 1 with the failing stage on stderr.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "esage/esage.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  long long seed = -1;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "configuration file (key = value)");
  cmd->add_option("--set", args.overrides, "override, e.g. --set defense.theta_e=300")
      ->take_all();
  cmd->add_option("--seed", args.seed, "global seed");
  cmd->add_option("--out", args.out_dir, "output directory");
}

esage::ExperimentConfig resolve(const CommonArgs& args) {
  esage::KeyValueConfig kv;
  if (!args.config_path.empty()) kv.load_file(args.config_path);
  for (const std::string& o : args.overrides) kv.set_line(o, "--set");
  if (args.seed >= 0) kv.values["seed"] = std::to_string(args.seed);
  if (!args.out_dir.empty()) kv.values["out"] = args.out_dir;
  return esage::resolve_config(kv);
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& csv) {
  std::vector<std::size_t> out;
  for (double v : parse_double_list(csv)) out.push_back(static_cast<std::size_t>(v));
  return out;
}

int cmd_train(const CommonArgs& args) {
  esage::ExperimentConfig c = resolve(args);
  c.attack = "none";
  c.defense = esage::DefenseKind::none;
  const esage::Pipeline p = esage::run_pipeline(c);
  std::filesystem::create_directories(c.out_dir);
  const auto model_path = c.out_dir / "model.txt";
  esage::save_model(model_path, p.clean_model);
  esage::save_dataset(c.out_dir / "dataset", p.graph, p.splits);
  std::cout << "test accuracy " << p.clean_model_acc << "\n";
  std::cout << "model checkpoint " << model_path.string() << "\n";
  std::cout << "dataset " << (c.out_dir / "dataset").string() << "\n";
  return 0;
}

int cmd_attack(const CommonArgs& args) {
  esage::ExperimentConfig c = resolve(args);
  if (c.attack == "none") c.attack = "gta";
  const esage::Pipeline p = esage::run_pipeline(c);
  std::filesystem::create_directories(c.out_dir);
  if (p.backdoor) {
    esage::save_trigger(c.out_dir / "trigger.txt", p.trigger);
    esage::save_model(c.out_dir / "model_poisoned.txt", p.eval_model);
    esage::save_dataset(c.out_dir / "poisoned", p.poisoned_graph, p.poisoned_splits);
    std::cout << "poisoned " << p.poison_victims.size() << " victims toward class "
              << c.attack_cfg.target_class << "\n";
    std::cout << "trigger " << (c.out_dir / "trigger.txt").string() << "\n";
    std::cout << "poisoned model " << (c.out_dir / "model_poisoned.txt").string()
              << "\n";
  } else {
    std::cout << "attack " << c.attack << " runs at evaluation time; use eval\n";
  }
  return 0;
}

int cmd_defend(const CommonArgs& args, const std::string& data_dir,
               const std::string& model_path, const std::vector<long long>& nodes) {
  esage::ExperimentConfig c = resolve(args);
  auto [graph, splits] = esage::load_dataset(data_dir);
  const esage::ModelParams model = esage::load_model(model_path);
  std::vector<esage::NodeId> targets;
  if (nodes.empty()) {
    targets = esage::sample_eval_nodes(splits, c.eval_fraction, c.eval_seed);
  } else {
    for (long long n : nodes) targets.push_back(static_cast<esage::NodeId>(n));
  }
  std::vector<std::pair<esage::NodeId, esage::DefenseOutcome>> audit;
  for (esage::NodeId u : targets) {
    esage::DefenseOutcome o = esage::esage_defend(model, graph, u, c.defense_cfg);
    std::cout << "node " << u << ": pruned " << o.pruned_edges.size() << " edge(s) in "
              << o.rounds << " round(s), beta " << o.beta << ", prediction "
              << o.final_prediction << "\n";
    audit.emplace_back(u, std::move(o));
  }
  std::filesystem::create_directories(c.out_dir);
  esage::write_audit_csv(c.out_dir / "audit.csv", audit);
  std::cout << "audit " << (c.out_dir / "audit.csv").string() << "\n";
  return 0;
}

int cmd_explain(const CommonArgs& args) {
  const esage::ExperimentConfig c = resolve(args);
  const auto rows = esage::emit_score_distribution(c);
  std::size_t triggered = 0;
  for (const auto& r : rows) triggered += r.is_triggered ? 1 : 0;
  std::cout << rows.size() << " rows (" << triggered << " triggered) -> "
            << (c.out_dir / "scores.csv").string() << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args) {
  const esage::ExperimentConfig c = resolve(args);
  const esage::ExperimentReport r = esage::run_experiment(c);
  std::cout << r.to_json(c.raw)["metrics"].dump(2) << "\n";
  std::cout << "report " << (c.out_dir / "report.json").string() << "\n";
  return 0;
}

int cmd_bench(const CommonArgs& args, const std::string& sizes_csv) {
  esage::ExperimentConfig c = resolve(args);
  if (c.attack == "none") c.attack = "gta";
  if (c.defense == esage::DefenseKind::none) c.defense = esage::DefenseKind::esage;
  const std::vector<std::size_t> sizes =
      parse_size_list(c.raw.get("bench.sizes", sizes_csv));
  std::vector<esage::BenchRow> rows;
  for (std::size_t n : sizes) {
    const esage::BenchRow row = esage::bench_runtime(c, n);
    std::printf("n=%zu  sampled %.3f ms  unsampled %.3f ms  reduction %.1f%%  "
                "asr %.3f vs %.3f\n",
                row.nodes, row.mean_ms_sampled, row.mean_ms_unsampled,
                100.0 * row.reduction, row.asr_sampled, row.asr_unsampled);
    rows.push_back(row);
  }
  std::filesystem::create_directories(c.out_dir);
  esage::write_bench_csv(c.out_dir / "bench.csv", rows);
  std::cout << "bench " << (c.out_dir / "bench.csv").string() << "\n";
  return 0;
}

int cmd_sweep_beta(const CommonArgs& args, const std::string& betas_csv) {
  esage::ExperimentConfig c = resolve(args);
  if (c.attack == "none") c.attack = "gta";
  const std::vector<double> betas = parse_double_list(betas_csv);
  const std::vector<esage::BetaPoint> points = esage::sweep_beta(c, betas);
  for (const auto& p : points)
    std::printf("beta %.3f  acc %.4f  asr %.4f\n", p.beta, p.acc, p.asr);
  std::filesystem::create_directories(c.out_dir);
  esage::write_beta_csv(c.out_dir / "sweep_beta.csv", points);
  std::cout << "sweep " << (c.out_dir / "sweep_beta.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"E-SAGE workbench: explainability-based defense against "
               "subgraph-insertion attacks on GNNs"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string data_dir, model_path;
  std::vector<long long> nodes;
  std::string sizes_csv = "20000";
  std::string betas_csv = "0.3,0.5,0.7,0.9,1.01";

  CLI::App* train = app.add_subcommand("train", "train a clean model");
  add_common(train, args);
  CLI::App* attack = app.add_subcommand("attack", "build a trigger and poison a model");
  add_common(attack, args);
  CLI::App* defend = app.add_subcommand("defend", "run the defense on chosen nodes");
  add_common(defend, args);
  defend->add_option("--data", data_dir, "canonical dataset directory")->required();
  defend->add_option("--model", model_path, "model checkpoint")->required();
  defend->add_option("--node", nodes, "target node id(s)")->take_all();
  CLI::App* explain = app.add_subcommand("explain", "dump the score distribution CSV");
  add_common(explain, args);
  CLI::App* eval = app.add_subcommand("eval", "full experiment pipeline");
  add_common(eval, args);
  CLI::App* bench = app.add_subcommand("bench", "sampling speedup benchmark");
  add_common(bench, args);
  bench->add_option("--sizes", sizes_csv, "comma-separated synthetic graph sizes");
  CLI::App* sweep = app.add_subcommand("sweep-beta", "ASR/ACC as a function of beta");
  add_common(sweep, args);
  sweep->add_option("--betas", betas_csv, "comma-separated beta values");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(args);
    if (attack->parsed()) return cmd_attack(args);
    if (defend->parsed()) return cmd_defend(args, data_dir, model_path, nodes);
    if (explain->parsed()) return cmd_explain(args);
    if (eval->parsed()) return cmd_eval(args);
    if (bench->parsed()) return cmd_bench(args, sizes_csv);
    if (sweep->parsed()) return cmd_sweep_beta(args, betas_csv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
