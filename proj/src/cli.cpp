#include "ccat/cli.hpp"

#include <filesystem>
#include <map>

#include <CLI11.hpp>

#include "ccat/toymodel.hpp"
#include "ccat/workbench.hpp"

namespace ccat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Options shared by the subcommands that read an experiment configuration.
struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::string out;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;

  void attach(CLI::App& app) {
    app.add_option("--config", config, "experiment configuration (JSON)");
    app.add_option("--set", overrides, "override a config field: dotted.path=value")->take_all();
    seed_opt = app.add_option("--seed", seed, "random seed (default: CCATLAB_SEED or 0)");
    out_opt = app.add_option("--out", out, "output directory");
  }
};

// Config resolution order: dataset defaults, config file, --set overrides,
// dedicated flags.
ExperimentConfig resolve_config(const CommonOptions& common, const std::string& dataset_flag,
                                const std::string& fallback_config) {
  json file;
  const std::string config_path = !common.config.empty() ? common.config : fallback_config;
  if (!config_path.empty()) file = read_json(config_path);

  std::string dataset = "two_gaussians";
  if (file.is_object() && file.contains("dataset") && file["dataset"].contains("name")) {
    dataset = file["dataset"]["name"].get<std::string>();
  }
  if (!dataset_flag.empty()) dataset = dataset_flag;

  const ExperimentConfig base = default_experiment(dataset);
  ExperimentConfig cfg = base;
  if (file.is_object()) {
    if (!dataset_flag.empty() && file.contains("dataset")) file["dataset"]["name"] = dataset;
    cfg = experiment_from_json(file, base);
  } else if (!file.is_null()) {
    throw std::invalid_argument("configuration must be a JSON object");
  }
  cfg.seed = default_seed(cfg.seed);
  json doc = to_json(cfg);
  doc["seed"] = cfg.seed;
  for (const auto& o : common.overrides) apply_override(doc, o);
  if (common.seed_opt->count()) doc["seed"] = common.seed;
  if (common.out_opt->count()) doc["out"] = common.out;
  cfg = experiment_from_json(doc, default_experiment(doc["dataset"]["name"].get<std::string>()));
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const ExperimentConfig& cfg) {
  const fs::path out = cfg.out;
  fs::create_directories(out);
  return out;
}

Network make_network(const ExperimentConfig& cfg, const Dataset& train) {
  Rng init = Rng::stream(cfg.seed, Purpose::Init);
  return Network::mlp(train.dim(), cfg.hidden, train.num_classes, init);
}

std::string find_model(const std::string& flag, const ExperimentConfig& cfg) {
  if (!flag.empty()) return flag;
  for (const char* name : {"model.bin", "model.json"}) {
    const fs::path p = fs::path(cfg.out) / name;
    if (fs::exists(p)) return p.string();
  }
  throw std::invalid_argument("no model found in " + cfg.out + "; pass --model");
}

// config.json next to an explicitly given model file, used when --config is absent.
std::string sibling_config(const std::string& model) {
  if (model.empty()) return {};
  const fs::path p = fs::path(model).parent_path() / "config.json";
  return fs::exists(p) ? p.string() : std::string{};
}

int cmd_train(const CommonOptions& common, const std::string& regime, const std::string& dataset,
              const std::string& model_format, std::ostream& out) {
  ExperimentConfig cfg = resolve_config(common, dataset, "");
  if (!regime.empty()) cfg.train.regime = regime_from_string(regime);
  if (!model_format.empty()) cfg.model_format = model_format;
  cfg.validate();
  const fs::path dir = prepare_out(cfg);
  const LoadedData data = load_dataset(cfg.dataset, cfg.seed);
  Network net = make_network(cfg, data.train);
  const TrainResult result = train(net, data.train, cfg.train, cfg.train.regime == TrainRegime::CCAT);

  const fs::path model = dir / (cfg.model_format == "json" ? "model.json" : "model.bin");
  save_network(net, model);
  write_csv(dir / "train_log.csv", train_log_table(result.epochs));
  if (cfg.train.regime == TrainRegime::CCAT) write_csv(dir / "lambda_log.csv", lambda_log_table(result.lambda_log));
  write_json(dir / "config.json", to_json(cfg));
  out << "trained " << to_string(cfg.train.regime) << " on " << cfg.dataset.name << ": train accuracy "
      << format_double(accuracy(net, data.train)) << ", test accuracy " << format_double(accuracy(net, data.test))
      << "\nwrote " << model.string() << '\n';
  return 0;
}

int cmd_attack(const CommonOptions& common, const std::string& model_flag, std::ostream& out) {
  ExperimentConfig cfg = resolve_config(common, "", sibling_config(model_flag));
  const std::string model_path = find_model(model_flag, cfg);
  const fs::path dir = prepare_out(cfg);
  const Network net = load_network(model_path);
  const LoadedData data = load_dataset(cfg.dataset, cfg.seed);
  if (net.input_dim() != data.test.dim()) throw std::invalid_argument("model input does not match the dataset");
  const EvalSplits splits = split_test_set(data.test, cfg.dataset.n_rte, cfg.dataset.n_holdout);

  const auto rte_ids = sequential_ids(splits.eval_rte.size(), 0);
  const auto te_ids = sequential_ids(splits.eval_te.size(), splits.eval_rte.size());
  const auto holdout_ids = sequential_ids(splits.holdout.size(), data.test.size() - splits.holdout.size());

  const auto outcomes = run_attack_suite(net, splits.eval_rte, cfg.attacks, rte_ids);
  write_csv(dir / "attack_records.csv", attack_records_table(cfg.attacks, outcomes, rte_ids));

  std::vector<EvalRecord> records = merge_records(net, splits.eval_rte, cfg.attacks, outcomes, rte_ids);
  const auto te_records = clean_records(net, splits.eval_te, te_ids);
  records.insert(records.end(), te_records.begin(), te_records.end());
  write_csv(dir / "eval_records.csv", eval_records_table(records));
  write_csv(dir / "holdout_records.csv", eval_records_table(clean_records(net, splits.holdout, holdout_ids)));
  out << "attacked " << splits.eval_rte.size() << " examples with " << cfg.attacks.size() << " attacks\n";
  return 0;
}

int cmd_eval(const std::string& records_path, const std::string& holdout_path, std::vector<double> tprs,
             const std::string& out_dir, std::ostream& out) {
  if (tprs.empty()) tprs = {0.99};
  const auto records = eval_records_from_table(read_csv(records_path));
  std::vector<double> confidences;
  if (!holdout_path.empty()) {
    for (const auto& r : eval_records_from_table(read_csv(holdout_path))) {
      if (r.clean_correct()) confidences.push_back(r.clean_conf);
    }
  } else {
    for (const auto& r : records) {
      if (r.clean_correct()) confidences.push_back(r.clean_conf);
    }
  }
  if (confidences.empty()) throw std::invalid_argument("no correctly classified examples to select a threshold from");

  json doc = json::array();
  for (double tpr : tprs) {
    doc.push_back(metrics_to_json(compute_metrics(records, select_threshold(confidences, tpr))));
  }
  if (doc.size() == 1) doc = doc[0];
  fs::create_directories(out_dir);
  const fs::path path = fs::path(out_dir) / "metrics.json";
  write_json(path, doc);
  out << doc.dump(2) << '\n';
  return 0;
}

int cmd_toy(std::vector<double> p0s, std::vector<double> lambdas, bool trained, std::uint64_t seed,
            const std::string& out_dir, std::ostream& out) {
  if (p0s.empty()) p0s = {0.1, 0.3, 0.5, 0.7};
  if (lambdas.empty()) lambdas = {0.0, 0.2, 0.5};
  constexpr double kTieTolerance = 1e-2;

  CsvTable t;
  t.header = {"p0",           "lambda",       "zero_error_condition", "at_error",         "at_error_numeric",
              "at_error_trained", "ccat_error", "ccat_error_numeric",   "ccat_error_trained"};
  std::map<double, std::pair<double, double>> trained_errors;
  for (double p0 : p0s) {
    if (trained && !trained_errors.count(p0)) {
      // Training uses the power transition, whose weight at the far point is 0.
      const ToyProblem problem{p0, 1.0, 0.0};
      const double at = toy_error(train_toy_end_to_end(problem, ToyRegime::AT100, seed), p0, kTieTolerance);
      const double cc = toy_error(train_toy_end_to_end(problem, ToyRegime::CCAT, seed), p0, kTieTolerance);
      trained_errors[p0] = {at, cc};
    }
    for (double lambda : lambdas) {
      const ToyProblem problem{p0, 1.0, lambda};
      const double at = toy_error(at_optimal_params(p0), p0);
      const double at_num = toy_error(numeric_minimize_expected_loss(problem, ToyRegime::AT100), p0, 1e-6);
      const double cc = toy_error(ccat_optimal_params(p0, lambda), p0);
      const double cc_num = toy_error(numeric_minimize_expected_loss(problem, ToyRegime::CCAT), p0, 1e-6);
      t.rows.push_back({format_double(p0), format_double(lambda), ccat_zero_error_condition(p0, lambda) ? "1" : "0",
                        format_double(at), format_double(at_num),
                        trained ? format_double(trained_errors[p0].first) : "", format_double(cc),
                        format_double(cc_num), trained ? format_double(trained_errors[p0].second) : ""});
    }
  }
  fs::create_directories(out_dir);
  write_csv(fs::path(out_dir) / "toy.csv", t);
  out << t.header.front();
  for (std::size_t i = 1; i < t.header.size(); ++i) out << ',' << t.header[i];
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
  return 0;
}

int cmd_profile(const CommonOptions& common, const std::string& model_flag, const std::string& kind,
                std::size_t index, std::size_t other, std::size_t grid, double t_max, std::ostream& out) {
  ExperimentConfig cfg = resolve_config(common, "", sibling_config(model_flag));
  const std::string model_path = find_model(model_flag, cfg);
  const fs::path dir = prepare_out(cfg);
  const Network net = load_network(model_path);
  const LoadedData data = load_dataset(cfg.dataset, cfg.seed);
  if (index >= data.test.size() || other >= data.test.size()) throw std::invalid_argument("example index out of range");
  const Vector x = data.test.example(index);

  CsvTable table;
  if (kind == "direction") {
    AttackConfig attack = AttackConfig::pgd_conf(ThreatModel{Norm::Linf, cfg.train.ccat.epsilon});
    attack.iterations = 200;
    attack.lr = 0.005;
    attack.seed = cfg.seed;
    Rng rng = Rng::stream(cfg.seed, Purpose::Attack, {index});
    const AttackOutcome o = pgd_attack(net, x, data.test.labels[index], attack, rng);
    if (lp_norm(o.delta, Norm::Linf) == 0.0) throw std::runtime_error("attack returned delta = 0; no direction to profile");
    const double span = t_max > 0.0 ? t_max : 2.0 * attack.tm.epsilon;
    table = profile_table(direction_profile(net, x, o.delta, grid, span), "t");
  } else if (kind == "interpolation") {
    table = profile_table(interpolation_profile(net, x, data.test.example(other), grid), "kappa");
  } else {
    throw std::invalid_argument("profile kind must be direction or interpolation");
  }
  write_csv(dir / "profile.csv", table);
  out << "wrote " << (dir / "profile.csv").string() << " (" << table.rows.size() << " rows)\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ccatlab: confidence-calibrated adversarial training workbench", "ccatlab"};
  app.require_subcommand(1);

  CommonOptions train_common;
  std::string regime, dataset, model_format;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model and write model + training log");
  train_common.attach(*train_cmd);
  train_cmd->add_option("--regime", regime, "normal|at50|at100|ccat")
      ->check(CLI::IsMember({"normal", "at50", "at100", "ccat"}));
  train_cmd->add_option("--dataset", dataset, "two_gaussians|mnist|two_point")
      ->check(CLI::IsMember({"two_gaussians", "mnist", "two_point"}));
  train_cmd->add_option("--model-format", model_format, "bin|json")->check(CLI::IsMember({"bin", "json"}));

  CommonOptions attack_common;
  std::string attack_model;
  CLI::App* attack_cmd = app.add_subcommand("attack", "run the attack suite against a saved model");
  attack_common.attach(*attack_cmd);
  attack_cmd->add_option("--model", attack_model, "model file (default: <out>/model.bin)");

  std::string records_path, holdout_path, eval_out = ".";
  std::vector<double> tprs;
  CLI::App* eval_cmd = app.add_subcommand("eval", "thresholded metrics from an eval_records.csv file");
  eval_cmd->add_option("--records", records_path, "eval_records.csv")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--holdout", holdout_path, "records used to pick the threshold (default: --records)")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--tpr", tprs, "target TPR; repeatable")->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--out", eval_out, "output directory");

  std::vector<double> p0s, lambdas;
  bool no_train = false;
  std::uint64_t toy_seed = 0;
  std::string toy_out = ".";
  CLI::App* toy_cmd = app.add_subcommand("toy", "two-point problem sweep over p0 and lambda");
  toy_cmd->add_option("--p0", p0s, "probability of x = 0; repeatable")->check(CLI::Range(0.0, 1.0));
  toy_cmd->add_option("--lambda", lambdas, "target weight at the far point; repeatable")->check(CLI::Range(0.0, 1.0));
  toy_cmd->add_flag("--no-train", no_train, "skip end-to-end training");
  CLI::Option* toy_seed_opt = toy_cmd->add_option("--seed", toy_seed, "random seed");
  toy_cmd->add_option("--out", toy_out, "output directory");

  CommonOptions profile_common;
  std::string profile_model, kind = "direction";
  std::size_t index = 0, other = 1, grid = 101;
  double t_max = 0.0;
  CLI::App* profile_cmd = app.add_subcommand("profile", "confidence along an adversarial direction or an interpolation");
  profile_common.attach(*profile_cmd);
  profile_cmd->add_option("--model", profile_model, "model file (default: <out>/model.bin)");
  profile_cmd->add_option("--kind", kind, "direction|interpolation")->check(CLI::IsMember({"direction", "interpolation"}));
  profile_cmd->add_option("--index", index, "test example");
  profile_cmd->add_option("--other", other, "second test example for interpolation");
  profile_cmd->add_option("--grid", grid, "number of grid points")->check(CLI::Range(2, 1000000));
  profile_cmd->add_option("--t-max", t_max, "largest step along the direction (default: 2 * epsilon)");

  std::vector<const char*> argv{"ccatlab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*train_cmd) return cmd_train(train_common, regime, dataset, model_format, out);
    if (*attack_cmd) return cmd_attack(attack_common, attack_model, out);
    if (*eval_cmd) return cmd_eval(records_path, holdout_path, tprs, eval_out, out);
    if (*toy_cmd) {
      const std::uint64_t seed = toy_seed_opt->count() ? toy_seed : default_seed(0);
      return cmd_toy(p0s, lambdas, !no_train, seed, toy_out, out);
    }
    if (*profile_cmd) return cmd_profile(profile_common, profile_model, kind, index, other, grid, t_max, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace ccat
