#include "ccat/workbench.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ccat {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

namespace {

std::uint64_t parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw std::invalid_argument("not an unsigned integer: '" + s + "'");
  return v;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw std::invalid_argument("CSV has no column '" + name + "'");
}

void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  auto emit = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (fields[i].find_first_of(",\n") != std::string::npos) {
        throw std::invalid_argument("CSV field contains a separator: " + fields[i]);
      }
      if (i) out << ',';
      out << fields[i];
    }
    out << '\n';
  };
  emit(table.header);
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw std::invalid_argument("CSV row width differs from the header");
    emit(row);
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto row = split_line(line);
    if (row.size() != t.header.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(t.header.size()) + " fields, got " + std::to_string(row.size()));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

CsvTable train_log_table(const std::vector<EpochStats>& epochs) {
  CsvTable t;
  t.header = {"epoch", "mean_clean_loss", "mean_adv_loss", "mean_lambda", "train_accuracy", "lr"};
  for (const auto& e : epochs) {
    t.rows.push_back({std::to_string(e.epoch), format_double(e.mean_clean_loss),
                      e.mean_adv_loss ? format_double(*e.mean_adv_loss) : "",
                      e.mean_lambda ? format_double(*e.mean_lambda) : "", format_double(e.train_accuracy),
                      format_double(e.lr)});
  }
  return t;
}

CsvTable lambda_log_table(const std::vector<LambdaLogEntry>& entries) {
  CsvTable t;
  t.header = {"epoch", "batch", "example", "delta_linf", "lambda", "target_true", "target_other"};
  for (const auto& e : entries) {
    t.rows.push_back({std::to_string(e.epoch), std::to_string(e.batch), std::to_string(e.example),
                      format_double(e.delta_linf), format_double(e.lambda), format_double(e.target_true),
                      format_double(e.target_other)});
  }
  return t;
}

CsvTable attack_records_table(std::span<const SuiteAttack> suite,
                              const std::vector<std::vector<AttackOutcome>>& outcomes,
                              std::span<const std::uint64_t> ids) {
  if (outcomes.size() != ids.size()) throw ShapeError("attack_records_table: one id per row required");
  CsvTable t;
  t.header = {"example_id", "attack_name", "restart",   "p",       "epsilon",
              "objective",  "adv_confidence", "adv_label", "success", "delta_norm"};
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].size() != suite.size()) throw ShapeError("attack_records_table: one outcome per attack required");
    for (std::size_t a = 0; a < suite.size(); ++a) {
      const AttackOutcome& o = outcomes[i][a];
      const ThreatModel& tm = suite[a].cfg.tm;
      t.rows.push_back({std::to_string(ids[i]), suite[a].name, std::to_string(o.restart), to_string(tm.p),
                        format_double(tm.epsilon), format_double(o.objective), format_double(o.adv_confidence),
                        std::to_string(o.adv_label), o.success ? "1" : "0",
                        format_double(lp_norm(o.delta, tm.p))});
    }
  }
  return t;
}

CsvTable eval_records_table(std::span<const EvalRecord> records) {
  CsvTable t;
  t.header = {"example_id", "y", "clean_label", "clean_conf", "adv_label", "adv_conf", "attack_name"};
  for (const auto& r : records) {
    const bool adv = r.has_adv && r.adv_label && r.adv_conf;
    if (r.has_adv && !adv) throw std::invalid_argument("record promises an adversarial example but has none");
    t.rows.push_back({std::to_string(r.example_id), std::to_string(r.y), std::to_string(r.clean_label),
                      format_double(r.clean_conf), adv ? std::to_string(*r.adv_label) : "",
                      adv ? format_double(*r.adv_conf) : "", r.attack_name});
  }
  return t;
}

std::vector<EvalRecord> eval_records_from_table(const CsvTable& table) {
  const std::size_t c_id = table.column("example_id");
  const std::size_t c_y = table.column("y");
  const std::size_t c_cl = table.column("clean_label");
  const std::size_t c_cc = table.column("clean_conf");
  const std::size_t c_al = table.column("adv_label");
  const std::size_t c_ac = table.column("adv_conf");
  const std::size_t c_name = table.column("attack_name");
  std::vector<EvalRecord> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    EvalRecord r;
    r.example_id = parse_uint(row[c_id]);
    r.y = parse_uint(row[c_y]);
    r.clean_label = parse_uint(row[c_cl]);
    r.clean_conf = parse_double(row[c_cc]);
    const bool has_label = !row[c_al].empty();
    const bool has_conf = !row[c_ac].empty();
    if (has_label != has_conf) {
      throw std::invalid_argument("record " + row[c_id] + ": adv_label and adv_conf must both be set or both empty");
    }
    if (has_label) {
      r.has_adv = true;
      r.adv_label = parse_uint(row[c_al]);
      r.adv_conf = parse_double(row[c_ac]);
    }
    r.attack_name = row[c_name];
    out.push_back(std::move(r));
  }
  return out;
}

json metrics_to_json(const Metrics& m) {
  json j;
  j["tau"] = m.threshold.tau;
  j["tpr"] = m.threshold.achieved_tpr;
  j["target_tpr"] = m.threshold.target_tpr;
  j["te_tau"] = m.te.value;
  j["rte_tau"] = m.rte.value;
  j["fpr"] = m.fpr.value;
  j["auc"] = m.auc ? json(*m.auc) : json(nullptr);
  j["n_records"] = m.n_records;
  j["empty"] = {{"te_tau", m.te.empty}, {"rte_tau", m.rte.empty}, {"fpr", m.fpr.empty}};
  return j;
}

// ---------------------------------------------------------------------------

std::vector<ProfileRow> direction_profile(const Network& net, const Eigen::Ref<const Vector>& x,
                                          const Eigen::Ref<const Vector>& delta, std::size_t grid_points,
                                          double t_max) {
  if (x.size() != delta.size()) throw ShapeError("direction_profile: x and delta differ in length");
  if (grid_points < 2) throw std::invalid_argument("direction_profile: need at least two grid points");
  const double scale = lp_norm(delta, Norm::Linf);
  if (scale == 0.0) throw std::invalid_argument("direction_profile: delta must be nonzero");
  const Vector dir = delta / scale;
  std::vector<ProfileRow> rows;
  rows.reserve(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double t = t_max * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    rows.push_back({t, softmax(logits(net, x + t * dir))});
  }
  return rows;
}

std::vector<ProfileRow> interpolation_profile(const Network& net, const Eigen::Ref<const Vector>& x1,
                                              const Eigen::Ref<const Vector>& x2, std::size_t grid_points) {
  if (x1.size() != x2.size()) throw ShapeError("interpolation_profile: endpoints differ in length");
  if (grid_points < 2) throw std::invalid_argument("interpolation_profile: need at least two grid points");
  std::vector<ProfileRow> rows;
  rows.reserve(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) {
    const double k = static_cast<double>(i) / static_cast<double>(grid_points - 1);
    rows.push_back({k, softmax(logits(net, (1.0 - k) * x1 + k * x2))});
  }
  return rows;
}

CsvTable profile_table(const std::vector<ProfileRow>& rows, const std::string& position_name) {
  CsvTable t;
  t.header.push_back(position_name);
  const Eigen::Index k = rows.empty() ? 0 : rows.front().confidences.size();
  for (Eigen::Index c = 0; c < k; ++c) t.header.push_back("conf_" + std::to_string(c));
  for (const auto& r : rows) {
    std::vector<std::string> fields{format_double(r.position)};
    for (Eigen::Index c = 0; c < k; ++c) fields.push_back(format_double(r.confidences[c]));
    t.rows.push_back(std::move(fields));
  }
  return t;
}

double l2_radius_matching_linf_volume(double linf_radius, std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("dimension must be positive");
  // (2 r_inf)^d = pi^(d/2) / Gamma(d/2 + 1) * r_2^d
  const double d = static_cast<double>(dim);
  return 2.0 * linf_radius * std::exp(std::lgamma(d / 2.0 + 1.0) / d) / std::sqrt(M_PI);
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

// Reads `key` from `obj` when present; records it as consumed.
class Reader {
 public:
  Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw std::invalid_argument(where_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw std::invalid_argument(where_ + "." + key + " has the wrong type");
    }
  }

  bool has(const char* key) const { return obj_.contains(key); }
  const json* sub(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.count(k)) throw std::invalid_argument("unknown config key " + where_ + "." + k);
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

std::size_t dataset_dim(const DatasetSpec& d) {
  if (d.name == "two_gaussians") return d.dim;
  if (d.name == "mnist") return 784;
  if (d.name == "two_point") return 1;
  throw std::invalid_argument("unknown dataset: " + d.name);
}

json suite_attack_to_json(const SuiteAttack& a) {
  json j = to_json(a.cfg);
  j["name"] = a.name;
  j["kind"] = a.kind == SuiteAttack::Kind::PGD ? "pgd" : "random";
  if (a.kind == SuiteAttack::Kind::Random) j["samples"] = a.samples;
  return j;
}

SuiteAttack suite_attack_from_json(const json& j, const SuiteAttack& base) {
  if (!j.is_object()) throw std::invalid_argument("attack entries must be objects");
  SuiteAttack a = base;
  json rest = j;
  if (rest.contains("name")) a.name = rest.at("name").get<std::string>();
  if (rest.contains("kind")) {
    const auto kind = rest.at("kind").get<std::string>();
    if (kind == "pgd") {
      a.kind = SuiteAttack::Kind::PGD;
    } else if (kind == "random") {
      a.kind = SuiteAttack::Kind::Random;
    } else {
      throw std::invalid_argument("unknown attack kind: " + kind);
    }
  }
  if (rest.contains("samples")) a.samples = rest.at("samples").get<std::size_t>();
  rest.erase("name");
  rest.erase("kind");
  rest.erase("samples");
  a.cfg = attack_config_from_json(rest, a.cfg);
  return a;
}

SuiteAttack make_suite_attack(std::string name, AttackConfig cfg) {
  SuiteAttack a;
  a.name = std::move(name);
  a.cfg = std::move(cfg);
  return a;
}

}  // namespace

json to_json(const AttackConfig& c) {
  json j{{"objective", to_string(c.objective)},
         {"p", to_string(c.tm.p)},
         {"epsilon", c.tm.epsilon},
         {"iterations", c.iterations},
         {"lr", c.lr},
         {"momentum", c.momentum},
         {"lr_factor", c.lr_factor},
         {"init", to_string(c.init)},
         {"restarts", c.restarts},
         {"zero_restart", c.zero_restart},
         {"backtracking", c.backtracking},
         {"reset_momentum_on_reject", c.reset_momentum_on_reject}};
  if (c.mask) {
    std::vector<int> bits(c.mask->begin(), c.mask->end());
    j["mask"] = bits;
  }
  return j;
}

AttackConfig attack_config_from_json(const json& doc, const AttackConfig& base) {
  AttackConfig c = base;
  Reader r(doc, "attack");
  std::string s;
  if (r.has("objective")) {
    r.get("objective", s);
    c.objective = objective_from_string(s);
  }
  if (r.has("p")) {
    r.get("p", s);
    c.tm.p = norm_from_string(s);
  }
  r.get("epsilon", c.tm.epsilon);
  r.get("iterations", c.iterations);
  r.get("lr", c.lr);
  r.get("momentum", c.momentum);
  r.get("lr_factor", c.lr_factor);
  if (r.has("init")) {
    r.get("init", s);
    c.init = init_mode_from_string(s);
  }
  r.get("restarts", c.restarts);
  r.get("zero_restart", c.zero_restart);
  r.get("backtracking", c.backtracking);
  r.get("reset_momentum_on_reject", c.reset_momentum_on_reject);
  if (const json* frame = r.sub("frame")) {
    Reader f(*frame, "attack.frame");
    std::size_t h = 28, w = 28, ch = 1, border = 2;
    f.get("height", h);
    f.get("width", w);
    f.get("channels", ch);
    f.get("border", border);
    f.finish();
    c.mask = frame_mask(h, w, ch, border);
  }
  if (const json* mask = r.sub("mask")) {
    std::vector<int> bits = mask->get<std::vector<int>>();
    c.mask = std::vector<bool>(bits.begin(), bits.end());
  }
  r.finish();
  return c;
}

ExperimentConfig default_experiment(const std::string& dataset) {
  ExperimentConfig cfg;
  cfg.dataset.name = dataset;
  double eps = 0.1;
  if (dataset == "two_gaussians") {
    cfg.hidden = {32, 32};
    cfg.train.schedule = Schedule{30, 50, 0.1, 0.95};
  } else if (dataset == "mnist") {
    eps = 0.3;
    cfg.hidden = {64, 64};
    cfg.dataset.n_train = 2000;
    cfg.dataset.n_test = 1000;
    cfg.train.schedule = Schedule{20, 50, 0.1, 0.95};
  } else if (dataset == "two_point") {
    eps = 1.0;
    cfg.hidden = {};
    cfg.dataset.n_train = 100;
    cfg.dataset.n_test = 100;
    cfg.dataset.n_rte = 50;
    cfg.dataset.n_holdout = 50;
    cfg.train.schedule = Schedule{200, 100, 1.0, 0.98};
  } else {
    throw std::invalid_argument("unknown dataset: " + dataset);
  }
  const ThreatModel tm{Norm::Linf, eps};
  cfg.train.ccat = CcatConfig::defaults(eps);
  cfg.train.at_attack = AttackConfig::pgd_ce(tm);
  cfg.train.at_attack.iterations = 40;
  cfg.train.at_attack.lr = 0.005;
  cfg.train.at_attack.lr_factor = 1.5;
  cfg.train.at_attack.zero_restart = false;

  const std::size_t dim = dataset_dim(cfg.dataset);
  AttackConfig conf = AttackConfig::pgd_conf(tm);
  conf.iterations = 200;
  conf.lr = 0.005;
  AttackConfig unseen = conf;
  unseen.tm.epsilon = 4.0 / 3.0 * eps;
  AttackConfig l2 = conf;
  l2.tm = ThreatModel{Norm::L2, l2_radius_matching_linf_volume(unseen.tm.epsilon, dim)};
  l2.lr = 0.05;
  AttackConfig ce = AttackConfig::pgd_ce(tm);
  ce.iterations = 100;
  cfg.attacks = {make_suite_attack("pgd_conf_linf", conf), make_suite_attack("pgd_ce_linf", ce),
                 make_suite_attack("pgd_conf_linf_unseen", unseen), make_suite_attack("pgd_conf_l2", l2)};
  SuiteAttack random = make_suite_attack("random_linf", conf);
  random.kind = SuiteAttack::Kind::Random;
  random.samples = 200;
  cfg.attacks.push_back(random);
  return cfg;
}

void ExperimentConfig::validate() const {
  const std::size_t dim = dataset_dim(dataset);
  if (dataset.n_train < 2) throw std::invalid_argument("dataset.n_train must be >= 2");
  if (dataset.n_rte + dataset.n_holdout > dataset.n_test) {
    throw std::invalid_argument("dataset.n_rte + dataset.n_holdout exceeds dataset.n_test");
  }
  if (dataset.name == "two_gaussians" && (dataset.dim < 1 || !(dataset.sigma > 0.0))) {
    throw std::invalid_argument("two_gaussians needs dim >= 1 and sigma > 0");
  }
  if (dataset.name == "two_point" && !(dataset.p0 > 0.0 && dataset.p0 < 1.0)) {
    throw std::invalid_argument("dataset.p0 must lie in (0,1)");
  }
  if (dataset.name == "two_point" && !(dataset.epsilon > 0.0 && dataset.epsilon <= 1.0)) {
    throw std::invalid_argument("dataset.epsilon must lie in (0,1]");
  }
  if (model_format != "bin" && model_format != "json") throw std::invalid_argument("model_format must be bin or json");
  train.validate(dim);
  std::set<std::string> names;
  for (const auto& a : attacks) {
    if (a.name.empty() || a.name.find_first_of(",\n") != std::string::npos) {
      throw std::invalid_argument("attack names must be non-empty and free of commas");
    }
    if (!names.insert(a.name).second) throw std::invalid_argument("duplicate attack name: " + a.name);
    if (a.kind == SuiteAttack::Kind::Random && a.samples < 1) throw std::invalid_argument("random attack needs samples >= 1");
    try {
      a.cfg.validate(dim);
      if (!(a.cfg.tm.epsilon > 0.0) && !a.cfg.mask) throw std::invalid_argument("attack epsilon must be > 0");
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("attack " + a.name + ": " + e.what());
    }
  }
  if (tpr.empty()) throw std::invalid_argument("at least one TPR target is required");
  for (double t : tpr) {
    if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("TPR targets must lie in (0,1]");
  }
}

json to_json(const ExperimentConfig& cfg) {
  const DatasetSpec& d = cfg.dataset;
  json attacks = json::array();
  for (const auto& a : cfg.attacks) attacks.push_back(suite_attack_to_json(a));
  const CcatConfig& cc = cfg.train.ccat;
  return json{{"seed", cfg.seed},
              {"out", cfg.out},
              {"model_format", cfg.model_format},
              {"dataset",
               {{"name", d.name},
                {"n_train", d.n_train},
                {"n_test", d.n_test},
                {"n_rte", d.n_rte},
                {"n_holdout", d.n_holdout},
                {"separation", d.separation},
                {"dim", d.dim},
                {"sigma", d.sigma},
                {"p0", d.p0},
                {"epsilon", d.epsilon},
                {"images", d.images},
                {"labels", d.labels}}},
              {"model", {{"hidden", cfg.hidden}}},
              {"train",
               {{"regime", to_string(cfg.train.regime)},
                {"epochs", cfg.train.schedule.epochs},
                {"batch_size", cfg.train.schedule.batch_size},
                {"lr", cfg.train.schedule.lr},
                {"lr_decay", cfg.train.schedule.lr_decay},
                {"epsilon", cc.epsilon},
                {"rho", cc.rho},
                {"mixed_init", cc.mixed_init},
                {"at_attack", to_json(cfg.train.at_attack)},
                {"ccat_attack", to_json(cc.attack)}}},
              {"attacks", attacks},
              {"eval", {{"tpr", cfg.tpr}}}};
}

ExperimentConfig experiment_from_json(const json& doc, const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  Reader top(doc, "config");
  top.get("seed", cfg.seed);
  top.get("out", cfg.out);
  top.get("model_format", cfg.model_format);
  if (const json* d = top.sub("dataset")) {
    Reader r(*d, "dataset");
    std::string name = cfg.dataset.name;
    r.get("name", name);
    if (name != cfg.dataset.name) {
      // Switching datasets starts from that dataset's defaults.
      const ExperimentConfig fresh = default_experiment(name);
      cfg.dataset = fresh.dataset;
      cfg.hidden = fresh.hidden;
      cfg.train = fresh.train;
      cfg.attacks = fresh.attacks;
    }
    r.get("n_train", cfg.dataset.n_train);
    r.get("n_test", cfg.dataset.n_test);
    r.get("n_rte", cfg.dataset.n_rte);
    r.get("n_holdout", cfg.dataset.n_holdout);
    r.get("separation", cfg.dataset.separation);
    r.get("dim", cfg.dataset.dim);
    r.get("sigma", cfg.dataset.sigma);
    r.get("p0", cfg.dataset.p0);
    r.get("epsilon", cfg.dataset.epsilon);
    r.get("images", cfg.dataset.images);
    r.get("labels", cfg.dataset.labels);
    r.finish();
  }
  if (const json* m = top.sub("model")) {
    Reader r(*m, "model");
    r.get("hidden", cfg.hidden);
    r.finish();
  }
  if (const json* t = top.sub("train")) {
    Reader r(*t, "train");
    std::string regime = to_string(cfg.train.regime);
    r.get("regime", regime);
    cfg.train.regime = regime_from_string(regime);
    r.get("epochs", cfg.train.schedule.epochs);
    r.get("batch_size", cfg.train.schedule.batch_size);
    r.get("lr", cfg.train.schedule.lr);
    r.get("lr_decay", cfg.train.schedule.lr_decay);
    if (r.has("epsilon")) {
      // The training radius also sets both training attacks' balls unless
      // they are given explicitly below.
      double eps = cfg.train.ccat.epsilon;
      r.get("epsilon", eps);
      cfg.train.ccat.epsilon = eps;
      cfg.train.ccat.attack.tm.epsilon = eps;
      cfg.train.at_attack.tm.epsilon = eps;
    }
    r.get("rho", cfg.train.ccat.rho);
    r.get("mixed_init", cfg.train.ccat.mixed_init);
    if (const json* a = r.sub("at_attack")) cfg.train.at_attack = attack_config_from_json(*a, cfg.train.at_attack);
    if (const json* a = r.sub("ccat_attack")) cfg.train.ccat.attack = attack_config_from_json(*a, cfg.train.ccat.attack);
    r.finish();
  }
  if (const json* a = top.sub("attacks")) {
    if (!a->is_array()) throw std::invalid_argument("attacks must be an array");
    std::vector<SuiteAttack> suite;
    for (std::size_t i = 0; i < a->size(); ++i) {
      const SuiteAttack fallback = i < cfg.attacks.size() ? cfg.attacks[i] : SuiteAttack{};
      suite.push_back(suite_attack_from_json((*a)[i], fallback));
    }
    cfg.attacks = std::move(suite);
  }
  if (const json* e = top.sub("eval")) {
    Reader r(*e, "eval");
    r.get("tpr", cfg.tpr);
    r.finish();
  }
  top.finish();
  cfg.train.seed = cfg.seed;
  cfg.train.at_attack.seed = cfg.seed;
  cfg.train.ccat.attack.seed = cfg.seed;
  for (auto& a : cfg.attacks) a.cfg.seed = cfg.seed;
  return cfg;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw std::invalid_argument("override must look like path.to.key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  std::string pointer;
  std::size_t start = 0;
  while (start <= path.size()) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw std::invalid_argument("empty component in override path " + path);
    pointer += "/" + part;
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  const json::json_pointer ptr(pointer);
  if (!doc.contains(ptr)) throw std::invalid_argument("unknown config key " + path);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  doc[ptr] = value;
  // The training radius drags the training attacks' balls along.
  if (path == "train.epsilon") {
    doc["train"]["at_attack"]["epsilon"] = value;
    doc["train"]["ccat_attack"]["epsilon"] = value;
  }
}

LoadedData load_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  LoadedData out;
  if (spec.name == "two_gaussians") {
    Rng train_rng = Rng::stream(seed, Purpose::Data, {0});
    Rng test_rng = Rng::stream(seed, Purpose::Data, {1});
    out.train = make_two_gaussians(spec.n_train, spec.separation, train_rng, spec.dim, spec.sigma);
    out.test = make_two_gaussians(spec.n_test, spec.separation, test_rng, spec.dim, spec.sigma);
  } else if (spec.name == "two_point") {
    out.train = make_two_point(spec.p0, spec.epsilon, spec.n_train);
    out.test = make_two_point(spec.p0, spec.epsilon, spec.n_test);
  } else if (spec.name == "mnist") {
    const Dataset all = load_idx(spec.images, spec.labels);
    if (spec.n_train + spec.n_test > all.size()) {
      throw std::invalid_argument("MNIST file holds " + std::to_string(all.size()) + " examples, fewer than n_train + n_test");
    }
    out.train = all.slice(0, spec.n_train);
    out.test = all.slice(spec.n_train, spec.n_test);
  } else {
    throw std::invalid_argument("unknown dataset: " + spec.name);
  }
  out.train.validate();
  out.test.validate();
  return out;
}

}  // namespace ccat
