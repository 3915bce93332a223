#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ccat/cli.hpp"
#include "ccat/workbench.hpp"

using namespace ccat;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ccatlab_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Small two-Gaussians experiment so the whole pipeline runs in about a second.
std::vector<std::string> small(std::vector<std::string> args, const fs::path& out) {
  for (const char* s : {"dataset.n_train=200", "dataset.n_test=120", "dataset.n_rte=20", "dataset.n_holdout=40",
                        "train.epochs=3", "model.hidden=[8]", "attacks.0.iterations=20", "attacks.1.iterations=20",
                        "attacks.2.iterations=20", "attacks.3.iterations=20", "attacks.4.samples=20"}) {
    args.push_back("--set");
    args.push_back(s);
  }
  args.push_back("--out");
  args.push_back(out.string());
  return args;
}

}  // namespace

TEST_CASE("toy sweep row for p0 = 0.3, lambda = 0.2") {
  const fs::path dir = scratch("toy");
  const Run r = run({"toy", "--p0", "0.3", "--lambda", "0.2", "--out", dir.string()});
  REQUIRE(r.code == 0);
  const CsvTable t = read_csv(dir / "toy.csv");
  REQUIRE(t.rows.size() == 1);
  const auto& row = t.rows[0];
  CHECK(row[t.column("zero_error_condition")] == "1");
  CHECK(parse_double(row[t.column("at_error")]) == 0.3);
  CHECK(parse_double(row[t.column("ccat_error")]) == 0.0);
  CHECK(parse_double(row[t.column("at_error_numeric")]) == 0.3);
  CHECK(parse_double(row[t.column("ccat_error_numeric")]) == 0.0);
  CHECK(std::abs(parse_double(row[t.column("at_error_trained")]) - 0.3) <= 0.02);
  CHECK(parse_double(row[t.column("ccat_error_trained")]) <= 0.02);
  CHECK(r.out.find("p0,lambda") == 0);
}

TEST_CASE("toy sweep without training leaves the trained columns empty") {
  const fs::path dir = scratch("toy_nt");
  const Run r = run({"toy", "--no-train", "--p0", "0.1", "--p0", "0.5", "--lambda", "0.2", "--out", dir.string()});
  REQUIRE(r.code == 0);
  const CsvTable t = read_csv(dir / "toy.csv");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][t.column("at_error_trained")].empty());
  CHECK(t.rows[0][t.column("zero_error_condition")] == "0");
  CHECK(parse_double(t.rows[0][t.column("ccat_error")]) == 0.1);
  CHECK(parse_double(t.rows[1][t.column("ccat_error")]) == 0.0);
}

TEST_CASE("train, attack, eval and profile pipeline") {
  const fs::path dir = scratch("pipeline");
  const Run tr = run(small({"train", "--regime", "ccat", "--dataset", "two_gaussians", "--seed", "3"}, dir));
  REQUIRE_MESSAGE(tr.code == 0, tr.err);
  CHECK(fs::exists(dir / "model.bin"));
  CHECK(fs::exists(dir / "config.json"));
  const CsvTable log = read_csv(dir / "train_log.csv");
  CHECK(log.rows.size() == 3);
  const CsvTable lambdas = read_csv(dir / "lambda_log.csv");
  CHECK(lambdas.rows.size() == 3 * 100);  // half of 200 examples per epoch

  const nlohmann::json cfg = read_json(dir / "config.json");
  CHECK(cfg["seed"] == 3);
  CHECK(cfg["train"]["regime"] == "ccat");

  const Run at = run({"attack", "--model", (dir / "model.bin").string()});
  REQUIRE_MESSAGE(at.code == 0, at.err);
  const CsvTable attacks = read_csv(dir / "attack_records.csv");
  CHECK(attacks.rows.size() == 20 * 5);
  const auto records = eval_records_from_table(read_csv(dir / "eval_records.csv"));
  CHECK(records.size() == 120 - 40);
  std::size_t with_adv = 0;
  for (const auto& r : records) with_adv += r.has_adv;
  CHECK(with_adv == 20);
  CHECK(read_csv(dir / "holdout_records.csv").rows.size() == 40);

  const Run ev = run({"eval", "--records", (dir / "eval_records.csv").string(), "--holdout",
                      (dir / "holdout_records.csv").string(), "--tpr", "0.99", "--out", dir.string()});
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  const nlohmann::json m = read_json(dir / "metrics.json");
  for (const char* key : {"tau", "tpr", "te_tau", "rte_tau", "fpr", "auc", "n_records"}) CHECK(m.contains(key));
  CHECK(m["tpr"].get<double>() >= 0.99);
  CHECK(m["n_records"] == 80);

  const Run multi = run({"eval", "--records", (dir / "eval_records.csv").string(), "--tpr", "0.95", "--tpr", "0.99",
                         "--out", (dir / "multi").string()});
  REQUIRE(multi.code == 0);
  const nlohmann::json mm = read_json(dir / "multi" / "metrics.json");
  REQUIRE(mm.is_array());
  CHECK(mm.size() == 2);
  CHECK(mm[0]["target_tpr"] == 0.95);

  const Run pr = run({"profile", "--model", (dir / "model.bin").string(), "--kind", "interpolation", "--grid", "11"});
  REQUIRE_MESSAGE(pr.code == 0, pr.err);
  const CsvTable prof = read_csv(dir / "profile.csv");
  CHECK(prof.rows.size() == 11);
  CHECK(prof.header[0] == "kappa");
  for (const auto& row : prof.rows) CHECK(std::abs(parse_double(row[1]) + parse_double(row[2]) - 1.0) < 1e-12);

  const Run dirp = run({"profile", "--model", (dir / "model.bin").string(), "--kind", "direction", "--grid", "5"});
  if (dirp.code == 0) {
    CHECK(read_csv(dir / "profile.csv").header[0] == "t");
  } else {
    CHECK(dirp.err.find("delta = 0") != std::string::npos);
  }
}

TEST_CASE("eval on a fixture matches a hand count") {
  const fs::path dir = scratch("eval");
  std::ofstream(dir / "records.csv") << "example_id,y,clean_label,clean_conf,adv_label,adv_conf,attack_name\n"
                                        "0,0,0,0.9,1,0.8,a\n"
                                        "1,0,0,0.6,1,0.3,a\n"
                                        "2,1,1,0.95,1,0.97,a\n"
                                        "3,1,0,0.7,,,\n"
                                        "4,1,1,0.8,,,\n";
  const Run r = run({"eval", "--records", (dir / "records.csv").string(), "--tpr", "0.75", "--out", dir.string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const nlohmann::json m = read_json(dir / "metrics.json");
  // Correct clean confidences 0.95, 0.9, 0.8, 0.6: three of four pass at 0.8.
  CHECK(m["tau"] == 0.8);
  CHECK(m["tpr"] == 0.75);
  CHECK(m["te_tau"] == 0.0);   // accepted clean: ids 0, 2, 4, all correct
  CHECK(m["rte_tau"] == 0.5);  // attacked: id 0 counts, id 2 accepted but correct, id 1 rejected
  CHECK(m["fpr"] == 0.5);      // successful attacks on ids 0 and 1; only id 0 passes tau
  CHECK(m["n_records"] == 5);
}

TEST_CASE("usage errors exit nonzero") {
  CHECK(run({}).code != 0);
  CHECK(run({"train", "--bogus"}).code != 0);
  CHECK(run({"train", "--regime", "trades"}).code != 0);
  CHECK(run({"eval"}).code != 0);
  CHECK(run({"frobnicate"}).code != 0);
  const fs::path dir = scratch("bad");
  const Run r = run({"train", "--set", "train.nope=1", "--out", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("train.nope") != std::string::npos);
  const Run h = run({"--help"});
  CHECK(h.code == 0);
  CHECK(h.out.find("train") != std::string::npos);
}

TEST_CASE("identical runs write identical files") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  for (const fs::path& dir : {a, b}) {
    REQUIRE(run(small({"train", "--regime", "at50", "--seed", "9", "--model-format", "json"}, dir)).code == 0);
    REQUIRE(run({"attack", "--model", (dir / "model.json").string()}).code == 0);
    REQUIRE(run({"eval", "--records", (dir / "eval_records.csv").string(), "--holdout",
                 (dir / "holdout_records.csv").string(), "--out", dir.string()})
                .code == 0);
  }
  for (const char* f : {"model.json", "train_log.csv", "attack_records.csv", "eval_records.csv", "metrics.json"}) {
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  }
}
