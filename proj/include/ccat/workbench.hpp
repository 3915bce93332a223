#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccat/attacks.hpp"
#include "ccat/data.hpp"
#include "ccat/evaluation.hpp"
#include "ccat/netcore.hpp"
#include "ccat/training.hpp"

namespace ccat {

// ---------------------------------------------------------------------------
// Text formats

/// Shortest-safe text for a double: 17 significant digits, '.' decimal
/// point regardless of the global locale.
std::string format_double(double v);
double parse_double(const std::string& s);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws if absent.
  std::size_t column(const std::string& name) const;
};

/// Plain comma-separated values without quoting; fields must not contain commas.
void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

CsvTable train_log_table(const std::vector<EpochStats>& epochs);
CsvTable lambda_log_table(const std::vector<LambdaLogEntry>& entries);

/// One row per (example, attack): the attack's winning restart.
CsvTable attack_records_table(std::span<const SuiteAttack> suite,
                              const std::vector<std::vector<AttackOutcome>>& outcomes,
                              std::span<const std::uint64_t> ids);

CsvTable eval_records_table(std::span<const EvalRecord> records);
/// Empty adv_label / adv_conf cells mark records without an adversarial example.
std::vector<EvalRecord> eval_records_from_table(const CsvTable& table);

nlohmann::json metrics_to_json(const Metrics& m);

// ---------------------------------------------------------------------------
// Profiles

/// Softmax output at one grid position.
struct ProfileRow {
  double position = 0.0;
  Vector confidences;
};

/// Confidences at x + t * delta / ||delta||_inf for `grid_points` values of t
/// evenly spaced on [0, t_max]. The points are not clipped to the box.
std::vector<ProfileRow> direction_profile(const Network& net, const Eigen::Ref<const Vector>& x,
                                          const Eigen::Ref<const Vector>& delta, std::size_t grid_points,
                                          double t_max);

/// Confidences at (1 - k) x1 + k x2 for k evenly spaced on [0, 1].
std::vector<ProfileRow> interpolation_profile(const Network& net, const Eigen::Ref<const Vector>& x1,
                                              const Eigen::Ref<const Vector>& x2, std::size_t grid_points);

/// Columns: position_name, conf_0, ..., conf_{K-1}.
CsvTable profile_table(const std::vector<ProfileRow>& rows, const std::string& position_name);

/// L2 radius whose ball has the same volume as the L-inf ball of radius
/// `linf_radius` in `dim` dimensions.
double l2_radius_matching_linf_volume(double linf_radius, std::size_t dim);

// ---------------------------------------------------------------------------
// Experiment configuration

struct DatasetSpec {
  std::string name = "two_gaussians";  // two_gaussians | mnist | two_point
  std::size_t n_train = 1000;
  std::size_t n_test = 1000;
  /// Attacked examples and threshold-selection examples taken from the test split.
  std::size_t n_rte = 200;
  std::size_t n_holdout = 200;
  // two_gaussians
  double separation = 6.0;
  std::size_t dim = 2;
  double sigma = 0.05;
  // two_point
  double p0 = 0.3;
  double epsilon = 1.0;
  // mnist: one image/label file pair; train = first n_train rows, test = the next n_test
  std::string images = "data/mnist5k/images-idx3-ubyte.gz";
  std::string labels = "data/mnist5k/labels-idx1-ubyte.gz";
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out = "out";
  DatasetSpec dataset;
  std::vector<std::size_t> hidden{32, 32};
  TrainConfig train;
  std::vector<SuiteAttack> attacks;
  std::vector<double> tpr{0.99};
  std::string model_format = "bin";  // bin | json

  /// Throws std::invalid_argument describing the first problem found.
  void validate() const;
};

/// Defaults for a dataset: architecture, training schedule, CCAT / AT
/// settings at the customary L-inf radius and the test attack suite.
ExperimentConfig default_experiment(const std::string& dataset);

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing fields keep the defaults of `base`; unknown keys are errors.
/// Every attack, training ones included, takes the experiment seed.
ExperimentConfig experiment_from_json(const nlohmann::json& doc, const ExperimentConfig& base);

/// Applies "a.b.c=value" (value parsed as JSON, else taken as a string).
/// The path must already exist in `doc`; array elements are addressed by index.
/// Setting train.epsilon also sets the radius of both training attacks.
void apply_override(nlohmann::json& doc, const std::string& assignment);

nlohmann::json to_json(const AttackConfig& cfg);
AttackConfig attack_config_from_json(const nlohmann::json& doc, const AttackConfig& base);

struct LoadedData {
  Dataset train;
  Dataset test;
};

/// Train and test splits for the configured dataset; synthetic sets are drawn
/// from the streams (seed, Data, {0}) and (seed, Data, {1}).
LoadedData load_dataset(const DatasetSpec& spec, std::uint64_t seed);

}  // namespace ccat
