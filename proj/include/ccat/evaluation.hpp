#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccat/attacks.hpp"
#include "ccat/data.hpp"
#include "ccat/netcore.hpp"

namespace ccat {

/// Clean and worst-case adversarial prediction for one test example.
struct EvalRecord {
  std::uint64_t example_id = 0;
  std::size_t y = 0;
  std::size_t clean_label = 0;
  double clean_conf = 0.0;
  /// When set, adv_label and adv_conf must be present.
  bool has_adv = false;
  std::optional<std::size_t> adv_label;
  std::optional<double> adv_conf;
  std::string attack_name;

  bool clean_correct() const { return clean_label == y; }
  /// Adversarial prediction differs from the label. Throws if has_adv is set
  /// but the adversarial fields are missing.
  bool adv_success() const;
};

/// numerator / denominator, or 0 with `empty` set when nothing qualifies.
struct Ratio {
  std::size_t numerator = 0;
  std::size_t denominator = 0;
  double value = 0.0;
  bool empty = true;

  static Ratio of(std::size_t num, std::size_t den);
};

struct ThresholdReport {
  double tau = 0.0;
  double target_tpr = 0.0;
  double achieved_tpr = 0.0;
  std::size_t holdout_size = 0;
};

/// tau is the k-th largest confidence where k is the smallest count with
/// k / M >= target_tpr. Throws on an empty list or target outside (0,1].
ThresholdReport select_threshold(std::span<const double> confidences, double target_tpr);

/// Confidences of the correctly classified examples in `data`.
std::vector<double> correct_confidences(const Network& net, const Dataset& data);

/// Errors among accepted clean inputs: c(x) >= tau and f(x) != y.
Ratio conf_thresholded_te(std::span<const EvalRecord> records, double tau);

/// Numerator counts (f(x) != y and c(x) >= tau) or (f(x~) != y and c(x~) >= tau);
/// denominator counts c(x) >= tau or c(x~) >= tau. Records without an
/// adversarial example contribute their clean terms only.
Ratio conf_thresholded_rte(std::span<const EvalRecord> records, double tau);

/// Among correctly classified records whose attack succeeded, the fraction
/// with c(x~) >= tau.
Ratio fpr_at_threshold(std::span<const EvalRecord> records, double tau);

/// Mann-Whitney statistic P(pos > neg) + 0.5 P(pos = neg), evaluated from
/// exact pair counts as (2 greater + equal) / (2 n m).
double roc_auc(std::span<const double> positives, std::span<const double> negatives);

/// One entry of an attack suite.
struct SuiteAttack {
  enum class Kind { PGD, Random };
  std::string name;
  Kind kind = Kind::PGD;
  AttackConfig cfg;
  /// Draws for Kind::Random.
  std::size_t samples = 1000;
};

/// Outcomes of every suite attack on every row; result[i][a] is attack a on
/// row i. Attack a on example id uses the stream (cfg.seed, Attack, {a, id}).
std::vector<std::vector<AttackOutcome>> run_attack_suite(const Network& net, const Dataset& data,
                                                         std::span<const SuiteAttack> suite,
                                                         std::span<const std::uint64_t> ids);

/// Clean-only records (has_adv = false).
std::vector<EvalRecord> clean_records(const Network& net, const Dataset& data,
                                      std::span<const std::uint64_t> ids);

/// Clean predictions plus the worst case over all suite outcomes.
std::vector<EvalRecord> merge_records(const Network& net, const Dataset& data,
                                      std::span<const SuiteAttack> suite,
                                      const std::vector<std::vector<AttackOutcome>>& outcomes,
                                      std::span<const std::uint64_t> ids);

/// run_attack_suite followed by merge_records. An empty suite yields clean records.
std::vector<EvalRecord> build_eval_records(const Network& net, const Dataset& data,
                                           std::span<const SuiteAttack> suite,
                                           std::span<const std::uint64_t> ids);

/// Consecutive ids first, first + 1, ...
std::vector<std::uint64_t> sequential_ids(std::size_t n, std::uint64_t first = 0);

struct Metrics {
  ThresholdReport threshold;
  Ratio te;
  Ratio rte;
  Ratio fpr;
  /// Clean correct confidences against successful adversarial confidences;
  /// empty when either side is.
  std::optional<double> auc;
  std::size_t n_records = 0;
};

/// TE over all records; RTE, FPR and AUC over the records with has_adv.
Metrics compute_metrics(std::span<const EvalRecord> records, const ThresholdReport& threshold);

}  // namespace ccat
