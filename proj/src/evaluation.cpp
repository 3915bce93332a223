#include "ccat/evaluation.hpp"

#include <algorithm>
#include <cmath>

namespace ccat {

bool EvalRecord::adv_success() const {
  if (!has_adv) return false;
  if (!adv_label || !adv_conf) {
    throw std::invalid_argument("record " + std::to_string(example_id) + " promises an adversarial example but has none");
  }
  return *adv_label != y;
}

Ratio Ratio::of(std::size_t num, std::size_t den) {
  Ratio r;
  r.numerator = num;
  r.denominator = den;
  r.empty = den == 0;
  r.value = r.empty ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  return r;
}

ThresholdReport select_threshold(std::span<const double> confidences, double target_tpr) {
  if (confidences.empty()) throw std::invalid_argument("select_threshold: no confidences");
  if (!(target_tpr > 0.0 && target_tpr <= 1.0)) throw std::invalid_argument("select_threshold: target TPR must be in (0,1]");
  std::vector<double> sorted(confidences.begin(), confidences.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const std::size_t m = sorted.size();
  const double md = static_cast<double>(m);

  // Smallest k with k / M >= target; the ceil estimate is corrected against
  // the same comparison the definition uses.
  auto k = static_cast<std::size_t>(std::ceil(target_tpr * md));
  k = std::clamp<std::size_t>(k, 1, m);
  while (k > 1 && static_cast<double>(k - 1) / md >= target_tpr) --k;
  while (k < m && static_cast<double>(k) / md < target_tpr) ++k;

  ThresholdReport rep;
  rep.tau = sorted[k - 1];
  rep.target_tpr = target_tpr;
  rep.holdout_size = m;
  const auto passing = static_cast<std::size_t>(std::count_if(sorted.begin(), sorted.end(), [&](double c) { return c >= rep.tau; }));
  rep.achieved_tpr = static_cast<double>(passing) / md;
  return rep;
}

std::vector<double> correct_confidences(const Network& net, const Dataset& data) {
  std::vector<double> out;
  if (data.size() == 0) return out;
  const Matrix probs = softmax_rows(forward(net, data.inputs).logits());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector p = probs.row(static_cast<Eigen::Index>(i)).transpose();
    const std::size_t label = argmax(p);
    if (label == data.labels[i]) out.push_back(p[static_cast<Eigen::Index>(label)]);
  }
  return out;
}

Ratio conf_thresholded_te(std::span<const EvalRecord> records, double tau) {
  std::size_t num = 0;
  std::size_t den = 0;
  for (const auto& r : records) {
    if (r.clean_conf < tau) continue;
    ++den;
    if (!r.clean_correct()) ++num;
  }
  return Ratio::of(num, den);
}

Ratio conf_thresholded_rte(std::span<const EvalRecord> records, double tau) {
  std::size_t num = 0;
  std::size_t den = 0;
  for (const auto& r : records) {
    const bool clean_in = r.clean_conf >= tau;
    const bool adv_wrong = r.adv_success();
    const bool adv_in = r.has_adv && *r.adv_conf >= tau;
    if (clean_in || adv_in) ++den;
    if ((clean_in && !r.clean_correct()) || (adv_in && adv_wrong)) ++num;
  }
  return Ratio::of(num, den);
}

Ratio fpr_at_threshold(std::span<const EvalRecord> records, double tau) {
  std::size_t num = 0;
  std::size_t den = 0;
  for (const auto& r : records) {
    if (!r.clean_correct() || !r.adv_success()) continue;
    ++den;
    if (*r.adv_conf >= tau) ++num;
  }
  return Ratio::of(num, den);
}

double roc_auc(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) throw std::invalid_argument("roc_auc: both classes must be non-empty");
  std::vector<double> pos(positives.begin(), positives.end());
  std::vector<double> neg(negatives.begin(), negatives.end());
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  // For each positive, count negatives strictly below and equal to it.
  std::uint64_t greater = 0;
  std::uint64_t equal = 0;
  std::size_t lo = 0;
  std::size_t hi = 0;
  for (double p : pos) {
    while (lo < neg.size() && neg[lo] < p) ++lo;
    hi = std::max(hi, lo);
    while (hi < neg.size() && neg[hi] == p) ++hi;
    greater += lo;
    equal += hi - lo;
  }
  const std::uint64_t pairs = static_cast<std::uint64_t>(pos.size()) * neg.size();
  return static_cast<double>(2 * greater + equal) / static_cast<double>(2 * pairs);
}

std::vector<std::uint64_t> sequential_ids(std::size_t n, std::uint64_t first) {
  std::vector<std::uint64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = first + i;
  return ids;
}

std::vector<std::vector<AttackOutcome>> run_attack_suite(const Network& net, const Dataset& data,
                                                         std::span<const SuiteAttack> suite,
                                                         std::span<const std::uint64_t> ids) {
  if (ids.size() != data.size()) throw ShapeError("run_attack_suite: one id per example required");
  std::vector<std::vector<AttackOutcome>> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector x = data.example(i);
    out[i].reserve(suite.size());
    for (std::size_t a = 0; a < suite.size(); ++a) {
      const SuiteAttack& atk = suite[a];
      Rng rng = Rng::stream(atk.cfg.seed, Purpose::Attack, {a, ids[i]});
      if (atk.kind == SuiteAttack::Kind::PGD) {
        out[i].push_back(pgd_attack(net, x, data.labels[i], atk.cfg, rng));
      } else {
        out[i].push_back(random_sampling_attack(net, x, data.labels[i], atk.cfg.tm, atk.samples, rng));
      }
    }
  }
  return out;
}

std::vector<EvalRecord> clean_records(const Network& net, const Dataset& data,
                                      std::span<const std::uint64_t> ids) {
  if (ids.size() != data.size()) throw ShapeError("clean_records: one id per example required");
  std::vector<EvalRecord> out;
  out.reserve(data.size());
  if (data.size() == 0) return out;
  const Matrix probs = softmax_rows(forward(net, data.inputs).logits());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector p = probs.row(static_cast<Eigen::Index>(i)).transpose();
    EvalRecord r;
    r.example_id = ids[i];
    r.y = data.labels[i];
    r.clean_label = argmax(p);
    r.clean_conf = p[static_cast<Eigen::Index>(r.clean_label)];
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<EvalRecord> merge_records(const Network& net, const Dataset& data,
                                      std::span<const SuiteAttack> suite,
                                      const std::vector<std::vector<AttackOutcome>>& outcomes,
                                      std::span<const std::uint64_t> ids) {
  std::vector<EvalRecord> records = clean_records(net, data, ids);
  if (suite.empty()) return records;
  if (outcomes.size() != records.size()) throw ShapeError("merge_records: outcome rows do not match the data");
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (outcomes[i].size() != suite.size()) throw ShapeError("merge_records: one outcome per attack required");
    const AttackOutcome& worst = worst_case_merge(outcomes[i]);
    const auto which = static_cast<std::size_t>(&worst - outcomes[i].data());
    records[i].has_adv = true;
    records[i].adv_label = worst.adv_label;
    records[i].adv_conf = worst.adv_confidence;
    records[i].attack_name = suite[which].name;
  }
  return records;
}

std::vector<EvalRecord> build_eval_records(const Network& net, const Dataset& data,
                                           std::span<const SuiteAttack> suite,
                                           std::span<const std::uint64_t> ids) {
  return merge_records(net, data, suite, run_attack_suite(net, data, suite, ids), ids);
}

Metrics compute_metrics(std::span<const EvalRecord> records, const ThresholdReport& threshold) {
  Metrics m;
  m.threshold = threshold;
  m.n_records = records.size();
  const double tau = threshold.tau;
  m.te = conf_thresholded_te(records, tau);

  std::vector<EvalRecord> attacked;
  std::vector<double> positives;
  std::vector<double> negatives;
  for (const auto& r : records) {
    if (!r.has_adv) continue;
    attacked.push_back(r);
    if (!r.clean_correct()) continue;
    positives.push_back(r.clean_conf);
    if (r.adv_success()) negatives.push_back(*r.adv_conf);
  }
  m.rte = conf_thresholded_rte(attacked, tau);
  m.fpr = fpr_at_threshold(attacked, tau);
  if (!positives.empty() && !negatives.empty()) m.auc = roc_auc(positives, negatives);
  return m;
}

}  // namespace ccat
