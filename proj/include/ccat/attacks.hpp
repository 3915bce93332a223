#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccat/geometry.hpp"
#include "ccat/netcore.hpp"
#include "ccat/rng.hpp"

namespace ccat {

enum class Objective {
  CE,    // cross-entropy against the true label
  Conf,  // max_{k != y} softmax_k, or max_k when no label is given
};

std::string to_string(Objective o);
Objective objective_from_string(const std::string& s);

struct AttackConfig {
  Objective objective = Objective::Conf;
  ThreatModel tm{Norm::Linf, 0.3};
  std::size_t iterations = 1000;  // T
  double lr = 0.001;              // gamma
  double momentum = 0.9;          // beta
  double lr_factor = 1.1;         // alpha
  InitMode init = InitMode::Random;
  std::size_t restarts = 1;
  /// Run one extra restart from delta = 0 before the `restarts` regular ones.
  bool zero_restart = false;
  /// Adversarial frames: perturb only where true, box-constrained there.
  std::optional<std::vector<bool>> mask;
  /// When false every trial step is accepted (no backtracking).
  bool backtracking = true;
  bool reset_momentum_on_reject = false;
  /// Record the best-objective trace of every restart in the outcome.
  bool record_trace = false;
  std::uint64_t seed = 0;

  void validate(std::size_t dim) const;

  /// Test-time PGD-Conf: T=1000, gamma=0.001, beta=0.9, alpha=1.1, plus a
  /// zero-initialized restart.
  static AttackConfig pgd_conf(ThreatModel tm);
  /// Test-time PGD-CE: T=200, gamma=0.05, beta=0.9, alpha=1.25.
  static AttackConfig pgd_ce(ThreatModel tm);
};

inline constexpr double kMinAttackLr = 1e-10;

struct AttackOutcome {
  Vector delta;
  double objective = 0.0;
  /// max_k softmax(f(x + delta))_k
  double adv_confidence = 0.0;
  std::size_t adv_label = 0;
  /// adv_label differs from the true label (distal: confidence reached the
  /// caller's threshold).
  bool success = false;
  std::size_t iterations_used = 0;
  std::size_t restarts_used = 0;
  std::size_t restart = 0;
  bool stalled = false;
  /// Running best objective per evaluated iteration, one vector per restart.
  std::vector<std::vector<double>> best_traces;
};

double objective_ce(const Network& net, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& delta,
                    std::size_t y);

struct ConfValue {
  double value = 0.0;
  std::size_t label = 0;
};

/// max_{k != y} softmax(f(x + delta))_k with the smallest maximizing index.
ConfValue objective_conf(const Network& net, const Eigen::Ref<const Vector>& x,
                         const Eigen::Ref<const Vector>& delta, std::size_t y);

/// Objective value and its gradient with respect to the input at x + delta.
/// `label` may be empty only for the Conf objective (maximum over all classes).
struct ObjectiveEval {
  double value = 0.0;
  Vector probs;
  Vector gradient;
};
ObjectiveEval evaluate_objective(const Network& net, const Eigen::Ref<const Vector>& point, Objective objective,
                                 std::optional<std::size_t> label, bool with_gradient);

/// PGD with momentum and backtracking. Each restart draws its initialization
/// from `rng`; the restart with the highest objective is returned.
AttackOutcome pgd_attack(const Network& net, const Eigen::Ref<const Vector>& x, std::optional<std::size_t> y,
                         const AttackConfig& cfg, Rng& rng);

/// A single PGD run from the given starting perturbation.
AttackOutcome pgd_from(const Network& net, const Eigen::Ref<const Vector>& x, std::optional<std::size_t> y,
                       const AttackConfig& cfg, const Eigen::Ref<const Vector>& delta0);

/// Best of `samples` random feasible draws under the Conf objective.
AttackOutcome random_sampling_attack(const Network& net, const Eigen::Ref<const Vector>& x, std::size_t y,
                                     const ThreatModel& tm, std::size_t samples, Rng& rng);

struct DistalOutcome {
  Vector origin;  // the uniform random starting image
  AttackOutcome outcome;
};

/// Maximizes max_k f_k within the ball around x0 ~ U[0,1]^d. Success means
/// the final confidence is at least `threshold`.
DistalOutcome distal_attack(const Network& net, std::size_t dim, const AttackConfig& cfg, Rng& rng,
                            double threshold);

/// Border of width `border` in an H x W x C image stored row-major (HWC).
std::vector<bool> frame_mask(std::size_t height, std::size_t width, std::size_t channels, std::size_t border);

/// Per-example worst case: successful outcomes take precedence, then the
/// highest adv_confidence wins; ties keep the first occurrence.
const AttackOutcome& worst_case_merge(std::span<const AttackOutcome> outcomes);

/// PGD on every row of `inputs` using the stream (cfg.seed, Attack, id).
std::vector<AttackOutcome> pgd_attack_rows(const Network& net, const Matrix& inputs,
                                           std::span<const std::size_t> labels, const AttackConfig& cfg,
                                           std::span<const std::uint64_t> ids);

}  // namespace ccat
