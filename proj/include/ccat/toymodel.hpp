#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "ccat/netcore.hpp"

namespace ccat {

// Two-point problem: x = 0 with probability p0 and label "class 2" (index 1),
// x = epsilon with probability 1 - p0 and label "class 1" (index 0). A
// two-logit model is summarized by the logit gaps
//   a = g_0(0) - g_1(0),   b = g_0(epsilon) - g_1(epsilon).

struct ToyProblem {
  double p0 = 0.5;
  double epsilon = 1.0;
  /// Target weight lambda(epsilon) given to the true class by CCAT at the far point.
  double lambda_eps = 0.0;

  void validate() const;
};

struct ToyParams {
  double a = 0.0;
  double b = 0.0;
};

enum class ToyRegime { AT100, AT50, CCAT };

std::string to_string(ToyRegime r);

/// a = b = log((1 - p0) / p0), the optimum of both adversarial training variants.
ToyParams at_optimal_params(double p0);

/// Closed-form CCAT optimum. Throws std::invalid_argument for lambda = 1,
/// where the problem degenerates to adversarial training.
ToyParams ccat_optimal_params(double p0, double lambda);

/// Classification error of the sign rule. An exact tie goes to index 0, so
/// x = 0 is misclassified iff a >= 0 and x = epsilon iff b < 0. Gaps with
/// |gap| <= tie_tolerance are treated as exact ties.
double toy_error(const ToyParams& params, double p0, double tie_tolerance = 0.0);

/// lambda < min(p0 / (1 - p0), (1 - p0) / p0).
bool ccat_zero_error_condition(double p0, double lambda);

/// Exact expected training loss of each regime as a function of (a, b).
double toy_expected_loss(const ToyProblem& problem, ToyRegime regime, const ToyParams& params);

/// Gradient of toy_expected_loss; at a max kink (a == b) the two branch
/// gradients are averaged. The CCAT attack branch uses a >= b at equality.
ToyParams toy_expected_loss_gradient(const ToyProblem& problem, ToyRegime regime, const ToyParams& params);

struct ToyNonConvergence : std::runtime_error {
  ToyNonConvergence(const std::string& what, ToyParams last) : std::runtime_error(what), last_iterate(last) {}
  ToyParams last_iterate;
};

struct ToyMinimizerOptions {
  double step = 1.0;
  double gradient_tolerance = 1e-8;
  std::size_t max_steps = 100000;
};

/// Gradient descent from a = b = 0 on the exact expected loss. Throws
/// ToyNonConvergence with the last iterate if the tolerance is not reached.
ToyParams numeric_minimize_expected_loss(const ToyProblem& problem, ToyRegime regime,
                                         const ToyMinimizerOptions& options = {});

/// Logit gaps of a 1-input, 2-logit network at x = 0 and x = epsilon.
ToyParams toy_params_of(const Network& net, double epsilon);

struct ToyTrainOptions {
  std::size_t samples = 100;
  std::size_t epochs = 200;
  double lr = 1.0;
  double lr_decay = 0.98;
  /// Inner attack used during training; the ball covers the whole segment.
  std::size_t attack_iterations = 10;
  double attack_lr = 0.5;
  double rho = 10.0;
};

/// Trains a single linear layer 1 -> 2 on make_two_point(p0, epsilon) with the
/// real training loops (AT100, AT50 or CCAT) and returns its logit gaps.
ToyParams train_toy_end_to_end(const ToyProblem& problem, ToyRegime regime, std::uint64_t seed,
                               const ToyTrainOptions& options = {});

}  // namespace ccat
