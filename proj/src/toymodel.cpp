#include "ccat/toymodel.hpp"

#include <algorithm>
#include <cmath>

#include "ccat/data.hpp"
#include "ccat/training.hpp"

namespace ccat {

namespace {

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_p0(double p0) {
  if (!(p0 > 0.0 && p0 < 1.0)) throw std::invalid_argument("p0 must lie in (0,1)");
}

}  // namespace

void ToyProblem::validate() const {
  check_p0(p0);
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("toy epsilon must be > 0");
  if (!(lambda_eps >= 0.0 && lambda_eps <= 1.0)) throw std::invalid_argument("toy lambda must lie in [0,1]");
}

std::string to_string(ToyRegime r) {
  switch (r) {
    case ToyRegime::AT100: return "at100";
    case ToyRegime::AT50: return "at50";
    case ToyRegime::CCAT: return "ccat";
  }
  return "?";
}

ToyParams at_optimal_params(double p0) {
  check_p0(p0);
  const double t = std::log((1.0 - p0) / p0);
  return {t, t};
}

ToyParams ccat_optimal_params(double p0, double lambda) {
  check_p0(p0);
  if (!(lambda >= 0.0 && lambda < 1.0)) {
    throw std::invalid_argument("ccat_optimal_params: lambda must lie in [0,1); lambda = 1 is plain adversarial training");
  }
  const double hi = (1.0 + lambda) / 2.0;
  const double lo = (1.0 - lambda) / 2.0;
  return {std::log(hi * (1.0 - p0) / (p0 + lo * (1.0 - p0))), std::log((lo * p0 + (1.0 - p0)) / (hi * p0))};
}

double toy_error(const ToyParams& params, double p0, double tie_tolerance) {
  check_p0(p0);
  const double a = std::abs(params.a) <= tie_tolerance ? 0.0 : params.a;
  const double b = std::abs(params.b) <= tie_tolerance ? 0.0 : params.b;
  return (a >= 0.0 ? p0 : 0.0) + (b < 0.0 ? 1.0 - p0 : 0.0);
}

bool ccat_zero_error_condition(double p0, double lambda) {
  check_p0(p0);
  return lambda < std::min(p0 / (1.0 - p0), (1.0 - p0) / p0);
}

double toy_expected_loss(const ToyProblem& problem, ToyRegime regime, const ToyParams& params) {
  problem.validate();
  const double p0 = problem.p0;
  const double q0 = 1.0 - p0;
  const double a = params.a;
  const double b = params.b;
  const double clean = p0 * softplus(a) + q0 * softplus(-b);
  switch (regime) {
    case ToyRegime::AT100:
      return p0 * std::max(softplus(a), softplus(b)) + q0 * std::max(softplus(-a), softplus(-b));
    case ToyRegime::AT50:
      return p0 * std::max(softplus(a), softplus(b)) + q0 * std::max(softplus(-a), softplus(-b)) + clean;
    case ToyRegime::CCAT: {
      const double hi = (1.0 + problem.lambda_eps) / 2.0;
      const double lo = (1.0 - problem.lambda_eps) / 2.0;
      if (a >= b) return p0 * softplus(a) + q0 * softplus(-b) + clean;
      return p0 * (hi * softplus(b) + lo * softplus(-b)) + q0 * (hi * softplus(-a) + lo * softplus(a)) + clean;
    }
  }
  return 0.0;
}

ToyParams toy_expected_loss_gradient(const ToyProblem& problem, ToyRegime regime, const ToyParams& params) {
  problem.validate();
  const double p0 = problem.p0;
  const double q0 = 1.0 - p0;
  const double a = params.a;
  const double b = params.b;
  ToyParams g;

  auto add_adversarial_max = [&] {
    // p0 * max{s(a), s(b)}: the larger gap wins.
    const double wa = a > b ? 1.0 : (a < b ? 0.0 : 0.5);
    g.a += p0 * wa * sigmoid(a);
    g.b += p0 * (1.0 - wa) * sigmoid(b);
    // q0 * max{s(-a), s(-b)}: the smaller gap wins.
    const double va = a < b ? 1.0 : (a > b ? 0.0 : 0.5);
    g.a -= q0 * va * sigmoid(-a);
    g.b -= q0 * (1.0 - va) * sigmoid(-b);
  };
  auto add_clean = [&] {
    g.a += p0 * sigmoid(a);
    g.b -= q0 * sigmoid(-b);
  };

  switch (regime) {
    case ToyRegime::AT100: add_adversarial_max(); break;
    case ToyRegime::AT50:
      add_adversarial_max();
      add_clean();
      break;
    case ToyRegime::CCAT: {
      const double hi = (1.0 + problem.lambda_eps) / 2.0;
      const double lo = (1.0 - problem.lambda_eps) / 2.0;
      if (a >= b) {
        add_clean();
      } else {
        g.b += p0 * (hi * sigmoid(b) - lo * sigmoid(-b));
        g.a += q0 * (lo * sigmoid(a) - hi * sigmoid(-a));
      }
      add_clean();
      break;
    }
  }
  return g;
}

ToyParams numeric_minimize_expected_loss(const ToyProblem& problem, ToyRegime regime,
                                         const ToyMinimizerOptions& options) {
  problem.validate();
  if (!(options.step > 0.0)) throw std::invalid_argument("minimizer step must be > 0");
  ToyParams x;
  for (std::size_t i = 0; i < options.max_steps; ++i) {
    const ToyParams g = toy_expected_loss_gradient(problem, regime, x);
    if (std::hypot(g.a, g.b) < options.gradient_tolerance) return x;
    x.a -= options.step * g.a;
    x.b -= options.step * g.b;
    if (!std::isfinite(x.a) || !std::isfinite(x.b)) break;
  }
  throw ToyNonConvergence("expected-loss minimizer did not converge for " + to_string(regime) +
                              " at p0=" + std::to_string(problem.p0),
                          x);
}

ToyParams toy_params_of(const Network& net, double epsilon) {
  if (net.input_dim() != 1 || net.num_classes() != 2) throw ShapeError("toy network must map 1 input to 2 logits");
  Vector x(1);
  x[0] = 0.0;
  const Vector g0 = logits(net, x);
  x[0] = epsilon;
  const Vector g1 = logits(net, x);
  return {g0[0] - g0[1], g1[0] - g1[1]};
}

ToyParams train_toy_end_to_end(const ToyProblem& problem, ToyRegime regime, std::uint64_t seed,
                               const ToyTrainOptions& options) {
  problem.validate();
  const Dataset data = make_two_point(problem.p0, problem.epsilon, options.samples);
  Rng init = Rng::stream(seed, Purpose::Init);
  Network net = Network::mlp(1, {}, 2, init);

  TrainConfig cfg;
  cfg.seed = seed;
  cfg.schedule = Schedule{options.epochs, options.samples, options.lr, options.lr_decay};
  const ThreatModel tm{Norm::Linf, problem.epsilon};
  switch (regime) {
    case ToyRegime::AT100: cfg.regime = TrainRegime::AT100; break;
    case ToyRegime::AT50: cfg.regime = TrainRegime::AT50; break;
    case ToyRegime::CCAT: cfg.regime = TrainRegime::CCAT; break;
  }
  cfg.at_attack = AttackConfig::pgd_ce(tm);
  cfg.at_attack.iterations = options.attack_iterations;
  cfg.at_attack.lr = options.attack_lr;
  cfg.ccat = CcatConfig::defaults(problem.epsilon);
  cfg.ccat.rho = options.rho;
  cfg.ccat.attack.iterations = options.attack_iterations;
  cfg.ccat.attack.lr = options.attack_lr;

  train(net, data, cfg);
  return toy_params_of(net, problem.epsilon);
}

}  // namespace ccat
