#include "ccat/training.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace ccat {

double lambda_power(double delta_linf, double epsilon, double rho) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("lambda_power: epsilon must be > 0");
  if (!(rho > 0.0)) throw std::invalid_argument("lambda_power: rho must be > 0");
  return std::pow(1.0 - std::min(1.0, delta_linf / epsilon), rho);
}

double lambda_power(const Eigen::Ref<const Vector>& delta, double epsilon, double rho) {
  return lambda_power(lp_norm(delta, Norm::Linf), epsilon, rho);
}

TargetDistribution make_target(std::size_t y, double lambda, std::size_t num_classes) {
  if (num_classes < 2) throw std::invalid_argument("make_target: need at least two classes");
  if (y >= num_classes) throw std::out_of_range("make_target: label out of range");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("make_target: lambda must be in [0,1]");
  TargetDistribution t;
  t.lambda = lambda;
  t.probs = Vector::Constant(static_cast<Eigen::Index>(num_classes), (1.0 - lambda) / static_cast<double>(num_classes));
  t.probs[static_cast<Eigen::Index>(y)] += lambda;
  return t;
}

std::string to_string(TrainRegime r) {
  switch (r) {
    case TrainRegime::Normal: return "normal";
    case TrainRegime::AT50: return "at50";
    case TrainRegime::AT100: return "at100";
    case TrainRegime::CCAT: return "ccat";
  }
  return "?";
}

TrainRegime regime_from_string(const std::string& s) {
  if (s == "normal") return TrainRegime::Normal;
  if (s == "at50") return TrainRegime::AT50;
  if (s == "at100") return TrainRegime::AT100;
  if (s == "ccat") return TrainRegime::CCAT;
  throw std::invalid_argument("unknown training regime: " + s);
}

double Schedule::lr_at(std::size_t epoch) const { return lr * std::pow(lr_decay, static_cast<double>(epoch)); }

void Schedule::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be finite and >= 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("lr_decay must be in (0,1]");
}

CcatConfig CcatConfig::defaults(double epsilon) {
  CcatConfig c;
  c.epsilon = epsilon;
  c.attack.objective = Objective::Conf;
  c.attack.tm = ThreatModel{Norm::Linf, epsilon};
  c.attack.iterations = 40;
  c.attack.lr = 0.005;
  c.attack.momentum = 0.9;
  c.attack.lr_factor = 1.5;
  c.attack.init = InitMode::Random;
  return c;
}

void CcatConfig::validate(std::size_t dim) const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("CCAT epsilon must be > 0");
  if (!(rho > 0.0)) throw std::invalid_argument("CCAT rho must be > 0");
  if (attack.tm.p != Norm::Linf) throw std::invalid_argument("CCAT trains against L-inf attacks only");
  if (attack.objective != Objective::Conf) throw std::invalid_argument("CCAT training attack must use the Conf objective");
  attack.validate(dim);
}

void TrainConfig::validate(std::size_t dim) const {
  schedule.validate();
  switch (regime) {
    case TrainRegime::Normal: break;
    case TrainRegime::AT50:
    case TrainRegime::AT100: at_attack.validate(dim); break;
    case TrainRegime::CCAT: ccat.validate(dim); break;
  }
}

double accuracy(const Network& net, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const ForwardTrace trace = forward(net, data.inputs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (argmax(trace.logits().row(static_cast<Eigen::Index>(i)).transpose()) == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

struct AdvSample {
  Vector delta;
  Vector target;
  std::optional<double> lambda;
};

// Produces the adversarial perturbation and target for one training example;
// `rng` is that example's own stream for the epoch.
using AdvMaker = std::function<AdvSample(const Vector& x, std::size_t y, Rng& rng)>;

EpochStats run_epoch(Network& net, const Dataset& data, const EpochContext& ctx, double fraction,
                     const AdvMaker& make_adv, std::vector<LambdaLogEntry>* lambda_log) {
  if (data.dim() != net.input_dim()) throw ShapeError("training data does not match the network input");
  if (data.num_classes != net.num_classes()) throw ShapeError("training data class count does not match the network");
  if (ctx.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("adversarial fraction must be in [0,1]");

  const std::size_t n = data.size();
  const auto k = static_cast<Eigen::Index>(net.num_classes());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng = Rng::stream(ctx.seed, Purpose::Shuffle, {ctx.epoch});
  shuffle_rng.shuffle(std::span<std::size_t>(order));

  EpochStats stats;
  stats.epoch = ctx.epoch;
  stats.lr = ctx.lr;
  double clean_loss = 0.0;
  double adv_loss = 0.0;
  double lambda_sum = 0.0;
  std::size_t n_clean = 0;
  std::size_t n_adv_total = 0;
  std::size_t n_lambda = 0;

  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < n; start += ctx.batch_size, ++batch_index) {
    const std::size_t b = std::min(ctx.batch_size, n - start);
    const auto n_adv = make_adv ? static_cast<std::size_t>(std::floor(fraction * static_cast<double>(b))) : 0;
    Matrix inputs(static_cast<Eigen::Index>(b), data.inputs.cols());
    Matrix targets = Matrix::Zero(static_cast<Eigen::Index>(b), k);

    for (std::size_t i = 0; i < b; ++i) {
      const std::size_t idx = order[start + i];
      const auto row = static_cast<Eigen::Index>(i);
      const std::size_t y = data.labels[idx];
      if (i < n_adv) {
        const Vector x = data.example(idx);
        Rng rng = Rng::stream(ctx.seed, Purpose::Attack, {ctx.epoch, idx});
        AdvSample adv = make_adv(x, y, rng);
        inputs.row(row) = (x + adv.delta).transpose();
        targets.row(row) = adv.target.transpose();
        if (adv.lambda) {
          lambda_sum += *adv.lambda;
          ++n_lambda;
          if (lambda_log) {
            const double other = adv.target[y == 0 ? 1 : 0];
            lambda_log->push_back({ctx.epoch, batch_index, idx, lp_norm(adv.delta, Norm::Linf), *adv.lambda,
                                   adv.target[static_cast<Eigen::Index>(y)], other});
          }
        }
      } else {
        inputs.row(row) = data.inputs.row(static_cast<Eigen::Index>(idx));
        targets(row, static_cast<Eigen::Index>(y)) = 1.0;
      }
    }

    const ForwardTrace trace = forward(net, inputs);
    const Matrix probs = softmax_rows(trace.logits());
    for (std::size_t i = 0; i < b; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double loss = cross_entropy_soft(probs.row(row).transpose(), targets.row(row).transpose()).value;
      if (!std::isfinite(loss) || loss < 0.0) throw std::domain_error("training produced an invalid loss");
      if (i < n_adv) {
        adv_loss += loss;
        ++n_adv_total;
      } else {
        clean_loss += loss;
        ++n_clean;
      }
    }
    sgd_step(net, backward(net, trace, targets, GradWrt::Params), ctx.lr);
  }

  stats.mean_clean_loss = n_clean ? clean_loss / static_cast<double>(n_clean) : 0.0;
  if (n_adv_total) stats.mean_adv_loss = adv_loss / static_cast<double>(n_adv_total);
  if (n_lambda) stats.mean_lambda = lambda_sum / static_cast<double>(n_lambda);
  stats.train_accuracy = accuracy(net, data);
  return stats;
}

}  // namespace

EpochStats train_epoch_normal(Network& net, const Dataset& data, const EpochContext& ctx) {
  return run_epoch(net, data, ctx, 0.0, {}, nullptr);
}

EpochStats train_epoch_at(Network& net, const Dataset& data, double fraction, const AttackConfig& attack,
                          const EpochContext& ctx) {
  attack.validate(data.dim());
  const std::size_t k = net.num_classes();
  AdvMaker make = [&](const Vector& x, std::size_t y, Rng& rng) {
    return AdvSample{pgd_attack(net, x, y, attack, rng).delta, one_hot(y, k), std::nullopt};
  };
  return run_epoch(net, data, ctx, fraction, make, nullptr);
}

EpochStats train_epoch_ccat(Network& net, const Dataset& data, const CcatConfig& cfg, const EpochContext& ctx,
                            std::vector<LambdaLogEntry>* lambda_log) {
  cfg.validate(data.dim());
  const std::size_t k = net.num_classes();
  AdvMaker make = [&](const Vector& x, std::size_t y, Rng& rng) {
    AttackConfig attack = cfg.attack;
    if (cfg.mixed_init) attack.init = rng.bernoulli(0.5) ? InitMode::Zero : InitMode::Random;
    Vector delta = pgd_attack(net, x, y, attack, rng).delta;
    const double lambda = lambda_power(delta, cfg.epsilon, cfg.rho);
    return AdvSample{std::move(delta), make_target(y, lambda, k).probs, lambda};
  };
  return run_epoch(net, data, ctx, 0.5, make, lambda_log);
}

TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg, bool log_lambda) {
  data.validate();
  cfg.validate(data.dim());
  TrainResult result;
  for (std::size_t e = 0; e < cfg.schedule.epochs; ++e) {
    const EpochContext ctx{e, cfg.schedule.batch_size, cfg.schedule.lr_at(e), cfg.seed};
    switch (cfg.regime) {
      case TrainRegime::Normal: result.epochs.push_back(train_epoch_normal(net, data, ctx)); break;
      case TrainRegime::AT50: result.epochs.push_back(train_epoch_at(net, data, 0.5, cfg.at_attack, ctx)); break;
      case TrainRegime::AT100: result.epochs.push_back(train_epoch_at(net, data, 1.0, cfg.at_attack, ctx)); break;
      case TrainRegime::CCAT:
        result.epochs.push_back(
            train_epoch_ccat(net, data, cfg.ccat, ctx, log_lambda ? &result.lambda_log : nullptr));
        break;
    }
  }
  return result;
}

}  // namespace ccat
