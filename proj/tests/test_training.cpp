#include <doctest.h>

#include <cmath>

#include "ccat/toymodel.hpp"
#include "ccat/training.hpp"
#include "support.hpp"

using namespace ccat;

namespace {

bool same_parameters(const Network& a, const Network& b) {
  if (a.num_layers() != b.num_layers()) return false;
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    if (a.layers()[l].weights != b.layers()[l].weights) return false;
    if (a.layers()[l].biases != b.layers()[l].biases) return false;
  }
  return true;
}

Dataset gaussians(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return make_two_gaussians(n, 6.0, rng);
}

Network small_net(std::uint64_t seed, std::size_t dim = 2) {
  Rng rng(seed);
  return Network::mlp(dim, {16}, 2, rng);
}

AttackConfig training_ce(double eps) {
  AttackConfig a = AttackConfig::pgd_ce({Norm::Linf, eps});
  a.iterations = 5;
  a.lr = 0.01;
  return a;
}

}  // namespace

TEST_CASE("power transition examples") {
  CHECK(lambda_power(0.0, 0.3, 10.0) == 1.0);
  CHECK(lambda_power(0.3, 0.3, 10.0) == 0.0);
  CHECK(lambda_power(0.5, 0.3, 10.0) == 0.0);
  CHECK(lambda_power(0.15, 0.3, 10.0) == 9.765625e-4);
  Vector delta(3);
  delta << 0.05, -0.15, 0.1;
  CHECK(lambda_power(delta, 0.3, 10.0) == 9.765625e-4);
  CHECK_THROWS(lambda_power(0.1, 0.0, 10.0));
  CHECK_THROWS(lambda_power(0.1, 0.3, 0.0));
}

TEST_CASE("power transition is monotone non-increasing") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    double a = rng.uniform(0.0, 0.5), b = rng.uniform(0.0, 0.5);
    if (a > b) std::swap(a, b);
    const double rho = rng.uniform(0.1, 20.0);
    CHECK(lambda_power(a, 0.3, rho) >= lambda_power(b, 0.3, rho));
  }
}

TEST_CASE("power transition with a very steep exponent is zero off the origin") {
  CHECK(lambda_power(1e-3, 0.3, 1e6) == 0.0);
  CHECK(lambda_power(0.0, 0.3, 1e6) == 1.0);
}

TEST_CASE("target distribution examples") {
  CHECK(make_target(1, 1.0, 3).probs == one_hot(1, 3));
  const Vector uniform = make_target(4, 0.0, 10).probs;
  for (Eigen::Index k = 0; k < 10; ++k) CHECK(uniform[k] == 0.1);
  const Vector half = make_target(2, 0.5, 4).probs;
  CHECK(half[0] == 0.125);
  CHECK(half[1] == 0.125);
  CHECK(half[2] == 0.625);
  CHECK(half[3] == 0.125);
  CHECK_THROWS(make_target(0, 1.5, 3));
  CHECK_THROWS(make_target(3, 0.5, 3));
  CHECK_THROWS(make_target(0, 0.5, 1));
}

TEST_CASE("target distributions are valid probability vectors") {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = 2 + rng.below(20);
    const std::size_t y = rng.below(k);
    const double lambda = rng.uniform();
    const TargetDistribution t = make_target(y, lambda, k);
    CHECK(std::abs(t.probs.sum() - 1.0) < 1e-12);
    CHECK(t.probs.minCoeff() == (1.0 - lambda) / static_cast<double>(k));
    if (lambda > 0.0) CHECK(argmax(t.probs) == y);
  }
}

TEST_CASE("regime names and schedule") {
  for (TrainRegime r : {TrainRegime::Normal, TrainRegime::AT50, TrainRegime::AT100, TrainRegime::CCAT}) {
    CHECK(regime_from_string(to_string(r)) == r);
  }
  CHECK_THROWS(regime_from_string("trades"));
  const Schedule s{10, 50, 0.2, 0.5};
  CHECK(s.lr_at(0) == 0.2);
  CHECK(s.lr_at(2) == 0.05);
  CHECK_THROWS(Schedule{10, 0, 0.1, 0.95}.validate());
}

TEST_CASE("CCAT config defaults and validation") {
  const CcatConfig c = CcatConfig::defaults(0.3);
  CHECK(c.rho == 10.0);
  CHECK(c.attack.objective == Objective::Conf);
  CHECK(c.attack.iterations == 40);
  CHECK(c.attack.lr == 0.005);
  CHECK(c.attack.momentum == 0.9);
  CHECK(c.attack.lr_factor == 1.5);
  CHECK(c.attack.tm.epsilon == 0.3);
  CHECK_NOTHROW(c.validate(4));
  CcatConfig bad = c;
  bad.attack.tm.p = Norm::L2;
  CHECK_THROWS(bad.validate(4));
  bad = c;
  bad.attack.objective = Objective::CE;
  CHECK_THROWS(bad.validate(4));
  bad = c;
  bad.rho = 0.0;
  CHECK_THROWS(bad.validate(4));
}

TEST_CASE("a zero learning rate epoch leaves the parameters unchanged") {
  const Dataset data = gaussians(60, 1);
  const Network before = small_net(2);
  Network net = before;
  train_epoch_normal(net, data, {0, 10, 0.0, 3});
  CHECK(same_parameters(net, before));
  train_epoch_ccat(net, data, CcatConfig::defaults(0.1), {0, 10, 0.0, 3});
  CHECK(same_parameters(net, before));
}

TEST_CASE("normal training separates two Gaussians") {
  const Dataset data = gaussians(200, 4);
  Network net = small_net(5);
  TrainConfig cfg;
  cfg.schedule = {30, 20, 0.2, 0.95};
  cfg.seed = 6;
  const TrainResult r = train(net, data, cfg);
  CHECK(r.epochs.size() == 30);
  CHECK(r.epochs.front().mean_clean_loss > r.epochs.back().mean_clean_loss);
  CHECK(accuracy(net, data) >= 0.95);
  CHECK(r.epochs.back().train_accuracy == accuracy(net, data));
}

TEST_CASE("loss decreases on a two-point separable set") {
  const Dataset data = make_two_point(0.5, 1.0, 2);
  Rng rng(1);
  Network net = Network::mlp(1, {}, 2, rng);
  std::vector<double> losses;
  for (std::size_t e = 0; e < 50; ++e) losses.push_back(train_epoch_normal(net, data, {e, 2, 0.5, 0}).mean_clean_loss);
  for (std::size_t e = 1; e < losses.size(); ++e) CHECK(losses[e] < losses[e - 1]);
}

TEST_CASE("adversarial fraction zero is normal training") {
  const Dataset data = gaussians(80, 7);
  Network a = small_net(8), b = small_net(8);
  for (std::size_t e = 0; e < 3; ++e) {
    const EpochContext ctx{e, 16, 0.1, 9};
    train_epoch_normal(a, data, ctx);
    train_epoch_at(b, data, 0.0, training_ce(0.1), ctx);
  }
  CHECK(same_parameters(a, b));
}

TEST_CASE("adversarial training with an empty ball is normal training") {
  const Dataset data = gaussians(80, 10);
  for (double fraction : {0.5, 1.0}) {
    Network a = small_net(11), b = small_net(11);
    for (std::size_t e = 0; e < 3; ++e) {
      const EpochContext ctx{e, 16, 0.1, 12};
      train_epoch_normal(a, data, ctx);
      train_epoch_at(b, data, fraction, training_ce(0.0), ctx);
    }
    CHECK(same_parameters(a, b));
  }
}

TEST_CASE("CCAT with a zero perturbation trains on one-hot targets") {
  const Dataset data = gaussians(80, 13);
  CcatConfig cfg = CcatConfig::defaults(0.1);
  cfg.attack.lr = 0.0;
  cfg.attack.init = InitMode::Zero;
  cfg.mixed_init = false;
  Network a = small_net(14), b = small_net(14);
  std::vector<LambdaLogEntry> log;
  for (std::size_t e = 0; e < 2; ++e) {
    const EpochContext ctx{e, 16, 0.1, 15};
    train_epoch_normal(a, data, ctx);
    train_epoch_ccat(b, data, cfg, ctx, &log);
  }
  CHECK(same_parameters(a, b));
  CHECK(log.size() == 2 * 5 * 8);
  for (const auto& entry : log) {
    CHECK(entry.lambda == 1.0);
    CHECK(entry.target_true == 1.0);
  }
}

TEST_CASE("CCAT epoch: half of each batch attacked, finite losses, exact lambda log") {
  const Dataset data = gaussians(90, 16);
  Network net = small_net(17);
  CcatConfig cfg = CcatConfig::defaults(0.1);
  cfg.attack.iterations = 10;
  std::vector<LambdaLogEntry> log;
  const EpochStats s = train_epoch_ccat(net, data, cfg, {0, 20, 0.1, 18}, &log);
  // batches of 20, 20, 20, 20, 10 -> 10 + 10 + 10 + 10 + 5 attacked
  CHECK(log.size() == 45);
  REQUIRE(s.mean_adv_loss.has_value());
  REQUIRE(s.mean_lambda.has_value());
  CHECK(std::isfinite(*s.mean_adv_loss));
  CHECK(*s.mean_adv_loss >= 0.0);
  CHECK(s.mean_clean_loss >= 0.0);
  double sum = 0.0;
  for (const auto& e : log) {
    CHECK(e.delta_linf <= 0.1 + 1e-12);
    CHECK(e.lambda == lambda_power(e.delta_linf, 0.1, 10.0));
    CHECK(e.target_true == e.lambda + (1.0 - e.lambda) / 2.0);
    CHECK(e.target_other == (1.0 - e.lambda) / 2.0);
    sum += e.lambda;
  }
  CHECK(std::abs(*s.mean_lambda - sum / 45.0) < 1e-15);
}

TEST_CASE("CCAT with a steep transition pushes attacked examples to uniform targets") {
  const Dataset data = gaussians(40, 19);
  Network net = small_net(20);
  CcatConfig cfg = CcatConfig::defaults(0.1);
  cfg.attack.iterations = 5;
  cfg.rho = 1e6;
  cfg.mixed_init = false;
  std::vector<LambdaLogEntry> log;
  train_epoch_ccat(net, data, cfg, {0, 10, 0.1, 21}, &log);
  std::size_t moved = 0;
  for (const auto& e : log) {
    if (e.delta_linf > 0.0) {
      ++moved;
      CHECK(e.target_true == 0.5);
    }
  }
  CHECK(moved > 0);
}

TEST_CASE("training is reproducible") {
  const Dataset data = gaussians(60, 22);
  for (TrainRegime regime : {TrainRegime::Normal, TrainRegime::AT50, TrainRegime::AT100, TrainRegime::CCAT}) {
    TrainConfig cfg;
    cfg.regime = regime;
    cfg.schedule = {2, 16, 0.1, 0.9};
    cfg.seed = 23;
    cfg.at_attack = training_ce(0.1);
    cfg.ccat = CcatConfig::defaults(0.1);
    cfg.ccat.attack.iterations = 5;
    Network a = small_net(24), b = small_net(24);
    const TrainResult ra = train(a, data, cfg, true);
    const TrainResult rb = train(b, data, cfg, true);
    CHECK(same_parameters(a, b));
    CHECK(ra.lambda_log.size() == rb.lambda_log.size());
    CHECK(ra.epochs.back().mean_clean_loss == rb.epochs.back().mean_clean_loss);
    CHECK(ra.epochs[1].lr == doctest::Approx(0.09));
  }
}

TEST_CASE("training checks shapes") {
  const Dataset data = gaussians(20, 25);
  Network wrong_dim = small_net(26, 3);
  CHECK_THROWS_AS(train_epoch_normal(wrong_dim, data, {0, 10, 0.1, 0}), ShapeError);
  Rng rng(1);
  Network wrong_k = Network::mlp(2, {4}, 3, rng);
  CHECK_THROWS_AS(train_epoch_normal(wrong_k, data, {0, 10, 0.1, 0}), ShapeError);
}

TEST_CASE("adversarial training on the two-point problem reaches the closed form") {
  ToyTrainOptions opts;
  opts.epochs = 2000;
  opts.lr_decay = 0.995;
  for (double p0 : {0.3, 0.7}) {
    const double want = std::log((1.0 - p0) / p0);
    const ToyParams full = train_toy_end_to_end({p0, 1.0, 0.0}, ToyRegime::AT100, 1, opts);
    CHECK(std::abs(full.a - want) < 1e-3);
    CHECK(std::abs(full.b - want) < 1e-3);
    // The random choice of the attacked half adds gradient noise that the
    // decaying rate only partly averages out.
    const ToyParams half = train_toy_end_to_end({p0, 1.0, 0.0}, ToyRegime::AT50, 1, opts);
    CHECK(std::abs(half.a - want) < 5e-3);
    CHECK(std::abs(half.b - want) < 5e-3);
  }
}
