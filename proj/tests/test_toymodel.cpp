#include <doctest.h>

#include <cmath>

#include "ccat/toymodel.hpp"
#include "ccat/training.hpp"

using namespace ccat;

TEST_CASE("adversarial training optimum") {
  const ToyParams half = at_optimal_params(0.5);
  CHECK(half.a == 0.0);
  CHECK(half.b == 0.0);
  const ToyParams p = at_optimal_params(0.3);
  CHECK(std::abs(p.a - std::log(7.0 / 3.0)) < 1e-15);
  CHECK(std::abs(p.a - 0.8473) < 1e-4);
  CHECK(p.a == p.b);
  double prev = at_optimal_params(0.01).a;
  for (double p0 = 0.05; p0 < 1.0; p0 += 0.05) {
    const double a = at_optimal_params(p0).a;
    CHECK(a < prev);
    prev = a;
  }
  CHECK(at_optimal_params(1.0 - 1e-12).a < -25.0);
  CHECK_THROWS(at_optimal_params(0.0));
  CHECK_THROWS(at_optimal_params(1.0));
}

TEST_CASE("CCAT optimum") {
  const ToyParams sym = ccat_optimal_params(0.5, 0.0);
  CHECK(std::abs(sym.a + std::log(3.0)) < 1e-12);
  CHECK(std::abs(sym.b - std::log(3.0)) < 1e-12);
  const ToyParams p = ccat_optimal_params(0.3, 0.2);
  CHECK(std::abs(p.a - std::log(0.42 / 0.58)) < 1e-12);
  CHECK(std::abs(p.b - std::log(0.82 / 0.18)) < 1e-12);
  CHECK(std::abs(p.a + 0.3228) < 1e-4);
  CHECK(std::abs(p.b - 1.5163) < 1e-4);
  CHECK_THROWS_AS(ccat_optimal_params(0.3, 1.0), std::invalid_argument);
  CHECK_THROWS(ccat_optimal_params(0.3, -0.1));
}

TEST_CASE("CCAT optimum separates the two points") {
  for (double p0 = 0.01; p0 < 1.0; p0 += 0.01) {
    for (double lambda = 0.0; lambda < 1.0; lambda += 0.05) {
      const ToyParams p = ccat_optimal_params(p0, lambda);
      CHECK(p.a < p.b);
    }
  }
}

TEST_CASE("toy error examples") {
  CHECK(std::abs(toy_error(at_optimal_params(0.3), 0.3) - 0.3) < 1e-15);
  CHECK(toy_error(ccat_optimal_params(0.3, 0.2), 0.3) == 0.0);
  for (double p0 : {0.1, 0.5, 0.9}) CHECK(toy_error({-1.0, 1.0}, p0) == 0.0);
  CHECK(toy_error({1.0, -1.0}, 0.3) == 1.0);
  // Exact ties go to index 0: wrong at x = 0, right at x = epsilon.
  CHECK(toy_error({0.0, 0.0}, 0.3) == 0.3);
  CHECK(toy_error({0.0, 0.0}, 0.5) == 0.5);
  CHECK(toy_error({-1e-4, 1e-4}, 0.3, 1e-3) == 0.3);
}

TEST_CASE("zero-error condition") {
  CHECK(ccat_zero_error_condition(0.5, 0.0));
  CHECK(ccat_zero_error_condition(0.5, 0.99));
  CHECK(ccat_zero_error_condition(0.3, 0.2));
  CHECK_FALSE(ccat_zero_error_condition(0.1, 0.2));
  CHECK_FALSE(ccat_zero_error_condition(0.9, 0.2));
}

TEST_CASE("closed-form errors on random problems") {
  Rng rng(1);
  std::size_t with = 0, without = 0;
  for (int i = 0; i < 100; ++i) {
    const double p0 = rng.uniform(0.01, 0.99);
    CHECK(toy_error(at_optimal_params(p0), p0) == std::min(p0, 1.0 - p0));
  }
  while (with < 100 || without < 100) {
    const double p0 = rng.uniform(0.01, 0.99);
    const double lambda = rng.uniform(0.0, 0.999);
    const double err = toy_error(ccat_optimal_params(p0, lambda), p0);
    if (ccat_zero_error_condition(p0, lambda)) {
      if (with++ < 100) CHECK(err == 0.0);
    } else if (without++ < 100) {
      CHECK(err == std::min(p0, 1.0 - p0));
    }
  }
}

TEST_CASE("expected loss gradients match finite differences away from kinks") {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const ToyProblem problem{rng.uniform(0.05, 0.95), 1.0, rng.uniform(0.0, 0.9)};
    ToyParams p{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
    if (std::abs(p.a - p.b) < 1e-3) continue;
    for (ToyRegime regime : {ToyRegime::AT100, ToyRegime::AT50, ToyRegime::CCAT}) {
      const ToyParams g = toy_expected_loss_gradient(problem, regime, p);
      const double h = 1e-6;
      const double da = (toy_expected_loss(problem, regime, {p.a + h, p.b}) -
                         toy_expected_loss(problem, regime, {p.a - h, p.b})) / (2 * h);
      const double db = (toy_expected_loss(problem, regime, {p.a, p.b + h}) -
                         toy_expected_loss(problem, regime, {p.a, p.b - h})) / (2 * h);
      CHECK(std::abs(g.a - da) < 1e-6);
      CHECK(std::abs(g.b - db) < 1e-6);
    }
  }
}

TEST_CASE("closed forms are critical points of the expected losses") {
  for (double p0 : {0.2, 0.3, 0.6}) {
    const ToyParams at = at_optimal_params(p0);
    const double at_loss = toy_expected_loss({p0, 1.0, 0.0}, ToyRegime::AT100, at);
    for (double da : {-0.01, 0.0, 0.01}) {
      for (double db : {-0.01, 0.0, 0.01}) {
        CHECK(toy_expected_loss({p0, 1.0, 0.0}, ToyRegime::AT100, {at.a + da, at.b + db}) >= at_loss);
      }
    }
    const ToyParams cc = ccat_optimal_params(p0, 0.2);
    const ToyParams g = toy_expected_loss_gradient({p0, 1.0, 0.2}, ToyRegime::CCAT, cc);
    CHECK(std::abs(g.a) < 1e-12);
    CHECK(std::abs(g.b) < 1e-12);
  }
}

TEST_CASE("numeric minimizer agrees with the closed forms") {
  for (double p0 : {0.1, 0.3, 0.5, 0.7}) {
    const ToyParams at = at_optimal_params(p0);
    const ToyParams full = numeric_minimize_expected_loss({p0, 1.0, 0.0}, ToyRegime::AT100);
    const ToyParams half = numeric_minimize_expected_loss({p0, 1.0, 0.0}, ToyRegime::AT50);
    CHECK(std::abs(full.a - at.a) < 1e-3);
    CHECK(std::abs(full.b - at.b) < 1e-3);
    CHECK(std::abs(half.a - full.a) < 1e-3);
    CHECK(std::abs(half.b - full.b) < 1e-3);
    for (double lambda : {0.0, 0.2, 0.5}) {
      const ToyParams cc = ccat_optimal_params(p0, lambda);
      const ToyParams num = numeric_minimize_expected_loss({p0, 1.0, lambda}, ToyRegime::CCAT);
      CHECK(std::abs(num.a - cc.a) < 1e-3);
      CHECK(std::abs(num.b - cc.b) < 1e-3);
    }
  }
}

TEST_CASE("numeric minimizer reports non-convergence with its last iterate") {
  ToyMinimizerOptions opts;
  opts.max_steps = 3;
  try {
    numeric_minimize_expected_loss({0.3, 1.0, 0.2}, ToyRegime::CCAT, opts);
    FAIL("expected ToyNonConvergence");
  } catch (const ToyNonConvergence& e) {
    CHECK(std::isfinite(e.last_iterate.a));
    CHECK(e.last_iterate.a != 0.0);
  }
}

TEST_CASE("problem validation") {
  CHECK_THROWS(ToyProblem{0.0, 1.0, 0.0}.validate());
  CHECK_THROWS(ToyProblem{0.3, 0.0, 0.0}.validate());
  CHECK_THROWS(ToyProblem{0.3, 1.0, 1.5}.validate());
  CHECK_NOTHROW(ToyProblem{0.3, 1.0, 1.0}.validate());
}

TEST_CASE("logit gaps of a linear network") {
  Matrix w(2, 1);
  w << 2.0, -1.0;
  Vector b(2);
  b << 0.5, 0.25;
  std::vector<DenseLayer> layers{DenseLayer{w, b, Activation::Identity}};
  const Network net(1, std::move(layers));
  const ToyParams p = toy_params_of(net, 1.0);
  CHECK(p.a == 0.25);
  CHECK(p.b == 3.25);
}

TEST_CASE("end-to-end training reproduces the closed-form errors") {
  for (double p0 : {0.3, 0.7}) {
    const double bayes = std::min(p0, 1.0 - p0);
    const ToyProblem problem{p0, 1.0, 0.0};
    const double at = toy_error(train_toy_end_to_end(problem, ToyRegime::AT50, 3), p0, 1e-2);
    const double cc = toy_error(train_toy_end_to_end(problem, ToyRegime::CCAT, 3), p0, 1e-2);
    CHECK(std::abs(at - bayes) <= 0.02);
    CHECK(std::abs(cc - 0.0) <= 0.02);
  }
}
