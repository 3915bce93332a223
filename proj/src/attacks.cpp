#include "ccat/attacks.hpp"

#include <cmath>
#include <limits>

namespace ccat {

std::string to_string(Objective o) { return o == Objective::CE ? "ce" : "conf"; }

Objective objective_from_string(const std::string& s) {
  if (s == "ce" || s == "CE") return Objective::CE;
  if (s == "conf" || s == "Conf") return Objective::Conf;
  throw std::invalid_argument("unknown attack objective: " + s);
}

void AttackConfig::validate(std::size_t dim) const {
  tm.validate(dim);
  if (iterations < 1) throw std::invalid_argument("attack iterations must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("attack lr must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("attack momentum must be in [0,1)");
  if (!(lr_factor > 1.0)) throw std::invalid_argument("attack lr_factor must be > 1");
  if (restarts < 1) throw std::invalid_argument("attack restarts must be >= 1");
  if (mask && mask->size() != dim) throw std::invalid_argument("attack mask length does not match input");
}

AttackConfig AttackConfig::pgd_conf(ThreatModel tm) {
  AttackConfig c;
  c.objective = Objective::Conf;
  c.tm = tm;
  c.iterations = 1000;
  c.lr = 0.001;
  c.momentum = 0.9;
  c.lr_factor = 1.1;
  c.zero_restart = true;
  return c;
}

AttackConfig AttackConfig::pgd_ce(ThreatModel tm) {
  AttackConfig c;
  c.objective = Objective::CE;
  c.tm = tm;
  c.iterations = 200;
  c.lr = 0.05;
  c.momentum = 0.9;
  c.lr_factor = 1.25;
  return c;
}

namespace {

struct Scored {
  double value;
  std::size_t label;  // class whose confidence is maximized (Conf only)
};

Scored score(const Vector& probs, Objective objective, std::optional<std::size_t> label) {
  if (objective == Objective::CE) {
    if (!label) throw std::invalid_argument("cross-entropy objective needs a label");
    double p = probs[static_cast<Eigen::Index>(*label)];
    if (p <= 0.0) p = kLogClamp;
    return {-std::log(p), *label};
  }
  Scored best{-1.0, 0};
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    if (label && static_cast<std::size_t>(k) == *label) continue;
    if (probs[k] > best.value) best = {probs[k], static_cast<std::size_t>(k)};
  }
  return best;
}

}  // namespace

ObjectiveEval evaluate_objective(const Network& net, const Eigen::Ref<const Vector>& point, Objective objective,
                                 std::optional<std::size_t> label, bool with_gradient) {
  if (label && *label >= net.num_classes()) throw std::out_of_range("attack label out of range");
  Matrix batch = point.transpose();
  ForwardTrace trace = forward(net, batch);
  ObjectiveEval out;
  out.probs = softmax(trace.logits().row(0).transpose());
  const Scored s = score(out.probs, objective, label);
  out.value = s.value;
  if (!with_gradient) return out;

  // d objective / d logits
  Matrix dz(1, out.probs.size());
  if (objective == Objective::CE) {
    dz.row(0) = out.probs.transpose();
    dz(0, static_cast<Eigen::Index>(*label)) -= 1.0;
  } else {
    const double pk = out.probs[static_cast<Eigen::Index>(s.label)];
    dz.row(0) = -pk * out.probs.transpose();
    dz(0, static_cast<Eigen::Index>(s.label)) += pk;
  }
  out.gradient = backward_from_logits(net, trace, dz, GradWrt::Input).input.row(0).transpose();
  return out;
}

double objective_ce(const Network& net, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& delta,
                    std::size_t y) {
  return evaluate_objective(net, x + delta, Objective::CE, y, false).value;
}

ConfValue objective_conf(const Network& net, const Eigen::Ref<const Vector>& x,
                         const Eigen::Ref<const Vector>& delta, std::size_t y) {
  const auto e = evaluate_objective(net, x + delta, Objective::Conf, y, false);
  const Scored s = score(e.probs, Objective::Conf, y);
  return {s.value, s.label};
}

namespace {

void finish_outcome(const Network& net, const Eigen::Ref<const Vector>& x, std::optional<std::size_t> y,
                    AttackOutcome& out) {
  const Vector probs = softmax(logits(net, x + out.delta));
  out.adv_label = argmax(probs);
  out.adv_confidence = probs[static_cast<Eigen::Index>(out.adv_label)];
  out.success = y.has_value() && out.adv_label != *y;
}

Constraint constraint_of(const AttackConfig& cfg) { return Constraint{cfg.tm, cfg.mask}; }

}  // namespace

AttackOutcome pgd_from(const Network& net, const Eigen::Ref<const Vector>& x, std::optional<std::size_t> y,
                       const AttackConfig& cfg, const Eigen::Ref<const Vector>& delta0) {
  const auto dim = static_cast<std::size_t>(x.size());
  if (dim != net.input_dim()) throw ShapeError("attack input does not match the network");
  cfg.validate(dim);
  const Constraint constraint = constraint_of(cfg);

  double lr = cfg.lr;
  Vector delta = constraint.project(x, delta0);
  Vector momentum = Vector::Zero(x.size());

  AttackOutcome out;
  out.delta = delta;
  out.objective = -std::numeric_limits<double>::infinity();
  out.restarts_used = 1;
  std::vector<double> trace;

  ObjectiveEval current = evaluate_objective(net, x + delta, cfg.objective, y, true);
  Direction dir;
  bool have_dir = false;
  std::size_t t = 0;
  for (;; ++t) {
    const double value = current.value;
    if (value > out.objective) {
      out.objective = value;
      out.delta = delta;
    }
    if (cfg.record_trace) trace.push_back(out.objective);
    // The last iteration only checks whether the previous update improved.
    if (t == cfg.iterations) break;

    if (!have_dir) {
      Vector g = current.gradient;
      if (cfg.mask) {
        for (Eigen::Index i = 0; i < g.size(); ++i) {
          if (!(*cfg.mask)[static_cast<std::size_t>(i)]) g[i] = 0.0;
        }
      }
      dir = normalize_gradient(g, cfg.mask ? Norm::Linf : cfg.tm.p);
      have_dir = true;
    }
    if (dir.stalled) {
      out.stalled = true;
      break;
    }
    momentum = cfg.momentum * momentum + (1.0 - cfg.momentum) * dir.direction;
    Vector trial_delta = constraint.project(x, delta + lr * momentum);
    ObjectiveEval trial = evaluate_objective(net, x + trial_delta, cfg.objective, y, true);
    if (!cfg.backtracking || trial.value >= value) {
      delta = std::move(trial_delta);
      current = std::move(trial);
      have_dir = false;
    } else {
      lr = std::max(lr / cfg.lr_factor, kMinAttackLr);
      if (cfg.reset_momentum_on_reject) momentum.setZero();
    }
  }
  out.iterations_used = t;
  if (cfg.record_trace) out.best_traces.push_back(std::move(trace));
  finish_outcome(net, x, y, out);
  return out;
}

AttackOutcome pgd_attack(const Network& net, const Eigen::Ref<const Vector>& x, std::optional<std::size_t> y,
                         const AttackConfig& cfg, Rng& rng) {
  cfg.validate(static_cast<std::size_t>(x.size()));
  AttackOutcome best;
  std::vector<std::vector<double>> traces;
  std::size_t iterations = 0;
  const std::size_t total = cfg.restarts + (cfg.zero_restart ? 1 : 0);
  for (std::size_t r = 0; r < total; ++r) {
    Vector delta0;
    if (cfg.init == InitMode::Zero || (cfg.zero_restart && r == 0)) {
      delta0 = Vector::Zero(x.size());
    } else if (cfg.mask) {
      delta0 = sample_perturbation_raw(ThreatModel{Norm::Linf, 1.0}, x, rng);
    } else {
      delta0 = init_perturbation(cfg.tm, x, InitMode::Random, rng);
    }
    AttackOutcome run = pgd_from(net, x, y, cfg, delta0);
    iterations += run.iterations_used;
    if (cfg.record_trace) traces.push_back(std::move(run.best_traces.front()));
    if (r == 0 || run.objective > best.objective) {
      best = std::move(run);
      best.restart = r;
    }
  }
  best.restarts_used = total;
  best.iterations_used = iterations;
  best.best_traces = std::move(traces);
  return best;
}

AttackOutcome random_sampling_attack(const Network& net, const Eigen::Ref<const Vector>& x, std::size_t y,
                                     const ThreatModel& tm, std::size_t samples, Rng& rng) {
  if (samples < 1) throw std::invalid_argument("random sampling needs at least one sample");
  tm.validate(static_cast<std::size_t>(x.size()));
  AttackOutcome best;
  best.objective = -std::numeric_limits<double>::infinity();
  std::vector<double> trace;
  trace.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    Vector delta = init_perturbation(tm, x, InitMode::Random, rng);
    const double v = evaluate_objective(net, x + delta, Objective::Conf, y, false).value;
    if (v > best.objective) {
      best.objective = v;
      best.delta = std::move(delta);
      best.restart = s;
    }
    trace.push_back(best.objective);
  }
  best.restarts_used = samples;
  best.iterations_used = samples;
  best.best_traces.push_back(std::move(trace));
  finish_outcome(net, x, y, best);
  return best;
}

DistalOutcome distal_attack(const Network& net, std::size_t dim, const AttackConfig& cfg, Rng& rng,
                            double threshold) {
  if (dim != net.input_dim()) throw ShapeError("distal attack dimension does not match the network");
  DistalOutcome d;
  d.origin.resize(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < d.origin.size(); ++i) d.origin[i] = rng.uniform();
  AttackConfig c = cfg;
  c.objective = Objective::Conf;
  d.outcome = pgd_attack(net, d.origin, std::nullopt, c, rng);
  d.outcome.success = d.outcome.adv_confidence >= threshold;
  return d;
}

std::vector<bool> frame_mask(std::size_t height, std::size_t width, std::size_t channels, std::size_t border) {
  if (border == 0 || channels == 0) throw std::invalid_argument("frame border and channels must be positive");
  if (2 * border >= std::min(height, width)) {
    throw std::invalid_argument("frame border too large for a " + std::to_string(height) + "x" +
                                std::to_string(width) + " image");
  }
  std::vector<bool> mask(height * width * channels, false);
  for (std::size_t h = 0; h < height; ++h) {
    for (std::size_t w = 0; w < width; ++w) {
      const bool edge = h < border || h >= height - border || w < border || w >= width - border;
      if (!edge) continue;
      for (std::size_t c = 0; c < channels; ++c) mask[(h * width + w) * channels + c] = true;
    }
  }
  return mask;
}

const AttackOutcome& worst_case_merge(std::span<const AttackOutcome> outcomes) {
  if (outcomes.empty()) throw std::invalid_argument("worst_case_merge: no outcomes");
  const AttackOutcome* best = &outcomes[0];
  for (const auto& o : outcomes.subspan(1)) {
    if (o.success != best->success) {
      if (o.success) best = &o;
    } else if (o.adv_confidence > best->adv_confidence) {
      best = &o;
    }
  }
  return *best;
}

std::vector<AttackOutcome> pgd_attack_rows(const Network& net, const Matrix& inputs,
                                           std::span<const std::size_t> labels, const AttackConfig& cfg,
                                           std::span<const std::uint64_t> ids) {
  if (labels.size() != static_cast<std::size_t>(inputs.rows()) || ids.size() != labels.size()) {
    throw ShapeError("pgd_attack_rows: inputs, labels and ids must have equal length");
  }
  std::vector<AttackOutcome> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Rng rng = Rng::stream(cfg.seed, Purpose::Attack, {ids[i]});
    out.push_back(pgd_attack(net, inputs.row(static_cast<Eigen::Index>(i)).transpose(), labels[i], cfg, rng));
  }
  return out;
}

}  // namespace ccat
