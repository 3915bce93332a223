#include "ccat/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ccat {

std::string to_string(Norm p) {
  switch (p) {
    case Norm::Linf: return "inf";
    case Norm::L2: return "2";
    case Norm::L1: return "1";
    case Norm::L0: return "0";
  }
  return "?";
}

Norm norm_from_string(const std::string& s) {
  if (s == "inf" || s == "linf" || s == "Linf") return Norm::Linf;
  if (s == "2" || s == "l2" || s == "L2") return Norm::L2;
  if (s == "1" || s == "l1" || s == "L1") return Norm::L1;
  if (s == "0" || s == "l0" || s == "L0") return Norm::L0;
  throw std::invalid_argument("unknown norm: " + s);
}

void ThreatModel::validate(std::size_t dim) const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw std::invalid_argument("threat model epsilon must be >= 0");
  if (p == Norm::L0) {
    if (epsilon != std::floor(epsilon)) throw std::invalid_argument("L0 epsilon must be an integer");
    if (epsilon > static_cast<double>(dim)) throw std::invalid_argument("L0 epsilon exceeds input dimension");
  }
}

double lp_norm(const Eigen::Ref<const Vector>& v, Norm p) {
  switch (p) {
    case Norm::Linf: return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
    case Norm::L2: return v.norm();
    case Norm::L1: return v.cwiseAbs().sum();
    case Norm::L0: return static_cast<double>((v.array() != 0.0).count());
  }
  return 0.0;
}

namespace {

// Indices ordered by decreasing |v|, ties to the lower index.
std::vector<Eigen::Index> by_magnitude(const Eigen::Ref<const Vector>& v, std::size_t k) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      const double ma = std::abs(v[a]);
                      const double mb = std::abs(v[b]);
                      return ma > mb || (ma == mb && a < b);
                    });
  idx.resize(k);
  return idx;
}

}  // namespace

Vector project_l1_ball(const Eigen::Ref<const Vector>& v, double radius) {
  if (v.cwiseAbs().sum() <= radius) return v;
  if (radius <= 0.0) return Vector::Zero(v.size());
  std::vector<double> u(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) u[static_cast<std::size_t>(i)] = std::abs(v[i]);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumsum += u[j];
    const double t = (cumsum - radius) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  Vector w(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double m = std::max(std::abs(v[i]) - theta, 0.0);
    w[i] = v[i] < 0.0 ? -m : m;
  }
  return w;
}

Vector project_ball(const Eigen::Ref<const Vector>& delta, const ThreatModel& tm) {
  const double eps = tm.epsilon;
  switch (tm.p) {
    case Norm::Linf: return delta.cwiseMax(-eps).cwiseMin(eps);
    case Norm::L2: {
      const double n = delta.norm();
      if (n <= eps) return delta;
      return delta * (eps / n);
    }
    case Norm::L1: return project_l1_ball(delta, eps);
    case Norm::L0: {
      const auto k = static_cast<std::size_t>(eps);
      if (lp_norm(delta, Norm::L0) <= eps) return delta;
      Vector out = Vector::Zero(delta.size());
      for (Eigen::Index i : by_magnitude(delta, k)) out[i] = delta[i];
      return out;
    }
  }
  return delta;
}

Vector project_box(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& delta) {
  if (x.size() != delta.size()) throw ShapeError("project_box: length mismatch");
  Vector out = delta;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x[i] + delta[i];
    if (v < ThreatModel::box_low) {
      out[i] = ThreatModel::box_low - x[i];
    } else if (v > ThreatModel::box_high) {
      out[i] = ThreatModel::box_high - x[i];
    }
  }
  return out;
}

Vector Constraint::project(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& delta) const {
  if (mask) {
    if (mask->size() != static_cast<std::size_t>(delta.size())) throw ShapeError("mask length mismatch");
    Vector masked = delta;
    for (Eigen::Index i = 0; i < masked.size(); ++i) {
      if (!(*mask)[static_cast<std::size_t>(i)]) masked[i] = 0.0;
    }
    return project_box(x, masked);
  }
  return project_box(x, project_ball(delta, tm));
}

bool Constraint::feasible(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& delta,
                          double tol) const {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x[i] + delta[i];
    if (v < ThreatModel::box_low || v > ThreatModel::box_high) return false;
    if (mask && !(*mask)[static_cast<std::size_t>(i)] && delta[i] != 0.0) return false;
  }
  if (mask) return true;
  return lp_norm(delta, tm.p) <= tm.epsilon + tol;
}

std::size_t l1_step_support(std::size_t dim) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.01 * static_cast<double>(dim))));
}

Direction normalize_gradient(const Eigen::Ref<const Vector>& g, Norm p) {
  Direction out;
  out.direction = Vector::Zero(g.size());
  if (g.size() == 0 || (g.array() == 0.0).all()) {
    out.stalled = true;
    return out;
  }
  switch (p) {
    case Norm::Linf:
      out.direction = g.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
      break;
    case Norm::L2: out.direction = g / g.norm(); break;
    case Norm::L1: {
      const auto keep = by_magnitude(g, l1_step_support(static_cast<std::size_t>(g.size())));
      double total = 0.0;
      for (Eigen::Index i : keep) total += std::abs(g[i]);
      if (total == 0.0) {
        out.stalled = true;
        break;
      }
      for (Eigen::Index i : keep) out.direction[i] = g[i] / total;
      break;
    }
    case Norm::L0: out.direction = g / g.cwiseAbs().sum(); break;
  }
  return out;
}

std::string to_string(InitMode m) { return m == InitMode::Zero ? "zero" : "random"; }

InitMode init_mode_from_string(const std::string& s) {
  if (s == "zero") return InitMode::Zero;
  if (s == "random") return InitMode::Random;
  throw std::invalid_argument("unknown init mode: " + s);
}

Vector sample_perturbation_raw(const ThreatModel& tm, const Eigen::Ref<const Vector>& x, Rng& rng) {
  const Eigen::Index d = x.size();
  Vector delta = Vector::Zero(d);
  if (tm.p == Norm::L0) {
    const double prob = (2.0 / 3.0 * tm.epsilon) / static_cast<double>(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      if (rng.bernoulli(prob)) delta[i] = rng.uniform() - x[i];
    }
    return delta;
  }
  for (Eigen::Index i = 0; i < d; ++i) delta[i] = rng.normal();
  const double u = rng.uniform();
  const double n = lp_norm(delta, tm.p);
  if (n == 0.0) return Vector::Zero(d);
  return delta * (u * tm.epsilon / n);
}

Vector init_perturbation(const ThreatModel& tm, const Eigen::Ref<const Vector>& x, InitMode mode, Rng& rng) {
  if (mode == InitMode::Zero) return Vector::Zero(x.size());
  return project_box(x, project_ball(sample_perturbation_raw(tm, x, rng), tm));
}

}  // namespace ccat
