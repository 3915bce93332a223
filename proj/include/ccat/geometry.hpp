#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ccat/netcore.hpp"
#include "ccat/rng.hpp"

namespace ccat {

enum class Norm { Linf, L2, L1, L0 };

std::string to_string(Norm p);
Norm norm_from_string(const std::string& s);

/// L_p ball of radius epsilon intersected with the [0,1] box.
struct ThreatModel {
  Norm p = Norm::Linf;
  double epsilon = 0.0;

  static constexpr double box_low = 0.0;
  static constexpr double box_high = 1.0;

  /// Throws std::invalid_argument unless epsilon >= 0 and, for L0, epsilon is
  /// an integer no larger than `dim`. epsilon = 0 is the degenerate ball {0}.
  void validate(std::size_t dim) const;
};

/// Standard norm; L0 counts entries that are exactly nonzero.
double lp_norm(const Eigen::Ref<const Vector>& v, Norm p);

/// Euclidean projection onto the epsilon ball for p in {inf, 2, 1}; for L0
/// keeps the epsilon largest-magnitude entries (ties to the lower index).
Vector project_ball(const Eigen::Ref<const Vector>& delta, const ThreatModel& tm);

/// Euclidean projection onto {w : ||w||_1 <= radius} by the sort-based
/// threshold of Duchi et al.
Vector project_l1_ball(const Eigen::Ref<const Vector>& v, double radius);

/// Clips delta so that x + delta lies in [0,1]; feasible coordinates are untouched.
Vector project_box(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& delta);

/// Feasible set used by the attacks: ball then box, or, when a mask is set,
/// delta = 0 off the mask and box-only on it.
struct Constraint {
  ThreatModel tm;
  std::optional<std::vector<bool>> mask;

  Vector project(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& delta) const;
  /// Ball, box and mask membership with slack `tol` on the ball.
  bool feasible(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& delta,
                double tol = 1e-9) const;
};

struct Direction {
  Vector direction;
  /// All-zero input gradient; the direction is then zero as well.
  bool stalled = false;
};

/// Number of entries kept by the L1 step: max(1, ceil(0.01 d)).
std::size_t l1_step_support(std::size_t dim);

/// Steepest-ascent direction for the given norm: sign for inf, g/||g||_2 for
/// L2, top-1% magnitudes rescaled to unit L1 norm for L1, g/||g||_1 for L0.
Direction normalize_gradient(const Eigen::Ref<const Vector>& g, Norm p);

enum class InitMode { Zero, Random };

std::string to_string(InitMode m);
InitMode init_mode_from_string(const std::string& s);

/// Starting perturbation for an attack on `x`. Random mode draws
/// u * eps * d' / ||d'||_p with d' ~ N(0, I), u ~ U(0,1) for p in {inf,2,1};
/// for L0 each coordinate is replaced with probability (2/3 eps)/d by a
/// uniform value. The result is projected onto the feasible set.
Vector init_perturbation(const ThreatModel& tm, const Eigen::Ref<const Vector>& x, InitMode mode, Rng& rng);

/// Same draw without the final projection (used for distribution checks).
Vector sample_perturbation_raw(const ThreatModel& tm, const Eigen::Ref<const Vector>& x, Rng& rng);

}  // namespace ccat
