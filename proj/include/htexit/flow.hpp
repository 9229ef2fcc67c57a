// Deterministic gradient-type flow dy/dt = a(y) and its jump-perturbed
// variants. Jumps are modulated by sigma at the pre-jump state and truncated
// at level b.

#pragma once

#include "htexit/fields.hpp"

#include <optional>
#include <ostream>
#include <vector>

namespace htexit {

struct IntegratorConfig {
  double dt = 1e-3;
  bool dense_output = false;
};

/// k jumps w_1..w_k (noise-space vectors) at times 0 < t_1 < ... < t_k <= T.
struct JumpPlan {
  std::vector<Vector> jumps;
  std::vector<double> times;
  double horizon = 0.0;

  int count() const { return static_cast<int>(jumps.size()); }
  /// Throws InvalidArgument unless times are strictly increasing in (0, T].
  void validate() const;
};

struct PathPoint {
  double t = 0.0;
  Vector x;
};

struct PerturbedPath {
  /// Grid points on [0, T]; filled only with dense_output. At a jump time the
  /// pre-jump and post-jump values both appear, in that order.
  std::vector<PathPoint> points;
  std::vector<Vector> pre_jump;
  std::vector<Vector> post_jump;
  Vector end;
};

/// RK4 approximation of y_t(x0).
Vector integrate_flow(const FieldPair& fields, const Vector& x0, double t,
                      const IntegratorConfig& cfg = {});

/// Flow on [0, T] with x(t_j) = x(t_j-) + phi_b(sigma(x(t_j-)) w_j).
PerturbedPath perturbed_path(const FieldPair& fields, const Vector& x0, const JumpPlan& plan,
                             double b, const IntegratorConfig& cfg = {});

/// Path value right after the last jump (k >= 1).
Vector endpoint_after_last_jump(const FieldPair& fields, const Vector& x0, const JumpPlan& plan,
                                double b, const IntegratorConfig& cfg = {});

/// Same as endpoint_after_last_jump but takes the raw jump/time lists and
/// skips validation; used in Monte Carlo inner loops. k = 0 returns x0.
/// Flow segments stop early once |a(y)| <= 1e-10.
Vector jump_chain_endpoint(const FieldPair& fields, const Vector& x0,
                           const std::vector<Vector>& jumps, const std::vector<double>& times,
                           double b, double dt);

/// First t with |y_t(x0)| <= eps, refined by bisection to dt * 1e-3.
/// std::nullopt when not reached by t_max.
std::optional<double> hitting_time(const FieldPair& fields, const Vector& x0, double eps,
                                   double t_max, const IntegratorConfig& cfg = {});

/// Writes "t,x_1,...,x_m" rows for a dense path.
void write_path_csv(std::ostream& os, const PerturbedPath& path);

}  // namespace htexit
