#include "htexit/flow.hpp"

#include "htexit/dynamics.hpp"

#include <cmath>

namespace htexit {

namespace {

Vector rk4_step(const FieldPair& f, const Vector& y, double h) {
  const Vector k1 = f.drift(y);
  const Vector k2 = f.drift(y + (0.5 * h) * k1);
  const Vector k3 = f.drift(y + (0.5 * h) * k2);
  const Vector k4 = f.drift(y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Integrates over [t0, t0 + len] using ceil(len / dt) equal substeps.
Vector integrate_segment(const FieldPair& f, Vector y, double t0, double len, double dt,
                         std::vector<PathPoint>* dense) {
  if (len <= 0.0) return y;
  const auto n = static_cast<long>(std::ceil(len / dt - 1e-9));
  const double h = len / static_cast<double>(std::max(n, 1L));
  for (long i = 0; i < std::max(n, 1L); ++i) {
    y = rk4_step(f, y, h);
    if (!y.allFinite()) throw RuntimeFailure("non-finite flow trajectory");
    if (dense) dense->push_back({t0 + h * static_cast<double>(i + 1), y});
  }
  return y;
}

void check_dt(const IntegratorConfig& cfg) {
  if (!(cfg.dt > 0.0)) throw InvalidArgument("integrator dt must be positive");
}

}  // namespace

void JumpPlan::validate() const {
  if (jumps.size() != times.size()) throw InvalidArgument("jump plan: list lengths differ");
  if (!(horizon > 0.0)) throw InvalidArgument("jump plan: horizon must be positive");
  double prev = 0.0;
  for (double t : times) {
    if (!(t > prev) || t > horizon)
      throw InvalidArgument("jump plan: times must be strictly increasing in (0, T]");
    prev = t;
  }
}

Vector integrate_flow(const FieldPair& fields, const Vector& x0, double t,
                      const IntegratorConfig& cfg) {
  check_dt(cfg);
  if (t < 0.0) throw InvalidArgument("integrate_flow needs t >= 0");
  return integrate_segment(fields, x0, 0.0, t, cfg.dt, nullptr);
}

PerturbedPath perturbed_path(const FieldPair& fields, const Vector& x0, const JumpPlan& plan,
                             double b, const IntegratorConfig& cfg) {
  check_dt(cfg);
  plan.validate();
  PerturbedPath out;
  auto* dense = cfg.dense_output ? &out.points : nullptr;
  if (dense) dense->push_back({0.0, x0});
  Vector y = x0;
  double t = 0.0;
  for (int j = 0; j < plan.count(); ++j) {
    y = integrate_segment(fields, y, t, plan.times[j] - t, cfg.dt, dense);
    t = plan.times[j];
    out.pre_jump.push_back(y);
    y += truncate(eval_diffusion(fields, y) * plan.jumps[j], b);
    if (!y.allFinite()) throw RuntimeFailure("non-finite state after jump");
    out.post_jump.push_back(y);
    if (dense) dense->push_back({t, y});
  }
  out.end = integrate_segment(fields, y, t, plan.horizon - t, cfg.dt, dense);
  return out;
}

Vector endpoint_after_last_jump(const FieldPair& fields, const Vector& x0, const JumpPlan& plan,
                                double b, const IntegratorConfig& cfg) {
  check_dt(cfg);
  plan.validate();
  if (plan.count() < 1) throw InvalidArgument("endpoint_after_last_jump needs k >= 1");
  return jump_chain_endpoint(fields, x0, plan.jumps, plan.times, b, cfg.dt);
}

namespace {

// Like integrate_segment, but stops once |a(y)| <= kSettled: the path has
// reached a stationary point and stays there.
constexpr double kSettled = 1e-10;

Vector integrate_segment_settling(const FieldPair& f, Vector y, double len, double dt) {
  if (len <= 0.0) return y;
  const auto n = static_cast<long>(std::ceil(len / dt - 1e-9));
  const double h = len / static_cast<double>(std::max(n, 1L));
  for (long i = 0; i < std::max(n, 1L); ++i) {
    const Vector k1 = f.drift(y);
    if (k1.norm() <= kSettled) return y;
    const Vector k2 = f.drift(y + (0.5 * h) * k1);
    const Vector k3 = f.drift(y + (0.5 * h) * k2);
    const Vector k4 = f.drift(y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!y.allFinite()) throw RuntimeFailure("non-finite flow trajectory");
  }
  return y;
}

}  // namespace

Vector jump_chain_endpoint(const FieldPair& fields, const Vector& x0,
                           const std::vector<Vector>& jumps, const std::vector<double>& times,
                           double b, double dt) {
  Vector y = x0;
  double t = 0.0;
  for (std::size_t j = 0; j < jumps.size(); ++j) {
    y = integrate_segment_settling(fields, y, times[j] - t, dt);
    t = times[j];
    y += truncate(fields.diffusion(y) * jumps[j], b);
  }
  return y;
}

std::optional<double> hitting_time(const FieldPair& fields, const Vector& x0, double eps,
                                   double t_max, const IntegratorConfig& cfg) {
  check_dt(cfg);
  if (!(eps > 0.0) || !(t_max > 0.0)) throw InvalidArgument("hitting_time needs eps, t_max > 0");
  if (x0.norm() <= eps) return 0.0;
  Vector y = x0;
  double t = 0.0;
  const double h = cfg.dt;
  while (t < t_max) {
    const double step = std::min(h, t_max - t);
    const Vector next = rk4_step(fields, y, step);
    if (!next.allFinite()) throw RuntimeFailure("non-finite flow trajectory");
    if (next.norm() <= eps) {
      double lo = 0.0, hi = step;
      while (hi - lo > h * 1e-3) {
        const double mid = 0.5 * (lo + hi);
        if (rk4_step(fields, y, mid).norm() <= eps)
          hi = mid;
        else
          lo = mid;
      }
      return t + hi;
    }
    y = next;
    t += step;
  }
  return std::nullopt;
}

void write_path_csv(std::ostream& os, const PerturbedPath& path) {
  const auto m = path.points.empty() ? 0 : path.points.front().x.size();
  os << 't';
  for (Eigen::Index i = 0; i < m; ++i) os << ",x_" << (i + 1);
  os << '\n';
  os.precision(17);
  for (const auto& p : path.points) {
    os << p.t;
    for (Eigen::Index i = 0; i < m; ++i) os << ',' << p.x[i];
    os << '\n';
  }
}

}  // namespace htexit
