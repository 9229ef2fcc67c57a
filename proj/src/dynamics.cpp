#include "htexit/dynamics.hpp"

#include <cmath>

namespace htexit {

Vector truncate(const Vector& w, double b) {
  if (b == kInf) return w;
  const double n = w.norm();
  if (n == 0.0) return Vector::Zero(w.size());
  if (n <= b) return w;
  // Rounding can leave |out| a few ulp above b; shrink until it is not, so
  // the result is a fixed point.
  double scale = b / n;
  Vector out = w * scale;
  while (out.norm() > b) {
    scale = std::nextafter(scale, 0.0);
    out = w * scale;
  }
  return out;
}

ChainConfig::ChainConfig(FieldPair fields_, TailModel noise_, double eta_, double b_, double gamma_)
    : fields(std::move(fields_)), noise(std::move(noise_)), eta(eta_), b(b_), gamma(gamma_) {
  if (!(eta > 0.0 && eta < 1.0)) throw InvalidArgument("step size eta must lie in (0, 1)");
  if (!(b > 0.0)) throw InvalidArgument("truncation threshold b must be positive or inf");
  if (!(gamma >= 1.0)) throw InvalidArgument("noise scaling exponent gamma must be >= 1");
  if (gamma != 1.0 && !(gamma > 1.0 / std::min(2.0, noise.alpha())))
    throw InvalidArgument("gamma must exceed 1 / min(2, alpha)");
  if (fields.dim_noise != noise.dim())
    throw InvalidArgument("noise dimension does not match the diffusion's column count");
  noise_scale_ = gamma == 1.0 ? eta : std::pow(eta, gamma);
}

Vector raw_increment(const ChainConfig& config, const Vector& x, const Vector& z) {
  Vector inc = config.eta * eval_drift(config.fields, x);
  inc += config.noise_scale() * (eval_diffusion(config.fields, x) * z);
  return inc;
}

ChainState step_with_noise(const ChainConfig& config, const ChainState& state, const Vector& z) {
  ChainState next;
  const Vector inc = raw_increment(config, state.position, z);
  next.position = state.position + (config.truncated() ? truncate(inc, config.b) : inc);
  next.step_count = state.step_count + 1;
  if (!next.position.allFinite())
    throw NonFiniteState("non-finite state after step " + std::to_string(next.step_count));
  return next;
}

ChainState step(const ChainConfig& config, const ChainState& state, Stream& rng) {
  return step_with_noise(config, state, sample_noise(config.noise, rng));
}

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::Predicate: return "Predicate";
    case StopReason::Capped: return "Capped";
    case StopReason::NonFinite: return "NonFinite";
  }
  return "?";
}

RunResult run_until(const ChainConfig& config, const Vector& start, const StopPredicate& stop,
                    std::uint64_t cap, Stream& rng) {
  if (cap < 1) throw InvalidArgument("run_until needs cap >= 1");
  RunResult r;
  r.state.position = start;
  r.state.step_count = 0;
  while (true) {
    if (stop(r.state.position, r.state.step_count)) {
      r.reason = StopReason::Predicate;
      return r;
    }
    if (r.state.step_count >= cap) {
      r.reason = StopReason::Capped;
      return r;
    }
    try {
      r.state = step(config, r.state, rng);
    } catch (const NonFiniteState&) {
      r.reason = StopReason::NonFinite;
      return r;
    }
  }
}

}  // namespace htexit
