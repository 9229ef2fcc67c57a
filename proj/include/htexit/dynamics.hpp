// Stochastic difference equations with (optionally) truncated updates.
//
//   X_t = X_{t-1} + phi_b( eta * a(X_{t-1}) + eta^gamma * sigma(X_{t-1}) Z_t )
//
// b = +inf skips the truncation exactly; gamma = 1 is the main regime.

#pragma once

#include "htexit/fields.hpp"
#include "htexit/noise.hpp"
#include "htexit/rng.hpp"

#include <cstdint>
#include <functional>

namespace htexit {

/// Euclidean projection onto the closed ball of radius b. phi_b(0) = 0.
Vector truncate(const Vector& w, double b);

struct ChainConfig {
  ChainConfig(FieldPair fields, TailModel noise, double eta, double b = kInf, double gamma = 1.0);

  FieldPair fields;
  TailModel noise;
  double eta;
  double b;
  double gamma;

  bool truncated() const { return b != kInf; }
  /// eta^gamma; exactly eta when gamma == 1.
  double noise_scale() const { return noise_scale_; }

 private:
  double noise_scale_;
};

struct ChainState {
  Vector position;
  std::uint64_t step_count = 0;
};

/// The update before truncation: eta a(x) + eta^gamma sigma(x) z.
Vector raw_increment(const ChainConfig& config, const Vector& x, const Vector& z);

/// One step with an explicit noise draw z.
ChainState step_with_noise(const ChainConfig& config, const ChainState& state, const Vector& z);

/// One step drawing Z from the configured noise. Throws NonFiniteState.
ChainState step(const ChainConfig& config, const ChainState& state, Stream& rng);

class NonFiniteState : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

enum class StopReason { Predicate, Capped, NonFinite };
const char* to_string(StopReason r);

using StopPredicate = std::function<bool(const Vector&, std::uint64_t)>;

struct RunResult {
  ChainState state;
  StopReason reason = StopReason::Capped;
};

/// Steps until stop(position, step_count) holds, `cap` steps are taken, or
/// the state becomes non-finite. The predicate is checked before each step.
RunResult run_until(const ChainConfig& config, const Vector& start, const StopPredicate& stop,
                    std::uint64_t cap, Stream& rng);

}  // namespace htexit
