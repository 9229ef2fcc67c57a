// Drift and diffusion coefficients.

#pragma once

#include "htexit/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace htexit {

using DriftFn = std::function<Vector(const Vector&)>;
using DiffusionFn = std::function<Matrix(const Vector&)>;
using PotentialFn = std::function<double(const Vector&)>;
using GradientFn = std::function<Vector(const Vector&)>;

/// Drift a: R^m -> R^m and diffusion sigma: R^m -> R^{m x d}. Evaluators must
/// be pure; a FieldPair is shared read-only across worker threads.
struct FieldPair {
  int dim_state = 1;
  int dim_noise = 1;
  DriftFn drift;
  DiffusionFn diffusion;
  std::optional<double> lipschitz_hint;
  std::string name;
};

Vector eval_drift(const FieldPair& fields, const Vector& x);
Matrix eval_diffusion(const FieldPair& fields, const Vector& x);

struct PotentialSpec {
  enum class Mode { Analytic, FiniteDifference };
  int dim = 1;
  PotentialFn potential;
  Mode mode = Mode::FiniteDifference;
  GradientFn gradient;  // required for Analytic
  double fd_step = 1e-5;
};

/// Central-difference gradient with step h.
Vector fd_gradient(const PotentialFn& u, const Vector& x, double h);

/// a = -grad U, sigma = identity (m x m) unless `diffusion` is given.
FieldPair drift_from_potential(const PotentialSpec& spec,
                               std::optional<DiffusionFn> diffusion = std::nullopt,
                               int dim_noise = -1);

/// The univariate potential of the truncated-SGD exit experiment, evaluated
/// exactly as printed (including the (0.05|1.65 - x|)^0.6 factor).
double paper_potential_U(double x);

/// Fields translated so that `origin` becomes 0: a'(y) = a(y + origin).
FieldPair shift_origin(const FieldPair& fields, const Vector& origin);

/// Built-in fields by name: "paper-U" (1D), "quadratic", "quartic",
/// "linear-contractive". Throws std::out_of_range for unknown names.
FieldPair builtin_field(const std::string& name, int dim = 1);
std::vector<std::string> builtin_field_names();

struct LipschitzReport {
  double max_ratio_drift = 0.0;
  double max_ratio_diffusion = 0.0;
  int violations = 0;
  int pairs = 0;
};

/// Sampled check of |a(x)-a(y)| <= D|x-y| and |sigma(x)-sigma(y)|_op <= D|x-y|
/// over uniform pairs in the box [lo, hi]. Diagnostic only.
LipschitzReport check_lipschitz(const FieldPair& fields, const Vector& lo, const Vector& hi,
                                double D, int pairs, std::uint64_t seed);

}  // namespace htexit
