#pragma once

#include "htexit/fields.hpp"
#include "htexit/geometry.hpp"
#include "htexit/noise.hpp"

#include <cmath>

namespace htexit::test {

inline TailModel pareto_model(double alpha, double c_pareto = 1.0, double x_min = 1.0,
                              double c_normal = 0.0) {
  return TailModel({alpha, x_min, c_pareto, c_normal}, SpectralMeasure::symmetric_signs());
}

/// a(x) = -x, sigma = identity.
inline FieldPair linear_field(int dim = 1) { return builtin_field("quadratic", dim); }

inline FieldPair zero_field(int dim = 1) {
  FieldPair f;
  f.dim_state = f.dim_noise = dim;
  f.drift = [dim](const Vector&) -> Vector { return Vector::Zero(dim); };
  f.diffusion = [dim](const Vector&) -> Matrix { return Matrix::Identity(dim, dim); };
  f.name = "zero";
  return f;
}

/// Reference double-well fields with the local minimum moved to 0; domain (-0.64, 0.86).
inline constexpr double kMinimum = -0.66;
inline FieldPair shifted_potential_field() {
  return shift_origin(builtin_field("paper-U"), scalar_vector(kMinimum));
}
inline DomainSpec shifted_potential_domain() {
  return translate(DomainSpec::interval(-1.3, 0.2), scalar_vector(kMinimum));
}

}  // namespace htexit::test
