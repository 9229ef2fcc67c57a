// Multivariate regularly varying noise.
//
// Z = c_pareto * W * Theta + c_normal * G, with W a Pareto(alpha, x_min)
// radius, Theta drawn from a spectral measure on the unit sphere and G a
// standard Gaussian vector. The tail function H(x) = P(|Z| > x) and the
// rate function lambda(eta; gamma) = H(eta^-gamma) / eta live here too.

#pragma once

#include "htexit/rng.hpp"
#include "htexit/types.hpp"

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace htexit {

class SpectralMeasure {
 public:
  struct Atom {
    Vector direction;
    double weight = 0.0;
  };
  struct DiscreteAtoms {
    std::vector<Atom> atoms;
  };
  struct UniformSphere {
    int dim = 1;
  };
  struct SymmetricSigns {
    double p_plus = 0.5;
    double p_minus = 0.5;
  };
  using Variant = std::variant<DiscreteAtoms, UniformSphere, SymmetricSigns>;

  static SpectralMeasure discrete_atoms(std::vector<Atom> atoms);
  static SpectralMeasure uniform_sphere(int dim);
  static SpectralMeasure symmetric_signs(double p_plus = 0.5, double p_minus = 0.5);

  int dim() const;
  Vector sample(Stream& rng) const;
  /// E[Theta].
  Vector mean() const;
  /// The measure as a finite atom list, if it is one (SymmetricSigns counts).
  std::optional<std::vector<Atom>> as_atoms() const;
  const Variant& variant() const { return v_; }
  std::string describe() const;

 private:
  explicit SpectralMeasure(Variant v) : v_(std::move(v)) {}
  Variant v_;
};

struct TailParams {
  double alpha = 1.5;
  double x_min = 1.0;
  double pareto_coeff = 1.0;
  double gauss_coeff = 0.0;
};

/// Immutable noise law. Construction validates alpha > 1, x_min > 0, at least
/// one positive coefficient, and a centered spectral measure (E Z = 0).
class TailModel {
 public:
  TailModel(TailParams params, SpectralMeasure spectral);

  double alpha() const { return p_.alpha; }
  double x_min() const { return p_.x_min; }
  double pareto_coeff() const { return p_.pareto_coeff; }
  double gauss_coeff() const { return p_.gauss_coeff; }
  const TailParams& params() const { return p_; }
  const SpectralMeasure& spectral() const { return spectral_; }
  int dim() const { return spectral_.dim(); }

  bool is_pure_pareto() const { return p_.gauss_coeff == 0.0; }
  /// Throws InvalidArgument when pareto_coeff == 0.
  void require_heavy_tail() const;

 private:
  TailParams p_;
  SpectralMeasure spectral_;
};

/// H(x) = P(|Z| > x). Exact for pure Pareto; adaptive Gauss-Kronrod
/// quadrature of the Pareto/Gaussian convolution otherwise (tol 1e-8).
double tail_H(const TailModel& model, double x);

/// lambda(eta; gamma) = eta^-1 * H(eta^-gamma). gamma = 1 gives lambda(eta).
double rate_lambda(const TailModel& model, double eta, double gamma = 1.0);

/// One draw of Z.
Vector sample_noise(const TailModel& model, Stream& rng);

struct LargeJump {
  double magnitude = 0.0;
  Vector direction;
  /// nu_alpha[delta, inf) = delta^-alpha.
  double weight = 0.0;
};

/// Draws from nu_alpha restricted to [delta, inf) (normalized) times the
/// spectral measure.
LargeJump sample_large_jump(const TailModel& model, double delta, Stream& rng);

/// Cached H on a log-spaced grid with monotone cubic interpolation in
/// (log x, log H). For diagnostics that evaluate H many times.
class TailTable {
 public:
  TailTable(const TailModel& model, double x_lo, double x_hi, int points = 512);
  double operator()(double x) const;

 private:
  std::shared_ptr<const TailModel> model_;
  std::vector<double> log_x_, log_h_, slope_;
};

}  // namespace htexit
