#include "htexit/fields.hpp"

#include "htexit/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace htexit {

namespace {

double operator_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  return Eigen::JacobiSVD<Matrix>(m).singularValues()[0];
}

}  // namespace

Vector eval_drift(const FieldPair& fields, const Vector& x) {
  if (x.size() != fields.dim_state) throw InvalidArgument("drift: state dimension mismatch");
  return fields.drift(x);
}

Matrix eval_diffusion(const FieldPair& fields, const Vector& x) {
  if (x.size() != fields.dim_state) throw InvalidArgument("diffusion: state dimension mismatch");
  Matrix s = fields.diffusion(x);
  if (s.rows() != fields.dim_state || s.cols() != fields.dim_noise)
    throw InvalidArgument("diffusion: evaluator returned the wrong shape");
  return s;
}

Vector fd_gradient(const PotentialFn& u, const Vector& x, double h) {
  Vector g(x.size());
  Vector y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    y[i] = x[i] + h;
    const double up = u(y);
    y[i] = x[i] - h;
    const double dn = u(y);
    y[i] = x[i];
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

FieldPair drift_from_potential(const PotentialSpec& spec, std::optional<DiffusionFn> diffusion,
                               int dim_noise) {
  if (spec.dim < 1) throw InvalidArgument("potential dimension must be >= 1");
  FieldPair f;
  f.dim_state = spec.dim;
  f.dim_noise = dim_noise > 0 ? dim_noise : spec.dim;
  if (spec.mode == PotentialSpec::Mode::Analytic) {
    if (!spec.gradient) throw InvalidArgument("analytic mode needs a gradient");
    f.drift = [g = spec.gradient](const Vector& x) -> Vector { return -g(x); };
  } else {
    if (!(spec.fd_step > 0.0)) throw InvalidArgument("finite-difference step must be positive");
    if (!spec.potential) throw InvalidArgument("finite-difference mode needs a potential");
    f.drift = [u = spec.potential, h = spec.fd_step](const Vector& x) -> Vector {
      return -fd_gradient(u, x, h);
    };
  }
  if (diffusion) {
    f.diffusion = *diffusion;
  } else {
    if (f.dim_noise != f.dim_state)
      throw InvalidArgument("default identity diffusion needs dim_noise == dim_state");
    f.diffusion = [m = spec.dim](const Vector&) -> Matrix { return Matrix::Identity(m, m); };
  }
  return f;
}

double paper_potential_U(double x) {
  const double poly = (x + 1.6) * std::pow(x + 1.3, 2) * std::pow(x - 0.2, 2) *
                      std::pow(x - 0.7, 2) * (x - 1.6);
  const double kink = std::pow(0.05 * std::abs(1.65 - x), 0.6);
  const double bump1 = 1.0 + 1.0 / (0.01 + 4.0 * std::pow(x - 0.5, 2));
  const double bump2 = 1.0 + 1.0 / (0.1 + 4.0 * std::pow(x + 1.5, 2));
  const double well = 1.0 - 0.25 * std::exp(-5.0 * (x + 0.8) * (x + 0.8));
  return poly * kink * bump1 * bump2 * well;
}

FieldPair shift_origin(const FieldPair& fields, const Vector& origin) {
  if (origin.size() != fields.dim_state) throw InvalidArgument("origin dimension mismatch");
  if (origin.isZero(0.0)) return fields;
  FieldPair f = fields;
  f.drift = [a = fields.drift, origin](const Vector& y) -> Vector { return a(y + origin); };
  f.diffusion = [s = fields.diffusion, origin](const Vector& y) -> Matrix { return s(y + origin); };
  return f;
}

std::vector<std::string> builtin_field_names() {
  return {"paper-U", "quadratic", "quartic", "linear-contractive"};
}

FieldPair builtin_field(const std::string& name, int dim) {
  if (dim < 1) throw InvalidArgument("field dimension must be >= 1");
  PotentialSpec spec;
  spec.dim = dim;
  if (name == "paper-U") {
    if (dim != 1) throw InvalidArgument("paper-U is one-dimensional");
    spec.potential = [](const Vector& x) { return paper_potential_U(x[0]); };
    spec.mode = PotentialSpec::Mode::FiniteDifference;
    spec.fd_step = 1e-5;
  } else if (name == "quadratic" || name == "linear-contractive") {
    spec.potential = [](const Vector& x) { return 0.5 * x.squaredNorm(); };
    spec.gradient = [](const Vector& x) -> Vector { return x; };
    spec.mode = PotentialSpec::Mode::Analytic;
  } else if (name == "quartic") {
    spec.potential = [](const Vector& x) { return 0.25 * x.array().pow(4).sum(); };
    spec.gradient = [](const Vector& x) -> Vector { return x.array().cube().matrix(); };
    spec.mode = PotentialSpec::Mode::Analytic;
  } else {
    throw std::out_of_range("unknown field name: " + name);
  }
  FieldPair f = drift_from_potential(spec);
  f.name = name;
  if (name == "quadratic" || name == "linear-contractive") f.lipschitz_hint = 1.0;
  return f;
}

LipschitzReport check_lipschitz(const FieldPair& fields, const Vector& lo, const Vector& hi,
                                double D, int pairs, std::uint64_t seed) {
  Stream rng(seed, 0x11C5);
  LipschitzReport rep;
  auto draw = [&] {
    Vector x(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) x[i] = lo[i] + (hi[i] - lo[i]) * rng.uniform();
    return x;
  };
  for (int k = 0; k < pairs; ++k) {
    const Vector x = draw(), y = draw();
    const double dxy = (x - y).norm();
    if (dxy == 0.0) continue;
    const double ra = (eval_drift(fields, x) - eval_drift(fields, y)).norm() / dxy;
    const double rs = operator_norm(eval_diffusion(fields, x) - eval_diffusion(fields, y)) / dxy;
    rep.max_ratio_drift = std::max(rep.max_ratio_drift, ra);
    rep.max_ratio_diffusion = std::max(rep.max_ratio_diffusion, rs);
    if (ra > D || rs > D) ++rep.violations;
    ++rep.pairs;
  }
  return rep;
}

}  // namespace htexit
