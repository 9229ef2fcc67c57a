#include "htexit/noise.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace htexit {

namespace {

constexpr double kWeightTol = 1e-12;
constexpr double kQuadTol = 1e-8;

// P(N(0,1) > z)
double normal_upper(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

template <class F>
double integrate(F f, double a, double b) {
  using boost::math::quadrature::gauss_kronrod;
  return gauss_kronrod<double, 61>::integrate(f, a, b, 15, kQuadTol);
}

// P(|r e_1 + c G| > x) for G ~ N(0, I_d).
double shifted_gauss_tail(double r, double c, double x, int d) {
  // In 1D: P(|r + cG| > x).
  auto one_dim = [&](double level) {
    if (level <= 0.0) return 1.0;
    return normal_upper((level - r) / c) + normal_upper((level + r) / c);
  };
  if (d == 1) return one_dim(x);
  // |r e_1 + cG|^2 = (r + c G_1)^2 + c^2 Q,  Q ~ chi^2_{d-1}.
  const boost::math::chi_squared chi(d - 1);
  const double q_max = (x / c) * (x / c);
  const double beyond = boost::math::cdf(boost::math::complement(chi, q_max));
  const double inner = integrate(
      [&](double q) {
        return boost::math::pdf(chi, q) * one_dim(std::sqrt(std::max(x * x - c * c * q, 0.0)));
      },
      0.0, q_max);
  return beyond + inner;
}

}  // namespace

// ---------------------------------------------------------------------------
// SpectralMeasure

SpectralMeasure SpectralMeasure::discrete_atoms(std::vector<Atom> atoms) {
  if (atoms.empty()) throw InvalidArgument("spectral measure needs at least one atom");
  const auto d = atoms.front().direction.size();
  double total = 0.0;
  for (const auto& a : atoms) {
    if (a.direction.size() != d) throw InvalidArgument("spectral atoms differ in dimension");
    if (a.weight < 0.0) throw InvalidArgument("spectral atom weight is negative");
    if (std::abs(a.direction.norm() - 1.0) > kWeightTol)
      throw InvalidArgument("spectral atom is not a unit vector");
    total += a.weight;
  }
  if (std::abs(total - 1.0) > kWeightTol) throw InvalidArgument("spectral weights do not sum to 1");
  return SpectralMeasure(DiscreteAtoms{std::move(atoms)});
}

SpectralMeasure SpectralMeasure::uniform_sphere(int dim) {
  if (dim < 1) throw InvalidArgument("uniform sphere dimension must be >= 1");
  return SpectralMeasure(UniformSphere{dim});
}

SpectralMeasure SpectralMeasure::symmetric_signs(double p_plus, double p_minus) {
  if (p_plus < 0.0 || p_minus < 0.0 || std::abs(p_plus + p_minus - 1.0) > kWeightTol)
    throw InvalidArgument("sign weights must be nonnegative and sum to 1");
  return SpectralMeasure(SymmetricSigns{p_plus, p_minus});
}

int SpectralMeasure::dim() const {
  return std::visit(
      [](const auto& v) -> int {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DiscreteAtoms>)
          return static_cast<int>(v.atoms.front().direction.size());
        else if constexpr (std::is_same_v<T, UniformSphere>)
          return v.dim;
        else
          return 1;
      },
      v_);
}

Vector SpectralMeasure::sample(Stream& rng) const {
  return std::visit(
      [&](const auto& v) -> Vector {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DiscreteAtoms>) {
          const double u = rng.uniform();
          double acc = 0.0;
          for (const auto& a : v.atoms) {
            acc += a.weight;
            if (u < acc) return a.direction;
          }
          return v.atoms.back().direction;
        } else if constexpr (std::is_same_v<T, UniformSphere>) {
          Vector g(v.dim);
          do {
            for (int i = 0; i < v.dim; ++i) g[i] = rng.normal();
          } while (g.norm() == 0.0);
          return g / g.norm();
        } else {
          return scalar_vector(rng.uniform() < v.p_plus ? 1.0 : -1.0);
        }
      },
      v_);
}

Vector SpectralMeasure::mean() const {
  return std::visit(
      [&](const auto& v) -> Vector {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DiscreteAtoms>) {
          Vector m = Vector::Zero(v.atoms.front().direction.size());
          for (const auto& a : v.atoms) m += a.weight * a.direction;
          return m;
        } else if constexpr (std::is_same_v<T, UniformSphere>) {
          return Vector::Zero(v.dim);
        } else {
          return scalar_vector(v.p_plus - v.p_minus);
        }
      },
      v_);
}

std::optional<std::vector<SpectralMeasure::Atom>> SpectralMeasure::as_atoms() const {
  if (const auto* a = std::get_if<DiscreteAtoms>(&v_)) return a->atoms;
  if (const auto* s = std::get_if<SymmetricSigns>(&v_))
    return std::vector<Atom>{{scalar_vector(1.0), s->p_plus}, {scalar_vector(-1.0), s->p_minus}};
  return std::nullopt;
}

std::string SpectralMeasure::describe() const {
  std::ostringstream os;
  os.precision(17);
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DiscreteAtoms>) {
          os << "atoms:";
          for (std::size_t i = 0; i < v.atoms.size(); ++i) {
            if (i) os << ';';
            for (Eigen::Index j = 0; j < v.atoms[i].direction.size(); ++j)
              os << v.atoms[i].direction[j] << ' ';
            os << v.atoms[i].weight;
          }
        } else if constexpr (std::is_same_v<T, UniformSphere>) {
          os << "uniform-sphere";
        } else {
          os << "signs:" << v.p_plus << ',' << v.p_minus;
        }
      },
      v_);
  return os.str();
}

// ---------------------------------------------------------------------------
// TailModel

TailModel::TailModel(TailParams params, SpectralMeasure spectral)
    : p_(params), spectral_(std::move(spectral)) {
  if (!(p_.alpha > 1.0)) throw InvalidArgument("tail index alpha must exceed 1");
  if (!(p_.x_min > 0.0)) throw InvalidArgument("x_min must be positive");
  if (p_.pareto_coeff < 0.0 || p_.gauss_coeff < 0.0)
    throw InvalidArgument("noise coefficients must be nonnegative");
  if (!(p_.pareto_coeff > 0.0 || p_.gauss_coeff > 0.0))
    throw InvalidArgument("at least one of pareto_coeff, gauss_coeff must be positive");
  if (p_.pareto_coeff > 0.0 && spectral_.mean().norm() > kWeightTol)
    throw InvalidArgument("spectral measure is not centered; the noise would not have mean zero");
}

void TailModel::require_heavy_tail() const {
  if (p_.pareto_coeff == 0.0)
    throw InvalidArgument("operation needs a heavy-tailed component (pareto_coeff > 0)");
}

double tail_H(const TailModel& model, double x) {
  if (!(x > 0.0)) throw InvalidArgument("tail_H needs x > 0");
  const double cp = model.pareto_coeff();
  const double cn = model.gauss_coeff();
  const double alpha = model.alpha();
  const int d = model.dim();
  if (cn == 0.0) {
    const double scale = cp * model.x_min();
    return x >= scale ? std::pow(x / scale, -alpha) : 1.0;
  }
  if (cp == 0.0) return shifted_gauss_tail(0.0, cn, x, d);
  // Radius r = cp * x_min * u^(-1/alpha) with u uniform on (0, 1].
  const double scale = cp * model.x_min();
  return integrate(
      [&](double u) {
        if (u <= 0.0) return 1.0;
        return shifted_gauss_tail(scale * std::pow(u, -1.0 / alpha), cn, x, d);
      },
      0.0, 1.0);
}

double rate_lambda(const TailModel& model, double eta, double gamma) {
  if (!(eta > 0.0 && eta < 1.0)) throw InvalidArgument("rate_lambda needs eta in (0, 1)");
  if (!(gamma >= 1.0)) throw InvalidArgument("rate_lambda needs gamma >= 1");
  const double level = gamma == 1.0 ? 1.0 / eta : std::pow(eta, -gamma);
  return tail_H(model, level) / eta;
}

Vector sample_noise(const TailModel& model, Stream& rng) {
  model.require_heavy_tail();
  const double w = model.x_min() * std::pow(rng.uniform(), -1.0 / model.alpha());
  Vector z = (model.pareto_coeff() * w) * model.spectral().sample(rng);
  if (model.gauss_coeff() > 0.0)
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] += model.gauss_coeff() * rng.normal();
  return z;
}

LargeJump sample_large_jump(const TailModel& model, double delta, Stream& rng) {
  if (!(delta > 0.0)) throw InvalidArgument("sample_large_jump needs delta > 0");
  LargeJump j;
  j.magnitude = delta * std::pow(rng.uniform(), -1.0 / model.alpha());
  j.direction = model.spectral().sample(rng);
  j.weight = std::pow(delta, -model.alpha());
  return j;
}

// ---------------------------------------------------------------------------
// TailTable

TailTable::TailTable(const TailModel& model, double x_lo, double x_hi, int points)
    : model_(std::make_shared<TailModel>(model)) {
  if (!(x_lo > 0.0 && x_hi > x_lo) || points < 2)
    throw InvalidArgument("TailTable needs 0 < x_lo < x_hi and >= 2 points");
  const int n = points;
  log_x_.resize(n);
  log_h_.resize(n);
  const double a = std::log(x_lo), b = std::log(x_hi);
  for (int i = 0; i < n; ++i) {
    log_x_[i] = a + (b - a) * i / (n - 1);
    log_h_[i] = std::log(std::max(tail_H(*model_, std::exp(log_x_[i])), 1e-300));
  }
  // Fritsch-Carlson tangents.
  std::vector<double> delta(n - 1);
  for (int i = 0; i + 1 < n; ++i)
    delta[i] = (log_h_[i + 1] - log_h_[i]) / (log_x_[i + 1] - log_x_[i]);
  slope_.assign(n, 0.0);
  slope_[0] = delta[0];
  slope_[n - 1] = delta[n - 2];
  for (int i = 1; i + 1 < n; ++i)
    slope_[i] = delta[i - 1] * delta[i] <= 0.0 ? 0.0 : 0.5 * (delta[i - 1] + delta[i]);
  for (int i = 0; i + 1 < n; ++i) {
    if (delta[i] == 0.0) {
      slope_[i] = slope_[i + 1] = 0.0;
      continue;
    }
    const double al = slope_[i] / delta[i], be = slope_[i + 1] / delta[i];
    const double s = al * al + be * be;
    if (s > 9.0) {
      const double t = 3.0 / std::sqrt(s);
      slope_[i] = t * al * delta[i];
      slope_[i + 1] = t * be * delta[i];
    }
  }
}

double TailTable::operator()(double x) const {
  if (!(x > 0.0)) throw InvalidArgument("tail_H needs x > 0");
  const double lx = std::log(x);
  if (lx < log_x_.front() || lx > log_x_.back()) return tail_H(*model_, x);
  auto it = std::upper_bound(log_x_.begin(), log_x_.end(), lx);
  std::size_t i = std::min<std::size_t>(std::distance(log_x_.begin(), it), log_x_.size() - 1);
  if (i > 0) --i;
  const double h = log_x_[i + 1] - log_x_[i];
  const double t = (lx - log_x_[i]) / h;
  const double t2 = t * t, t3 = t2 * t;
  const double y = (2 * t3 - 3 * t2 + 1) * log_h_[i] + (t3 - 2 * t2 + t) * h * slope_[i] +
                   (-2 * t3 + 3 * t2) * log_h_[i + 1] + (t3 - t2) * h * slope_[i + 1];
  return std::exp(y);
}

}  // namespace htexit
