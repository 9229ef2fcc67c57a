#include "htexit/measures.hpp"

#include "htexit/csv.hpp"
#include "htexit/flow.hpp"
#include "htexit/parallel.hpp"
#include "htexit/rng.hpp"
#include "htexit/stats.hpp"

#include <boost/math/special_functions/bessel.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace htexit {

namespace {

constexpr std::uint64_t kProbeSalt = 0x9B0BE;
constexpr int kMaxEvents = 32;

struct Stratum {
  std::vector<int> atoms;  // empty: directions drawn from the spectral measure
  double prob = 1.0;
  std::size_t begin = 0;
  std::size_t count = 0;
};

std::vector<Stratum> make_strata(const TailModel& noise, int k, std::size_t n, int max_strata) {
  const auto atoms = noise.spectral().as_atoms();
  std::vector<Stratum> out;
  std::size_t combos = 1;
  bool stratify = atoms.has_value();
  if (stratify) {
    for (int j = 0; j < k && stratify; ++j) {
      combos *= atoms->size();
      if (combos > static_cast<std::size_t>(max_strata)) stratify = false;
    }
  }
  if (!stratify) {
    out.push_back({{}, 1.0, 0, n});
    return out;
  }
  std::vector<int> idx(k, 0);
  for (std::size_t c = 0; c < combos; ++c) {
    std::size_t rem = c;
    double p = 1.0;
    for (int j = 0; j < k; ++j) {
      idx[j] = static_cast<int>(rem % atoms->size());
      rem /= atoms->size();
      p *= (*atoms)[idx[j]].weight;
    }
    if (p > 0.0) out.push_back({idx, p, 0, 0});
  }
  std::size_t begin = 0;
  for (auto& s : out) {
    s.count = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(s.prob * n)));
    s.begin = begin;
    begin += s.count;
  }
  return out;
}

struct SampleSet {
  std::vector<Stratum> strata;
  std::vector<std::uint32_t> masks;
  std::vector<double> weights;
  double gap_scale = 0.0;
};

// von Mises-Fisher on S^(d-1), d >= 2 (Wood's rejection scheme). The Beta
// variate is built from two chi-square(d - 1) sums.
class VonMisesFisher {
 public:
  VonMisesFisher(int d, double kappa) : d_(d), kappa_(kappa) {
    const double dm1 = d - 1.0;
    b_ = (-2.0 * kappa + std::sqrt(4.0 * kappa * kappa + dm1 * dm1)) / dm1;
    x0_ = (1.0 - b_) / (1.0 + b_);
    c_ = kappa * x0_ + dm1 * std::log(1.0 - x0_ * x0_);
    const double nu = 0.5 * d - 1.0;
    // log of C_d(kappa) times the sphere area 2 pi^(d/2) / Gamma(d/2).
    log_norm_ = nu * std::log(kappa) - 0.5 * d * std::log(2.0 * M_PI) -
                std::log(boost::math::cyl_bessel_i(nu, kappa)) + std::log(2.0) +
                0.5 * d * std::log(M_PI) - std::lgamma(0.5 * d);
  }

  Vector sample(const Vector& mu, Stream& rng) const {
    double w = 0.0;
    while (true) {
      double x = 0.0, y = 0.0;
      for (int i = 0; i < d_ - 1; ++i) {
        const double g1 = rng.normal(), g2 = rng.normal();
        x += g1 * g1;
        y += g2 * g2;
      }
      const double z = x / (x + y);
      w = (1.0 - (1.0 + b_) * z) / (1.0 - (1.0 - b_) * z);
      if (kappa_ * w + (d_ - 1.0) * std::log(1.0 - x0_ * w) - c_ >= std::log(rng.uniform())) break;
    }
    Vector v(d_);
    double vn = 0.0;
    do {
      for (int i = 0; i < d_; ++i) v[i] = rng.normal();
      v -= v.dot(mu) * mu;
      vn = v.norm();
    } while (vn < 1e-12);
    return w * mu + std::sqrt(std::max(0.0, 1.0 - w * w)) * (v / vn);
  }

  /// Density relative to the normalized uniform law on the sphere.
  double relative_density(const Vector& mu, const Vector& x) const {
    return std::exp(log_norm_ + kappa_ * mu.dot(x));
  }

 private:
  int d_;
  double kappa_, b_, x0_, c_, log_norm_;
};

double op_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()[0];
}

// Operator norm of the drift Jacobian at the origin (central differences).
double drift_rate_at_origin(const FieldPair& fields) {
  const int m = fields.dim_state;
  constexpr double h = 1e-5;
  Matrix jac(m, m);
  for (int i = 0; i < m; ++i) {
    const Vector e = h * Vector::Unit(m, i);
    jac.col(i) = (fields.drift(e) - fields.drift(-e)) / (2.0 * h);
  }
  Eigen::JacobiSVD<Matrix> svd(jac);
  return svd.singularValues()[0];
}

SampleSet draw_masks(const FieldPair& fields, const std::vector<StateEvent>& events, int k,
                     double b, const TailModel& noise, double delta_bar, double t_bar,
                     const MeasureOptions& opt) {
  if (k < 1) throw InvalidArgument("check measure needs k >= 1");
  if (!(delta_bar > 0.0)) throw InvalidArgument("check measure needs delta_bar > 0");
  if (k >= 2 && !(t_bar > 0.0)) throw InvalidArgument("check measure needs t_bar > 0 for k >= 2");
  if (events.empty() || events.size() > kMaxEvents)
    throw InvalidArgument("check measure takes between 1 and 32 events");
  if (opt.n < 2) throw InvalidArgument("check measure needs n >= 2");
  if (noise.dim() != fields.dim_noise) throw InvalidArgument("noise/field dimension mismatch");
  noise.require_heavy_tail();

  SampleSet s;
  s.strata = make_strata(noise, k, opt.n, opt.max_strata);
  const std::size_t total = s.strata.back().begin + s.strata.back().count;
  s.masks.assign(total, 0);
  s.weights.assign(total, 0.0);
  const double alpha = noise.alpha();
  const auto atoms = noise.spectral().as_atoms();
  const Vector zero = Vector::Zero(fields.dim_state);

  double upper_cut = opt.upper_cutoff;
  if (!(upper_cut > 0.0)) {
    const double sig = op_norm(eval_diffusion(fields, zero));
    upper_cut = b == kInf || !(sig > 0.0) ? 2.0 * delta_bar : 0.5 * b / sig;
  }
  const bool mag_mixture = opt.magnitude_proposal == MagnitudeProposal::Mixture && upper_cut > delta_bar;
  // Ordered times on [0, t_bar]^(k-1) have volume t_bar^(k-1) / (k-1)!.
  const double log_uniform_density =
      k >= 2 ? std::lgamma(static_cast<double>(k)) - (k - 1) * std::log(t_bar) : 0.0;
  const bool mixture = k >= 2 && opt.time_proposal == TimeProposal::Mixture;
  if (mixture) {
    double g = opt.gap_scale;
    if (!(g > 0.0)) {
      const double rho = drift_rate_at_origin(fields);
      g = rho > 0.0 ? std::min(t_bar / k, 0.5 / rho) : t_bar / k;
    }
    s.gap_scale = g;
  }
  const double kappa = mixture ? 1.0 / s.gap_scale : 0.0;

  std::optional<VonMisesFisher> aligned;
  if (const auto* u = std::get_if<SpectralMeasure::UniformSphere>(&noise.spectral().variant());
      u && u->dim >= 2 && k >= 2 && opt.direction_concentration > 0.0)
    aligned.emplace(u->dim, opt.direction_concentration);

  for (const auto& st : s.strata) {
    parallel_for(st.count, opt.threads, [&](std::size_t local) {
      const std::size_t i = st.begin + local;
      Stream rng(opt.seed, i);
      std::vector<Vector> jumps(k);
      std::vector<double> times(k, 0.0);
      double log_w = 0.0;
      for (int j = 0; j < k; ++j) {
        const double lower = mag_mixture && rng.uniform() < 0.5 ? upper_cut : delta_bar;
        const double r = lower * std::pow(rng.uniform(), -1.0 / alpha);
        Vector dir;
        if (!st.atoms.empty()) {
          dir = (*atoms)[st.atoms[j]].direction;
        } else if (aligned && j > 0) {
          const Vector mu = jumps[0] / jumps[0].norm();
          dir = rng.uniform() < 0.5 ? noise.spectral().sample(rng) : aligned->sample(mu, rng);
          log_w -= std::log(0.5 + 0.5 * aligned->relative_density(mu, dir));
        } else {
          dir = noise.spectral().sample(rng);
        }
        jumps[j] = r * dir;
        // nu_alpha density over the proposal density at r.
        log_w -= mag_mixture ? std::log(0.5 * std::pow(delta_bar, alpha) +
                                        (r >= upper_cut ? 0.5 * std::pow(upper_cut, alpha) : 0.0))
                             : alpha * std::log(delta_bar);
      }
      if (k >= 2) {
        if (mixture && rng.uniform() < 0.5) {
          for (int j = 1; j < k; ++j) times[j] = times[j - 1] - std::log(rng.uniform()) / kappa;
        } else {
          for (int j = 1; j < k; ++j) times[j] = t_bar * rng.uniform();
          std::sort(times.begin() + 1, times.end());
        }
        if (times[k - 1] > t_bar) {
          s.masks[i] = 0;
          s.weights[i] = 0.0;
          return;
        }
        if (mixture) {
          // Density of the gap vector under the two-component proposal.
          const double exp_density =
              std::exp((k - 1) * std::log(kappa) - kappa * times[k - 1]);
          const double q = 0.5 * std::exp(log_uniform_density) + 0.5 * exp_density;
          log_w -= std::log(q);
        } else {
          log_w -= log_uniform_density;
        }
      }
      const Vector y = jump_chain_endpoint(fields, zero, jumps, times, b, opt.dt);
      std::uint32_t m = 0;
      for (std::size_t e = 0; e < events.size(); ++e)
        if (events[e](y)) m |= 1u << e;
      s.masks[i] = m;
      s.weights[i] = std::exp(log_w);
    }, 256);
  }
  return s;
}

// Stratified estimate of E[f(mask)] and its standard error.
std::pair<double, double> stratified(const SampleSet& s,
                                     const std::function<double(std::uint32_t, double)>& f) {
  KahanSum mean, var;
  for (const auto& st : s.strata) {
    KahanSum sum, sum2;
    for (std::size_t i = st.begin; i < st.begin + st.count; ++i) {
      const double v = f(s.masks[i], s.weights[i]);
      sum.add(v);
      sum2.add(v * v);
    }
    const double n = static_cast<double>(st.count);
    const double m = sum.value() / n;
    mean.add(st.prob * m);
    if (st.count > 1) {
      const double sv = std::max(0.0, (sum2.value() - n * m * m) / (n - 1.0));
      var.add(st.prob * st.prob * sv / n);
    }
  }
  return {mean.value(), std::sqrt(std::max(0.0, var.value()))};
}

// Plans with at least one jump below delta_bar; true if any lands in B.
bool small_jumps_reach(const FieldPair& fields, const StateEvent& event, int k, double b,
                       const TailModel& noise, double delta_bar, double t_bar,
                       const MeasureOptions& opt) {
  constexpr int kProbes = 4000;
  const Vector zero = Vector::Zero(fields.dim_state);
  const double hi = 10.0 * std::max(delta_bar, b == kInf ? delta_bar : b);
  const double lo = 1e-3 * delta_bar;
  for (int p = 0; p < kProbes; ++p) {
    Stream rng = child_stream(StreamKey{opt.seed, static_cast<std::uint64_t>(p)}, kProbeSalt);
    std::vector<Vector> jumps(k);
    std::vector<double> times(k, 0.0);
    const int small = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    for (int j = 0; j < k; ++j) {
      const double top = j == small ? delta_bar : hi;
      const double r = lo * std::pow(top / lo, rng.uniform());
      jumps[j] = r * noise.spectral().sample(rng);
    }
    const double span = p % 2 ? 1e-2 * std::max(t_bar, 1.0) : std::max(t_bar, 1.0);
    for (int j = 1; j < k; ++j) times[j] = span * rng.uniform();
    std::sort(times.begin() + 1, times.end());
    if (event(jump_chain_endpoint(fields, zero, jumps, times, b, opt.dt))) return true;
  }
  return false;
}

MeasureEstimate make_estimate(const SampleSet& s, int bit, int k, double b, double delta_bar,
                              double t_bar) {
  const auto [m, se] = stratified(
      s, [bit](std::uint32_t mask, double w) { return (mask >> bit) & 1u ? w : 0.0; });
  MeasureEstimate e;
  e.value = m;
  e.std_error = se;
  e.n_samples = s.masks.size();
  e.k = k;
  e.b = b;
  e.delta_bar = delta_bar;
  e.t_bar = t_bar;
  return e;
}

}  // namespace

std::vector<MeasureEstimate> estimate_check_measures(const FieldPair& fields,
                                                     const std::vector<StateEvent>& events, int k,
                                                     double b, const TailModel& noise,
                                                     double delta_bar, double t_bar,
                                                     const MeasureOptions& options) {
  const SampleSet s = draw_masks(fields, events, k, b, noise, delta_bar, t_bar, options);
  std::vector<MeasureEstimate> out;
  for (std::size_t e = 0; e < events.size(); ++e)
    out.push_back(make_estimate(s, static_cast<int>(e), k, b, delta_bar, t_bar));
  return out;
}

MeasureEstimate estimate_check_measure(const FieldPair& fields, const StateEvent& event, int k,
                                       double b, const TailModel& noise, double delta_bar,
                                       double t_bar, const MeasureOptions& options) {
  auto est = estimate_check_measures(fields, {event}, k, b, noise, delta_bar, t_bar, options);
  if (est[0].value == 0.0 &&
      small_jumps_reach(fields, event, k, b, noise, delta_bar, t_bar, options))
    throw RuntimeFailure("delta_bar too aggressive: jumps below the cutoff reach the event");
  return est[0];
}

double default_delta_bar(const FieldPair& fields, const DomainSpec& domain, double b, int J) {
  const Vector zero = Vector::Zero(fields.dim_state);
  const double s = op_norm(eval_diffusion(fields, zero));
  const double r = distance_to_complement(domain, zero);
  if (b == kInf) {
    if (!(s > 0.0)) throw InvalidArgument("default_delta_bar: sigma(0) = 0");
    return r / (2.0 * s);
  }
  double d = std::min(b / 4.0, (r - (J - 1) * b) / 2.0);
  if (!(d > 0.0)) d = b / 4.0;
  return s > 0.0 ? d / s : d;
}

double default_t_bar(const FieldPair& fields, const DomainSpec& domain) {
  const auto env = default_envelope(fields, domain, IntegratorConfig{1e-2, false});
  return 3.0 * env.time;
}

ExitRate exit_rate_constant(const FieldPair& fields, const DomainSpec& domain, double b,
                            const TailModel& noise, const ExitRateOptions& options) {
  return exit_location_law(fields, domain, b, noise, {}, options).rate;
}

std::vector<LocationBin> interval_side_bins(const DomainSpec& domain) {
  const auto* iv = std::get_if<DomainSpec::Interval>(&domain.variant());
  if (!iv) throw InvalidArgument("interval_side_bins needs an interval domain");
  const double l = iv->left, r = iv->right;
  return {{"left", [l](const Vector& x) { return x[0] <= l; }},
          {"right", [r](const Vector& x) { return x[0] >= r; }}};
}

LocationLaw exit_location_law(const FieldPair& fields, const DomainSpec& domain, double b,
                              const TailModel& noise, const std::vector<LocationBin>& bins,
                              const ExitRateOptions& options) {
  if (bins.size() + 2 > kMaxEvents) throw InvalidArgument("too many location bins");
  LocationLaw law;
  ExitRate& rate = law.rate;
  rate.j = j_index(domain, fields, b, options.j_method, options.search);
  const int J = rate.j.J;
  if (rate.j.status == JStatus::Degenerate) {
    rate.degenerate = true;
    rate.C.b = b;
    if (!bins.empty()) throw RuntimeFailure("exit location law: zero total mass");
    return law;
  }
  if (J < 1)
    throw RuntimeFailure(std::string("j_index did not determine J: ") + to_string(rate.j.status));

  const double delta_bar =
      options.delta_bar > 0.0 ? options.delta_bar : default_delta_bar(fields, domain, b, J);
  const double t_bar =
      J == 1 ? 0.0 : (options.t_bar > 0.0 ? options.t_bar : default_t_bar(fields, domain));
  const double r = distance_to_complement(domain, Vector::Zero(fields.dim_state));
  const double shell = options.shell_fraction * r;

  std::vector<StateEvent> events;
  events.push_back([&domain](const Vector& x) { return !domain.contains(x); });
  events.push_back(
      [&domain, shell](const Vector& x) { return std::abs(signed_distance(domain, x)) < shell; });
  for (const auto& bin : bins) events.push_back(bin.contains);

  MeasureOptions mopt = options.measure;
  if (J >= 2 && !(mopt.gap_scale > 0.0) && rate.j.best_slack > 0.0 && r > 0.0) {
    // Tight reach margins need the J jumps close together in time.
    const double rho = drift_rate_at_origin(fields);
    if (rho > 0.0)
      mopt.gap_scale =
          std::min(t_bar / J, 0.5 / rho * std::clamp(rate.j.best_slack / r, 0.05, 1.0));
  }
  const SampleSet s = draw_masks(fields, events, J, b, noise, delta_bar, t_bar, mopt);
  rate.C = make_estimate(s, 0, J, b, delta_bar, t_bar);
  rate.boundary_shell = make_estimate(s, 1, J, b, delta_bar, t_bar);
  if (rate.C.value == 0.0 && small_jumps_reach(fields, events[0], J, b, noise, delta_bar, t_bar,
                                               options.measure))
    throw RuntimeFailure("delta_bar too aggressive: jumps below the cutoff reach I^c");
  rate.degenerate = rate.C.value <= 2.0 * rate.C.std_error;

  if (bins.empty()) return law;
  if (rate.C.value == 0.0) throw RuntimeFailure("exit location law: zero total mass");
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const int bit = static_cast<int>(i) + 2;
    law.labels.push_back(bins[i].label);
    law.masses.push_back(make_estimate(s, bit, J, b, delta_bar, t_bar));
    const double R = law.masses.back().value / rate.C.value;
    // Delta method for the ratio of two means over the same samples.
    const auto [zm, zse] = stratified(s, [bit, R](std::uint32_t mask, double w) {
      const double in_bin = (mask >> bit) & 1u ? 1.0 : 0.0;
      const double out = mask & 1u ? 1.0 : 0.0;
      return w * (in_bin - R * out);
    });
    (void)zm;
    law.fractions.push_back(R);
    law.fraction_std_errors.push_back(zse / rate.C.value);
  }
  return law;
}

void write_measure_csv_header(std::ostream& os) {
  os << "k,b,delta_bar,t_bar,n,value,std_error\n";
}

void write_measure_csv_row(std::ostream& os, const MeasureEstimate& e) {
  os << e.k << ',' << fmt_double(e.b) << ',' << fmt_double(e.delta_bar) << ','
     << fmt_double(e.t_bar) << ',' << e.n_samples << ',' << fmt_double(e.value) << ','
     << fmt_double(e.std_error) << '\n';
}

}  // namespace htexit
