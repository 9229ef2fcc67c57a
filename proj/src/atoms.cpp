#include "htexit/atoms.hpp"

#include "htexit/csv.hpp"
#include "htexit/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace htexit {

namespace {

RateEstimate binomial(double hits, double n, double scale) {
  const double p = hits / n;
  return {p / scale, std::sqrt(p * (1.0 - p) / n) / scale};
}

}  // namespace

AtomDiagnostics estimate_atom_rates(const AbstractChain& chain, double eta, double eps, double T,
                                    const Membership& B, const std::vector<Vector>& atom_starts,
                                    const std::vector<Vector>& I_eps_starts,
                                    const AtomCheckOptions& opt) {
  if (atom_starts.empty() || I_eps_starts.empty())
    throw InvalidArgument("estimate_atom_rates: no start points supplied");
  if (opt.n < 100) throw InvalidArgument("estimate_atom_rates needs n >= 100");
  if (!(eta > 0.0) || !(T > 0.0)) throw InvalidArgument("estimate_atom_rates needs eta, T > 0");
  for (const auto& x : atom_starts)
    if (!chain.in_atom(x)) throw InvalidArgument("atom start outside A(eps)");

  AtomDiagnostics d;
  d.eta = eta;
  d.eps = eps;
  d.T = T;
  d.n = opt.n;
  d.horizon_steps = static_cast<std::uint64_t>(std::floor(T / eta));
  const std::uint64_t H = d.horizon_steps;
  const double scale = chain.gamma(eta) * T / eta;
  const double n = static_cast<double>(opt.n);

  // Exit from I(eps) within H steps with location in B, from atom starts.
  d.exit_rate_lower.value = kInf;
  d.exit_rate_upper.value = -kInf;
  for (std::size_t s = 0; s < atom_starts.size(); ++s) {
    std::vector<unsigned char> hit(opt.n, 0);
    parallel_for(opt.n, opt.threads, [&](std::size_t i) {
      Stream rng(opt.seed, s * opt.n + i);
      Vector x = atom_starts[s];
      for (std::uint64_t t = 1; t <= H; ++t) {
        x = chain.step(x, rng);
        if (!chain.in_I_eps(x)) {
          hit[i] = B(x) ? 1 : 0;
          return;
        }
      }
    });
    const double hits = static_cast<double>(std::count(hit.begin(), hit.end(), 1));
    const auto est = binomial(hits, n, scale);
    if (est.value < d.exit_rate_lower.value) d.exit_rate_lower = est;
    if (est.value > d.exit_rate_upper.value) d.exit_rate_upper = est;
  }

  // Stranded paths and returns, from I(eps) starts.
  const std::uint64_t base = atom_starts.size() * opt.n;
  d.stranded.value = -kInf;
  d.return_probability.value = kInf;
  for (std::size_t s = 0; s < I_eps_starts.size(); ++s) {
    std::vector<unsigned char> stranded(opt.n, 0), returned(opt.n, 0);
    parallel_for(opt.n, opt.threads, [&](std::size_t i) {
      Stream rng(opt.seed, base + s * opt.n + i);
      Vector x = I_eps_starts[s];
      bool left_band = !chain.in_I_eps(x) || chain.in_atom(x);
      bool hit_atom = chain.in_atom(x);
      for (std::uint64_t t = 1; t <= H && !(left_band && hit_atom); ++t) {
        x = chain.step(x, rng);
        const bool atom = chain.in_atom(x);
        hit_atom = hit_atom || atom;
        left_band = left_band || atom || !chain.in_I_eps(x);
      }
      stranded[i] = left_band ? 0 : 1;
      returned[i] = hit_atom ? 1 : 0;
    });
    const auto st = binomial(static_cast<double>(std::count(stranded.begin(), stranded.end(), 1)),
                             n, scale);
    const auto rt = binomial(static_cast<double>(std::count(returned.begin(), returned.end(), 1)),
                             n, 1.0);
    if (st.value > d.stranded.value) d.stranded = st;
    if (rt.value < d.return_probability.value) d.return_probability = rt;
  }
  return d;
}

Vector synthetic_level(int j, int atom_return_steps) {
  if (j <= 0 || atom_return_steps <= 0) return scalar_vector(0.0);
  return scalar_vector(0.1 + 0.8 * j / atom_return_steps);
}

AbstractChain synthetic_geometric_chain(double p_exit, int atom_return_steps) {
  if (!(p_exit > 0.0 && p_exit < 1.0))
    throw InvalidArgument("synthetic_geometric_chain needs p in (0, 1)");
  if (atom_return_steps < 0) throw InvalidArgument("atom_return_steps must be >= 0");
  const int k0 = atom_return_steps;
  AbstractChain c;
  c.name = "synthetic-geometric";
  c.step = [p_exit, k0](const Vector& x, Stream& rng) -> Vector {
    if (x[0] >= 1.0 || x[0] <= -1.0) return x;
    if (rng.uniform() < p_exit) return scalar_vector(2.0);
    if (std::abs(x[0]) < 0.1 || k0 == 0) return scalar_vector(0.0);
    const int j = static_cast<int>(std::lround((std::abs(x[0]) - 0.1) * k0 / 0.8));
    return synthetic_level(j - 1, k0);
  };
  c.in_atom = [](const Vector& x) { return std::abs(x[0]) < 0.1; };
  c.in_I_eps = [](const Vector& x) { return std::abs(x[0]) < 0.95; };
  c.in_I = [](const Vector& x) { return std::abs(x[0]) < 1.0; };
  c.gamma = [p_exit](double) { return p_exit; };
  return c;
}

AbstractChain truncated_chain(const ChainConfig& config, const DomainSpec& domain, double eps,
                              const ScalingPrediction& prediction) {
  const auto inner = shrink(domain, eps);
  if (inner.empty) throw InvalidArgument("truncated_chain: eps leaves no interior");
  AbstractChain c;
  c.name = "truncated-sgd";
  c.step = [config](const Vector& x, Stream& rng) {
    return step(config, ChainState{x, 0}, rng).position;
  };
  c.in_atom = [eps](const Vector& x) { return x.norm() < eps; };
  c.in_I_eps = [d = inner.domain](const Vector& x) { return d.contains(x); };
  c.in_I = [domain](const Vector& x) { return domain.contains(x); };
  c.gamma = [prediction](double eta) { return prediction.gamma_of_eta(eta); };
  return c;
}

std::uint64_t chain_exit_steps(const AbstractChain& chain, const Vector& start,
                               std::uint64_t cap, Stream& rng) {
  Vector x = start;
  std::uint64_t t = 0;
  while (chain.in_I(x) && t < cap) {
    x = chain.step(x, rng);
    ++t;
  }
  return t;
}

GeomFrontBounds geom_front_bounds(const std::function<double(double)>& a_fn,
                                  const std::function<double(double)>& b_fn, double c, double eps) {
  if (!(c > 1.0)) throw InvalidArgument("geom_front_bounds needs c > 1");
  const double a = a_fn(eps);
  const double b = b_fn(eps);
  if (!(a > 0.0 && a < 1.0) || !(b > 0.0))
    throw InvalidArgument("geom_front_bounds needs a in (0, 1) and b > 0");
  GeomFrontBounds g;
  const double m = std::floor(1.0 / b);
  g.exact = m == 0.0 ? 1.0 : std::exp(m * std::log1p(-a));
  g.lower = std::exp(-c * a / b);
  g.upper = std::exp(-a / (c * b));
  g.holds = g.lower <= g.exact && g.exact <= g.upper;
  return g;
}

double geom_front_threshold(const std::function<double(double)>& a_fn,
                            const std::function<double(double)>& b_fn, double c,
                            double eps_start, double eps_min) {
  double threshold = 0.0;
  for (double eps = eps_min; eps <= eps_start * (1.0 + 1e-12); eps *= 2.0) {
    if (!geom_front_bounds(a_fn, b_fn, c, eps).holds) break;
    threshold = eps;
  }
  return threshold;
}

void write_atom_csv_header(std::ostream& os) {
  os << "label,eta,eps,T,horizon_steps,n,exit_rate_lower,exit_rate_lower_se,exit_rate_upper,"
        "exit_rate_upper_se,stranded,stranded_se,return_probability,return_probability_se\n";
}

void write_atom_csv_row(std::ostream& os, const std::string& label, const AtomDiagnostics& d) {
  os << label << ',' << fmt_double(d.eta) << ',' << fmt_double(d.eps) << ',' << fmt_double(d.T)
     << ',' << d.horizon_steps << ',' << d.n << ',' << fmt_double(d.exit_rate_lower.value) << ','
     << fmt_double(d.exit_rate_lower.std_error) << ',' << fmt_double(d.exit_rate_upper.value)
     << ',' << fmt_double(d.exit_rate_upper.std_error) << ',' << fmt_double(d.stranded.value)
     << ',' << fmt_double(d.stranded.std_error) << ',' << fmt_double(d.return_probability.value)
     << ',' << fmt_double(d.return_probability.std_error) << '\n';
}

}  // namespace htexit
