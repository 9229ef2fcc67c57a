#include "htexit/geometry.hpp"

#include "htexit/dynamics.hpp"
#include "htexit/parallel.hpp"
#include "htexit/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace htexit {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr int kRayDirections = 512;

std::vector<Vector> ray_directions(int dim) {
  std::vector<Vector> dirs;
  if (dim == 1) {
    dirs.push_back(scalar_vector(1.0));
    dirs.push_back(scalar_vector(-1.0));
    return dirs;
  }
  if (dim == 2) {
    for (int i = 0; i < kRayDirections; ++i) {
      const double th = 2.0 * M_PI * i / kRayDirections;
      Vector v(2);
      v << std::cos(th), std::sin(th);
      dirs.push_back(v);
    }
    return dirs;
  }
  Stream rng(0xD1EC7, static_cast<std::uint64_t>(dim));
  for (int i = 0; i < kRayDirections; ++i) {
    Vector v(dim);
    do {
      for (int j = 0; j < dim; ++j) v[j] = rng.normal();
    } while (v.norm() == 0.0);
    dirs.push_back(v / v.norm());
  }
  return dirs;
}

// First exit distance of the ray x + t u from a predicate domain.
double ray_exit(const DomainSpec::Predicate& p, const Vector& x, const Vector& u) {
  const double reach = (p.hi - p.lo).norm() * 2.0 + 1.0;
  constexpr int kMarch = 256;
  double prev = 0.0;
  for (int i = 1; i <= kMarch; ++i) {
    const double t = reach * i / kMarch;
    if (!p.contains(x + t * u)) {
      double lo = prev, hi = t;
      for (int it = 0; it < 60 && hi - lo > 1e-12 * reach; ++it) {
        const double mid = 0.5 * (lo + hi);
        (p.contains(x + mid * u) ? lo : hi) = mid;
      }
      return hi;
    }
    prev = t;
  }
  return reach;
}

double smallest_singular_value(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  return s.size() ? s[s.size() - 1] : 0.0;
}

Vector pinv_apply(const Matrix& m, const Vector& v) {
  return m.completeOrthogonalDecomposition().pseudoInverse() * v;
}

Vector chain_endpoint(const FieldPair& fields, const std::vector<Vector>& jumps,
                      const std::vector<double>& times, const std::vector<Vector>& perts,
                      double b, double dt) {
  Vector y = Vector::Zero(fields.dim_state);
  IntegratorConfig cfg{dt, false};
  for (std::size_t j = 0; j < jumps.size(); ++j) {
    if (j > 0) y = integrate_flow(fields, y, times[j] - times[j - 1], cfg);
    if (!perts.empty()) y += perts[j];
    y += truncate(fields.diffusion(y) * jumps[j], b);
  }
  return y;
}

double bbox_diameter(const DomainSpec& d) {
  const auto [lo, hi] = d.bounding_box();
  return (hi - lo).norm();
}

}  // namespace

// ---------------------------------------------------------------------------
// DomainSpec

DomainSpec DomainSpec::interval(double left, double right) {
  if (!(left < 0.0 && 0.0 < right)) throw InvalidArgument("interval must satisfy left < 0 < right");
  return DomainSpec(Interval{left, right});
}

DomainSpec DomainSpec::ball(int dim, double radius) {
  return ball(Vector::Zero(dim), radius);
}

DomainSpec DomainSpec::ball(Vector center, double radius) {
  if (!(radius > 0.0) || !(center.norm() < radius))
    throw InvalidArgument("ball must have positive radius and contain the origin");
  return DomainSpec(Ball{std::move(center), radius});
}

DomainSpec DomainSpec::box(Vector lo, Vector hi) {
  if (lo.size() != hi.size() || lo.size() == 0) throw InvalidArgument("box bounds differ in size");
  for (Eigen::Index i = 0; i < lo.size(); ++i)
    if (!(lo[i] < 0.0 && 0.0 < hi[i])) throw InvalidArgument("box must contain the origin");
  return DomainSpec(Box{std::move(lo), std::move(hi)});
}

DomainSpec DomainSpec::predicate(Predicate p) {
  if (!p.contains) throw InvalidArgument("predicate domain needs a membership test");
  if (p.lo.size() != p.hi.size() || p.lo.size() == 0)
    throw InvalidArgument("predicate domain needs a bounding box");
  if (!p.contains(Vector::Zero(p.lo.size())))
    throw InvalidArgument("predicate domain must contain the origin");
  return DomainSpec(std::move(p));
}

int DomainSpec::dim() const {
  return std::visit(overloaded{[](const Interval&) { return 1; },
                               [](const Ball& b) { return static_cast<int>(b.center.size()); },
                               [](const Box& b) { return static_cast<int>(b.lo.size()); },
                               [](const Predicate& p) { return static_cast<int>(p.lo.size()); }},
                    v_);
}

bool DomainSpec::contains(const Vector& x) const {
  return std::visit(
      overloaded{[&](const Interval& i) { return x[0] > i.left && x[0] < i.right; },
                 [&](const Ball& b) { return (x - b.center).norm() < b.radius; },
                 [&](const Box& b) {
                   return ((x - b.lo).array() > 0.0).all() && ((b.hi - x).array() > 0.0).all();
                 },
                 [&](const Predicate& p) { return p.contains(x); }},
      v_);
}

std::pair<Vector, Vector> DomainSpec::bounding_box() const {
  return std::visit(
      overloaded{[](const Interval& i) {
                   return std::pair{scalar_vector(i.left), scalar_vector(i.right)};
                 },
                 [](const Ball& b) {
                   const Vector r = Vector::Constant(b.center.size(), b.radius);
                   return std::pair<Vector, Vector>{b.center - r, b.center + r};
                 },
                 [](const Box& b) { return std::pair{b.lo, b.hi}; },
                 [](const Predicate& p) { return std::pair{p.lo, p.hi}; }},
      v_);
}

std::string DomainSpec::describe() const {
  std::ostringstream os;
  os.precision(17);
  std::visit(overloaded{[&](const Interval& i) {
                          os << "interval(" << i.left << ", " << i.right << ")";
                        },
                        [&](const Ball& b) {
                          os << "ball(r=" << b.radius << ", center=" << b.center.transpose()
                             << ")";
                        },
                        [&](const Box& b) {
                          os << "box(lo=" << b.lo.transpose() << ", hi=" << b.hi.transpose()
                             << ")";
                        },
                        [&](const Predicate&) { os << "predicate"; }},
             v_);
  return os.str();
}

double distance_to_complement(const DomainSpec& domain, const Vector& x) {
  if (!domain.contains(x)) return 0.0;
  return std::visit(
      overloaded{[&](const DomainSpec::Interval& i) { return std::min(x[0] - i.left, i.right - x[0]); },
                 [&](const DomainSpec::Ball& b) { return b.radius - (x - b.center).norm(); },
                 [&](const DomainSpec::Box& b) {
                   return std::min((x - b.lo).minCoeff(), (b.hi - x).minCoeff());
                 },
                 [&](const DomainSpec::Predicate& p) {
                   double best = kInf;
                   for (const auto& u : ray_directions(static_cast<int>(x.size())))
                     best = std::min(best, ray_exit(p, x, u));
                   return best;
                 }},
      domain.variant());
}

double signed_distance(const DomainSpec& domain, const Vector& x) {
  return std::visit(
      overloaded{[&](const DomainSpec::Interval& i) {
                   return std::max(i.left - x[0], x[0] - i.right);
                 },
                 [&](const DomainSpec::Ball& b) { return (x - b.center).norm() - b.radius; },
                 [&](const DomainSpec::Box& b) {
                   if (domain.contains(x)) return -distance_to_complement(domain, x);
                   const Vector excess =
                       (b.lo - x).cwiseMax(x - b.hi).cwiseMax(Vector::Zero(x.size()));
                   return excess.norm();
                 },
                 [&](const DomainSpec::Predicate& p) {
                   if (p.signed_distance) return p.signed_distance(x);
                   return domain.contains(x) ? -distance_to_complement(domain, x) : 0.0;
                 }},
      domain.variant());
}

Vector nearest_exit_direction(const DomainSpec& domain) {
  const int m = domain.dim();
  return std::visit(
      overloaded{[&](const DomainSpec::Interval& i) {
                   return scalar_vector(-i.left <= i.right ? -1.0 : 1.0);
                 },
                 [&](const DomainSpec::Ball& b) -> Vector {
                   const double n = b.center.norm();
                   if (n == 0.0) return Vector::Unit(m, 0);
                   return -b.center / n;
                 },
                 [&](const DomainSpec::Box& b) -> Vector {
                   Eigen::Index ilo, ihi;
                   const double dlo = (-b.lo).minCoeff(&ilo);
                   const double dhi = b.hi.minCoeff(&ihi);
                   return dlo <= dhi ? Vector(-Vector::Unit(m, ilo)) : Vector(Vector::Unit(m, ihi));
                 },
                 [&](const DomainSpec::Predicate& p) -> Vector {
                   const Vector zero = Vector::Zero(m);
                   double best = kInf;
                   Vector arg;
                   for (const auto& u : ray_directions(m)) {
                     const double r = ray_exit(p, zero, u);
                     if (r < best) {
                       best = r;
                       arg = u;
                     }
                   }
                   return arg;
                 }},
      domain.variant());
}

DomainSpec translate(const DomainSpec& domain, const Vector& origin) {
  if (origin.size() != domain.dim()) throw InvalidArgument("origin dimension mismatch");
  return std::visit(
      overloaded{[&](const DomainSpec::Interval& i) {
                   return DomainSpec::interval(i.left - origin[0], i.right - origin[0]);
                 },
                 [&](const DomainSpec::Ball& b) { return DomainSpec::ball(b.center - origin, b.radius); },
                 [&](const DomainSpec::Box& b) { return DomainSpec::box(b.lo - origin, b.hi - origin); },
                 [&](const DomainSpec::Predicate& p) {
                   DomainSpec::Predicate q;
                   q.contains = [f = p.contains, origin](const Vector& y) { return f(y + origin); };
                   if (p.signed_distance)
                     q.signed_distance = [f = p.signed_distance, origin](const Vector& y) {
                       return f(y + origin);
                     };
                   q.lo = p.lo - origin;
                   q.hi = p.hi - origin;
                   return DomainSpec::predicate(std::move(q));
                 }},
      domain.variant());
}

ShrinkResult shrink(const DomainSpec& domain, double eps) {
  if (!(eps >= 0.0)) throw InvalidArgument("shrink needs eps >= 0");
  const int m = domain.dim();
  const bool empty = eps >= distance_to_complement(domain, Vector::Zero(m));
  if (eps == 0.0) return {domain, empty};
  DomainSpec::Variant v = std::visit(
      overloaded{[&](const DomainSpec::Interval& i) -> DomainSpec::Variant {
                   return DomainSpec::Interval{i.left + eps, i.right - eps};
                 },
                 [&](const DomainSpec::Ball& b) -> DomainSpec::Variant {
                   return DomainSpec::Ball{b.center, b.radius - eps};
                 },
                 [&](const DomainSpec::Box& b) -> DomainSpec::Variant {
                   const Vector e = Vector::Constant(b.lo.size(), eps);
                   return DomainSpec::Box{b.lo + e, b.hi - e};
                 },
                 [&](const DomainSpec::Predicate& p) -> DomainSpec::Variant {
                   DomainSpec::Predicate q = p;
                   q.contains = [domain, eps](const Vector& y) {
                     return domain.contains(y) && distance_to_complement(domain, y) >= eps;
                   };
                   q.signed_distance = nullptr;
                   return q;
                 }},
      domain.variant());
  return {DomainSpec(std::move(v)), empty};
}

// ---------------------------------------------------------------------------
// Certificates

std::string EscapeCertificate::to_json() const {
  nlohmann::json j;
  j["k"] = k;
  j["times"] = times;
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json jumps_json = nlohmann::json::array();
  for (const auto& w : jumps) jumps_json.push_back(vec(w));
  j["jumps"] = jumps_json;
  j["endpoint"] = vec(endpoint);
  j["slack"] = slack;
  return j.dump();
}

Vector certificate_endpoint(const FieldPair& fields, const EscapeCertificate& cert, double b,
                            double dt) {
  return chain_endpoint(fields, cert.jumps, cert.times, {}, b, dt);
}

bool verify_certificate(const FieldPair& fields, const DomainSpec& domain,
                        const EscapeCertificate& cert, double b, double dt) {
  if (cert.k < 1 || static_cast<int>(cert.jumps.size()) != cert.k ||
      cert.times.size() != cert.jumps.size())
    return false;
  return !domain.contains(certificate_endpoint(fields, cert, b, dt / 2.0));
}

const char* to_string(JMethod m) {
  switch (m) {
    case JMethod::Auto: return "auto";
    case JMethod::OneDimensional: return "one-dimensional";
    case JMethod::Contractive: return "contractive";
    case JMethod::Search: return "search";
  }
  return "?";
}

const char* to_string(JStatus s) {
  switch (s) {
    case JStatus::Proven: return "Proven";
    case JStatus::SearchFound: return "SearchFound";
    case JStatus::SearchExhausted: return "SearchExhausted";
    case JStatus::NotApplicable: return "NotApplicable";
    case JStatus::Degenerate: return "Degenerate";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Envelope and contractivity

Envelope hitting_envelope(const FieldPair& fields, const DomainSpec& domain, double eps,
                          double ball_radius, double t_max, const IntegratorConfig& cfg) {
  const auto shrunk = shrink(domain, eps);
  if (shrunk.empty) throw InvalidArgument("hitting_envelope: shrinkage leaves an empty domain");
  const DomainSpec& inner = shrunk.domain;
  const int m = domain.dim();
  std::vector<Vector> starts;
  if (const auto* iv = std::get_if<DomainSpec::Interval>(&inner.variant())) {
    constexpr int kGrid = 41;
    for (int i = 0; i < kGrid; ++i)
      starts.push_back(scalar_vector(iv->left + (iv->right - iv->left) * i / (kGrid - 1) *
                                                     (1.0 - 1e-9) +
                                     1e-9 * (iv->right - iv->left) * 0.5));
  } else {
    const auto [lo, hi] = inner.bounding_box();
    std::vector<Vector> candidates;
    if (m <= 10) {
      for (int mask = 0; mask < (1 << m); ++mask) {
        Vector c(m);
        for (int i = 0; i < m; ++i) c[i] = (mask >> i & 1) ? hi[i] : lo[i];
        candidates.push_back(c);
      }
    }
    for (int i = 0; i < m; ++i) {
      candidates.push_back(hi[i] * Vector::Unit(m, i));
      candidates.push_back(lo[i] * Vector::Unit(m, i));
    }
    Stream rng(0xE7E10, static_cast<std::uint64_t>(m));
    for (int s = 0; s < 64; ++s) {
      Vector c(m);
      for (int i = 0; i < m; ++i) c[i] = lo[i] + (hi[i] - lo[i]) * rng.uniform();
      candidates.push_back(c);
    }
    // Pull every candidate back along its ray to the last point inside I_eps.
    for (const auto& c : candidates) {
      if (inner.contains(c)) {
        starts.push_back(c);
        continue;
      }
      double lo_t = 0.0, hi_t = 1.0;
      for (int it = 0; it < 50; ++it) {
        const double mid = 0.5 * (lo_t + hi_t);
        (inner.contains(mid * c) ? lo_t : hi_t) = mid;
      }
      starts.push_back(lo_t * c);
    }
  }
  Envelope env;
  for (const auto& x : starts) {
    const auto t = hitting_time(fields, x, ball_radius, t_max, cfg);
    if (!t) {
      env.capped = true;
      env.time = t_max;
      return env;
    }
    env.time = std::max(env.time, *t);
  }
  return env;
}

Envelope default_envelope(const FieldPair& fields, const DomainSpec& domain,
                          const IntegratorConfig& cfg) {
  const double r = distance_to_complement(domain, Vector::Zero(domain.dim()));
  IntegratorConfig coarse = cfg;
  coarse.dt = std::max(cfg.dt, 1e-2);
  return hitting_envelope(fields, domain, 0.1 * r, 0.1 * r, 200.0, coarse);
}

bool check_contractive(const DomainSpec& domain, const FieldPair& fields, int samples,
                       std::uint64_t seed) {
  const auto [lo, hi] = domain.bounding_box();
  Stream rng(seed, 0);
  const int m = domain.dim();
  int checked = 0;
  for (int attempt = 0; checked < samples && attempt < 20 * samples; ++attempt) {
    Vector x(m);
    for (int i = 0; i < m; ++i) x[i] = lo[i] + (hi[i] - lo[i]) * rng.uniform();
    if (!domain.contains(x)) continue;
    ++checked;
    if (eval_drift(fields, x).dot(x) > 1e-12 * x.squaredNorm()) return false;
  }
  return checked > 0;
}

// ---------------------------------------------------------------------------
// J index

namespace {

struct SearchContext {
  const DomainSpec& domain;
  const FieldPair& fields;
  double b;
  const SearchOptions& opt;
  const IntegratorConfig& cfg;
  double magnitude;
  double max_gap;
};

EscapeCertificate straight_plan(const FieldPair& fields, const Vector& direction, int k,
                                double magnitude, double gap) {
  const Matrix s0 = fields.diffusion(Vector::Zero(fields.dim_state));
  Vector w = pinv_apply(s0, direction);
  if (w.norm() > 0.0) w *= magnitude / w.norm();
  EscapeCertificate c;
  c.k = k;
  for (int j = 0; j < k; ++j) {
    c.jumps.push_back(w);
    c.times.push_back(gap * j);
  }
  return c;
}

bool finalize(const SearchContext& ctx, EscapeCertificate& c) {
  c.endpoint = certificate_endpoint(ctx.fields, c, ctx.b, ctx.cfg.dt);
  c.slack = signed_distance(ctx.domain, c.endpoint);
  return !ctx.domain.contains(c.endpoint) &&
         verify_certificate(ctx.fields, ctx.domain, c, ctx.b, ctx.cfg.dt);
}

// Cross-entropy search over k-jump plans. Returns the best certificate
// candidate; `found` tells whether it verified.
std::pair<EscapeCertificate, bool> cross_entropy(const SearchContext& ctx, int k) {
  const int d = ctx.fields.dim_noise;
  const int m = ctx.fields.dim_state;
  const auto& opt = ctx.opt;
  const int n_dir = k * d;
  const int n_par = n_dir + (k - 1);
  const double log_lo = std::log(ctx.opt.search_dt);
  const double log_hi = std::log(std::max(ctx.max_gap, 2.0 * ctx.opt.search_dt));

  struct Candidate {
    std::vector<Vector> jumps;
    std::vector<double> times;
    std::vector<Vector> perts;
    Vector params;
    double slack = -kInf;
  };

  auto decode = [&](const Vector& p, Stream* pert_rng) {
    Candidate c;
    c.params = p;
    double t = 0.0;
    for (int j = 0; j < k; ++j) {
      Vector u = p.segment(j * d, d);
      if (u.norm() == 0.0) u = Vector::Unit(d, 0);
      c.jumps.push_back(ctx.magnitude * u / u.norm());
      if (j > 0) t += std::exp(std::clamp(p[n_dir + j - 1], log_lo, log_hi));
      c.times.push_back(t);
      if (pert_rng && opt.perturbation > 0.0) {
        Vector v(m);
        for (int i = 0; i < m; ++i) v[i] = pert_rng->normal();
        const double r = opt.perturbation * std::pow(pert_rng->uniform(), 1.0 / m);
        c.perts.push_back(v.norm() > 0 ? Vector(v * (r / v.norm())) : Vector(Vector::Zero(m)));
      }
    }
    return c;
  };

  Candidate best;
  bool found = false;
  EscapeCertificate best_cert;
  best_cert.k = k;
  for (int restart = 0; restart < opt.restarts && !found; ++restart) {
    Stream rng = child_stream(StreamKey{opt.seed, static_cast<std::uint64_t>(k)},
                              static_cast<std::uint64_t>(restart));
    Vector mean = Vector::Zero(n_par);
    Vector sd = Vector::Ones(n_par);
    for (int j = 0; j + 1 < k; ++j) {
      mean[n_dir + j] = log_lo + 1.0;
      sd[n_dir + j] = 2.0;
    }
    for (int iter = 0; iter < opt.iterations && !found; ++iter) {
      std::vector<Candidate> pop;
      pop.reserve(opt.population);
      for (int i = 0; i < opt.population; ++i) {
        Vector p(n_par);
        for (int q = 0; q < n_par; ++q) p[q] = mean[q] + sd[q] * rng.normal();
        // On the first round half of the candidates share one direction for
        // all jumps (consecutive pushes along a ray).
        if (iter == 0 && i % 2 == 1)
          for (int j = 1; j < k; ++j) p.segment(j * d, d) = p.segment(0, d);
        pop.push_back(decode(p, &rng));
      }
      parallel_for(pop.size(), opt.threads, [&](std::size_t i) {
        auto& c = pop[i];
        const Vector y = chain_endpoint(ctx.fields, c.jumps, c.times, c.perts, ctx.b, opt.search_dt);
        c.slack = y.allFinite() ? signed_distance(ctx.domain, y) : -kInf;
      });
      std::vector<int> order(pop.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return pop[a].slack > pop[b].slack; });
      if (pop[order[0]].slack > best.slack) best = pop[order[0]];
      for (int idx : order) {
        if (pop[idx].slack <= 0.0) break;
        EscapeCertificate c;
        c.k = k;
        c.jumps = pop[idx].jumps;
        c.times = pop[idx].times;
        if (!pop[idx].perts.empty()) {
          // Witness for the eps-perturbed coverage set.
          const Vector y =
              chain_endpoint(ctx.fields, c.jumps, c.times, pop[idx].perts, ctx.b, ctx.cfg.dt / 2);
          if (ctx.domain.contains(y)) continue;
          c.endpoint = y;
          c.slack = signed_distance(ctx.domain, y);
          best_cert = c;
          found = true;
          break;
        }
        if (finalize(ctx, c)) {
          best_cert = c;
          found = true;
          break;
        }
      }
      if (found) break;
      const int n_elite = std::min<int>(opt.elite, static_cast<int>(pop.size()));
      Vector new_mean = Vector::Zero(n_par);
      for (int e = 0; e < n_elite; ++e) new_mean += pop[order[e]].params;
      new_mean /= n_elite;
      Vector new_var = Vector::Zero(n_par);
      for (int e = 0; e < n_elite; ++e)
        new_var += (pop[order[e]].params - new_mean).cwiseAbs2();
      new_var /= n_elite;
      constexpr double kSmooth = 0.7;
      mean = kSmooth * new_mean + (1.0 - kSmooth) * mean;
      sd = (kSmooth * new_var.cwiseSqrt() + (1.0 - kSmooth) * sd).cwiseMax(1e-3);
    }
  }
  if (!found) {
    best_cert.jumps = best.jumps;
    best_cert.times = best.times;
    best_cert.slack = best.slack;
  }
  return {best_cert, found};
}

JResult run_search(const SearchContext& ctx, int k_start) {
  JResult r;
  r.method = JMethod::Search;
  for (int k = std::max(1, k_start); k <= ctx.opt.k_max; ++k) {
    auto [cert, found] = cross_entropy(ctx, k);
    r.best_slack = std::max(r.best_slack, cert.slack);
    if (found) {
      r.J = k;
      r.status = JStatus::SearchFound;
      r.best_slack = cert.slack;
      r.certificate = std::move(cert);
      return r;
    }
  }
  r.status = JStatus::SearchExhausted;
  return r;
}

}  // namespace

JResult j_index(const DomainSpec& domain, const FieldPair& fields, double b, JMethod method,
                const SearchOptions& options, const IntegratorConfig& cfg) {
  if (!(b > 0.0)) throw InvalidArgument("j_index needs b > 0");
  if (domain.dim() != fields.dim_state) throw InvalidArgument("domain/field dimension mismatch");
  const int m = fields.dim_state;
  const Vector zero = Vector::Zero(m);
  const Matrix s0 = eval_diffusion(fields, zero);
  const double sigma_min = smallest_singular_value(s0);
  const double r0 = distance_to_complement(domain, zero);
  const double diam = bbox_diameter(domain);

  SearchOptions opt = options;
  double max_gap = opt.max_gap;
  if (max_gap <= 0.0) {
    const auto env = default_envelope(fields, domain, cfg);
    max_gap = 3.0 * std::max(env.time, 10.0 * opt.search_dt);
  }
  const double sat = b == kInf ? 2.0 * diam + 1.0 : 10.0 * b;
  const double magnitude = sat / std::max(sigma_min, 1e-12);
  SearchContext ctx{domain, fields, b, opt, cfg, magnitude, max_gap};

  if (s0.norm() == 0.0 && b == kInf) {
    JResult r;
    r.status = JStatus::Degenerate;
    r.method = method;
    return r;
  }

  // Closed form plus a straight-plan witness; falls back to search from the
  // closed-form k if the witness does not verify (ties at the boundary).
  auto closed_form = [&](int J, const Vector& dir, JMethod used) {
    EscapeCertificate c = straight_plan(fields, dir, J, magnitude, cfg.dt);
    if (finalize(ctx, c)) {
      JResult r;
      r.J = J;
      r.status = JStatus::Proven;
      r.method = used;
      r.best_slack = c.slack;
      r.certificate = std::move(c);
      return r;
    }
    return run_search(ctx, J);
  };

  if (b == kInf) {
    const JMethod used = method == JMethod::Auto ? JMethod::Contractive : method;
    if (method == JMethod::Search) return run_search(ctx, 1);
    return closed_form(1, nearest_exit_direction(domain), used);
  }

  JMethod chosen = method;
  if (chosen == JMethod::Auto) {
    if (std::holds_alternative<DomainSpec::Interval>(domain.variant()))
      chosen = JMethod::OneDimensional;
    else if (check_contractive(domain, fields))
      chosen = JMethod::Contractive;
    else
      chosen = JMethod::Search;
  }

  switch (chosen) {
    case JMethod::OneDimensional: {
      const auto* iv = std::get_if<DomainSpec::Interval>(&domain.variant());
      if (!iv) {
        JResult r;
        r.method = chosen;
        r.status = JStatus::NotApplicable;
        return r;
      }
      // The closed form needs sigma to stay away from zero on I.
      constexpr int kGrid = 1001;
      double min_abs = kInf;
      for (int i = 1; i < kGrid; ++i) {
        const double x = iv->left + (iv->right - iv->left) * i / kGrid;
        min_abs = std::min(min_abs, std::abs(fields.diffusion(scalar_vector(x))(0, 0)));
      }
      if (!(min_abs > 1e-12) || fields.dim_noise != 1) return run_search(ctx, 1);
      const double d = std::min(-iv->left, iv->right);
      const int J = std::max(1, static_cast<int>(std::ceil(d / b)));
      return closed_form(J, nearest_exit_direction(domain), JMethod::OneDimensional);
    }
    case JMethod::Contractive: {
      if (!check_contractive(domain, fields)) {
        JResult r;
        r.method = chosen;
        r.status = JStatus::NotApplicable;
        return r;
      }
      const int J = std::max(1, static_cast<int>(std::ceil(r0 / b)));
      return closed_form(J, nearest_exit_direction(domain), JMethod::Contractive);
    }
    case JMethod::Search:
    case JMethod::Auto:
      break;
  }
  return run_search(ctx, 1);
}

}  // namespace htexit
