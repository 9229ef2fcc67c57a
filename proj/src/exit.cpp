#include "htexit/exit.hpp"

#include "htexit/csv.hpp"
#include "htexit/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace htexit {

const char* to_string(ExitReason r) {
  switch (r) {
    case ExitReason::Exited: return "Exited";
    case ExitReason::Capped: return "Capped";
    case ExitReason::NonFinite: return "NonFinite";
  }
  return "?";
}

ScalingPrediction::ScalingPrediction(const TailModel& noise, double b, int J, double C,
                                     double C_std_error, double gamma)
    : noise_(noise), b_(b), J_(J), C_(C), C_se_(C_std_error), gamma_(gamma) {
  if (J < 1) throw InvalidArgument("scaling prediction needs J >= 1");
  if (b == kInf && J != 1) throw InvalidArgument("untruncated prediction has J = 1");
  if (!(gamma >= 1.0)) throw InvalidArgument("scaling prediction needs gamma >= 1");
}

double ScalingPrediction::gamma_of_eta(double eta) const {
  return C_ * eta * std::pow(rate_lambda(noise_, eta, gamma_), J_);
}

double ScalingPrediction::predicted_slope() const {
  return -(1.0 + J_ * (gamma_ * noise_.alpha() - 1.0));
}

double ScalingPrediction::predicted_intercept(double eta_ref) const {
  if (noise_.is_pure_pareto()) {
    const double scale = noise_.pareto_coeff() * noise_.x_min();
    return -std::log(C_) - J_ * noise_.alpha() * std::log(scale);
  }
  return -std::log(gamma_of_eta(eta_ref)) - predicted_slope() * std::log(eta_ref);
}

ExitRecord first_exit(const ChainConfig& config, const DomainSpec& domain, const Vector& start,
                      std::uint64_t cap, Stream& rng, const ScalingPrediction* prediction) {
  if (!domain.contains(start)) throw InvalidArgument("first_exit: start must lie in I");
  const auto run = run_until(
      config, start, [&domain](const Vector& x, std::uint64_t) { return !domain.contains(x); }, cap,
      rng);
  ExitRecord r;
  r.eta = config.eta;
  r.b = config.b;
  r.steps = run.state.step_count;
  r.exit_location = run.state.position;
  r.seed_hi = rng.key().master_seed;
  r.seed_lo = rng.key().index;
  switch (run.reason) {
    case StopReason::Predicate: r.reason = ExitReason::Exited; break;
    case StopReason::Capped: r.reason = ExitReason::Capped; break;
    case StopReason::NonFinite: r.reason = ExitReason::NonFinite; break;
  }
  r.scaled_time = prediction ? prediction->gamma_of_eta(config.eta) * static_cast<double>(r.steps)
                             : std::numeric_limits<double>::quiet_NaN();
  return r;
}

namespace {

bool canonical_less(const ExitRecord& a, const ExitRecord& b) {
  if (a.eta != b.eta) return a.eta < b.eta;
  if (a.b != b.b) return a.b < b.b;
  return a.sample_index < b.sample_index;
}

}  // namespace

std::vector<ExitRecord> exit_batch(const ExitBatchSpec& spec, const DomainSpec& domain,
                                   const FieldPair& fields, const TailModel& noise,
                                   const Vector& start) {
  if (spec.n < 1) throw InvalidArgument("exit_batch needs n >= 1");
  if (spec.grid.empty()) throw InvalidArgument("exit_batch needs a nonempty grid");
  std::vector<ChainConfig> configs;
  std::vector<const ScalingPrediction*> preds;
  for (const auto& cell : spec.grid) {
    configs.emplace_back(fields, noise, cell.eta, cell.b, spec.gamma);
    const auto it = spec.predictions.find(cell.b);
    preds.push_back(it == spec.predictions.end() ? nullptr : &it->second);
  }
  std::vector<ExitRecord> out(spec.grid.size() * spec.n);
  parallel_for(out.size(), spec.threads, [&](std::size_t task) {
    const std::size_t c = task / spec.n;
    const std::uint64_t i = task % spec.n;
    Stream rng(spec.master_seed, i);
    out[task] = first_exit(configs[c], domain, start, spec.cap, rng, preds[c]);
    out[task].sample_index = i;
  }, 1);
  std::stable_sort(out.begin(), out.end(), canonical_less);
  return out;
}

std::vector<CellSummary> summarize(const std::vector<ExitRecord>& records) {
  std::vector<ExitRecord> sorted = records;
  std::stable_sort(sorted.begin(), sorted.end(), canonical_less);
  std::vector<CellSummary> cells;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    std::vector<double> steps, scaled;
    CellSummary s;
    s.eta = sorted[i].eta;
    s.b = sorted[i].b;
    while (j < sorted.size() && sorted[j].eta == s.eta && sorted[j].b == s.b) {
      steps.push_back(static_cast<double>(sorted[j].steps));
      scaled.push_back(sorted[j].scaled_time);
      if (sorted[j].reason == ExitReason::Capped) ++s.capped;
      if (sorted[j].reason == ExitReason::NonFinite) ++s.non_finite;
      ++j;
    }
    const auto ms = mean_stderr(steps);
    s.n = steps.size();
    s.mean_steps = ms.mean;
    s.stderr_steps = ms.std_error;
    s.mean_scaled_time = mean_stderr(scaled).mean;
    s.lower_bound = s.capped > 0;
    cells.push_back(s);
    i = j;
  }
  return cells;
}

SlopeFit scaling_slope(const std::vector<ExitRecord>& records) {
  std::set<double> bs;
  for (const auto& r : records) {
    if (r.reason != ExitReason::Exited)
      throw InvalidArgument("scaling_slope: capped or non-finite records bias the fit");
    bs.insert(r.b);
  }
  if (bs.size() > 1) throw InvalidArgument("scaling_slope: records must share one b");
  const auto cells = summarize(records);
  if (cells.size() < 3) throw InvalidArgument("scaling_slope needs at least three eta values");
  std::vector<double> x, y;
  for (const auto& c : cells) {
    x.push_back(std::log(c.eta));
    y.push_back(std::log(c.mean_steps));
  }
  const auto fit = ols(x, y);
  return {fit.slope, fit.slope_stderr, fit.intercept, cells.size()};
}

KsResult ks_exponential(const std::vector<ExitRecord>& records,
                        const ScalingPrediction& prediction) {
  std::vector<double> t;
  for (const auto& r : records) {
    if (r.reason != ExitReason::Exited)
      throw InvalidArgument("ks_exponential: capped or non-finite record present");
    t.push_back(prediction.gamma_of_eta(r.eta) * static_cast<double>(r.steps));
  }
  if (t.size() < 50) throw InvalidArgument("ks_exponential needs n >= 50");
  return {ks_exponential_statistic(t), t.size()};
}

double exit_location_compare(const std::vector<ExitRecord>& records, const LocationLaw& law,
                             const std::vector<LocationBin>& bins) {
  if (bins.size() != law.fractions.size() || bins.empty())
    throw InvalidArgument("exit_location_compare: bins do not match the law");
  std::vector<double> counts(bins.size(), 0.0);
  double n = 0.0;
  for (const auto& r : records) {
    if (r.reason != ExitReason::Exited)
      throw InvalidArgument("exit_location_compare: capped or non-finite record present");
    n += 1.0;
    for (std::size_t i = 0; i < bins.size(); ++i)
      if (bins[i].contains(r.exit_location)) {
        counts[i] += 1.0;
        break;
      }
  }
  if (n == 0.0) throw InvalidArgument("exit_location_compare needs records");
  double tv = 0.0;
  for (std::size_t i = 0; i < bins.size(); ++i) tv += std::abs(counts[i] / n - law.fractions[i]);
  return 0.5 * tv;
}

std::vector<Vector> start_sweep(const DomainSpec& domain, double eps) {
  const auto inner = shrink(domain, eps);
  if (inner.empty) throw InvalidArgument("start_sweep: eps leaves no interior");
  const int m = domain.dim();
  std::vector<Vector> out{Vector::Zero(m)};
  if (const auto* iv = std::get_if<DomainSpec::Interval>(&inner.domain.variant())) {
    for (double f : {0.5, 0.95}) {
      out.push_back(scalar_vector(f * iv->left));
      out.push_back(scalar_vector(f * iv->right));
    }
    return out;
  }
  const double r = distance_to_complement(inner.domain, Vector::Zero(m));
  const int second = m > 1 ? 1 : 0;
  for (double f : {0.5, -0.5}) out.push_back(f * r * Vector::Unit(m, 0));
  for (double f : {0.9, -0.9}) out.push_back(f * r * Vector::Unit(m, second));
  return out;
}

void write_records_csv(std::ostream& os, const std::vector<ExitRecord>& records, int dim,
                       const Vector* offset) {
  os << "eta,b,sample_index,steps,scaled_time";
  for (int i = 0; i < dim; ++i) os << ",exit_x_" << (i + 1);
  os << ",reason,seed_hi,seed_lo\n";
  for (const auto& r : records) {
    os << fmt_double(r.eta) << ',' << fmt_double(r.b) << ',' << r.sample_index << ',' << r.steps
       << ',' << fmt_double(r.scaled_time);
    for (int i = 0; i < dim; ++i)
      os << ',' << fmt_double(r.exit_location[i] + (offset ? (*offset)[i] : 0.0));
    os << ',' << to_string(r.reason) << ',' << r.seed_hi << ',' << r.seed_lo << '\n';
  }
}

void write_summary_csv(std::ostream& os, const std::vector<CellSummary>& cells) {
  os << "eta,b,n,mean_steps,stderr_steps,mean_scaled_time,capped,non_finite,lower_bound\n";
  for (const auto& c : cells)
    os << fmt_double(c.eta) << ',' << fmt_double(c.b) << ',' << c.n << ','
       << fmt_double(c.mean_steps) << ',' << fmt_double(c.stderr_steps) << ','
       << fmt_double(c.mean_scaled_time) << ',' << c.capped << ',' << c.non_finite << ','
       << (c.lower_bound ? "true" : "false") << '\n';
}

}  // namespace htexit
