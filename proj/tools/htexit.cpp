// htexit: config-driven first-exit experiments.
//
//   htexit simulate-exit   --config run.cfg [--out DIR] [--seed S] [--threads N] [--cap STEPS]
//   htexit predict         --config run.cfg
//   htexit estimate-measure --config run.cfg
//   htexit reproduce-fig1  [--config configs/paper-fig1.cfg] --out DIR
//   htexit atoms-check     --config run.cfg
//
// Exit codes: 0 ok, 2 config error, 3 resolution error, 4 runtime failure.

#include "htexit/atoms.hpp"
#include "htexit/config.hpp"
#include "htexit/csv.hpp"
#include "htexit/exit.hpp"
#include "htexit/measures.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#ifndef HTEXIT_FIG1_CONFIG
#define HTEXIT_FIG1_CONFIG "configs/paper-fig1.cfg"
#endif

namespace fs = std::filesystem;
using namespace htexit;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::uint64_t> cap;
};

ExperimentConfig load(const Globals& g, const std::string& fallback = "") {
  const std::string path = g.config.empty() ? fallback : g.config;
  if (path.empty()) throw ConfigError("no config given (use --config PATH)");
  ExperimentConfig c = load_config(path);
  if (g.seed) c.seed = *g.seed;
  if (g.threads) c.threads = *g.threads;
  if (g.cap) c.cap = *g.cap;
  if (!g.out.empty()) c.output = g.out;
  if (!c.seed) throw ConfigError("missing key 'experiment.seed' (or pass --seed)");
  if (c.cap < 1) throw ConfigError("--cap must be >= 1");
  return c;
}

std::ofstream open_out(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw RuntimeFailure("cannot write " + p.string());
  return os;
}

std::uint64_t measure_seed(std::uint64_t master) {
  std::uint64_t s = master ^ 0x6D65617375726573ULL;
  return splitmix64(s);
}

ExitRateOptions rate_options(const ExperimentConfig& c) {
  ExitRateOptions o;
  o.measure.n = c.measure_n;
  o.measure.dt = c.measure_dt;
  o.measure.seed = measure_seed(*c.seed);
  o.measure.threads = c.threads;
  o.delta_bar = c.delta_bar;
  o.t_bar = c.t_bar;
  o.search.k_max = c.k_max;
  o.search.population = c.population;
  o.search.iterations = c.iterations;
  o.search.restarts = c.restarts;
  o.search.seed = *c.seed;
  o.search.threads = c.threads;
  return o;
}

struct PredictionRow {
  double b = kInf;
  std::optional<ExitRate> rate;
  JResult j;
  std::string error;
};

std::vector<PredictionRow> compute_predictions(const ExperimentConfig& c,
                                               const ResolvedExperiment& r) {
  std::vector<PredictionRow> rows;
  const auto opts = rate_options(c);
  for (double b : c.bs) {
    PredictionRow row;
    row.b = b;
    try {
      row.rate = exit_rate_constant(r.fields, r.domain, b, r.noise, opts);
      row.j = row.rate->j;
    } catch (const RuntimeFailure& e) {
      row.error = e.what();
      row.j = j_index(r.domain, r.fields, b, opts.j_method, opts.search);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::optional<ScalingPrediction> to_prediction(const PredictionRow& row, const TailModel& noise,
                                               double gamma) {
  if (!row.rate || row.rate->degenerate || row.rate->j.J < 1) return std::nullopt;
  return ScalingPrediction(noise, row.b, row.rate->j.J, row.rate->C.value,
                           row.rate->C.std_error, gamma);
}

void write_predictions(const fs::path& path, const std::vector<PredictionRow>& rows,
                       const TailModel& noise, double gamma) {
  auto os = open_out(path);
  os << "b,J,J_method,J_status,C,C_stderr,predicted_slope,predicted_intercept,best_slack,"
        "delta_bar,t_bar,boundary_shell,degenerate,note\n";
  for (const auto& row : rows) {
    const auto pred = to_prediction(row, noise, gamma);
    const double nan = std::nan("");
    const double slope = row.j.J >= 1 ? -(1.0 + row.j.J * (gamma * noise.alpha() - 1.0)) : nan;
    os << fmt_double(row.b) << ',' << row.j.J << ',' << to_string(row.j.method) << ','
       << to_string(row.j.status) << ',' << fmt_double(row.rate ? row.rate->C.value : nan) << ','
       << fmt_double(row.rate ? row.rate->C.std_error : nan) << ',' << fmt_double(slope) << ','
       << fmt_double(pred ? pred->predicted_intercept() : nan) << ','
       << fmt_double(row.j.best_slack) << ','
       << fmt_double(row.rate ? row.rate->C.delta_bar : nan) << ','
       << fmt_double(row.rate ? row.rate->C.t_bar : nan) << ','
       << fmt_double(row.rate ? row.rate->boundary_shell.value : nan) << ','
       << (row.rate && row.rate->degenerate ? "true" : "false") << ',' << row.error << '\n';
  }
}

void write_gamma_table(const fs::path& path, const std::vector<PredictionRow>& rows,
                       const ExperimentConfig& c, const TailModel& noise) {
  auto os = open_out(path);
  os << "b,eta,gamma_of_eta,predicted_mean_steps\n";
  for (const auto& row : rows) {
    const auto pred = to_prediction(row, noise, c.gamma);
    if (!pred) continue;
    for (double eta : c.etas) {
      const double g = pred->gamma_of_eta(eta);
      os << fmt_double(row.b) << ',' << fmt_double(eta) << ',' << fmt_double(g) << ','
         << fmt_double(1.0 / g) << '\n';
    }
  }
}

struct SimulationOutput {
  std::vector<ExitRecord> records;
  std::vector<PredictionRow> predictions;
};

SimulationOutput run_simulation(const ExperimentConfig& c, const ResolvedExperiment& r,
                                const fs::path& dir) {
  SimulationOutput out;
  ExitBatchSpec spec;
  for (double eta : c.etas)
    for (double b : c.bs) spec.grid.push_back({eta, b});
  spec.n = c.samples;
  spec.cap = c.cap;
  spec.threads = c.threads;
  spec.master_seed = *c.seed;
  spec.gamma = c.gamma;
  if (c.predict) {
    out.predictions = compute_predictions(c, r);
    for (const auto& row : out.predictions)
      if (auto p = to_prediction(row, r.noise, c.gamma)) spec.predictions.emplace(row.b, *p);
  }
  out.records = exit_batch(spec, r.domain, r.fields, r.noise, r.start);

  {
    auto os = open_out(dir / "records.csv");
    write_records_csv(os, out.records, r.fields.dim_state, &r.origin);
  }
  {
    auto os = open_out(dir / "summary.csv");
    write_summary_csv(os, summarize(out.records));
  }
  {
    auto os = open_out(dir / "manifest.cfg");
    os << to_manifest(c);
  }
  if (c.predict) write_predictions(dir / "prediction.csv", out.predictions, r.noise, c.gamma);
  return out;
}

int cmd_simulate_exit(const Globals& g) {
  const auto c = load(g);
  const auto r = resolve(c);
  const fs::path dir = c.output;
  const auto out = run_simulation(c, r, dir);
  std::size_t capped = 0;
  for (const auto& rec : out.records) capped += rec.reason != ExitReason::Exited;
  std::cout << "wrote " << out.records.size() << " records to " << (dir / "records.csv").string()
            << " (" << capped << " capped or non-finite)\n";
  return 0;
}

int cmd_predict(const Globals& g) {
  const auto c = load(g);
  const auto r = resolve(c);
  const fs::path dir = c.output;
  const auto rows = compute_predictions(c, r);
  write_predictions(dir / "prediction.csv", rows, r.noise, c.gamma);
  write_gamma_table(dir / "gamma.csv", rows, c, r.noise);
  for (const auto& row : rows) {
    std::cout << "b=" << fmt_double(row.b) << " J=" << row.j.J << " (" << to_string(row.j.status)
              << ")";
    if (row.rate)
      std::cout << " C=" << row.rate->C.value << " +- " << row.rate->C.std_error;
    if (!row.error.empty()) std::cout << " [" << row.error << "]";
    std::cout << '\n';
  }
  return 0;
}

int cmd_estimate_measure(const Globals& g) {
  const auto c = load(g);
  const auto r = resolve(c);
  const fs::path dir = c.output;
  const auto opts = rate_options(c);
  const bool interval = std::holds_alternative<DomainSpec::Interval>(r.domain.variant());
  const auto bins = interval ? interval_side_bins(r.domain) : std::vector<LocationBin>{};
  auto mos = open_out(dir / "measure.csv");
  write_measure_csv_header(mos);
  auto los = open_out(dir / "location.csv");
  los << "b,bin,mass,mass_stderr,fraction,fraction_stderr\n";
  for (double b : c.bs) {
    const auto law = exit_location_law(r.fields, r.domain, b, r.noise, bins, opts);
    write_measure_csv_row(mos, law.rate.C);
    for (std::size_t i = 0; i < law.labels.size(); ++i)
      los << fmt_double(b) << ',' << law.labels[i] << ',' << fmt_double(law.masses[i].value) << ','
          << fmt_double(law.masses[i].std_error) << ',' << fmt_double(law.fractions[i]) << ','
          << fmt_double(law.fraction_std_errors[i]) << '\n';
    std::cout << "b=" << fmt_double(b) << " J=" << law.rate.j.J << " C=" << law.rate.C.value
              << " +- " << law.rate.C.std_error << '\n';
  }
  return 0;
}

int cmd_reproduce_fig1(const Globals& g) {
  if (g.out.empty()) throw ConfigError("reproduce-fig1 needs --out DIR");
  auto c = load(g, HTEXIT_FIG1_CONFIG);
  c.predict = true;
  const auto r = resolve(c);
  const fs::path dir = c.output;
  const auto sim = run_simulation(c, r, dir);
  const auto cells = summarize(sim.records);

  auto os = open_out(dir / "fig1.csv");
  os << "eta,b,log_eta,mean_steps,log_mean_steps,n,capped\n";
  for (const auto& cell : cells)
    os << fmt_double(cell.eta) << ',' << fmt_double(cell.b) << ',' << fmt_double(std::log(cell.eta))
       << ',' << fmt_double(cell.mean_steps) << ',' << fmt_double(std::log(cell.mean_steps)) << ','
       << cell.n << ',' << (cell.lower_bound ? "true" : "false") << '\n';
  os << "\n\nb,J,C,predicted_intercept,predicted_slope,fitted_slope,fitted_slope_stderr\n";
  for (const auto& row : sim.predictions) {
    const auto pred = to_prediction(row, r.noise, c.gamma);
    std::vector<ExitRecord> series;
    bool clean = true;
    for (const auto& rec : sim.records)
      if (rec.b == row.b) {
        series.push_back(rec);
        clean = clean && rec.reason == ExitReason::Exited;
      }
    std::optional<SlopeFit> fit;
    if (clean && c.etas.size() >= 3) fit = scaling_slope(series);
    const double nan = std::nan("");
    os << fmt_double(row.b) << ',' << row.j.J << ','
       << fmt_double(row.rate ? row.rate->C.value : nan) << ','
       << fmt_double(pred ? pred->predicted_intercept() : nan) << ','
       << fmt_double(pred ? pred->predicted_slope() : nan) << ','
       << fmt_double(fit ? fit->slope : nan) << ',' << fmt_double(fit ? fit->std_error : nan)
       << '\n';
    std::cout << "b=" << fmt_double(row.b) << " J=" << row.j.J << " predicted slope "
              << (pred ? pred->predicted_slope() : nan) << ", fitted "
              << (fit ? fit->slope : nan) << (clean ? "" : " (capped cells, no fit)") << '\n';
  }
  return 0;
}

int cmd_atoms_check(const Globals& g) {
  const auto c = load(g);
  const auto r = resolve(c);
  const fs::path dir = c.output;
  auto os = open_out(dir / "atoms.csv");
  write_atom_csv_header(os);
  AtomCheckOptions opt;
  opt.n = c.atom_n;
  opt.seed = *c.seed;
  opt.threads = c.threads;
  auto ks_os = open_out(dir / "atoms_ks.csv");
  ks_os << "p_exit,n,ks_statistic\n";
  for (double p : c.atom_p) {
    const auto chain = synthetic_geometric_chain(p, c.atom_return_steps);
    // T / eta = 10 steps per window.
    const double eta = c.atom_eta;
    const double T = 10.0 * eta;
    std::vector<Vector> I_starts{synthetic_level(0, c.atom_return_steps)};
    if (c.atom_return_steps > 0)
      I_starts.push_back(synthetic_level(c.atom_return_steps, c.atom_return_steps));
    const auto d = estimate_atom_rates(chain, eta, c.atom_eps, T, [](const Vector&) { return true; },
                                       {scalar_vector(0.0)}, I_starts, opt);
    write_atom_csv_row(os, "synthetic p=" + fmt_double(p), d);
    std::vector<double> scaled(c.atom_n);
    for (std::size_t i = 0; i < c.atom_n; ++i) {
      Stream rng(*c.seed ^ 0x6B73, i);
      scaled[i] = p * static_cast<double>(chain_exit_steps(chain, scalar_vector(0.0),
                                                           ~std::uint64_t{0}, rng));
    }
    ks_os << fmt_double(p) << ',' << c.atom_n << ',' << fmt_double(ks_exponential_statistic(scaled))
          << '\n';
  }

  const double b = c.bs.front();
  const auto rate = exit_rate_constant(r.fields, r.domain, b, r.noise, rate_options(c));
  if (!rate.degenerate) {
    const ScalingPrediction pred(r.noise, b, rate.j.J, rate.C.value, rate.C.std_error, c.gamma);
    const ChainConfig cc(r.fields, r.noise, c.atom_eta, b, c.gamma);
    const double T =
        c.atom_T > 0.0 ? c.atom_T : 3.0 * default_envelope(r.fields, r.domain, {1e-2, false}).time;
    const auto chain = truncated_chain(cc, r.domain, c.atom_eps, pred);
    const auto inner = shrink(r.domain, c.atom_eps).domain;
    std::vector<Vector> I_starts;
    for (const auto& x : start_sweep(r.domain, c.atom_eps))
      if (inner.contains(x)) I_starts.push_back(x);
    const auto d = estimate_atom_rates(
        chain, c.atom_eta, c.atom_eps, T,
        [&](const Vector& x) { return !r.domain.contains(x); }, {Vector::Zero(r.fields.dim_state)},
        I_starts, opt);
    write_atom_csv_row(os, "truncated b=" + fmt_double(b), d);
  }
  std::cout << "wrote " << (dir / "atoms.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"First-exit experiments for heavy-tailed stochastic difference equations"};
  app.require_subcommand(1);
  Globals g;
  auto add_globals = [&](CLI::App* sub) {
    sub->add_option("--config", g.config, "Config file");
    sub->add_option("--out", g.out, "Output directory");
    sub->add_option("--seed", g.seed, "Master seed (overrides the config)");
    sub->add_option("--threads", g.threads, "Worker threads (0 = all)");
    sub->add_option("--cap", g.cap, "Step cap per sample");
  };
  std::map<std::string, int (*)(const Globals&)> commands = {
      {"simulate-exit", cmd_simulate_exit},   {"predict", cmd_predict},
      {"estimate-measure", cmd_estimate_measure}, {"reproduce-fig1", cmd_reproduce_fig1},
      {"atoms-check", cmd_atoms_check},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, fn] : commands) add_globals(subs[name] = app.add_subcommand(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    for (const auto& [name, sub] : subs)
      if (sub->parsed()) return commands.at(name)(g);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ResolutionError& e) {
    std::cerr << "resolution error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return 4;
  }
  return 2;
}
