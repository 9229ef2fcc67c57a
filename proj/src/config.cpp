#include "htexit/config.hpp"

#include "htexit/csv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace htexit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

using Table = std::map<std::string, std::map<std::string, std::string>>;

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s = {
      {"model", {"field", "dim", "origin", "sigma"}},
      {"noise", {"alpha", "x_min", "c_pareto", "c_normal", "spectral", "p_plus", "p_minus", "atoms"}},
      {"domain", {"type", "left", "right", "radius", "center", "lo", "hi"}},
      {"experiment",
       {"eta", "b", "samples", "cap", "seed", "threads", "gamma", "start", "output", "predict"}},
      {"measure", {"n", "dt", "delta_bar", "t_bar"}},
      {"search", {"k_max", "population", "iterations", "restarts"}},
      {"atoms", {"p_exit", "return_steps", "n", "eta", "eps", "T"}},
  };
  return s;
}

Table read_table(std::istream& in) {
  Table t;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto where = " (line " + std::to_string(lineno) + ")";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header" + where);
      section = trim(line.substr(1, line.size() - 2));
      if (!schema().count(section)) throw ConfigError("unknown section [" + section + "]" + where);
      t[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value" + where);
    if (section.empty()) throw ConfigError("key outside of a section" + where);
    const std::string key = trim(line.substr(0, eq));
    if (!schema().at(section).count(key))
      throw ConfigError("unknown key '" + section + "." + key + "'" + where);
    if (t[section].count(key)) throw ConfigError("duplicate key '" + section + "." + key + "'" + where);
    t[section][key] = trim(line.substr(eq + 1));
  }
  return t;
}

double to_double(const std::string& key, const std::string& s) {
  if (s == "inf" || s == "+inf") return kInf;
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty())
    throw ConfigError("key '" + key + "': '" + s + "' is not a number");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty()) {
    // Accept integral values written in floating notation (1e7).
    const double d = to_double(key, s);
    if (d < 0 || d != std::floor(d) || d > 1.8e19)
      throw ConfigError("key '" + key + "': '" + s + "' is not a nonnegative integer");
    return static_cast<std::uint64_t>(d);
  }
  return v;
}

std::vector<double> to_list(const std::string& key, const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split(s, ',')) out.push_back(to_double(key, item));
  if (out.empty()) throw ConfigError("key '" + key + "' is an empty list");
  return out;
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("key '" + key + "': expected true or false");
}

class Reader {
 public:
  explicit Reader(const Table& t) : t_(t) {}
  const std::string* get(const std::string& sec, const std::string& key) const {
    const auto s = t_.find(sec);
    if (s == t_.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }
  template <class T, class F>
  void opt(const std::string& sec, const std::string& key, T& out, F conv) const {
    if (const auto* v = get(sec, key)) out = conv(sec + "." + key, *v);
  }

 private:
  const Table& t_;
};

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt_double(v[i]);
  return s;
}

void require_positive(const std::string& key, double v) {
  if (!(v > 0.0)) throw ConfigError("key '" + key + "' must be positive");
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
  const Table t = read_table(in);
  const Reader r(t);
  ExperimentConfig c;
  auto str = [](const std::string&, const std::string& s) { return s; };
  auto dbl = [](const std::string& k, const std::string& s) { return to_double(k, s); };
  auto u64 = [](const std::string& k, const std::string& s) { return to_u64(k, s); };
  auto lst = [](const std::string& k, const std::string& s) { return to_list(k, s); };
  auto intg = [](const std::string& k, const std::string& s) {
    return static_cast<int>(to_u64(k, s));
  };
  auto sz = [](const std::string& k, const std::string& s) {
    return static_cast<std::size_t>(to_u64(k, s));
  };

  r.opt("model", "field", c.field, str);
  r.opt("model", "dim", c.dim, intg);
  if (const auto* v = r.get("model", "origin")) c.origin = to_list("model.origin", *v);
  r.opt("model", "sigma", c.sigma, dbl);

  r.opt("noise", "alpha", c.alpha, dbl);
  r.opt("noise", "x_min", c.x_min, dbl);
  r.opt("noise", "c_pareto", c.c_pareto, dbl);
  r.opt("noise", "c_normal", c.c_normal, dbl);
  r.opt("noise", "spectral", c.spectral, str);
  r.opt("noise", "p_plus", c.p_plus, dbl);
  r.opt("noise", "p_minus", c.p_minus, dbl);
  if (const auto* v = r.get("noise", "atoms")) {
    for (const auto& item : split(*v, ',')) {
      std::vector<double> nums;
      std::istringstream is(item);
      std::string tok;
      while (is >> tok) nums.push_back(to_double("noise.atoms", tok));
      if (nums.size() < 2) throw ConfigError("noise.atoms: each atom needs a direction and a weight");
      c.atoms.push_back(nums);
    }
  }

  r.opt("domain", "type", c.domain, str);
  r.opt("domain", "left", c.left, dbl);
  r.opt("domain", "right", c.right, dbl);
  r.opt("domain", "radius", c.radius, dbl);
  r.opt("domain", "center", c.center, lst);
  r.opt("domain", "lo", c.lo, lst);
  r.opt("domain", "hi", c.hi, lst);

  r.opt("experiment", "eta", c.etas, lst);
  r.opt("experiment", "b", c.bs, lst);
  r.opt("experiment", "samples", c.samples, sz);
  r.opt("experiment", "cap", c.cap, u64);
  if (const auto* v = r.get("experiment", "seed")) c.seed = to_u64("experiment.seed", *v);
  r.opt("experiment", "threads", c.threads, intg);
  r.opt("experiment", "gamma", c.gamma, dbl);
  if (const auto* v = r.get("experiment", "start")) c.start = to_list("experiment.start", *v);
  r.opt("experiment", "output", c.output, str);
  r.opt("experiment", "predict", c.predict,
        [](const std::string& k, const std::string& s) { return to_bool(k, s); });

  r.opt("measure", "n", c.measure_n, sz);
  r.opt("measure", "dt", c.measure_dt, dbl);
  r.opt("measure", "delta_bar", c.delta_bar, dbl);
  r.opt("measure", "t_bar", c.t_bar, dbl);

  r.opt("search", "k_max", c.k_max, intg);
  r.opt("search", "population", c.population, intg);
  r.opt("search", "iterations", c.iterations, intg);
  r.opt("search", "restarts", c.restarts, intg);

  r.opt("atoms", "p_exit", c.atom_p, lst);
  r.opt("atoms", "return_steps", c.atom_return_steps, intg);
  r.opt("atoms", "n", c.atom_n, sz);
  r.opt("atoms", "eta", c.atom_eta, dbl);
  r.opt("atoms", "eps", c.atom_eps, dbl);
  r.opt("atoms", "T", c.atom_T, dbl);

  if (c.etas.empty()) throw ConfigError("missing key 'experiment.eta'");
  if (c.bs.empty()) throw ConfigError("missing key 'experiment.b'");
  for (double e : c.etas)
    if (!(e > 0.0 && e < 1.0)) throw ConfigError("key 'experiment.eta': values must lie in (0, 1)");
  for (double b : c.bs) require_positive("experiment.b", b);
  if (c.samples < 1) throw ConfigError("key 'experiment.samples' must be >= 1");
  if (c.cap < 1) throw ConfigError("key 'experiment.cap' must be >= 1");
  if (c.dim < 1) throw ConfigError("key 'model.dim' must be >= 1");
  require_positive("measure.dt", c.measure_dt);
  require_positive("atoms.eta", c.atom_eta);
  require_positive("atoms.eps", c.atom_eps);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  return parse_config(in);
}

std::string to_manifest(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "[model]\n";
  os << "field = " << c.field << "\n";
  os << "dim = " << c.dim << "\n";
  if (c.origin) os << "origin = " << join(*c.origin) << "\n";
  os << "sigma = " << fmt_double(c.sigma) << "\n";
  os << "\n[noise]\n";
  os << "alpha = " << fmt_double(c.alpha) << "\n";
  os << "x_min = " << fmt_double(c.x_min) << "\n";
  os << "c_pareto = " << fmt_double(c.c_pareto) << "\n";
  os << "c_normal = " << fmt_double(c.c_normal) << "\n";
  os << "spectral = " << c.spectral << "\n";
  os << "p_plus = " << fmt_double(c.p_plus) << "\n";
  os << "p_minus = " << fmt_double(c.p_minus) << "\n";
  if (!c.atoms.empty()) {
    os << "atoms = ";
    for (std::size_t i = 0; i < c.atoms.size(); ++i) {
      if (i) os << ", ";
      for (std::size_t j = 0; j < c.atoms[i].size(); ++j)
        os << (j ? " " : "") << fmt_double(c.atoms[i][j]);
    }
    os << "\n";
  }
  os << "\n[domain]\n";
  os << "type = " << c.domain << "\n";
  os << "left = " << fmt_double(c.left) << "\n";
  os << "right = " << fmt_double(c.right) << "\n";
  os << "radius = " << fmt_double(c.radius) << "\n";
  if (!c.center.empty()) os << "center = " << join(c.center) << "\n";
  if (!c.lo.empty()) os << "lo = " << join(c.lo) << "\n";
  if (!c.hi.empty()) os << "hi = " << join(c.hi) << "\n";
  os << "\n[experiment]\n";
  os << "eta = " << join(c.etas) << "\n";
  os << "b = " << join(c.bs) << "\n";
  os << "samples = " << c.samples << "\n";
  os << "cap = " << c.cap << "\n";
  if (c.seed) os << "seed = " << *c.seed << "\n";
  os << "threads = " << c.threads << "\n";
  os << "gamma = " << fmt_double(c.gamma) << "\n";
  if (c.start) os << "start = " << join(*c.start) << "\n";
  os << "output = " << c.output << "\n";
  os << "predict = " << (c.predict ? "true" : "false") << "\n";
  os << "\n[measure]\n";
  os << "n = " << c.measure_n << "\n";
  os << "dt = " << fmt_double(c.measure_dt) << "\n";
  os << "delta_bar = " << fmt_double(c.delta_bar) << "\n";
  os << "t_bar = " << fmt_double(c.t_bar) << "\n";
  os << "\n[search]\n";
  os << "k_max = " << c.k_max << "\n";
  os << "population = " << c.population << "\n";
  os << "iterations = " << c.iterations << "\n";
  os << "restarts = " << c.restarts << "\n";
  os << "\n[atoms]\n";
  os << "p_exit = " << join(c.atom_p) << "\n";
  os << "return_steps = " << c.atom_return_steps << "\n";
  os << "n = " << c.atom_n << "\n";
  os << "eta = " << fmt_double(c.atom_eta) << "\n";
  os << "eps = " << fmt_double(c.atom_eps) << "\n";
  os << "T = " << fmt_double(c.atom_T) << "\n";
  return os.str();
}

namespace {

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

SpectralMeasure resolve_spectral(const ExperimentConfig& c) {
  try {
    if (c.spectral == "symmetric") {
      if (c.dim != 1) throw ConfigError("noise.spectral = symmetric needs model.dim = 1");
      return SpectralMeasure::symmetric_signs(c.p_plus, c.p_minus);
    }
    if (c.spectral == "uniform-sphere") return SpectralMeasure::uniform_sphere(c.dim);
    if (c.spectral == "atoms") {
      std::vector<SpectralMeasure::Atom> atoms;
      for (const auto& a : c.atoms) {
        if (static_cast<int>(a.size()) != c.dim + 1)
          throw ConfigError("noise.atoms: each atom needs dim direction components and a weight");
        atoms.push_back({to_vector(std::vector<double>(a.begin(), a.end() - 1)), a.back()});
      }
      return SpectralMeasure::discrete_atoms(std::move(atoms));
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("noise: ") + e.what());
  }
  throw ResolutionError("unknown spectral measure '" + c.spectral + "'");
}

DomainSpec resolve_domain(const ExperimentConfig& c) {
  try {
    if (c.domain == "interval") {
      if (c.dim != 1) throw ConfigError("domain.type = interval needs model.dim = 1");
      return DomainSpec::interval(c.left, c.right);
    }
    if (c.domain == "ball") {
      const Vector center = c.center.empty() ? Vector::Zero(c.dim) : to_vector(c.center);
      if (center.size() != c.dim) throw ConfigError("domain.center has the wrong dimension");
      return DomainSpec::ball(center, c.radius);
    }
    if (c.domain == "box") {
      if (static_cast<int>(c.lo.size()) != c.dim || static_cast<int>(c.hi.size()) != c.dim)
        throw ConfigError("domain.lo / domain.hi need model.dim entries");
      return DomainSpec::box(to_vector(c.lo), to_vector(c.hi));
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("domain: ") + e.what());
  }
  throw ResolutionError("unknown domain type '" + c.domain + "'");
}

}  // namespace

ResolvedExperiment resolve(const ExperimentConfig& c) {
  FieldPair fields;
  try {
    fields = builtin_field(c.field, c.dim);
  } catch (const std::out_of_range&) {
    throw ResolutionError("unknown field '" + c.field + "'");
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  if (c.sigma != 1.0) {
    const double s = c.sigma;
    const int m = c.dim;
    fields.diffusion = [s, m](const Vector&) { return Matrix(s * Matrix::Identity(m, m)); };
  }
  const Vector origin = c.origin ? to_vector(*c.origin) : Vector::Zero(c.dim);
  if (origin.size() != c.dim) throw ConfigError("model.origin has the wrong dimension");

  std::optional<TailModel> noise;
  try {
    noise.emplace(TailParams{c.alpha, c.x_min, c.c_pareto, c.c_normal}, resolve_spectral(c));
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("noise: ") + e.what());
  }
  if (noise->dim() != fields.dim_noise)
    throw ConfigError("noise dimension does not match the field's noise dimension");

  const DomainSpec original = resolve_domain(c);
  std::optional<DomainSpec> shifted;
  try {
    shifted.emplace(translate(original, origin));
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("model.origin: ") + e.what());
  }
  const Vector start = (c.start ? to_vector(*c.start) : origin) - origin;
  if (start.size() != c.dim) throw ConfigError("experiment.start has the wrong dimension");
  if (!shifted->contains(start)) throw ConfigError("experiment.start lies outside the domain");
  return {c.origin ? shift_origin(fields, origin) : fields, *noise, *shifted, origin, start};
}

}  // namespace htexit
