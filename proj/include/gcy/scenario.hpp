#pragma once

// Scenario configs, runs and reports behind the command-line front end.
//
// A config is one JSON object:
//   scenario         manufactured | flat_kahler | gauduchon_torsion |
//                    conformal_factor | identity_suite
//   n, points_per_axis
//   forcing          {"modes": [...]}            F = sum a cos(2 pi k.x + phase)
//   u_star           {"modes": [...]}            manufactured only
//   alpha, alpha0    metric specs (alpha0 defaults to alpha)
//   coupling         1 or 2
//   solver           SolverConfig overrides, plus "coarse_points" for a
//                    coarse solve prolonged to the full grid
//   verify           {"samples", "u_amplitude", "corrupt_torsion"}
//   tolerances       per-assertion overrides
//   seed, output
// A mode is {"amplitude": a, "k": [k_x1, k_y1, ..., k_xn, k_yn], "phase": p}.
// Metric specs:
//   {"type": "flat", "scale": s}
//   {"type": "conformal", "modes": [...]}                   e^phi I
//   {"type": "diagonal_conformal", "directions": [[...], ...]}
//                                                           diag(e^phi_1, ...)
//   {"type": "gauduchon_corrected", "base": <metric spec>}

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gcy/eigen_calculus.hpp"
#include "gcy/gauduchon_ma.hpp"
#include "gcy/gfld.hpp"
#include "gcy/solver.hpp"

namespace gcy::scenario {

using json = nlohmann::json;
using Coords = std::array<double, 2 * GridSpec::kMaxComplexDim>;

struct Mode {
  double amplitude = 0.0;
  std::array<int, 2 * GridSpec::kMaxComplexDim> k{};
  double phase = 0.0;
};
using Modes = std::vector<Mode>;

inline double evaluate(const Modes& modes, const Coords& x, int axes) {
  double s = 0.0;
  for (const auto& m : modes) {
    double arg = m.phase;
    for (int a = 0; a < axes; ++a) arg += 2.0 * kPi * m.k[a] * x[a];
    s += m.amplitude * std::cos(arg);
  }
  return s;
}

inline ScalarField sample(const GridSpec& g, const Modes& modes) {
  const int axes = g.real_axes();
  return ScalarField::sample(g, [&](const Coords& x) { return evaluate(modes, x, axes); });
}

struct MetricSpec {
  enum class Type { flat, conformal, diagonal_conformal, gauduchon_corrected };
  Type type = Type::flat;
  double scale = 1.0;
  Modes phi;
  std::vector<Modes> directions;
  std::shared_ptr<const MetricSpec> base;
};

inline const char* to_string(MetricSpec::Type t) {
  switch (t) {
    case MetricSpec::Type::flat: return "flat";
    case MetricSpec::Type::conformal: return "conformal";
    case MetricSpec::Type::diagonal_conformal: return "diagonal_conformal";
    case MetricSpec::Type::gauduchon_corrected: return "gauduchon_corrected";
  }
  return "?";
}

inline HermitianTensorField build_metric(const GridSpec& g, const MetricSpec& s,
                                         const ConformalFactorOptions& opt = {}) {
  const int n = g.n(), axes = g.real_axes();
  using Kind = HermitianTensorField::Kind;
  switch (s.type) {
    case MetricSpec::Type::flat:
      return HermitianTensorField::constant(g, CMat::Identity(n, n) * s.scale, Kind::metric);
    case MetricSpec::Type::conformal:
      return HermitianTensorField::sample(
          g, [&](const Coords& x) -> CMat { return CMat::Identity(n, n) * (s.scale * std::exp(evaluate(s.phi, x, axes))); },
          Kind::metric);
    case MetricSpec::Type::diagonal_conformal:
      return HermitianTensorField::sample(
          g,
          [&](const Coords& x) -> CMat {
            CMat m = CMat::Identity(n, n) * s.scale;
            for (int j = 0; j < n && j < static_cast<int>(s.directions.size()); ++j)
              m(j, j) *= std::exp(evaluate(s.directions[j], x, axes));
            return m;
          },
          Kind::metric);
    case MetricSpec::Type::gauduchon_corrected: {
      const HermitianTensorField raw = build_metric(g, *s.base, opt);
      return conformal_rescale(raw, gauduchon_conformal_factor(raw, opt));
    }
  }
  throw InvalidArgument("unknown metric type");
}

enum class Kind { manufactured, flat_kahler, gauduchon_torsion, conformal_factor, identity_suite };

inline const char* to_string(Kind k) {
  switch (k) {
    case Kind::manufactured: return "manufactured";
    case Kind::flat_kahler: return "flat_kahler";
    case Kind::gauduchon_torsion: return "gauduchon_torsion";
    case Kind::conformal_factor: return "conformal_factor";
    case Kind::identity_suite: return "identity_suite";
  }
  return "?";
}

struct VerifyOptions {
  int samples = 100;
  double u_amplitude = 0.02;
  bool corrupt_torsion = false;
};

struct ScenarioConfig {
  Kind scenario = Kind::flat_kahler;
  int n = 2;
  int points_per_axis = 32;
  Modes forcing;
  Modes u_star;
  MetricSpec alpha;
  std::optional<MetricSpec> alpha0;
  double coupling = 1.0;
  SolverConfig solver;
  int coarse_points = 0;
  VerifyOptions verify;
  std::map<std::string, double> tolerances;
  std::uint64_t seed = 0;
  std::string output;

  GridSpec grid() const { return GridSpec(n, points_per_axis); }

  double tolerance(const std::string& key) const {
    const double fallback = default_tolerance(key);
    if (auto it = tolerances.find(key); it != tolerances.end()) return it->second;
    return fallback;
  }

  double default_tolerance(const std::string& key) const {
    static const std::map<std::string, double> defaults = {
        {"recovery", 1e-8},          {"b", 1e-8},          {"b_consistency", 1e-8}, {"mean_zero", 1e-12},
        {"aeppli", 1e-8},            {"ricci", 1e-6},      {"z_identity", 1e-10},   {"w_check", 1e-9},
        {"p_identity", 1e-10},       {"star_roundtrip", 1e-10}, {"n2_reduction", 1e-9}, {"alpha_defect", 1e-8},
        {"conformal_mean", 1e-10},   {"conformal_defect", 1e-8}, {"conformal_identity", 1e-8},
        {"eigen_fd", 1e-6}};
    if (key == "volume" || key == "gauduchon_defect") return scenario == Kind::gauduchon_torsion ? 1e-7 : 1e-8;
    if (auto it = defaults.find(key); it != defaults.end()) return it->second;
    throw InvalidArgument("no tolerance named " + key);
  }
};

namespace detail {

[[noreturn]] inline void bad(const std::string& what) { throw ConfigError(what); }

inline Modes parse_modes(const json& j, const std::string& where, int n, int N) {
  if (!j.is_array()) bad(where + ": expected an array of modes");
  Modes out;
  for (const auto& m : j) {
    if (!m.is_object()) bad(where + ": mode must be an object");
    Mode mode;
    mode.amplitude = m.value("amplitude", 0.0);
    mode.phase = m.value("phase", 0.0);
    const json k = m.value("k", json::array());
    if (!k.is_array() || static_cast<int>(k.size()) != 2 * n)
      bad(where + ": mode needs k with " + std::to_string(2 * n) + " integer frequencies");
    for (int a = 0; a < 2 * n; ++a) {
      if (!k[a].is_number_integer()) bad(where + ": frequencies must be integers");
      mode.k[a] = k[a].get<int>();
      if (std::abs(mode.k[a]) >= N / 4) bad(where + ": frequency " + std::to_string(mode.k[a]) + " is not below N/4");
    }
    if (!std::isfinite(mode.amplitude) || !std::isfinite(mode.phase)) bad(where + ": non-finite mode entry");
    out.push_back(mode);
  }
  return out;
}

inline Modes parse_mode_block(const json& parent, const char* key, int n, int N) {
  if (!parent.contains(key)) return {};
  const json& j = parent.at(key);
  if (j.is_object()) return parse_modes(j.value("modes", json::array()), key, n, N);
  return parse_modes(j, key, n, N);
}

inline MetricSpec parse_metric(const json& j, const std::string& where, int n, int N) {
  MetricSpec s;
  if (!j.is_object()) bad(where + ": metric spec must be an object");
  const std::string type = j.value("type", "flat");
  s.scale = j.value("scale", 1.0);
  if (!(s.scale > 0.0)) bad(where + ": scale must be positive");
  if (type == "flat") {
    s.type = MetricSpec::Type::flat;
  } else if (type == "conformal") {
    s.type = MetricSpec::Type::conformal;
    s.phi = parse_modes(j.value("modes", json::array()), where + ".modes", n, N);
  } else if (type == "diagonal_conformal") {
    s.type = MetricSpec::Type::diagonal_conformal;
    const json d = j.value("directions", json::array());
    if (!d.is_array() || static_cast<int>(d.size()) > n) bad(where + ": directions must list at most n mode arrays");
    for (std::size_t i = 0; i < d.size(); ++i)
      s.directions.push_back(parse_modes(d[i], where + ".directions[" + std::to_string(i) + "]", n, N));
  } else if (type == "gauduchon_corrected") {
    s.type = MetricSpec::Type::gauduchon_corrected;
    if (!j.contains("base")) bad(where + ": gauduchon_corrected needs a base metric");
    s.base = std::make_shared<const MetricSpec>(parse_metric(j.at("base"), where + ".base", n, N));
  } else {
    bad(where + ": unknown metric type '" + type + "'");
  }
  return s;
}

template <class T>
void override_field(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace detail

/// Parses and validates a config. Every problem is reported as ConfigError.
inline ScenarioConfig parse_config(const json& j) {
  using detail::bad;
  if (!j.is_object()) bad("config must be a JSON object");
  ScenarioConfig c;
  try {
    const std::string s = j.value("scenario", "");
    if (s == "manufactured") c.scenario = Kind::manufactured;
    else if (s == "flat_kahler") c.scenario = Kind::flat_kahler;
    else if (s == "gauduchon_torsion") c.scenario = Kind::gauduchon_torsion;
    else if (s == "conformal_factor") c.scenario = Kind::conformal_factor;
    else if (s == "identity_suite") c.scenario = Kind::identity_suite;
    else bad("unknown scenario '" + s + "'");
    c.n = j.value("n", 2);
    c.points_per_axis = j.value("points_per_axis", 32);
    try {
      (void)c.grid();
    } catch (const InvalidArgument& e) {
      bad(e.what());
    }
    const int n = c.n, N = c.points_per_axis;
    c.forcing = detail::parse_mode_block(j, "forcing", n, N);
    c.u_star = detail::parse_mode_block(j, "u_star", n, N);
    if (c.scenario == Kind::manufactured && c.u_star.empty()) bad("manufactured scenario needs u_star modes");
    c.alpha = detail::parse_metric(j.value("alpha", json::object()), "alpha", n, N);
    if (j.contains("alpha0")) c.alpha0 = detail::parse_metric(j.at("alpha0"), "alpha0", n, N);
    c.coupling = j.value("coupling", 1.0);
    if (c.coupling != 1.0 && c.coupling != 2.0) bad("coupling must be 1 or 2");
    if (j.contains("solver")) {
      const json& sj = j.at("solver");
      if (!sj.is_object()) bad("solver must be an object");
      SolverConfig& sc = c.solver;
      detail::override_field(sj, "newton_tol", sc.newton_tol);
      detail::override_field(sj, "max_newton", sc.max_newton);
      detail::override_field(sj, "damping", sc.damping);
      detail::override_field(sj, "max_halvings", sc.max_halvings);
      detail::override_field(sj, "continuation_steps", sc.continuation_steps);
      detail::override_field(sj, "min_continuation_step", sc.min_continuation_step);
      detail::override_field(sj, "krylov_tol", sc.krylov_tol);
      detail::override_field(sj, "krylov_max_iters", sc.krylov_max_iters);
      detail::override_field(sj, "krylov_restart", sc.krylov_restart);
      detail::override_field(sj, "krylov_memory_bytes", sc.krylov_memory_bytes);
      detail::override_field(sj, "probe_kappa", sc.probe_kappa);
      detail::override_field(sj, "probe_R", sc.probe_R);
      detail::override_field(sj, "probe_tallies", sc.probe_tallies);
      detail::override_field(sj, "coarse_points", c.coarse_points);
      try {
        sc.validate();
      } catch (const InvalidArgument& e) {
        bad(std::string("solver: ") + e.what());
      }
      if (c.coarse_points != 0) {
        if (c.coarse_points >= N) bad("solver.coarse_points must be below points_per_axis");
        try {
          (void)GridSpec(n, c.coarse_points);
        } catch (const InvalidArgument& e) {
          bad(std::string("solver.coarse_points: ") + e.what());
        }
      }
    }
    if (j.contains("verify")) {
      const json& vj = j.at("verify");
      detail::override_field(vj, "samples", c.verify.samples);
      detail::override_field(vj, "u_amplitude", c.verify.u_amplitude);
      detail::override_field(vj, "corrupt_torsion", c.verify.corrupt_torsion);
      if (c.verify.samples < 1) bad("verify.samples must be positive");
    }
    if (j.contains("tolerances")) {
      for (const auto& [k, v] : j.at("tolerances").items()) {
        const double t = v.get<double>();
        if (!(t > 0)) bad("tolerance " + k + " must be positive");
        c.tolerances[k] = t;
      }
      for (const auto& [k, v] : c.tolerances) (void)c.default_tolerance(k);
    }
    c.seed = j.value("seed", std::uint64_t{0});
    c.output = j.value("output", std::string());
  } catch (const json::exception& e) {
    bad(std::string("malformed config: ") + e.what());
  } catch (const InvalidArgument& e) {
    bad(e.what());
  }
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
  return parse_config(j);
}

/// One checked quantity. `anchor` names the identity or estimate it instantiates.
struct Assertion {
  std::string key;
  std::string anchor;
  std::string relation;  // "<=" or ">"
  double value = 0.0;
  double bound = 0.0;
  bool passed = false;
};

struct Report {
  std::string command;
  std::string scenario;
  std::string config;
  std::uint64_t seed = 0;
  int n = 0, points_per_axis = 0;
  std::vector<Assertion> assertions;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> notes;
  std::string failure;

  void check_le(const std::string& key, const std::string& anchor, double value, double bound) {
    assertions.push_back({key, anchor, "<=", value, bound, value <= bound});
  }
  void check_gt(const std::string& key, const std::string& anchor, double value, double bound) {
    assertions.push_back({key, anchor, ">", value, bound, value > bound});
  }
  void metric(const std::string& key, double v) { metrics.emplace_back(key, v); }
  bool passed() const {
    if (!failure.empty()) return false;
    for (const auto& a : assertions)
      if (!a.passed) return false;
    return true;
  }

  json to_json() const {
    json j;
    j["command"] = command;
    j["scenario"] = scenario;
    j["config"] = config;
    j["seed"] = seed;
    j["n"] = n;
    j["points_per_axis"] = points_per_axis;
    j["passed"] = passed();
    j["assertions"] = json::array();
    for (const auto& a : assertions)
      j["assertions"].push_back(
          {{"key", a.key}, {"anchor", a.anchor}, {"relation", a.relation}, {"value", a.value}, {"bound", a.bound},
           {"passed", a.passed}});
    j["metrics"] = json::object();
    for (const auto& [k, v] : metrics) j["metrics"][k] = v;
    j["notes"] = notes;
    if (!failure.empty()) j["failure"] = failure;
    return j;
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "gcy " << command << " " << scenario << "\n";
    os << "config: " << config << "\n";
    os << "seed: " << seed << "\n";
    os << "grid: n=" << n << " N=" << points_per_axis << "\n\n";
    char line[512];
    for (const auto& a : assertions) {
      std::snprintf(line, sizeof line, "%-4s %-20s %.6e %s %.1e  [%s]\n", a.passed ? "PASS" : "FAIL", a.key.c_str(),
                    a.value, a.relation.c_str(), a.bound, a.anchor.c_str());
      os << line;
    }
    if (!metrics.empty()) os << "\n";
    for (const auto& [k, v] : metrics) {
      std::snprintf(line, sizeof line, "%-24s %.12g\n", k.c_str(), v);
      os << line;
    }
    for (const auto& note : notes) os << "note: " << note << "\n";
    if (!failure.empty()) os << "\nfailure: " << failure << "\n";
    os << "\nresult: " << (passed() ? "PASS" : "FAIL") << "\n";
    return os.str();
  }
};

/// Output directory plus file helpers.
class Output {
 public:
  explicit Output(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }
  const std::filesystem::path& dir() const noexcept { return dir_; }

  template <class Field>
  void dump(const std::string& name, const Field& f) const {
    std::ofstream os(dir_ / (name + ".gfld"), std::ios::binary);
    gfld::write(os, f);
    if (!os) throw Error("cannot write " + (dir_ / (name + ".gfld")).string());
  }

  void write_report(const Report& r) const {
    std::ofstream(dir_ / "report.txt") << r.to_text();
    std::ofstream(dir_ / "report.json") << r.to_json().dump(2) << "\n";
  }

 private:
  std::filesystem::path dir_;
};

inline json telemetry_json(const TelemetryRecord& r) {
  return {{"t", r.t},       {"iteration", r.iteration}, {"sup_residual", r.sup_residual}, {"b", r.b},
          {"K", r.K},       {"lambda1", r.lambda1},     {"ratio", r.ratio},               {"min_nu", r.min_nu}};
}

namespace detail {

/// A few low modes with random phases and amplitudes of size `amp`.
inline ScalarField random_potential(const GridSpec& g, std::mt19937_64& rng, double amp) {
  std::uniform_int_distribution<int> freq(-1, 1);
  std::uniform_real_distribution<double> phase(0.0, 2 * kPi), scale(0.5, 1.0);
  Modes modes;
  for (int m = 0; m < 4; ++m) {
    Mode mode;
    mode.amplitude = amp * scale(rng) / 4.0;
    mode.phase = phase(rng);
    for (int a = 0; a < g.real_axes(); ++a) mode.k[a] = freq(rng);
    mode.k[m % g.real_axes()] = 1;
    modes.push_back(mode);
  }
  return sample(g, modes);
}

inline std::vector<std::size_t> sample_points(const GridSpec& g, std::mt19937_64& rng, int count) {
  std::uniform_int_distribution<std::size_t> pick(0, g.size() - 1);
  std::vector<std::size_t> pts(count);
  for (auto& p : pts) p = pick(rng);
  return pts;
}

inline CMat random_hermitian(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> d(0.0, 1.0);
  CMat m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = cplx(d(rng), d(rng));
  return hermitian_part(m);
}

inline CMat random_positive(std::mt19937_64& rng, int n) {
  const CMat m = random_hermitian(rng, n);
  return hermitian_part(m * m.adjoint() + CMat::Identity(n, n) * 0.3);
}

inline double ricci_error(const HermitianTensorField& omega, const HermitianTensorField& alpha, const ScalarField& F) {
  const auto ro = chern_ricci(omega), ra = chern_ricci(alpha);
  const auto hf = hessian(F);
  double worst = 0.0;
  for (std::size_t p = 0; p < F.grid().size(); ++p) worst = std::max(worst, (ro.at(p) - ra.at(p) + hf.at(p)).norm());
  return worst;
}

/// sup |det omega / det alpha - e^{F+b}| computed from gtilde pointwise.
inline double volume_error(const ScalarField& u, double b, const EquationData& d) {
  const gcy::detail::Assembler as(u, d);
  const int n = d.n();
  double worst = 0.0;
  for (std::size_t p = 0; p < d.grid().size(); ++p) {
    const double ratio = std::pow(real_det(as.gtilde(p)) / d.det_alpha(p), 1.0 / (n - 1));
    worst = std::max(worst, std::abs(ratio - std::exp(d.F().real(p) + b)));
  }
  return worst;
}

/// mean of (n-1)F + log(det alpha / det gtilde) + (n-1)b.
inline double b_consistency(const ScalarField& u, double b, const EquationData& d) {
  const gcy::detail::Assembler as(u, d);
  const int n = d.n();
  double acc = 0.0;
  for (std::size_t p = 0; p < d.grid().size(); ++p)
    acc += (n - 1) * d.F().real(p) + d.log_det_alpha(p) - std::log(real_det(as.gtilde(p)));
  return std::abs(acc / static_cast<double>(d.grid().size()) + (n - 1) * b);
}

/// For n = 2, sup over the grid of |omega - (alpha0 + i ddbar u)|.
inline double n2_reduction(const ScalarField& u, const EquationData& d) {
  const gcy::detail::Assembler as(u, d);
  double worst = 0.0;
  for (std::size_t p = 0; p < d.grid().size(); ++p) {
    const CMat a = d.alpha().at(p);
    const CMat direct = d.alpha0().at(p) + as.hessian(p);
    worst = std::max(worst, (star_power_inverse(as.gtilde(p), a) - direct).norm());
  }
  return worst;
}

inline double max_abs(const CMat& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace detail

struct Problem {
  HermitianTensorField alpha, alpha0;
  ScalarField forcing;
  std::optional<ScalarField> u_star;
};

inline ConformalFactorOptions conformal_options(const ScenarioConfig& c) {
  ConformalFactorOptions o;
  o.seed = c.seed;
  return o;
}

/// Builds the metrics and forcing of a config on grid g. For manufactured
/// scenarios the forcing is F* from u*; u* must keep gtilde positive.
inline Problem build_problem(const ScenarioConfig& c, const GridSpec& g) {
  const auto opt = conformal_options(c);
  HermitianTensorField alpha = build_metric(g, c.alpha, opt);
  HermitianTensorField alpha0 = c.alpha0 ? build_metric(g, *c.alpha0, opt) : alpha;
  ScalarField F = sample(g, c.forcing);
  std::optional<ScalarField> u_star;
  if (c.scenario == Kind::manufactured) {
    u_star = sample(g, c.u_star);
    u_star = u_star->shifted(-u_star->mean().real());
    const EquationData base(alpha, alpha0, ScalarField::constant(g, 0.0), c.coupling);
    try {
      F = manufactured_forcing(*u_star, base);
    } catch (const ConeViolation& e) {
      throw ConfigError(std::string("u_star leaves the positive cone: ") + e.what());
    }
  }
  return {std::move(alpha), std::move(alpha0), std::move(F), std::move(u_star)};
}

struct RunResult {
  Report report;
  int exit_code = 0;
};

/// Solve scenarios: manufactured, flat_kahler, gauduchon_torsion.
inline RunResult run_solve(const ScenarioConfig& c, const Output& out) {
  Report rep;
  const GridSpec g = c.grid();
  std::ofstream telemetry(out.dir() / "telemetry.jsonl");
  SolverConfig sc = c.solver;
  sc.telemetry = [&](const TelemetryRecord& r) { telemetry << telemetry_json(r).dump() << "\n"; };

  std::optional<SolverState> init;
  if (c.coarse_points != 0) {
    const GridSpec coarse(c.n, c.coarse_points);
    Problem pc = build_problem(c, coarse);
    const EquationData dc(pc.alpha, pc.alpha0, pc.forcing, c.coupling);
    try {
      SolverState sc0 = continuation_solve(dc, sc);
      rep.metric("coarse_ratio", sc0.diagnostics.ratio);
      SolverState s{prolong(sc0.u, g)};
      s.b = sc0.b;
      s.t = 1.0;
      init = std::move(s);
    } catch (const StepFailure& e) {
      rep.failure = std::string("coarse solve: ") + e.what();
      out.dump("u_last_good", e.last_good().u);
      return {std::move(rep), 1};
    } catch (const Error& e) {
      rep.failure = std::string("coarse solve: ") + e.what();
      return {std::move(rep), 1};
    }
  }

  const Problem pr = build_problem(c, g);
  const EquationData d(pr.alpha, pr.alpha0, pr.forcing, c.coupling);
  std::optional<SolverState> solved;
  try {
    if (init) {
      solved = newton_solve(d, std::move(*init), sc);
      solved->diagnostics = diagnostics(*solved, d, sc);
    } else {
      solved = continuation_solve(d, sc);
    }
  } catch (const StepFailure& e) {
    rep.failure = e.what();
    out.dump("u_last_good", e.last_good().u);
    rep.metric("last_good_t", e.last_good().t);
    rep.metric("last_good_b", e.last_good().b);
    return {std::move(rep), 1};
  } catch (const Error& e) {
    rep.failure = e.what();
    return {std::move(rep), 1};
  }

  const SolverState& s = *solved;
  const int n = c.n;
  const Residual r = residual(s.u, s.b, d);
  rep.metric("b", s.b);
  rep.metric("t", s.t);
  rep.metric("newton_iterations", s.newton_iterations);
  rep.metric("sup_residual_resolved", s.sup_residual);
  rep.metric("sup_residual_pointwise", r.value.sup_abs());
  rep.metric("sup_u", s.u.max_real());
  rep.metric("K", s.diagnostics.K);
  rep.metric("lambda1", s.diagnostics.lambda1);
  rep.metric("ratio", s.diagnostics.ratio);
  rep.metric("osc_u", s.diagnostics.osc_u);
  rep.metric("min_nu", s.diagnostics.min_nu);
  rep.metric("sum_lambda_min", s.diagnostics.sum_lambda_min);
  rep.metric("probe_case_a", static_cast<double>(s.diagnostics.case_a));
  rep.metric("probe_case_b", static_cast<double>(s.diagnostics.case_b));
  rep.metric("probe_below_R", static_cast<double>(s.diagnostics.below_R));
  rep.metric("probe_neither", static_cast<double>(s.diagnostics.neither));
  rep.notes.push_back("u is reported mean-zero; the sup-normalized potential is u - sup_u");

  rep.check_le("residual", "Newton residual (Nyquist-free part)", s.sup_residual, sc.newton_tol);
  rep.check_gt("cone", "C-subsolution cone: gtilde > 0", s.diagnostics.min_nu, 0.0);
  rep.check_le("mean_zero", "normalization mean(u) = 0", std::abs(s.u.mean().real()), c.tolerance("mean_zero"));
  rep.check_le("b_consistency", "integrated equation fixes b", detail::b_consistency(s.u, s.b, d),
               c.tolerance("b_consistency"));

  if (pr.u_star) {
    rep.check_le("recovery", "manufactured solution u*", s.u.axpby(1.0, *pr.u_star, -1.0).sup_abs(),
                 c.tolerance("recovery"));
    rep.check_le("b", "manufactured solution b = 0", std::abs(s.b), c.tolerance("b"));
  }
  rep.check_le("volume", "volume form omega^n = e^{F+b} alpha^n", detail::volume_error(s.u, s.b, d),
               c.tolerance("volume"));
  {
    const CMat m = aeppli_pairing_matrix(s.u, d);
    rep.check_le("aeppli", "Aeppli class of omega^{n-1} fixed", detail::max_abs(m), c.tolerance("aeppli"));
  }
  if (n == 2) rep.check_le("n2_reduction", "n = 2: omega = alpha0 + i ddbar u", detail::n2_reduction(s.u, d),
                           c.tolerance("n2_reduction"));
  if (c.scenario == Kind::gauduchon_torsion) {
    rep.metric("alpha_gauduchon_defect", d.alpha_gauduchon_defect());
    double tmax = 0.0;
    const auto& t = d.torsion();
    if (!d.torsion_free())
      for (std::size_t p = 0; p < g.size(); ++p)
        for (int k = 0; k < n; ++k)
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) tmax = std::max(tmax, std::abs(t.lower(p, k, i, j)));
    rep.metric("sup_torsion", tmax);
    rep.check_le("alpha_defect", "alpha is Gauduchon", d.alpha_gauduchon_defect(), c.tolerance("alpha_defect"));
  }

  out.dump("u", s.u);
  {
    const auto omega = omega_from_u(s.u, d);
    rep.check_le("gauduchon_defect", "omega is Gauduchon", gauduchon_defect(omega, pr.alpha),
                 c.tolerance("gauduchon_defect"));
    rep.check_le("ricci", "Ric(omega) = Ric(alpha) - i ddbar F", detail::ricci_error(omega, pr.alpha, pr.forcing),
                 c.tolerance("ricci"));
    out.dump("omega", omega);
    out.dump("ricci", chern_ricci(omega));
  }
  out.dump("gtilde", assemble_gtilde(s.u, d));
  return {std::move(rep), 0};
}

inline RunResult run_conformal(const ScenarioConfig& c, const Output& out) {
  Report rep;
  const GridSpec g = c.grid();
  const auto opt = conformal_options(c);
  const HermitianTensorField alpha = build_metric(g, c.alpha, opt);
  ScalarField v = ScalarField::constant(g, 1.0);
  try {
    v = gauduchon_conformal_factor(alpha, opt);
  } catch (const Error& e) {
    rep.failure = e.what();
    return {std::move(rep), 1};
  }
  const double raw_defect = gauduchon_defect(alpha, alpha);
  const HermitianTensorField corrected = conformal_rescale(alpha, v);
  rep.metric("defect_before", raw_defect);
  rep.metric("min_v", v.min_real());
  rep.metric("max_v", v.max_real());
  rep.check_gt("positive", "Gauduchon factor v > 0", v.min_real(), 0.0);
  rep.check_le("conformal_mean", "normalization mean(v) = 1", std::abs(v.mean().real() - 1.0),
               c.tolerance("conformal_mean"));
  rep.check_le("conformal_defect", "v^{1/(n-1)} alpha is Gauduchon", gauduchon_defect(corrected, corrected),
               c.tolerance("conformal_defect"));
  if (raw_defect <= 1e-10)
    rep.check_le("conformal_identity", "v = 1 on a Gauduchon metric", v.shifted(-1.0).sup_abs(),
                 c.tolerance("conformal_identity"));
  out.dump("v", v);
  out.dump("alpha_corrected", corrected);
  return {std::move(rep), 0};
}

/// Identity checks on the config's metrics without solving.
inline RunResult run_verify(const ScenarioConfig& c, const Output& out) {
  Report rep;
  const GridSpec g = c.grid();
  const int n = c.n;
  std::mt19937_64 rng(c.seed);
  const auto opt = conformal_options(c);
  const HermitianTensorField alpha = build_metric(g, c.alpha, opt);
  const HermitianTensorField alpha0 = c.alpha0 ? build_metric(g, *c.alpha0, opt) : alpha;
  EquationData d(alpha, alpha0, sample(g, c.forcing), c.coupling);
  if (c.verify.corrupt_torsion) {
    d = d.with_torsion(connection_as_torsion(alpha));
    rep.notes.push_back("negative control: torsion replaced by the unantisymmetrized Chern connection");
  }
  const auto points = detail::sample_points(g, rng, c.verify.samples);
  const ScalarField u = detail::random_potential(g, rng, c.verify.u_amplitude);
  rep.metric("samples", static_cast<double>(points.size()));
  rep.metric("torsion_free", d.torsion_free() ? 1.0 : 0.0);

  // Z from torsion vs Z by exterior algebra.
  {
    const gcy::detail::Assembler as(u, d);
    const ZOracle oracle(d);
    const auto grad = gradient(u);
    double err = 0.0, scale = 0.0;
    for (const std::size_t p : points) {
      CVec du(n);
      for (int j = 0; j < n; ++j) du(j) = grad[j].values()[p];
      const CMat z = as.z(p);
      const CMat zo = oracle(du, p);
      err = std::max(err, (z - zo).norm());
      scale = std::max(scale, zo.norm());
    }
    rep.metric("z_scale", scale);
    rep.check_le("z_identity", "Z from torsion = Z by exterior algebra (relative)", scale > 0 ? err / scale : err,
                 c.tolerance("z_identity"));
  }
  // Assumptions on W in alpha-orthonormal frames.
  {
    const WAssumptionChecker w(d);
    double coeff = 0.0, deriv = 0.0;
    for (const std::size_t p : points) {
      const WCheckReport r = w.check(p, c.tolerance("w_check"));
      coeff = std::max(coeff, r.coefficient);
      deriv = std::max(deriv, r.derivative);
    }
    rep.check_le("w_trace", "W assumption: Z^j_{i jbar} = 0", coeff, c.tolerance("w_check"));
    rep.check_le("w_derivative", "W assumption: nabla_ibar Z^i_{i ibar} = 0", deriv, c.tolerance("w_check"));
  }
  // P_alpha as a Hodge star, and the star-power roundtrip.
  {
    double perr = 0.0, rerr = 0.0;
    const double f = factorial(n - 1);
    for (const std::size_t p : points) {
      const CMat a = alpha.at(p);
      const CMat beta = detail::random_hermitian(rng, n);
      const Form w = Form::one_one(beta).wedge(Form::one_one(a).power(n - 2));
      const CMat lhs = hodge_star_nn(w, a) / f;
      const CMat rhs = p_alpha(beta, a);
      perr = std::max(perr, (lhs - rhs).norm() / std::max(1.0, rhs.norm()));
      const CMat h = detail::random_positive(rng, n);
      rerr = std::max(rerr, (star_power_inverse(star_power(h, a), a) - h).norm() / h.norm());
    }
    rep.check_le("p_identity", "(1/(n-1)!) *(beta ^ alpha^{n-2}) = P_alpha(beta)", perr, c.tolerance("p_identity"));
    rep.check_le("star_roundtrip", "star_power_inverse . star_power = id", rerr, c.tolerance("star_roundtrip"));
  }
  // Aeppli pairing of a non-converged potential.
  try {
    const CMat m = aeppli_pairing_matrix(u, d);
    rep.check_le("aeppli", "Aeppli class of omega^{n-1} fixed", detail::max_abs(m), c.tolerance("aeppli"));
  } catch (const ConeViolation& e) {
    rep.notes.push_back(std::string("aeppli pairing skipped: ") + e.what());
  }
  if (n == 2)
    rep.check_le("n2_reduction", "n = 2: omega = alpha0 + i ddbar u", detail::n2_reduction(u, d),
                 c.tolerance("n2_reduction"));
  {
    const double defect = d.alpha_gauduchon_defect();
    rep.metric("alpha_gauduchon_defect", defect);
    if (c.alpha.type == MetricSpec::Type::flat || c.alpha.type == MetricSpec::Type::gauduchon_corrected)
      rep.check_le("alpha_defect", "alpha is Gauduchon", defect, c.tolerance("alpha_defect"));
  }
  // Eigenvalue calculus against finite differences.
  {
    std::normal_distribution<double> nd(0.0, 1.0);
    double worst = 0.0;
    const double hstep = 1e-6;
    for (int t = 0; t < 200; ++t) {
      const CMat a = detail::random_positive(rng, n);
      const CMat gm = detail::random_positive(rng, n);
      const CMat dg = detail::random_hermitian(rng, n);
      auto F = [&](const CMat& x) { return f_log(generalized_eigen(x, a, 0).lambda); };
      const double fd = (F(gm + dg * hstep) - F(gm - dg * hstep)) / (2 * hstep);
      const double an = trace_product(F_first_derivative(gm, a), dg).real();
      worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(an)));
    }
    rep.check_le("eigen_fd", "dF = tr(Phi dg) against finite differences", worst, c.tolerance("eigen_fd"));
  }
  (void)out;
  return {std::move(rep), 0};
}

/// Runs `command` ("run" or "verify") for a parsed config, writing the
/// report into `out`. Exit code 0 when every assertion passes, 1 otherwise.
inline RunResult execute(const std::string& command, const ScenarioConfig& c, const std::string& config_path,
                         const Output& out) {
  RunResult r;
  if (command == "verify" || c.scenario == Kind::identity_suite)
    r = run_verify(c, out);
  else if (c.scenario == Kind::conformal_factor)
    r = run_conformal(c, out);
  else
    r = run_solve(c, out);
  r.report.command = command;
  r.report.scenario = to_string(c.scenario);
  r.report.config = config_path;
  r.report.seed = c.seed;
  r.report.n = c.n;
  r.report.points_per_axis = c.points_per_axis;
  if (r.exit_code == 0 && !r.report.passed()) r.exit_code = 1;
  out.write_report(r.report);
  return r;
}

}  // namespace gcy::scenario
