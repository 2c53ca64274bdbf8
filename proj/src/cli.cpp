#include "l2flow/cli.hpp"

#include "l2flow/io.hpp"
#include "l2flow/presets.hpp"
#include "l2flow/spectral.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace l2flow {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::set<std::string> kTopKeys = {"scenario", "engine",         "N",    "seed",  "output",    "expect",
                                        "curvature_norm", "spectral_every", "plot", "t_end", "time_units"};
const std::set<std::string> kScenarioKeys = {"n",     "A0",        "B0",        "profile",         "radius",
                                             "amplitude", "period", "wave",      "k_sigma",         "genus",
                                             "fiber_mu1", "fiber_inj_scale", "neck_depth", "snapshot"};
const std::set<std::string> kOdeKeys = {"mode", "rtol", "atol", "max_steps"};
const std::set<std::string> kPdeKeys = {"normalized", "integrator",   "dt_safety",  "energy_guard",
                                        "volume_guard", "regrid_every", "sample_every", "riem_ceiling",
                                        "psi_floor",  "max_steps",    "min_dt"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Canonical name of a key written in a section; empty if unknown.
std::string resolve_key(const std::string& section, const std::string& key) {
  if (section.empty() || section == "scenario") {
    if (kTopKeys.count(key)) return key;
    if (kScenarioKeys.count(key)) return "scenario." + key;
    if (section.empty() && key == "mode") return "ode.mode";
    return "";
  }
  if (section == "ode" && kOdeKeys.count(key)) return "ode." + key;
  if (section == "pde" && kPdeKeys.count(key)) return "pde." + key;
  return "";
}

// Dotted names from a grid header or the command line.
std::string resolve_dotted(const std::string& name) {
  const auto dot = name.find('.');
  if (dot == std::string::npos) return resolve_key("", name);
  return resolve_key(name.substr(0, dot), name.substr(dot + 1));
}

class Reader {
 public:
  explicit Reader(const std::map<std::string, ConfigEntry>& e) : e_(e) {}

  bool has(const std::string& k) const { return e_.count(k) > 0; }
  std::string str(const std::string& k) const { return e_.at(k).value; }

  double num(const std::string& k) const {
    try {
      return parse_number(str(k));
    } catch (const Error&) {
      fail(k, "expects a number");
    }
  }
  long integer(const std::string& k) const {
    const double v = num(k);
    if (v != std::floor(v) || std::abs(v) > 9e15) fail(k, "expects an integer");
    return static_cast<long>(v);
  }
  bool flag(const std::string& k) const {
    const std::string v = str(k);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(k, "expects true or false");
  }
  template <class F>
  auto parsed(const std::string& k, F f) const {
    try {
      return f(str(k));
    } catch (const Error& e) {
      fail(k, e.what());
    }
  }

  [[noreturn]] void fail(const std::string& k, const std::string& what) const {
    const auto it = e_.find(k);
    const std::string where = it != e_.end() && it->second.line > 0 ? "line " + std::to_string(it->second.line) + ": " : "";
    throw Error(ErrorCode::ValidationError, where + "'" + k + "' " + what);
  }

 private:
  const std::map<std::string, ConfigEntry>& e_;
};

const std::set<std::string> kScenarios = {"round_sphere", "product_s5_s1", "product_s2_s1",
                                          "warped_tube",  "so3_dumbbell",  "custom"};

}  // namespace

std::map<std::string, ConfigEntry> parse_entries(const std::string& text) {
  std::map<std::string, ConfigEntry> out;
  std::istringstream in(text);
  std::string raw, section;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "scenario" && section != "ode" && section != "pde") fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) fail("missing key");
    const std::string name = resolve_key(section, key);
    if (name.empty()) fail("unknown key '" + key + "'" + (section.empty() ? "" : " in [" + section + "]"));
    if (out.count(name)) fail("duplicate key '" + key + "' (first on line " + std::to_string(out[name].line) + ")");
    out[name] = {value, lineno};
  }
  return out;
}

ScenarioConfig config_from_entries(const std::map<std::string, ConfigEntry>& entries) {
  const Reader r(entries);
  ScenarioConfig c;
  if (!r.has("scenario")) throw Error(ErrorCode::ValidationError, "missing 'scenario'");
  c.scenario = r.str("scenario");
  if (!kScenarios.count(c.scenario)) r.fail("scenario", "is not one of round_sphere, product_s5_s1, product_s2_s1, warped_tube, so3_dumbbell, custom");

  if (r.has("engine")) {
    const std::string e = r.str("engine");
    if (e == "ode") c.engine = Engine::Ode;
    else if (e == "pde") c.engine = Engine::Pde;
    else r.fail("engine", "must be ode or pde");
  } else {
    c.engine = c.scenario == "product_s5_s1" ? Engine::Ode : Engine::Pde;
  }

  if (r.has("N")) c.N = r.integer("N");
  if (c.N < 16) r.fail("N", "must be at least 16");
  if (r.has("seed")) {
    const long s = r.integer("seed");
    if (s < 0) r.fail("seed", "must be nonnegative");
    c.seed = static_cast<std::uint64_t>(s);
  }
  if (r.has("output")) c.output = r.str("output");
  if (r.has("expect")) {
    const std::string e = r.str("expect");
    if (e == "long_time") c.expect = Expect::LongTime;
    else if (e == "singular") c.expect = Expect::Singular;
    else if (e == "none") c.expect = Expect::None;
    else r.fail("expect", "must be long_time, singular or none");
  }
  if (r.has("curvature_norm")) c.norm = r.parsed("curvature_norm", curvature_norm_from_string);
  if (r.has("spectral_every")) {
    c.spectral_every = static_cast<int>(r.integer("spectral_every"));
    if (c.spectral_every < 0) r.fail("spectral_every", "must be nonnegative");
  }
  if (r.has("plot")) c.plot = r.flag("plot");
  if (r.has("t_end")) {
    c.t_end = r.num("t_end");
    if (!(*c.t_end > 0.0) || !std::isfinite(*c.t_end)) r.fail("t_end", "must be positive and finite");
  }
  if (r.has("time_units")) {
    const std::string u = r.str("time_units");
    if (u == "curvature") c.curvature_time = true;
    else if (u == "absolute") c.curvature_time = false;
    else r.fail("time_units", "must be curvature or absolute");
  }

  auto positive = [&](const std::string& k, double& v) {
    if (!r.has(k)) return;
    v = r.num(k);
    if (!(v > 0.0) || !std::isfinite(v)) r.fail(k, "must be positive");
  };
  if (r.has("scenario.n")) c.n = static_cast<int>(r.integer("scenario.n"));
  positive("scenario.A0", c.A0);
  positive("scenario.B0", c.B0);
  positive("scenario.radius", c.radius);
  positive("scenario.period", c.period);
  positive("scenario.fiber_inj_scale", c.fiber_inj_scale);
  if (r.has("scenario.profile")) c.tube_profile = r.str("scenario.profile");
  if (r.has("scenario.amplitude")) c.amplitude = r.num("scenario.amplitude");
  if (r.has("scenario.wave")) c.wave = static_cast<int>(r.integer("scenario.wave"));
  if (r.has("scenario.k_sigma")) c.k_sigma = static_cast<int>(r.integer("scenario.k_sigma"));
  if (r.has("scenario.genus")) c.genus = static_cast<int>(r.integer("scenario.genus"));
  if (r.has("scenario.fiber_mu1")) c.fiber_mu1 = r.num("scenario.fiber_mu1");
  if (r.has("scenario.neck_depth")) c.neck_depth = r.num("scenario.neck_depth");
  if (r.has("scenario.snapshot")) c.snapshot = r.str("scenario.snapshot");

  if (c.n < 2) r.fail("scenario.n", "must be at least 2");
  if (c.k_sigma != 1 && c.k_sigma != -1) r.fail("scenario.k_sigma", "must be 1 or -1");
  if (!(c.neck_depth >= 0.0 && c.neck_depth < 1.0)) r.fail("scenario.neck_depth", "must lie in [0, 1)");
  if (!(std::abs(c.amplitude) < 1.0)) r.fail("scenario.amplitude", "must satisfy |amplitude| < 1");
  if (c.tube_profile != "cosine" && c.tube_profile != "random" && c.tube_profile != "samples")
    r.fail("scenario.profile", "must be cosine, random or samples");

  if (r.has("ode.mode")) c.rhs_mode = r.parsed("ode.mode", rhs_mode_from_string);
  positive("ode.rtol", c.ode.rtol);
  positive("ode.atol", c.ode.atol);
  if (r.has("ode.max_steps")) c.ode.max_steps = static_cast<std::size_t>(std::max(1L, r.integer("ode.max_steps")));

  auto& f = c.flow;
  if (r.has("pde.normalized")) f.normalized = r.flag("pde.normalized");
  if (r.has("pde.integrator")) f.integrator = r.parsed("pde.integrator", integrator_from_string);
  positive("pde.dt_safety", f.dt_safety);
  if (r.has("pde.energy_guard")) f.energy_guard = r.flag("pde.energy_guard");
  positive("pde.volume_guard", f.volume_guard);
  if (r.has("pde.regrid_every")) f.regrid_every = static_cast<int>(r.integer("pde.regrid_every"));
  if (r.has("pde.sample_every")) f.sample_every = static_cast<int>(r.integer("pde.sample_every"));
  positive("pde.riem_ceiling", f.riem_ceiling);
  positive("pde.psi_floor", f.psi_floor);
  positive("pde.min_dt", f.min_dt);
  if (r.has("pde.max_steps")) f.max_steps = static_cast<std::size_t>(std::max(1L, r.integer("pde.max_steps")));
  try {
    f.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ValidationError, std::string("[pde] ") + e.what());
  }

  // scenario and engine must fit together
  const bool ode_only = c.scenario == "product_s5_s1";
  const bool pde_only = c.scenario == "warped_tube" || c.scenario == "so3_dumbbell" || c.scenario == "custom";
  if (ode_only && c.engine == Engine::Pde) r.fail("engine", "product_s5_s1 runs on the ode engine only");
  if (pde_only && c.engine == Engine::Ode) r.fail("engine", c.scenario + " runs on the pde engine only");
  if (c.scenario == "round_sphere" && c.engine == Engine::Pde && c.n != 3)
    r.fail("scenario.n", "the pde engine represents round spheres of dimension 3 only");
  if (c.scenario == "custom" && c.snapshot.empty()) r.fail("scenario", "custom needs scenario.snapshot");
  if (c.tube_profile == "samples" && c.snapshot.empty()) r.fail("scenario.profile", "samples needs scenario.snapshot");
  return c;
}

ScenarioConfig parse_config(const std::string& text) { return config_from_entries(parse_entries(text)); }

WarpedMetric scenario_metric(const ScenarioConfig& c) {
  GeometryOptions o;
  o.norm = c.norm;
  const Eigen::Index N = c.N;
  auto fiber = [&] {
    return c.k_sigma == 1 ? FiberSpec::round_sphere() : FiberSpec::hyperbolic(c.genus, c.fiber_mu1, c.fiber_inj_scale);
  };
  auto from_snapshot = [&] {
    std::ifstream in(c.snapshot);
    if (!in) throw Error(ErrorCode::IoError, "cannot open snapshot '" + c.snapshot + "'");
    return read_snapshot(in).with_options(o);
  };
  if (c.scenario == "round_sphere") {
    if (c.n != 3) throw Error(ErrorCode::ValidationError, "pde round spheres are three-dimensional");
    return scaled(presets::round_s3(N + 1, o), std::sqrt(c.A0));
  }
  if (c.scenario == "product_s2_s1") {
    // A g_S2 + A^-2 g_S1: psi = sqrt(A), circle length 2 pi / A
    return presets::tube(N, std::sqrt(c.A0), 2.0 * kPi / c.A0, FiberSpec::round_sphere(), o);
  }
  if (c.scenario == "warped_tube") {
    if (c.tube_profile == "random") return presets::random_smooth_tube(N, c.seed, o);
    if (c.tube_profile == "samples") return from_snapshot();
    return presets::perturbed_tube(N, c.radius, c.amplitude, c.period, c.wave, fiber(), o);
  }
  if (c.scenario == "so3_dumbbell") return presets::dumbbell_s3(N + 1, c.neck_depth, o);
  if (c.scenario == "custom") return from_snapshot();
  throw Error(ErrorCode::ValidationError, c.scenario + " has no warped-product metric");
}

ProductState scenario_state(const ScenarioConfig& c) {
  ProductState s;
  if (c.scenario == "round_sphere") s.factors = {{c.n, FactorCurvature::Sphere, c.A0}};
  else if (c.scenario == "product_s5_s1")
    s.factors = {{5, FactorCurvature::Sphere, c.A0}, {1, FactorCurvature::Flat, c.B0}};
  else if (c.scenario == "product_s2_s1")
    s.factors = {{2, FactorCurvature::Sphere, c.A0}, {1, FactorCurvature::Flat, 1.0 / (c.A0 * c.A0)}};
  else
    throw Error(ErrorCode::ValidationError, c.scenario + " is not a product of homogeneous factors");
  s.validate();
  return s;
}

DiameterBounds diameter_bounds(const WarpedMetric& m) {
  const double L = arclength(m).L;
  const double fiber_diam = m.fiber().k_sigma == 1 ? kPi : kNaN;
  const double top = m.psi().maxCoeff();
  if (m.periodic()) {
    // projecting to the fiber shortens lengths by at most min psi
    const double lower = std::max(0.5 * L, m.fiber().inj_scale * m.psi().minCoeff());
    return {lower, 0.5 * L + fiber_diam * top};
  }
  return {L, std::min(2.0 * L, L + fiber_diam * top)};
}

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json record_json(const DiagnosticsRecord& r) {
  return {{"t", number(r.t)},
          {"Vol", number(r.vol)},
          {"F", number(r.F)},
          {"F_tilde", number(r.F_tilde)},
          {"max_riem", number(r.max_riem)},
          {"min_psi", number(r.min_psi)},
          {"L", number(r.L)},
          {"lambda1", number(r.lambda1)},
          {"inj_proxy", number(r.inj_proxy)},
          {"collapse_scalar", number(r.collapse_scalar)},
          {"iso_lateral", number(r.iso_lateral)},
          {"kpw_value", number(r.kpw_value)},
          {"degenerate", r.degenerate}};
}

std::string expect_name(Expect e) {
  return e == Expect::LongTime ? "long_time" : e == Expect::Singular ? "singular" : "none";
}

int error_exit(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::ValidationError:
    case ErrorCode::IoError:
    case ErrorCode::GridError:
    case ErrorCode::BoundaryViolation:
      return kExitConfig;
    default:
      return kExitNumerical;
  }
}

void settle_expectation(const ScenarioConfig& c, bool singular, RunSummary& s) {
  if (singular && c.expect == Expect::LongTime) s.exit_code = kExitSingular;
  if (!singular && c.expect == Expect::Singular) s.violations.push_back("expected a singularity, none detected");
  if (!s.violations.empty() && s.exit_code == kExitOk) s.exit_code = kExitInvariant;
}

struct Outputs {
  std::string dir;
  std::vector<std::pair<std::string, std::string>> meta;

  std::ofstream open(const std::string& name) const {
    std::ofstream f(fs::path(dir) / name);
    if (!f) throw Error(ErrorCode::IoError, "cannot write " + (fs::path(dir) / name).string());
    return f;
  }
};

RunSummary run_pde(const ScenarioConfig& c, const Outputs* out) {
  RunSummary s;
  const WarpedMetric m0 = scenario_metric(c);
  FlowConfig fc = c.flow;
  const double t_end = c.t_end.value_or(1.0);
  fc.t_end = c.curvature_time ? t_end / curvature_profile(m0).riem_sq.maxCoeff() : t_end;

  const FlowTrajectory traj = run(m0, fc);
  s.termination = std::string(to_string(traj.termination));
  s.reason = traj.reason;
  s.t_final = traj.samples.back().t;
  if (traj.termination == FlowTermination::SingularityDetected) s.t_sing = s.t_final;

  DiagnosticsOptions dopts;
  dopts.spectral_every = c.spectral_every;
  const auto rows = diagnostics(traj, dopts);
  s.initial = rows.front();
  s.last = rows.back();
  s.diam0 = diameter_bounds(traj.samples.front().metric);
  s.diam = diameter_bounds(traj.samples.back().metric);

  // certified inequalities and flow monotonicity
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (!fc.normalized && fc.energy_guard && rows[i].F > rows[i - 1].F) {
      s.violations.push_back("F increased at t = " + format_number(rows[i].t));
      break;
    }
  }
  if (fc.normalized && traj.samples.size() >= 3 && monitor_residuals(traj).ftilde_violations > 0)
    s.violations.push_back("normalized energy increased");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!std::isfinite(rows[i].lambda1)) continue;
    const auto w = cheeger_witness(traj.samples[i].metric);
    if (rows[i].lambda1 > w.lambda_upper * (1.0 + 1e-9))
      s.violations.push_back("lambda1 above its test-function bound at t = " + format_number(rows[i].t));
  }
  if (traj.termination == FlowTermination::StepUnderflow) s.exit_code = kExitNumerical;
  settle_expectation(c, traj.termination == FlowTermination::SingularityDetected, s);

  if (out) {
    {
      auto f = out->open("diagnostics.csv");
      write_metadata(f, out->meta);
      write_diagnostics_csv(f, rows);
    }
    {
      auto f = out->open("snapshot_initial.txt");
      write_snapshot(f, traj.samples.front().metric);
    }
    {
      auto f = out->open("snapshot_final.txt");
      write_snapshot(f, traj.samples.back().metric);
    }
    if (c.plot) {
      Vec t(static_cast<Eigen::Index>(rows.size()));
      Vec F(t.size()), V(t.size()), R(t.size()), P(t.size());
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        t(i) = r.t, F(i) = r.F, V(i) = r.vol, R(i) = r.max_riem, P(i) = r.min_psi;
      }
      auto f1 = out->open("energy.svg");
      write_svg_chart(f1, "F", "t", t, {{"F", F}});
      auto f2 = out->open("volume.svg");
      write_svg_chart(f2, "Vol", "t", t, {{"Vol", V}});
      auto f3 = out->open("curvature.svg");
      write_svg_chart(f3, "max |Rm|^2 and min psi", "t", t, {{"max_riem", R}, {"min_psi", P}});
    }
  }
  return s;
}

DiagnosticsRecord product_record(const ProductState& st, double t, double collapse) {
  DiagnosticsRecord r;
  r.t = t;
  r.vol = product_volume(st);
  r.F = product_energy(st);
  const int n = st.dimension();
  r.F_tilde = std::pow(r.vol, (4.0 - n) / n) * r.F;
  r.max_riem = product_invariants(st).riem_sq;
  r.collapse_scalar = collapse;
  return r;
}

RunSummary run_ode(const ScenarioConfig& c, const Outputs* out) {
  RunSummary s;
  const ProductState s0 = scenario_state(c);
  const double t_end = c.t_end.value_or(10.0 * c.A0 * c.A0);
  const OdeTrajectory traj = integrate(s0, c.rhs_mode, t_end, c.ode);
  s.termination = std::string(to_string(traj.termination));
  s.t_final = traj.samples.back().t;
  s.t_sing = traj.t_sing;
  if (c.scenario == "product_s5_s1") s.t_sing_paper = 10.0 * c.A0 * c.A0 / sphere_riem_constant(5);

  Vec cs = Vec::Constant(static_cast<Eigen::Index>(traj.samples.size()), kNaN);
  try {
    cs = collapse_scalar(traj);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ShapeMismatch) throw;
  }
  const ProductState s_end = traj.state(traj.samples.size() - 1);
  s.initial = product_record(s0, 0.0, cs(0));
  s.last = product_record(s_end, s.t_final, cs(cs.size() - 1));
  s.diam0 = {product_diameter(s0), product_diameter(s0)};
  s.diam = {product_diameter(s_end), product_diameter(s_end)};
  s.scales0 = traj.samples.front().scales;
  s.scales = traj.samples.back().scales;

  const bool singular = traj.termination == OdeTermination::SingularityDetected;
  if (c.scenario == "product_s5_s1") {
    const double upto = singular ? 0.99 * traj.t_sing : s.t_final;
    const double drift = conserved_ratio(traj, 5.0, upto).max_rel_drift;
    if (drift > 1e-8) s.violations.push_back("B / A^5 drifted by " + format_number(drift));
  }
  if (c.scenario == "round_sphere") {
    double worst = 0.0;
    for (const auto& x : traj.samples)
      if (x.t < 0.99 * sphere_lifespan(c.n, c.A0, c.rhs_mode))
        worst = std::max(worst, std::abs(x.scales(0) / analytic_sphere(c.n, c.A0, x.t, c.rhs_mode) - 1.0));
    if (worst > 1e-6) s.violations.push_back("departs from the analytic solution by " + format_number(worst));
  }
  settle_expectation(c, singular, s);

  if (out) {
    {
      auto f = out->open("trajectory.csv");
      write_metadata(f, out->meta);
      write_ode_csv(f, traj, s0.factors[0].dim);
    }
    if (c.plot) {
      Vec t(static_cast<Eigen::Index>(traj.samples.size()));
      std::vector<Series> series(s0.factors.size());
      for (std::size_t j = 0; j < series.size(); ++j) series[j] = {"scale_" + std::to_string(j), Vec(t.size())};
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        t(i) = traj.samples[static_cast<std::size_t>(i)].t;
        for (std::size_t j = 0; j < series.size(); ++j)
          series[j].y(i) = traj.samples[static_cast<std::size_t>(i)].scales(static_cast<Eigen::Index>(j));
      }
      auto f = out->open("scales.svg");
      write_svg_chart(f, "factor scales", "t", t, series);
    }
  }
  return s;
}

RunSummary run_impl(const ScenarioConfig& c, const std::string* dir) {
  // the product ode reports the full tensor norm; the pde is the exact gradient flow
  const std::string norm = c.engine == Engine::Ode ? "full" : std::string(to_string(c.norm));
  const std::string mode = c.engine == Engine::Ode ? std::string(to_string(c.rhs_mode)) : "gradient_derived";
  const std::string engine = c.engine == Engine::Ode ? "ode" : "pde";
  Outputs out;
  if (dir) {
    std::error_code ec;
    fs::create_directories(*dir, ec);
    if (ec) {
      RunSummary s;
      s.exit_code = kExitConfig;
      s.termination = "not_started";
      s.reason = "cannot create " + *dir + ": " + ec.message();
      return s;
    }
    out.dir = *dir;
    out.meta = {{"scenario", c.scenario}, {"engine", engine}, {"curvature_norm", norm}, {"rhs_mode", mode}};
  }
  RunSummary s;
  // set-up failures are configuration errors, everything after is numerical
  bool started = false;
  try {
    if (c.engine == Engine::Pde) {
      scenario_metric(c);
      started = true;
      s = run_pde(c, dir ? &out : nullptr);
    } else {
      scenario_state(c);
      started = true;
      s = run_ode(c, dir ? &out : nullptr);
    }
  } catch (const Error& e) {
    s.exit_code = started && e.code() != ErrorCode::IoError ? kExitNumerical : error_exit(e.code());
    s.termination = "error";
    s.reason = e.what();
  }
  s.curvature_norm = norm;
  s.rhs_mode = mode;

  if (dir) {
    json j = {{"scenario", c.scenario},
              {"engine", engine},
              {"curvature_norm", norm},
              {"rhs_mode", mode},
              {"expect", expect_name(c.expect)},
              {"exit_code", s.exit_code},
              {"termination", s.termination},
              {"reason", s.reason},
              {"t_final", number(s.t_final)},
              {"t_sing", number(s.t_sing)},
              {"initial", record_json(s.initial)},
              {"final", record_json(s.last)},
              {"diameter_initial", {number(s.diam0.lower), number(s.diam0.upper)}},
              {"diameter_final", {number(s.diam.lower), number(s.diam.upper)}},
              {"violations", s.violations}};
    if (std::isfinite(s.t_sing_paper)) j["t_sing_paper_literal"] = s.t_sing_paper;
    if (s.scales0.size()) {
      j["scales_initial"] = std::vector<double>(s.scales0.data(), s.scales0.data() + s.scales0.size());
      j["scales_final"] = std::vector<double>(s.scales.data(), s.scales.data() + s.scales.size());
    }
    std::ofstream f(fs::path(*dir) / "summary.json");
    f << j.dump(2) << '\n';
  }
  return s;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> f;
  std::string cur;
  for (char ch : line) {
    if (ch == ',' || ch == ' ' || ch == '\t') {
      if (!cur.empty()) f.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  if (!cur.empty()) f.push_back(cur);
  return f;
}

}  // namespace

RunSummary run_scenario(const ScenarioConfig& cfg, const std::string& dir) { return run_impl(cfg, &dir); }
RunSummary run_scenario(const ScenarioConfig& cfg) { return run_impl(cfg, nullptr); }

SweepGrid parse_grid(const std::string& text) {
  SweepGrid g;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (g.keys.empty()) {
      for (const auto& k : fields) {
        if (resolve_dotted(k).empty())
          throw Error(ErrorCode::ParseError, "grid line " + std::to_string(lineno) + ": unknown key '" + k + "'");
        g.keys.push_back(k);
      }
      continue;
    }
    if (fields.size() != g.keys.size())
      throw Error(ErrorCode::ParseError, "grid line " + std::to_string(lineno) + ": expected " +
                                             std::to_string(g.keys.size()) + " values");
    g.rows.push_back(fields);
  }
  return g;
}

std::vector<SweepRow> sweep(const std::string& template_text, const SweepGrid& grid, unsigned workers,
                            const std::string& out_dir) {
  const auto base = parse_entries(template_text);
  std::vector<SweepRow> rows(grid.rows.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      SweepRow& row = rows[i];
      row.values = grid.rows[i];
      try {
        auto entries = base;
        for (std::size_t k = 0; k < grid.keys.size(); ++k) entries[resolve_dotted(grid.keys[k])] = {row.values[k], 0};
        const ScenarioConfig cfg = config_from_entries(entries);
        row.summary = out_dir.empty() ? run_scenario(cfg)
                                      : run_scenario(cfg, (fs::path(out_dir) / ("run_" + std::to_string(i))).string());
        row.status = row.summary.exit_code == kExitOk ? "ok"
                                                      : "exit " + std::to_string(row.summary.exit_code) + ": " +
                                                            (row.summary.violations.empty() ? row.summary.reason
                                                                                            : row.summary.violations[0]);
      } catch (const std::exception& e) {
        row.summary.exit_code = kExitConfig;
        row.status = std::string("config: ") + e.what();
      }
    }
  };
  unsigned n = workers ? workers : std::max(1u, std::thread::hardware_concurrency());
  n = static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(rows.size(), 1)));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  return rows;
}

void write_sweep_csv(std::ostream& out, const SweepGrid& grid, const std::vector<SweepRow>& rows) {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  };
  out << "index";
  for (const auto& k : grid.keys) out << ',' << k;
  out << ",status,exit_code,termination,curvature_norm,rhs_mode,t_final,Vol0,F0,diam_lower0,diam_upper0,Vol,F,F_tilde,max_riem,min_psi,L,"
         "lambda1,collapse_scalar,diam_lower,diam_upper\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto& s = r.summary;
    out << i;
    for (const auto& v : r.values) out << ',' << quote(v);
    out << ',' << quote(r.status) << ',' << s.exit_code << ',' << quote(s.termination) << ',' << s.curvature_norm << ','
        << s.rhs_mode;
    for (double v : {s.t_final, s.initial.vol, s.initial.F, s.diam0.lower, s.diam0.upper, s.last.vol, s.last.F,
                     s.last.F_tilde, s.last.max_riem, s.last.min_psi, s.last.L, s.last.lambda1, s.last.collapse_scalar,
                     s.diam.lower, s.diam.upper})
      out << ',' << format_number(v);
    out << '\n';
  }
}

}  // namespace l2flow
