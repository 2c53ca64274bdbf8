#include "CLI11.hpp"
#include "json.hpp"

#include "l2flow/acceptance.hpp"
#include "l2flow/cli.hpp"
#include "l2flow/io.hpp"
#include "l2flow/spectral.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace l2flow;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kFooter = R"(Exit codes:
  0  success
  2  invalid configuration, unreadable input or unknown suite
  3  singularity detected in a run declared expect = long_time
  4  invariant violation (certified inequality, conserved quantity, unmet
     expectation) or a failed verify criterion
  5  numerical failure (step underflow, solver breakdown)

L2FLOW_OUT overrides every output directory.)";

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string out_dir(const std::string& fallback) {
  const char* env = std::getenv("L2FLOW_OUT");
  return env && *env ? env : fallback;
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

int report(const RunSummary& s, const std::string& dir) {
  std::cout << "termination=" << s.termination << " t_final=" << format_number(s.t_final)
            << " exit=" << s.exit_code << " output=" << dir << "\n";
  if (!s.reason.empty()) std::cerr << s.reason << "\n";
  for (const auto& v : s.violations) std::cerr << "violation: " << v << "\n";
  return s.exit_code;
}

int cmd_run(const std::string& path) {
  const auto cfg = parse_config(slurp(path));
  const std::string dir = out_dir(cfg.output);
  return report(run_scenario(cfg, dir), dir);
}

int cmd_sweep(const std::string& path, const std::string& grid_path, unsigned workers) {
  const std::string tmpl = slurp(path);
  const auto cfg = parse_config(tmpl);
  const auto grid = parse_grid(slurp(grid_path));
  const std::string dir = out_dir(cfg.output);
  const auto rows = sweep(tmpl, grid, workers, dir);
  fs::create_directories(dir);
  std::ofstream csv(fs::path(dir) / "sweep.csv");
  write_sweep_csv(csv, grid, rows);
  std::size_t ok = 0;
  for (const auto& r : rows) ok += r.status == "ok";
  std::cout << ok << "/" << rows.size() << " runs ok, " << (fs::path(dir) / "sweep.csv").string() << "\n";
  return kExitOk;
}

struct OdeFlags {
  std::string scenario = "product_s5_s1";
  int n = 3;
  double A0 = 1.0, B0 = 1.0;
  std::string mode = "gradient_derived";
  std::string expect = "none";
  double t_end = 0.0;
  std::string output = "l2flow_out";
};

int cmd_ode(const OdeFlags& f) {
  std::ostringstream text;
  text << "scenario = " << f.scenario << "\nengine = ode\nn = " << f.n << "\nA0 = " << format_number(f.A0)
       << "\nB0 = " << format_number(f.B0) << "\nexpect = " << f.expect << "\noutput = " << f.output << "\n";
  if (f.t_end > 0.0) text << "t_end = " << format_number(f.t_end) << "\n";
  text << "[ode]\nmode = " << f.mode << "\n";
  const auto cfg = parse_config(text.str());
  const std::string dir = out_dir(cfg.output);
  const auto s = run_scenario(cfg, dir);
  if (std::isfinite(s.t_sing)) std::cout << "t_sing=" << format_number(s.t_sing) << "\n";
  return report(s, dir);
}

int cmd_spectral(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  const auto m = read_snapshot(in);
  const auto e = lambda1(m);
  const auto w = cheeger_witness(m);
  json j = {{"snapshot", path},
            {"curvature_norm", std::string(to_string(m.options().norm))},
            {"lambda1", e.lambda1},
            {"branch", e.branch},
            {"residual", e.residual},
            {"cheeger_h_upper", number(w.h_upper)},
            {"cheeger_lambda_upper", number(w.lambda_upper)},
            {"cut_lo", number(w.cut_lo)},
            {"cut_hi", number(w.cut_hi)},
            {"iso_lateral", number(lateral_isoperimetric(m))},
            {"volume", volume(m)},
            {"energy", energy(m)}};
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_verify(const std::string& suite) {
  const auto ids = suite_criteria(suite);
  json list = json::array();
  bool all = true;
  for (int id : ids) {
    const auto r = run_criterion(id);
    std::cerr << format_result(r) << "\n";
    json measured = json::object();
    for (const auto& [k, v] : r.measured) measured[k] = number(v);
    list.push_back({{"id", r.id},
                    {"suite", r.suite},
                    {"name", r.name},
                    {"passed", r.passed},
                    {"seconds", r.seconds},
                    {"budget_seconds", r.budget},
                    {"measured", measured},
                    {"note", r.note}});
    all = all && r.passed;
  }
  std::cout << json{{"suite", suite}, {"passed", all}, {"criteria", list}}.dump(2) << "\n";
  return all ? kExitOk : kExitInvariant;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"L2 curvature flow on warped products and homogeneous products"};
  app.footer(kFooter);
  app.require_subcommand(1);

  std::string config, grid, snapshot, suite;
  unsigned workers = 0;
  OdeFlags ode;

  auto* run = app.add_subcommand("run", "run one scenario from a config file");
  run->add_option("config", config, "scenario config")->required();

  auto* sw = app.add_subcommand("sweep", "run a config template over a parameter grid");
  sw->add_option("config", config, "template config")->required();
  sw->add_option("--grid", grid, "grid file: header of keys, one row of values per run")->required();
  sw->add_option("--workers", workers, "worker threads, 0 for all cores");

  auto* od = app.add_subcommand("ode", "integrate a homogeneous product");
  od->add_option("--scenario", ode.scenario, "round_sphere, product_s5_s1 or product_s2_s1");
  od->add_option("--n", ode.n, "sphere dimension");
  od->add_option("--A0", ode.A0, "initial sphere scale");
  od->add_option("--B0", ode.B0, "initial circle scale");
  od->add_option("--mode", ode.mode, "gradient_derived or paper_literal");
  od->add_option("--t-end", ode.t_end, "end time, default 10 A0^2");
  od->add_option("--expect", ode.expect, "none, long_time or singular");
  od->add_option("--out", ode.output, "output directory");

  auto* sp = app.add_subcommand("spectral", "lambda1, Cheeger witness and isoperimetric ratio of a snapshot");
  sp->add_option("snapshot", snapshot, "snapshot file")->required();

  auto* ve = app.add_subcommand("verify", "run an acceptance suite and print a JSON report");
  ve->add_option("suite", suite, "geometry, ode, flow, spectral or all")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config);
    if (*sw) return cmd_sweep(config, grid, workers);
    if (*od) return cmd_ode(ode);
    if (*sp) return cmd_spectral(snapshot);
    if (*ve) return cmd_verify(suite);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    switch (e.code()) {
      case ErrorCode::ParseError:
      case ErrorCode::ValidationError:
      case ErrorCode::IoError:
        return kExitConfig;
      default:
        return kExitNumerical;
    }
  }
  return kExitOk;
}
