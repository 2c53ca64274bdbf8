#pragma once

#include "l2flow/diagnostics.hpp"
#include "l2flow/reduced_ode.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace l2flow {

enum class Engine { Ode, Pde };
enum class Expect { None, LongTime, Singular };

struct ScenarioConfig {
  std::string scenario;  // round_sphere, product_s5_s1, product_s2_s1, warped_tube, so3_dumbbell, custom
  Engine engine = Engine::Pde;

  // scenario parameters
  int n = 3;                    // round_sphere dimension
  double A0 = 1.0, B0 = 1.0;
  std::string tube_profile = "cosine";  // warped_tube: cosine, random or samples
  double radius = 1.0, amplitude = 0.1, period = 1.0;
  int wave = 1;
  int k_sigma = 1;
  int genus = 2;
  double fiber_mu1 = 0.25, fiber_inj_scale = 1.0;  // hyperbolic fibers only
  double neck_depth = 0.5;
  std::string snapshot;  // custom, or warped_tube samples

  Eigen::Index N = 64;
  std::uint64_t seed = 0;
  CurvatureNorm norm = CurvatureNorm::Paper;
  RhsMode rhs_mode = RhsMode::GradientDerived;
  OdeOptions ode;
  FlowConfig flow;
  std::optional<double> t_end;     // unset: engine default
  bool curvature_time = true;      // pde t_end in units of 1 / max |Rm|^2 of the initial metric
  int spectral_every = 0;
  Expect expect = Expect::None;
  bool plot = false;
  std::string output = "l2flow_out";
};

/// Flat key-value text: `key = value`, `#` or `;` comments, `[ode]`, `[pde]`
/// and `[scenario]` sections (top-level keys may also be written bare).
/// Throws ParseError naming the line for syntax errors and unknown keys, and
/// ValidationError (with the line where possible) for bad values.
ScenarioConfig parse_config(const std::string& text);

/// Raw key/value pairs with line numbers, after section prefixes are applied
/// ("pde.dt_safety"). Used by the sweep to apply substitutions.
struct ConfigEntry {
  std::string value;
  int line;
};
std::map<std::string, ConfigEntry> parse_entries(const std::string& text);
ScenarioConfig config_from_entries(const std::map<std::string, ConfigEntry>& entries);

/// Full metric for a pde scenario. ValidationError for ode-only scenarios.
WarpedMetric scenario_metric(const ScenarioConfig& cfg);
/// Product state for an ode scenario. ValidationError for pde-only scenarios.
ProductState scenario_state(const ScenarioConfig& cfg);

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSingular = 3;
inline constexpr int kExitInvariant = 4;
inline constexpr int kExitNumerical = 5;

/// [lower, upper] bounds on the diameter.
struct DiameterBounds {
  double lower, upper;
};
DiameterBounds diameter_bounds(const WarpedMetric& m);

struct RunSummary {
  int exit_code = kExitOk;
  std::string curvature_norm;  // convention of every |Rm|^2 reported
  std::string rhs_mode;
  std::string termination;
  std::string reason;
  double t_final = kNaN;
  double t_sing = kNaN;
  double t_sing_paper = kNaN;  // 10 A0^2 / c5 for S^5 x S^1, literal coefficients
  DiagnosticsRecord initial, last;
  DiameterBounds diam0{kNaN, kNaN}, diam{kNaN, kNaN};
  Vec scales0, scales;  // ode only
  std::vector<std::string> violations;
};

/// Runs the scenario and writes into `dir` (created if missing): the
/// trajectory CSV, initial and final snapshots (pde), summary.json and, with
/// plot = true, SVG charts. Deterministic given the config. Library errors
/// are caught and mapped to exit codes.
RunSummary run_scenario(const ScenarioConfig& cfg, const std::string& dir);
/// Same without any files.
RunSummary run_scenario(const ScenarioConfig& cfg);

/// Grid file: a header of keys (section.key or key), then one row of values
/// per run, whitespace or comma separated.
struct SweepGrid {
  std::vector<std::string> keys;
  std::vector<std::vector<std::string>> rows;
};
SweepGrid parse_grid(const std::string& text);

struct SweepRow {
  std::vector<std::string> values;
  std::string status;  // ok, or the error / exit description
  RunSummary summary;
};

/// Runs every substitution concurrently on up to `workers` threads (0 picks
/// the hardware concurrency). Rows come back in input order; a failing run
/// is recorded in its status and never stops the others. With an output
/// directory each run writes into run_<index>/.
std::vector<SweepRow> sweep(const std::string& template_text, const SweepGrid& grid, unsigned workers = 0,
                            const std::string& out_dir = "");
void write_sweep_csv(std::ostream& out, const SweepGrid& grid, const std::vector<SweepRow>& rows);

}  // namespace l2flow
