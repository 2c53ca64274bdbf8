#pragma once

#include "l2flow/flow.hpp"

#include <iosfwd>
#include <limits>
#include <vector>

namespace l2flow {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Smallest ratio Area(boundary) / min(Vol, Vol of complement)^(2/3) over
/// lateral domains {s_i < s < s_j} (caps on S^3 come from i at a pole). An
/// upper bound for the isoperimetric constant: only lateral domains are tried.
double lateral_isoperimetric(const WarpedMetric& m);

/// int max(0, 2 lam - Rc_min)^p dV. Throws ValidationError unless lam <= 0 and p > 3/2.
double kpw(const WarpedMetric& m, double lam, double p);

struct CheegerWitness {
  double h_upper;       // best lateral Area(cut) / min volume
  double lambda_upper;  // Rayleigh quotient of a mean-zero two-lobe plateau function
  double cut_lo, cut_hi;  // arclength of the cut(s) used; cut_lo = cut_hi = s for one cut
};

/// Upper bounds from explicit domains and test functions. Both certify that
/// lambda1 is small, never that it is large.
CheegerWitness cheeger_witness(const WarpedMetric& m);

/// One row of run diagnostics.
struct DiagnosticsRecord {
  double t = kNaN;
  double dt = kNaN;
  double vol = kNaN;
  double F = kNaN;
  double F_tilde = kNaN;
  double max_riem = kNaN;
  double min_psi = kNaN;
  double L = kNaN;
  double lambda1 = kNaN;  // only on spectral rows
  double inj_proxy = kNaN;
  double collapse_scalar = kNaN;  // inj_proxy^2 sqrt(max_riem)
  double iso_lateral = kNaN;
  double kpw_value = kNaN;
  double vol_residual = kNaN;
  double dissipation_residual = kNaN;
  bool degenerate = false;  // some column hit a degenerate fiber and holds NaN
};

struct RecordContext {
  double dt = kNaN;
  bool with_lambda1 = false;
  double kpw_lambda = 0.0;
  double kpw_p = 2.0;
  double vol_residual = kNaN;
  double dissipation_residual = kNaN;
};

DiagnosticsRecord record(double t, const WarpedMetric& m, const RecordContext& ctx = {});

struct DiagnosticsOptions {
  int spectral_every = 0;  // lambda1 on every k-th sample (and the last); 0 never
  double kpw_lambda = 0.0;
  double kpw_p = 2.0;
};

/// One record per sample; residual columns describe the interval ending at the sample.
std::vector<DiagnosticsRecord> diagnostics(const FlowTrajectory& traj, const DiagnosticsOptions& opts = {});

/// Column names in record order, comma separated.
const char* diagnostics_header();
/// Header plus one line per record, 17 significant digits, NaN spelled `nan`.
void write_diagnostics_csv(std::ostream& out, const std::vector<DiagnosticsRecord>& rows);

}  // namespace l2flow
