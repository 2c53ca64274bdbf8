#include "l2flow/diagnostics.hpp"

#include "l2flow/io.hpp"
#include "l2flow/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace l2flow {

namespace {

// Cumulative volume C(i) from node 0 to node i; the last entry closes the
// period on circles.
struct Lateral {
  Vec cum;
  double total;
  Vec area;  // slice area at each node
};

Lateral lateral(const WarpedMetric& m) {
  const Eigen::Index n = m.size();
  const double a = m.fiber().area;
  const Vec q = (m.phi().array() * m.psi().array().square()).matrix() * a;
  Vec cum(n);
  cum(0) = 0.0;
  for (Eigen::Index i = 1; i < n; ++i) cum(i) = cum(i - 1) + 0.5 * m.dx() * (q(i - 1) + q(i));
  const double total = m.periodic() ? cum(n - 1) + 0.5 * m.dx() * (q(n - 1) + q(0)) : cum(n - 1);
  return {cum, total, (m.psi().array().square() * a).matrix()};
}

struct Cut {
  Eigen::Index i = -1, j = -1;
  double ratio = std::numeric_limits<double>::infinity();
};

// Best lateral domain {s_i < s < s_j} for Area / min(Vol, Vol^c)^exponent.
Cut best_cut(const WarpedMetric& m, double exponent) {
  const Lateral lat = lateral(m);
  const Eigen::Index n = m.size();
  Cut best;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double inside = lat.cum(j) - lat.cum(i);
      const double v = std::min(inside, lat.total - inside);
      if (!(v > 1e-14 * lat.total)) continue;
      const double r = (lat.area(i) + lat.area(j)) / std::pow(v, exponent);
      if (r < best.ratio) best = {i, j, r};
    }
  }
  return best;
}

}  // namespace

double lateral_isoperimetric(const WarpedMetric& m) { return best_cut(m, 2.0 / 3.0).ratio; }

double kpw(const WarpedMetric& m, double lam, double p) {
  if (!(lam <= 0.0)) throw Error(ErrorCode::ValidationError, "kpw needs lambda <= 0");
  if (!(p > 1.5)) throw Error(ErrorCode::ValidationError, "kpw needs p > n/2 = 3/2");
  const Vec rc = curvature_profile(m).ricci_min;
  const Vec dv = (m.weights().array() * m.phi().array() * m.psi().array().square()).matrix() * m.fiber().area;
  double total = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double v = std::max(0.0, 2.0 * lam - rc(i));
    if (v > 0.0) total += dv(i) * std::pow(v, p);
  }
  return total;
}

CheegerWitness cheeger_witness(const WarpedMetric& m) {
  const Cut c = best_cut(m, 1.0);
  const Eigen::Index n = m.size();
  const Arclength a = arclength(m);
  const bool circle = m.periodic();

  std::vector<double> cuts;
  for (Eigen::Index k : {c.i, c.j})
    if (!m.is_pole(k)) cuts.push_back(a.s(k));
  auto dist = [&](double s) {
    double d = std::numeric_limits<double>::infinity();
    for (double x : cuts) {
      double e = std::abs(s - x);
      if (circle) e = std::min(e, a.L - e);
      d = std::min(d, e);
    }
    return d;
  };
  // lobe A is the inside of the cut, B the rest; cut nodes belong to neither
  auto lobe = [&](Eigen::Index k) {
    if ((k == c.i && !m.is_pole(k)) || (k == c.j && !m.is_pole(k))) return 0;
    return (k >= c.i && k <= c.j) ? 1 : 2;
  };
  double len_a = 0.0, len_b = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (lobe(k) == 1) len_a = std::max(len_a, dist(a.s(k)));
    if (lobe(k) == 2) len_b = std::max(len_b, dist(a.s(k)));
  }

  const SpectralGrid g = spectral_grid(m, 0);
  double best = std::numeric_limits<double>::infinity();
  for (double frac : {0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0}) {
    Vec fa = Vec::Zero(n), fb = Vec::Zero(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double d = dist(a.s(k));
      if (lobe(k) == 1) fa(k) = std::min(1.0, d / (frac * len_a));
      if (lobe(k) == 2) fb(k) = std::min(1.0, d / (frac * len_b));
    }
    const double ia = g.cell.dot(fa), ib = g.cell.dot(fb);
    if (!(ia > 0.0) || !(ib > 0.0)) continue;
    const ScalarProfile f{fa - (ia / ib) * fb, 0};
    best = std::min(best, dirichlet_energy(f, m));
  }
  const double lo = a.s(c.i), hi = a.s(c.j);
  return {c.ratio, best, m.is_pole(c.i) ? hi : lo, m.is_pole(c.j) ? lo : hi};
}

DiagnosticsRecord record(double t, const WarpedMetric& m, const RecordContext& ctx) {
  DiagnosticsRecord r;
  r.t = t;
  r.dt = ctx.dt;
  r.vol = volume(m);
  const auto nc = noncollapse_quantities(m);
  r.min_psi = nc.min_psi;
  r.L = nc.L;
  r.inj_proxy = nc.inj_proxy;
  r.iso_lateral = lateral_isoperimetric(m);
  r.vol_residual = ctx.vol_residual;
  r.dissipation_residual = ctx.dissipation_residual;
  try {
    r.F = energy(m);
    r.F_tilde = normalized_energy(r.vol, r.F);
    r.max_riem = curvature_profile(m).riem_sq.maxCoeff();
    r.collapse_scalar = r.inj_proxy * r.inj_proxy * std::sqrt(r.max_riem);
    r.kpw_value = kpw(m, ctx.kpw_lambda, ctx.kpw_p);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateFiber) throw;
    r.degenerate = true;
  }
  if (ctx.with_lambda1 && !r.degenerate) {
    try {
      r.lambda1 = lambda1(m).lambda1;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ConvergenceFailure) throw;
    }
  }
  return r;
}

std::vector<DiagnosticsRecord> diagnostics(const FlowTrajectory& traj, const DiagnosticsOptions& opts) {
  const auto& S = traj.samples;
  std::vector<DiagnosticsRecord> rows;
  if (S.empty()) return rows;
  ResidualReport res;
  const bool have_res = S.size() >= 3;
  if (have_res) res = monitor_residuals(traj);
  for (std::size_t i = 0; i < S.size(); ++i) {
    RecordContext ctx;
    ctx.dt = S[i].dt;
    ctx.kpw_lambda = opts.kpw_lambda;
    ctx.kpw_p = opts.kpw_p;
    ctx.with_lambda1 = opts.spectral_every > 0 && (i % static_cast<std::size_t>(opts.spectral_every) == 0 || i + 1 == S.size());
    if (have_res && i > 0) {
      ctx.vol_residual = res.volume_rate(static_cast<Eigen::Index>(i - 1));
      ctx.dissipation_residual = res.dissipation(static_cast<Eigen::Index>(i - 1));
    }
    rows.push_back(record(S[i].t, S[i].metric, ctx));
  }
  return rows;
}

const char* diagnostics_header() {
  return "t,dt,Vol,F,F_tilde,max_riem,min_psi,L,lambda1,inj_proxy,collapse_scalar,iso_lateral,kpw_value,vol_residual,"
         "dissipation_residual";
}

void write_diagnostics_csv(std::ostream& out, const std::vector<DiagnosticsRecord>& rows) {
  out << diagnostics_header() << '\n';
  for (const auto& r : rows) {
    const double v[] = {r.t,   r.dt,        r.vol,          r.F,         r.F_tilde,
                        r.max_riem, r.min_psi, r.L,         r.lambda1,   r.inj_proxy,
                        r.collapse_scalar, r.iso_lateral, r.kpw_value, r.vol_residual, r.dissipation_residual};
    for (std::size_t k = 0; k < std::size(v); ++k) out << (k ? "," : "") << format_number(v[k]);
    out << '\n';
  }
}

}  // namespace l2flow
