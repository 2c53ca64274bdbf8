#include "l2flow/spectral.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>

namespace l2flow {

namespace {

void check_mode(int k) {
  if (k != 0 && k != 1) throw Error(ErrorCode::ValidationError, "fiber mode must be 0 or 1");
}

void check_profile(const ScalarProfile& f, const WarpedMetric& m) {
  check_mode(f.fiber_mode);
  if (f.values.size() != m.size()) throw Error(ErrorCode::ShapeMismatch, "profile and metric grids differ");
}

// Value and first variation of the cell and face quantities. With v = nullptr
// only the values are filled.
SpectralGrid assemble(const WarpedMetric& m, const TangentField* v, int k) {
  check_mode(k);
  const Eigen::Index n = m.size();
  const bool circle = m.periodic();
  const double dx = m.dx();
  const double mu = fiber_eigenvalue(m, k);
  const Vec& phi = m.phi();
  const Vec& psi = m.psi();
  const Vec zero = Vec::Zero(n);
  const Vec& dphi = v ? v->dphi : zero;
  const Vec& dpsi = v ? v->dpsi : zero;
  auto nxt = [&](Eigen::Index i) { return i + 1 == n ? 0 : i + 1; };
  auto prv = [&](Eigen::Index i) { return i == 0 ? n - 1 : i - 1; };

  SpectralGrid g;
  g.fiber_mode = k;
  g.area = m.fiber().area;
  g.active.assign(static_cast<std::size_t>(n), true);
  if (!circle && k == 1) g.active.front() = g.active.back() = false;

  const Eigen::Index nf = circle ? n : n - 1;
  g.face.resize(nf);
  for (Eigen::Index f = 0; f < nf; ++f) {
    const Eigen::Index r = nxt(f);
    const double pf = 0.5 * (phi(f) + phi(r)), qf = 0.5 * (psi(f) + psi(r));
    const double a = qf * qf / (pf * dx);
    g.face(f) = v ? a * (2.0 * 0.5 * (dpsi(f) + dpsi(r)) / qf - 0.5 * (dphi(f) + dphi(r)) / pf) : a;
  }

  // Simpson on [l, r] with psi linear between nodes
  auto simpson = [](double h, double l, double c, double r, double dl, double dc, double dr, bool deriv) {
    return deriv ? h / 6.0 * (2 * l * dl + 8 * c * dc + 2 * r * dr) : h / 6.0 * (l * l + 4 * c * c + r * r);
  };
  g.cell.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double S, dS;
    if (!circle && (i == 0 || i == n - 1)) {
      const Eigen::Index j = i == 0 ? 1 : n - 2;
      const double q = 0.25 * (3 * psi(i) + psi(j)), r = 0.5 * (psi(i) + psi(j));
      const double dq = 0.25 * (3 * dpsi(i) + dpsi(j)), dr = 0.5 * (dpsi(i) + dpsi(j));
      S = simpson(0.5 * dx, psi(i), q, r, 0, 0, 0, false);
      dS = simpson(0.5 * dx, psi(i), q, r, dpsi(i), dq, dr, true);
    } else {
      const Eigen::Index a = prv(i), b = nxt(i);
      const double l = 0.5 * (psi(a) + psi(i)), r = 0.5 * (psi(i) + psi(b));
      const double dl = 0.5 * (dpsi(a) + dpsi(i)), dr = 0.5 * (dpsi(i) + dpsi(b));
      S = simpson(dx, l, psi(i), r, 0, 0, 0, false);
      dS = simpson(dx, l, psi(i), r, dl, dpsi(i), dr, true);
    }
    g.cell(i) = v ? dphi(i) * S + phi(i) * dS : phi(i) * S;
  }

  g.fiber_diag = Vec::Zero(n);
  if (mu > 0.0) {
    // d(mu V / psi^2) = mu (dV - 2 V dpsi / psi) / psi^2
    const Vec base = v ? assemble(m, nullptr, k).cell : g.cell;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (m.is_pole(i)) continue;
      const double q = psi(i) * psi(i);
      g.fiber_diag(i) = v ? mu * (g.cell(i) - 2.0 * base(i) * dpsi(i) / psi(i)) / q : mu * g.cell(i) / q;
    }
  }
  return g;
}

Vec apply_stiffness(const SpectralGrid& g, const Vec& f) {
  const Eigen::Index n = f.size();
  Vec out = g.fiber_diag.cwiseProduct(f);
  for (Eigen::Index e = 0; e < g.face.size(); ++e) {
    const Eigen::Index r = e + 1 == n ? 0 : e + 1;
    const double d = g.face(e) * (f(e) - f(r));
    out(e) += d;
    out(r) -= d;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (!g.active[static_cast<std::size_t>(i)]) out(i) = 0.0;
  return out;
}

Vec masked(const SpectralGrid& g, Vec f) {
  for (Eigen::Index i = 0; i < f.size(); ++i)
    if (!g.active[static_cast<std::size_t>(i)]) f(i) = 0.0;
  return f;
}

// Lap f = -V^{-1} K f
Vec laplacian(const SpectralGrid& g, const Vec& f) {
  Vec kf = apply_stiffness(g, f);
  return masked(g, -kf.cwiseQuotient(g.cell));
}

double weighted(const SpectralGrid& g, const Vec& a, const Vec& b) {
  return g.area * (g.cell.array() * a.array() * b.array()).sum();
}

double quadratic(const SpectralGrid& g, const Vec& a, const Vec& b) {
  return g.area * a.dot(apply_stiffness(g, b));
}

Eigen::SparseMatrix<double> stiffness_matrix(const SpectralGrid& g, const std::vector<Eigen::Index>& index,
                                             Eigen::Index dim, double shift) {
  const Eigen::Index n = g.cell.size();
  std::vector<Eigen::Triplet<double>> t;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index a = index[static_cast<std::size_t>(i)];
    if (a >= 0) t.emplace_back(a, a, g.fiber_diag(i) - shift * g.cell(i));
  }
  for (Eigen::Index e = 0; e < g.face.size(); ++e) {
    const Eigen::Index r = e + 1 == n ? 0 : e + 1;
    const Eigen::Index a = index[static_cast<std::size_t>(e)], b = index[static_cast<std::size_t>(r)];
    if (a >= 0) t.emplace_back(a, a, g.face(e));
    if (b >= 0) t.emplace_back(b, b, g.face(e));
    if (a >= 0 && b >= 0) {
      t.emplace_back(a, b, -g.face(e));
      t.emplace_back(b, a, -g.face(e));
    }
  }
  Eigen::SparseMatrix<double> K(dim, dim);
  K.setFromTriplets(t.begin(), t.end());
  return K;
}

struct BackState {
  Vec f;
  WarpedMetric m;
};

BackState backstep_impl(const Vec& f, int k, const WarpedMetric& m, const TangentField& E, double dtau) {
  if (!(dtau > 0.0) || !std::isfinite(dtau)) throw Error(ErrorCode::StepUnderflow, "dtau must be positive");
  const SpectralGrid g = assemble(m, nullptr, k);
  const Vec u = g.cell.cwiseProduct(f) + dtau * apply_stiffness(g, laplacian(g, f));
  WarpedMetric prev = m.with_profile(m.phi() - dtau * E.dphi, m.psi() - dtau * E.dpsi);
  const SpectralGrid gp = assemble(prev, nullptr, k);
  return {masked(gp, u.cwiseQuotient(gp.cell)), std::move(prev)};
}

// f on `from` carried to the grid of `to` by linear interpolation in arclength fraction.
Vec transfer(const Vec& f, const WarpedMetric& from, const WarpedMetric& to) {
  const Arclength a = arclength(from), b = arclength(to);
  const Eigen::Index n = from.size();
  std::vector<double> s(static_cast<std::size_t>(n)), v(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    s[static_cast<std::size_t>(i)] = a.s(i) / a.L;
    v[static_cast<std::size_t>(i)] = f(i);
  }
  if (from.periodic()) {
    s.push_back(1.0);
    v.push_back(f(0));
  }
  Vec out(to.size());
  for (Eigen::Index i = 0; i < to.size(); ++i) {
    const double q = std::clamp(b.s(i) / b.L, 0.0, 1.0);
    auto it = std::upper_bound(s.begin(), s.end(), q);
    const std::size_t j = std::clamp<std::size_t>(static_cast<std::size_t>(it - s.begin()), 1, s.size() - 1);
    const double w = (q - s[j - 1]) / (s[j] - s[j - 1]);
    out(i) = (1.0 - w) * v[j - 1] + w * v[j];
  }
  return out;
}

IdentityCheck identity_rhs(const Vec& f, int k, const WarpedMetric& m, const TangentField& E, double tau) {
  const SpectralGrid g = assemble(m, nullptr, k);
  const SpectralGrid dg = assemble(m, &E, k);
  const Vec D = laplacian(g, f);
  IdentityCheck c{};
  c.tau = tau;
  // d/dtau = -d/dt on the metric; 1/2 tr E V = dV/dt
  c.l2_rhs = -2.0 * weighted(g, D, D) + weighted(dg, f, f);
  c.h1_rhs = -2.0 * quadratic(g, D, D) - quadratic(dg, f, f) - 2.0 * weighted(dg, D, f);

  // int <E, df (x) df> dV on its own: E(e_s, e_s) = 2 phi_t / phi, E(e, e) = 2 psi_t / psi on the fiber
  const Eigen::Index n = m.size();
  double term = 0.0;
  for (Eigen::Index e = 0; e < g.face.size(); ++e) {
    const Eigen::Index r = e + 1 == n ? 0 : e + 1;
    const double rate = E.dphi(e) / m.phi()(e) + E.dphi(r) / m.phi()(r);
    term += g.face(e) * rate * std::pow(f(e) - f(r), 2);
  }
  for (Eigen::Index i = 0; i < n; ++i)
    if (g.fiber_diag(i) > 0.0) term += g.fiber_diag(i) * 2.0 * E.dpsi(i) / m.psi()(i) * f(i) * f(i);
  c.h1_rhs_flipped = c.h1_rhs - 2.0 * g.area * term;
  return c;
}

}  // namespace

SpectralGrid spectral_grid(const WarpedMetric& m, int fiber_mode) { return assemble(m, nullptr, fiber_mode); }

SpectralGrid spectral_variation(const WarpedMetric& m, const TangentField& v, int fiber_mode) {
  if (v.dphi.size() != m.size() || v.dpsi.size() != m.size())
    throw Error(ErrorCode::ShapeMismatch, "tangent and metric grids differ");
  return assemble(m, &v, fiber_mode);
}

double fiber_eigenvalue(const WarpedMetric& m, int fiber_mode) {
  check_mode(fiber_mode);
  return fiber_mode == 0 ? 0.0 : m.fiber().mu1;
}

double gradient_norm_sq(const ScalarProfile& f, const WarpedMetric& m) {
  check_profile(f, m);
  const SpectralGrid g = spectral_grid(m, f.fiber_mode);
  const Vec v = masked(g, f.values);
  return quadratic(g, v, v);
}

double l2_norm_sq(const ScalarProfile& f, const WarpedMetric& m) {
  check_profile(f, m);
  const SpectralGrid g = spectral_grid(m, f.fiber_mode);
  const Vec v = masked(g, f.values);
  return weighted(g, v, v);
}

double integral(const ScalarProfile& f, const WarpedMetric& m) {
  check_profile(f, m);
  if (f.fiber_mode != 0) return 0.0;
  const SpectralGrid g = spectral_grid(m, 0);
  return g.area * g.cell.dot(f.values);
}

ScalarProfile laplace_apply(const ScalarProfile& f, const WarpedMetric& m) {
  check_profile(f, m);
  const SpectralGrid g = spectral_grid(m, f.fiber_mode);
  return {laplacian(g, masked(g, f.values)), f.fiber_mode};
}

double dirichlet_energy(const ScalarProfile& f, const WarpedMetric& m) {
  const double den = l2_norm_sq(f, m);
  if (!(den > 0.0)) throw Error(ErrorCode::ZeroFunction, "Rayleigh quotient of the zero function");
  return gradient_norm_sq(f, m) / den;
}

EigenReport lambda1_branch(const WarpedMetric& m, int k, const EigenOptions& opts) {
  const SpectralGrid g = spectral_grid(m, k);
  const Eigen::Index n = m.size();
  std::vector<Eigen::Index> index(static_cast<std::size_t>(n), -1);
  Eigen::Index dim = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (g.active[static_cast<std::size_t>(i)]) index[static_cast<std::size_t>(i)] = dim++;
  auto to_full = [&](const Vec& y) {
    Vec f = Vec::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
      if (index[static_cast<std::size_t>(i)] >= 0) f(i) = y(index[static_cast<std::size_t>(i)]);
    return f;
  };
  auto to_active = [&](const Vec& f) {
    Vec y(dim);
    for (Eigen::Index i = 0; i < n; ++i)
      if (index[static_cast<std::size_t>(i)] >= 0) y(index[static_cast<std::size_t>(i)]) = f(i);
    return y;
  };
  const double total = g.cell.sum();

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  const double L = arclength(m).L;
  solver.compute(stiffness_matrix(g, index, dim, -1e-3 * std::pow(kPi / L, 2)));
  if (solver.info() != Eigen::Success) throw Error(ErrorCode::ConvergenceFailure, "factorization failed");

  // block iteration with Rayleigh-Ritz so close pairs (cos / sin on circles) separate
  const Eigen::Index b = std::min<Eigen::Index>(4, k == 0 ? dim - 1 : dim);
  std::mt19937_64 rng(20240611);
  std::normal_distribution<double> nd;
  Mat X(n, b);
  for (Eigen::Index j = 0; j < b; ++j)
    for (Eigen::Index i = 0; i < n; ++i) X(i, j) = nd(rng);

  double res = 0.0;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    Mat Y(n, b), KY(n, b);
    for (Eigen::Index j = 0; j < b; ++j) {
      Vec y = to_full(solver.solve(to_active(g.cell.cwiseProduct(masked(g, X.col(j))))));
      if (k == 0) y.array() -= g.cell.dot(y) / total;
      y /= std::sqrt(weighted(g, y, y));
      Y.col(j) = y;
      KY.col(j) = apply_stiffness(g, y);
    }
    const Mat H = Y.transpose() * KY;
    const Mat G = Y.transpose() * g.cell.asDiagonal() * Y;
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> ritz(H, G);
    if (ritz.info() != Eigen::Success) throw Error(ErrorCode::ConvergenceFailure, "Rayleigh-Ritz failed");
    X = Y * ritz.eigenvectors();

    Vec f = X.col(0);
    f /= std::sqrt(weighted(g, f, f));
    const double lambda = quadratic(g, f, f);
    const Vec r = laplacian(g, f) + lambda * f;
    res = std::sqrt(weighted(g, r, r));
    if (res <= opts.tol) {
      if (f(n / 4) < 0.0) f = -f;
      return {lambda, k, {f, k}, it, res};
    }
  }
  throw Error(ErrorCode::ConvergenceFailure,
              "inverse iteration did not reach residual " + std::to_string(opts.tol) + " (at " + std::to_string(res) + ")");
}

EigenReport lambda1(const WarpedMetric& m, const EigenOptions& opts) {
  if (opts.fiber_modes.empty()) throw Error(ErrorCode::ValidationError, "no fiber modes requested");
  std::optional<EigenReport> best;
  for (int k : opts.fiber_modes) {
    EigenReport r = lambda1_branch(m, k, opts);
    if (!best || r.lambda1 < best->lambda1 * (1.0 - 1e-12)) best = std::move(r);
  }
  return *best;
}

double biharmonic_dtau(const WarpedMetric& m, int fiber_mode, double safety) {
  const SpectralGrid g = spectral_grid(m, fiber_mode);
  const Eigen::Index n = m.size();
  Vec row = g.fiber_diag;
  for (Eigen::Index e = 0; e < g.face.size(); ++e) {
    const Eigen::Index r = e + 1 == n ? 0 : e + 1;
    row(e) += 2.0 * g.face(e);
    row(r) += 2.0 * g.face(e);
  }
  double rho = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (g.active[static_cast<std::size_t>(i)]) rho = std::max(rho, row(i) / g.cell(i));
  return safety * 2.0 / (rho * rho);
}

ScalarProfile biharmonic_backstep(const ScalarProfile& f, const WarpedMetric& m, const TangentField& E, double dtau) {
  check_profile(f, m);
  return {backstep_impl(f.values, f.fiber_mode, m, E, dtau).f, f.fiber_mode};
}

EigenDecayReport run_backward(const FlowTrajectory& traj, const ScalarProfile& f_T, double sobolev_A,
                              const BackwardOptions& opts) {
  const auto& S = traj.samples;
  if (S.size() < 2) throw Error(ErrorCode::ShapeMismatch, "backward run needs at least two samples");
  for (const auto& s : S)
    if (s.velocity.dphi.size() != s.metric.size() || s.velocity.dpsi.size() != s.metric.size())
      throw Error(ErrorCode::MissingVelocity, "trajectory sample without dg/dt");
  check_profile(f_T, S.back().metric);
  const int k = f_T.fiber_mode;
  const double T = S.back().t - S.front().t;

  EigenDecayReport rep{};
  rep.sobolev_A = sobolev_A;
  const double mass_T = integral(f_T, S.back().metric);
  const SpectralGrid gT = spectral_grid(S.back().metric, k);
  const double l1_T = gT.area * gT.cell.dot(f_T.values.cwiseAbs());

  std::vector<double> targets;
  for (int j = 0; j < opts.identity_samples; ++j) targets.push_back(T * (j + 0.5) / opts.identity_samples);
  std::size_t next_target = 0;

  Vec f = f_T.values;
  double tau = 0.0;
  // identity windows: forward differences over several steps keep round-off
  // in ||f||^2 well below the per-step change
  bool open = false;
  int remaining = 0;
  double n2 = 0.0, h2 = 0.0, width = 0.0;
  IdentityCheck acc{};
  for (std::size_t idx = S.size() - 1; idx-- > 0;) {
    const WarpedMetric& left = S[idx].metric;
    const double span = S[idx + 1].t - S[idx].t;
    if (!(span > 0.0)) continue;
    WarpedMetric right = S[idx + 1].metric;
    if (S[idx + 1].regridded || right.size() != left.size()) {
      right = advance(left, S[idx].velocity, span);
      const double before = integral({f, k}, S[idx + 1].metric);
      f = masked(spectral_grid(right, k), transfer(f, S[idx + 1].metric, right));
      if (k == 0) {
        const SpectralGrid g = spectral_grid(right, 0);
        f.array() += (before / g.area - g.cell.dot(f)) / g.cell.sum();
      }
      open = false;
    }
    // (phi, psi) linear in t keeps the linear pole constraints exactly
    const TangentField E{(right.phi() - left.phi()) / span, (right.psi() - left.psi()) / span};

    const auto nsub = static_cast<std::size_t>(std::ceil(span / biharmonic_dtau(right, k, opts.dtau_safety) - 1e-9));
    const double h = span / static_cast<double>(std::max<std::size_t>(nsub, 1));
    WarpedMetric m = right;
    for (std::size_t j = 0; j < std::max<std::size_t>(nsub, 1); ++j) {
      if (++rep.steps > opts.max_steps) throw Error(ErrorCode::StepUnderflow, "backward step budget exhausted");
      if (!open && next_target < targets.size() && tau >= targets[next_target]) {
        open = true;
        remaining = opts.identity_window;
        acc = IdentityCheck{};
        acc.tau = tau;
        width = 0.0;
        n2 = l2_norm_sq({f, k}, m);
        h2 = gradient_norm_sq({f, k}, m);
      }
      if (open) {
        const IdentityCheck c = identity_rhs(f, k, m, E, tau);
        acc.l2_rhs += h * c.l2_rhs;
        acc.h1_rhs += h * c.h1_rhs;
        acc.h1_rhs_flipped += h * c.h1_rhs_flipped;
        width += h;
      }
      BackState next = backstep_impl(f, k, m, E, h);
      f = std::move(next.f);
      m = std::move(next.m);
      tau += h;
      if (open && --remaining == 0) {
        acc.l2_fd = (l2_norm_sq({f, k}, m) - n2) / width;
        acc.h1_fd = (gradient_norm_sq({f, k}, m) - h2) / width;
        acc.l2_rhs /= width;
        acc.h1_rhs /= width;
        acc.h1_rhs_flipped /= width;
        rep.identities.push_back(acc);
        open = false;
        while (next_target < targets.size() && targets[next_target] <= tau) ++next_target;
      }
    }
    // land exactly on the stored sample, keeping the density f dV
    const SpectralGrid ga = spectral_grid(m, k), gb = spectral_grid(left, k);
    f = masked(gb, ga.cell.cwiseProduct(f).cwiseQuotient(gb.cell));
  }

  const WarpedMetric& m0 = S.front().metric;
  rep.f0 = {f, k};
  rep.mass_drift = std::abs(integral(rep.f0, m0) - mass_T) / l1_T;
  rep.lambda_T = lambda1(S.back().metric).lambda1;
  rep.lambda_0_true = lambda1(m0).lambda1;
  rep.lambda_0_bound = dirichlet_energy(rep.f0, m0);
  rep.epsilon = energy(m0);
  rep.slack = rep.lambda_0_bound - 2.0 * rep.lambda_T;
  return rep;
}

}  // namespace l2flow
