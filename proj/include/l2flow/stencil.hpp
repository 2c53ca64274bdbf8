#pragma once

// Finite-difference kernels shared by the energy, its gradient and the
// curvature profile. The kernels are templated on the scalar so the gradient
// can run them with forward-mode autodiff over the local stencil.

#include "l2flow/geometry.hpp"

#include <array>
#include <cmath>

namespace l2flow::stencil {

inline constexpr int kPsiWidth = 5;  // psi_{i-2} .. psi_{i+2}
inline constexpr int kPhiWidth = 3;  // phi_{i-1} .. phi_{i+1}

/// Node reached from node i by offset o, including reflection through the
/// poles of S^3 (psi odd, phi even) and wrap-around on circles.
struct NodeRef {
  Eigen::Index node;
  double psi_sign;
};

inline NodeRef neighbour(const WarpedMetric& m, Eigen::Index i, int o) {
  const Eigen::Index n = m.size();
  Eigen::Index j = i + o;
  if (m.periodic()) {
    j %= n;
    if (j < 0) j += n;
    return {j, 1.0};
  }
  if (j < 0) return {-j, -1.0};
  if (j > n - 1) return {2 * (n - 1) - j, -1.0};
  return {j, 1.0};
}

template <typename Scalar>
struct NodeValues {
  Scalar psi;
  Scalar psi_s;
  Scalar psi_ss;
};

/// Arclength derivatives at the centre node: psi_x is fourth order, psi_xx and
/// phi_x second order; psi_s = psi_x / phi and psi_ss = (psi_xx - phi_x psi_s) / phi^2.
template <typename Scalar>
NodeValues<Scalar> derivatives(const std::array<Scalar, kPsiWidth>& psi,
                               const std::array<Scalar, kPhiWidth>& phi, double dx) {
  const Scalar psi_x = (-psi[4] + 8.0 * psi[3] - 8.0 * psi[1] + psi[0]) / (12.0 * dx);
  const Scalar psi_xx = (psi[3] - 2.0 * psi[2] + psi[1]) / (dx * dx);
  const Scalar phi_x = (phi[2] - phi[0]) / (2.0 * dx);
  const Scalar psi_s = psi_x / phi[1];
  const Scalar psi_ss = (psi_xx - phi_x * psi_s) / (phi[1] * phi[1]);
  return {psi[2], psi_s, psi_ss};
}

/// 4 psi_ss^2 + 2 (K_Sigma - psi_s^2)^2 / psi^2, i.e. psi^2 (4 K1^2 + 2 K2^2).
template <typename Scalar>
Scalar reduced_integrand(const NodeValues<Scalar>& v, double k_sigma) {
  const Scalar fiber = k_sigma - v.psi_s * v.psi_s;
  return 4.0 * v.psi_ss * v.psi_ss + 2.0 * fiber * fiber / (v.psi * v.psi);
}

/// Energy carried by one node per unit quadrature weight: phi_i * integrand.
template <typename Scalar>
Scalar node_energy_density(const std::array<Scalar, kPsiWidth>& psi,
                           const std::array<Scalar, kPhiWidth>& phi, double dx, double k_sigma) {
  return phi[1] * reduced_integrand(derivatives(psi, phi, dx), k_sigma);
}

template <typename Scalar = double>
void gather(const WarpedMetric& m, Eigen::Index i, std::array<Scalar, kPsiWidth>& psi,
            std::array<Scalar, kPhiWidth>& phi) {
  for (int o = -2; o <= 2; ++o) {
    const NodeRef r = neighbour(m, i, o);
    psi[o + 2] = Scalar(r.psi_sign * m.psi()(r.node));
  }
  for (int o = -1; o <= 1; ++o) {
    const NodeRef r = neighbour(m, i, o);
    phi[o + 1] = Scalar(m.phi()(r.node));
  }
}

}  // namespace l2flow::stencil
