#include "l2flow/presets.hpp"

#include <cmath>
#include <random>

namespace l2flow::presets {

WarpedMetric round_s3(Eigen::Index n, const GeometryOptions& options) {
  Vec x = uniform_grid(Topology::SphereSO3, n);
  Vec phi = Vec::Constant(n, 0.5 * kPi);
  Vec psi = (0.5 * kPi * x.array()).cos();
  psi(0) = psi(n - 1) = 0.0;
  return from_profile(Topology::SphereSO3, FiberSpec::round_sphere(), std::move(x), std::move(phi), std::move(psi),
                      options);
}

WarpedMetric round_s3_warped_gauge(Eigen::Index n, double a, const GeometryOptions& options) {
  Vec x = uniform_grid(Topology::SphereSO3, n);
  Vec phi(n), psi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = 0.5 * kPi * (1.0 + x(i)) + a * std::sin(kPi * x(i));
    phi(i) = 0.5 * kPi + a * kPi * std::cos(kPi * x(i));
    psi(i) = std::sin(s);
  }
  psi(0) = psi(n - 1) = 0.0;
  return from_profile(Topology::SphereSO3, FiberSpec::round_sphere(), std::move(x), std::move(phi), std::move(psi),
                      options);
}

WarpedMetric dumbbell_s3(Eigen::Index n, double neck_depth, const GeometryOptions& options) {
  Vec x = uniform_grid(Topology::SphereSO3, n);
  Vec phi = Vec::Constant(n, 0.5 * kPi);
  Vec psi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sn = std::sin(0.5 * kPi * (1.0 + x(i)));
    psi(i) = sn * (1.0 - neck_depth * sn * sn);
  }
  psi(0) = psi(n - 1) = 0.0;
  return from_profile(Topology::SphereSO3, FiberSpec::round_sphere(), std::move(x), std::move(phi), std::move(psi),
                      options);
}

WarpedMetric tube(Eigen::Index n, double radius, double period, const FiberSpec& fiber,
                  const GeometryOptions& options) {
  return from_profile(Topology::CircleProduct, fiber, uniform_grid(Topology::CircleProduct, n, period),
                      Vec::Ones(n), Vec::Constant(n, radius), options);
}

WarpedMetric perturbed_tube(Eigen::Index n, double radius, double amplitude, double period, int mode,
                            const FiberSpec& fiber, const GeometryOptions& options) {
  Vec x = uniform_grid(Topology::CircleProduct, n, period);
  Vec psi = radius * (1.0 + amplitude * (2.0 * kPi * mode / period * x.array()).cos());
  return from_profile(Topology::CircleProduct, fiber, std::move(x), Vec::Ones(n), std::move(psi), options);
}

WarpedMetric pinched_tube(Eigen::Index n, double min_psi, double period, const FiberSpec& fiber,
                          const GeometryOptions& options) {
  Vec x = uniform_grid(Topology::CircleProduct, n, period);
  Vec psi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double bump = std::pow(0.5 * (1.0 - std::cos(2.0 * kPi * x(i) / period)), 4);
    psi(i) = 1.0 - (1.0 - min_psi) * bump;
  }
  return from_profile(Topology::CircleProduct, fiber, std::move(x), Vec::Ones(n), std::move(psi), options);
}

WarpedMetric random_smooth_tube(Eigen::Index n, std::uint64_t seed, const GeometryOptions& options) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  const double period = 2.0 * kPi;
  Vec x = uniform_grid(Topology::CircleProduct, n, period);
  Vec phi = Vec::Ones(n);
  Vec psi = Vec::Constant(n, 1.5);
  for (int k = 1; k <= 3; ++k) {
    const double a = 0.08 * coef(rng) / k, b = 0.08 * coef(rng) / k;
    const double c = 0.15 * coef(rng) / k, d = 0.15 * coef(rng) / k;
    phi.array() += a * (k * x.array()).cos() + b * (k * x.array()).sin();
    psi.array() += c * (k * x.array()).cos() + d * (k * x.array()).sin();
  }
  return from_profile(Topology::CircleProduct, FiberSpec::round_sphere(), std::move(x), std::move(phi),
                      std::move(psi), options);
}

WarpedMetric random_smooth_s3(Eigen::Index n, std::uint64_t seed, const GeometryOptions& options) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coef(-1.0, 1.0);
  const double b = 0.15 * coef(rng), c = 0.08 * coef(rng);
  const double a1 = 0.2 * coef(rng), a2 = 0.1 * coef(rng);
  Vec x = uniform_grid(Topology::SphereSO3, n);
  Vec phi(n), psi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xi = x(i);
    const double s = 0.5 * kPi * (1.0 + xi) + b * std::sin(kPi * xi) + c * std::sin(2.0 * kPi * xi);
    phi(i) = 0.5 * kPi + b * kPi * std::cos(kPi * xi) + 2.0 * c * kPi * std::cos(2.0 * kPi * xi);
    const double s1 = std::sin(s), s2 = std::sin(2.0 * s);
    psi(i) = s1 * (1.0 + a1 * s1 * s1 + a2 * s2 * s2);
  }
  psi(0) = psi(n - 1) = 0.0;
  return from_profile(Topology::SphereSO3, FiberSpec::round_sphere(), std::move(x), std::move(phi), std::move(psi),
                      options);
}

}  // namespace l2flow::presets
