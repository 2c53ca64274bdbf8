#pragma once

#include "l2flow/geometry.hpp"

#include <cstdint>

namespace l2flow::presets {

/// Round unit S^3: phi = pi/2, psi = cos(pi x / 2), so psi(s) = sin s.
WarpedMetric round_s3(Eigen::Index n, const GeometryOptions& options = {});

/// Round unit S^3 in a non-arclength gauge: s(x) = pi/2 (1 + x) + a sin(pi x).
WarpedMetric round_s3_warped_gauge(Eigen::Index n, double a = 0.2, const GeometryOptions& options = {});

/// SO(3)-invariant dumbbell psi(s) = sin s (1 - d sin^2 s); the neck at s = pi/2 has radius 1 - d.
WarpedMetric dumbbell_s3(Eigen::Index n, double neck_depth = 0.5, const GeometryOptions& options = {});

/// Constant tube Sigma x S^1 with psi = radius and phi = 1 over one period.
WarpedMetric tube(Eigen::Index n, double radius, double period, const FiberSpec& fiber = FiberSpec::round_sphere(),
                  const GeometryOptions& options = {});

/// Tube with psi = radius (1 + amplitude cos(2 pi mode x / period)).
WarpedMetric perturbed_tube(Eigen::Index n, double radius, double amplitude, double period, int mode = 1,
                            const FiberSpec& fiber = FiberSpec::round_sphere(), const GeometryOptions& options = {});

/// Tube with a smooth neck of radius min_psi centred at x = period / 2.
WarpedMetric pinched_tube(Eigen::Index n, double min_psi, double period,
                          const FiberSpec& fiber = FiberSpec::round_sphere(), const GeometryOptions& options = {});

/// Smooth random circle product: a few low Fourier modes in both phi and psi.
WarpedMetric random_smooth_tube(Eigen::Index n, std::uint64_t seed, const GeometryOptions& options = {});

/// Smooth random SO(3)-invariant metric: random even lateral gauge and a smooth
/// odd perturbation of sin s that keeps the pole conditions.
WarpedMetric random_smooth_s3(Eigen::Index n, std::uint64_t seed, const GeometryOptions& options = {});

}  // namespace l2flow::presets
