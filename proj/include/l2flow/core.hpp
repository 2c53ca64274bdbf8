#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>

namespace l2flow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Error conditions surfaced by the library. Every throw site uses one of these
// codes so callers (the CLI in particular) can map failures to exit statuses.
enum class ErrorCode {
  NonPositiveDensity,
  BoundaryViolation,
  GridError,
  DegenerateFiber,
  SingularMass,
  StepUnderflow,
  StepSizeUnderflow,
  PastSingularTime,
  UnsupportedState,
  ShapeMismatch,
  ConvergenceFailure,
  ZeroFunction,
  MissingVelocity,
  ParseError,
  ValidationError,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Which pointwise |Rm|^2 the library reports. `Paper` is 4 K1^2 + 2 K2^2, the
// integrand of the reduced energy of a three-dimensional warped product.
// `Full` is the complete tensor norm sum R_ijkl^2 = 8 K1^2 + 4 K2^2.
enum class CurvatureNorm { Paper, Full };

std::string_view to_string(CurvatureNorm norm);
CurvatureNorm curvature_norm_from_string(std::string_view s);

inline double norm_factor(CurvatureNorm norm) { return norm == CurvatureNorm::Full ? 2.0 : 1.0; }

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace l2flow
