#include "l2flow/core.hpp"

namespace l2flow {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveDensity: return "NonPositiveDensity";
    case ErrorCode::BoundaryViolation: return "BoundaryViolation";
    case ErrorCode::GridError: return "GridError";
    case ErrorCode::DegenerateFiber: return "DegenerateFiber";
    case ErrorCode::SingularMass: return "SingularMass";
    case ErrorCode::StepUnderflow: return "StepUnderflow";
    case ErrorCode::StepSizeUnderflow: return "StepSizeUnderflow";
    case ErrorCode::PastSingularTime: return "PastSingularTime";
    case ErrorCode::UnsupportedState: return "UnsupportedState";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::ConvergenceFailure: return "ConvergenceFailure";
    case ErrorCode::ZeroFunction: return "ZeroFunction";
    case ErrorCode::MissingVelocity: return "MissingVelocity";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::string_view to_string(CurvatureNorm norm) {
  return norm == CurvatureNorm::Full ? "full" : "paper";
}

CurvatureNorm curvature_norm_from_string(std::string_view s) {
  if (s == "paper") return CurvatureNorm::Paper;
  if (s == "full") return CurvatureNorm::Full;
  throw Error(ErrorCode::ValidationError, "curvature_norm must be 'paper' or 'full', got '" + std::string(s) + "'");
}

}  // namespace l2flow
