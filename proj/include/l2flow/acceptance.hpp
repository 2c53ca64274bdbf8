#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace l2flow {

struct CriterionResult {
  int id = 0;
  std::string suite;
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  double budget = 0.0;  // wall-clock limit in seconds, part of the pass condition
  std::vector<std::pair<std::string, double>> measured;
  std::string note;
};

/// Criterion ids of a suite: geometry, ode, flow, spectral or all.
/// ValidationError for anything else.
std::vector<int> suite_criteria(std::string_view suite);

/// Runs one criterion (1..11). Library errors inside a criterion become a
/// failure with the message in `note`; they never propagate.
CriterionResult run_criterion(int id);

/// `PASS  3 geometry  round S^3 oracles  0.12s  vol_err=... note`
std::string format_result(const CriterionResult& r);

}  // namespace l2flow
