#pragma once

#include "l2flow/reduced_ode.hpp"
#include "l2flow/spectral.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace l2flow {

/// 17 significant digits, NaN as `nan`, infinities as `inf` / `-inf`.
std::string format_number(double v);

/// Strict parse of a whole token as a double; throws ParseError.
double parse_number(const std::string& s);

/// `# key=value` lines. Every file the CLI writes starts with these.
void write_metadata(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& meta);

/// Snapshot: metadata lines for topology, fiber and options, then `x phi psi` rows.
void write_snapshot(std::ostream& out, const WarpedMetric& m);
/// Throws ParseError (with line number) or the from_profile errors.
WarpedMetric read_snapshot(std::istream& in);

/// t, one column per factor scale, riem_sq, ratio_p = B / A^p (sphere x
/// circle pairs only), collapse_scalar (one circle factor only), mode.
/// Columns that do not apply hold nan.
void write_ode_csv(std::ostream& out, const OdeTrajectory& traj, double ratio_exponent);

/// key=value lines; identity checks as identity_<i>_<field>.
void write_decay_report(std::ostream& out, const EigenDecayReport& r);

struct Series {
  std::string name;
  Vec y;
};

/// Self-contained SVG line chart of the series against x. Non-finite points
/// break the line.
void write_svg_chart(std::ostream& out, const std::string& title, const std::string& xlabel, const Vec& x,
                     const std::vector<Series>& series);

}  // namespace l2flow
