#include "l2flow/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace l2flow {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_number(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, "not a number: '" + s + "'");
  }
  if (used != s.size()) throw Error(ErrorCode::ParseError, "trailing characters in number '" + s + "'");
  return v;
}

void write_metadata(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& meta) {
  for (const auto& [k, v] : meta) out << "# " << k << '=' << v << '\n';
}

void write_snapshot(std::ostream& out, const WarpedMetric& m) {
  const auto& f = m.fiber();
  const auto& o = m.options();
  write_metadata(out, {{"topology", std::string(to_string(m.topology()))},
                       {"k_sigma", std::to_string(f.k_sigma)},
                       {"fiber_area", format_number(f.area)},
                       {"fiber_mu1", format_number(f.mu1)},
                       {"fiber_inj_scale", format_number(f.inj_scale)},
                       {"curvature_norm", std::string(to_string(o.norm))},
                       {"quadrature", std::string(to_string(o.quadrature))},
                       {"period", format_number(m.span())}});
  out << "x phi psi\n";
  for (Eigen::Index i = 0; i < m.size(); ++i)
    out << format_number(m.x()(i)) << ' ' << format_number(m.phi()(i)) << ' ' << format_number(m.psi()(i)) << '\n';
}

WarpedMetric read_snapshot(std::istream& in) {
  std::map<std::string, std::string> meta;
  std::vector<double> x, phi, psi;
  std::string line;
  int lineno = 0;
  bool header = false;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::ParseError, "snapshot line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      std::string key = line.substr(1, eq - 1);
      key.erase(0, key.find_first_not_of(' '));
      meta[key] = line.substr(eq + 1);
      continue;
    }
    if (!header) {
      if (line != "x phi psi") fail("expected the header 'x phi psi'");
      header = true;
      continue;
    }
    std::istringstream row(line);
    std::string a, b, c, extra;
    if (!(row >> a >> b >> c) || (row >> extra)) fail("expected three columns");
    try {
      x.push_back(parse_number(a));
      phi.push_back(parse_number(b));
      psi.push_back(parse_number(c));
    } catch (const Error& e) {
      fail(e.what());
    }
  }
  if (!meta.count("topology")) throw Error(ErrorCode::ParseError, "snapshot has no topology line");
  FiberSpec fiber;
  GeometryOptions opts;
  const Topology top = topology_from_string(meta["topology"]);
  if (meta.count("k_sigma")) fiber.k_sigma = static_cast<int>(parse_number(meta["k_sigma"]));
  if (meta.count("fiber_area")) fiber.area = parse_number(meta["fiber_area"]);
  if (meta.count("fiber_mu1")) fiber.mu1 = parse_number(meta["fiber_mu1"]);
  if (meta.count("fiber_inj_scale")) fiber.inj_scale = parse_number(meta["fiber_inj_scale"]);
  if (meta.count("curvature_norm")) opts.norm = curvature_norm_from_string(meta["curvature_norm"]);
  if (meta.count("quadrature")) opts.quadrature = quadrature_from_string(meta["quadrature"]);
  fiber.validate();
  auto vec = [](const std::vector<double>& v) { return Vec(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()))); };
  return from_profile(top, fiber, vec(x), vec(phi), vec(psi), opts);
}

void write_ode_csv(std::ostream& out, const OdeTrajectory& traj, double ratio_exponent) {
  const auto& shape = traj.shape;
  const bool pair = shape.size() == 2 && shape[0].curv == FactorCurvature::Sphere &&
                    shape[1].curv == FactorCurvature::Flat && shape[1].dim == 1;
  const std::string mode(to_string(traj.mode));
  out << 't';
  for (std::size_t j = 0; j < shape.size(); ++j) out << ",scale_" << j;
  out << ",riem_sq,ratio_p,collapse_scalar,mode\n";
  Vec cs = Vec::Constant(static_cast<Eigen::Index>(traj.samples.size()), std::numeric_limits<double>::quiet_NaN());
  try {
    cs = collapse_scalar(traj);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ShapeMismatch) throw;
  }
  for (std::size_t i = 0; i < traj.samples.size(); ++i) {
    const auto& s = traj.samples[i];
    out << format_number(s.t);
    for (Eigen::Index j = 0; j < s.scales.size(); ++j) out << ',' << format_number(s.scales(j));
    const double ratio = pair ? s.scales(1) / std::pow(s.scales(0), ratio_exponent) : std::nan("");
    out << ',' << format_number(s.riem_sq) << ',' << format_number(ratio) << ','
        << format_number(cs(static_cast<Eigen::Index>(i))) << ',' << mode << '\n';
  }
}

void write_decay_report(std::ostream& out, const EigenDecayReport& r) {
  out << "lambda_T=" << format_number(r.lambda_T) << '\n'
      << "lambda_0_bound=" << format_number(r.lambda_0_bound) << '\n'
      << "lambda_0_true=" << format_number(r.lambda_0_true) << '\n'
      << "mass_drift=" << format_number(r.mass_drift) << '\n'
      << "sobolev_A=" << format_number(r.sobolev_A) << '\n'
      << "epsilon=" << format_number(r.epsilon) << '\n'
      << "slack=" << format_number(r.slack) << '\n'
      << "steps=" << r.steps << '\n';
  for (std::size_t i = 0; i < r.identities.size(); ++i) {
    const auto& c = r.identities[i];
    const std::string p = "identity_" + std::to_string(i) + "_";
    out << p << "tau=" << format_number(c.tau) << '\n'
        << p << "l2_fd=" << format_number(c.l2_fd) << '\n'
        << p << "l2_rhs=" << format_number(c.l2_rhs) << '\n'
        << p << "h1_fd=" << format_number(c.h1_fd) << '\n'
        << p << "h1_rhs=" << format_number(c.h1_rhs) << '\n';
  }
}

namespace {

std::string escape_xml(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

void write_svg_chart(std::ostream& out, const std::string& title, const std::string& xlabel, const Vec& x,
                     const std::vector<Series>& series) {
  constexpr double W = 720, H = 440, left = 80, right = 160, top = 40, bottom = 60;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};

  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x(i))) continue;
    x0 = std::min(x0, x(i));
    x1 = std::max(x1, x(i));
    for (const auto& s : series)
      if (i < s.y.size() && std::isfinite(s.y(i))) {
        y0 = std::min(y0, s.y(i));
        y1 = std::max(y1, s.y(i));
      }
  }
  if (!(x1 >= x0)) x0 = 0, x1 = 1;
  if (!(y1 >= y0)) y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) {
    y0 -= 0.5 * std::max(1.0, std::abs(y0));
    y1 = 2 * y1 - y0;
  }
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double v) { return left + pw * (v - x0) / (x1 - x0); };
  auto py = [&](double v) { return top + ph * (1.0 - (v - y0) / (y1 - y0)); };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << escape_xml(title)
      << "</text>\n"
      << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    out << "<text x=\"" << px(xv) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << tick(xv)
        << "</text>\n"
        << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << tick(yv) << "</text>\n"
        << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << py(yv) << "\" y2=\"" << py(yv)
        << "\" stroke=\"#ddd\"/>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 16 << "\" text-anchor=\"middle\">" << escape_xml(xlabel)
      << "</text>\n";

  for (std::size_t j = 0; j < series.size(); ++j) {
    const char* color = colors[j % std::size(colors)];
    std::string pts;
    auto flush = [&] {
      if (!pts.empty())
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
      pts.clear();
    };
    const auto& y = series[j].y;
    for (Eigen::Index i = 0; i < std::min(x.size(), y.size()); ++i) {
      if (!std::isfinite(x(i)) || !std::isfinite(y(i))) {
        flush();
        continue;
      }
      pts += tick(px(x(i))) + "," + tick(py(y(i))) + " ";
    }
    flush();
    const double ly = top + 14 + 18 * static_cast<double>(j);
    out << "<line x1=\"" << left + pw + 12 << "\" x2=\"" << left + pw + 32 << "\" y1=\"" << ly - 4 << "\" y2=\""
        << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly << "\">" << escape_xml(series[j].name) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace l2flow
