#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "instanton/experiment.hpp"

namespace instanton::experiment {

namespace {

constexpr double kSize = 640;
constexpr double kMargin = 56;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kMargin + (x - x0) / (x1 - x0) * (kSize - 2 * kMargin); }
  double py(double y) const { return kSize - kMargin - (y - y0) / (y1 - y0) * (kSize - 2 * kMargin); }
};

std::string open_svg(const std::string& title, const std::string& extra = "") {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize << "\" viewBox=\"0 0 "
    << kSize << ' ' << kSize << "\" title=\"" << escape(title) << '"' << extra << ">\n"
    << "<title>" << escape(title) << "</title>\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) {
    s << "<text x=\"" << kSize / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << escape(title) << "</text>\n";
  }
  return s.str();
}

std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  std::ostringstream s;
  s << "<g class=\"axes\" font-family=\"sans-serif\" font-size=\"11\" stroke=\"none\">\n";
  s << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kSize - 2 * kMargin << "\" height=\""
    << kSize - 2 * kMargin << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double x = f.x0 + (f.x1 - f.x0) * i / 4;
    const double y = f.y0 + (f.y1 - f.y0) * i / 4;
    s << "<text x=\"" << f.px(x) << "\" y=\"" << kSize - kMargin + 16 << "\" text-anchor=\"middle\">" << num(x)
      << "</text>\n";
    s << "<text x=\"" << kMargin - 6 << "\" y=\"" << f.py(y) + 4 << "\" text-anchor=\"end\">" << num(y) << "</text>\n";
  }
  s << "<text x=\"" << kSize / 2 << "\" y=\"" << kSize - 12 << "\" text-anchor=\"middle\">" << escape(xlabel)
    << "</text>\n";
  s << "<text x=\"14\" y=\"" << kSize / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " << kSize / 2
    << ")\">" << escape(ylabel) << "</text>\n";
  s << "</g>\n";
  return s.str();
}

std::string polyline(const Frame& f, const Eigen::Ref<const Vector>& xs, const Eigen::Ref<const Vector>& ys,
                     const std::string& style) {
  std::ostringstream s;
  s << "<polyline fill=\"none\" " << style << " points=\"";
  for (Eigen::Index i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs(i)) || !std::isfinite(ys(i))) continue;
    s << num(f.px(xs(i))) << ',' << num(f.py(ys(i))) << ' ';
  }
  s << "\"/>\n";
  return s.str();
}

std::string legend(const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ostringstream s;
  s << "<g class=\"legend\" font-family=\"sans-serif\" font-size=\"12\">\n";
  double y = kMargin + 16;
  for (const auto& [label, colour] : entries) {
    s << "<g class=\"legend-entry\"><line x1=\"" << kSize - kMargin - 150 << "\" y1=\"" << y << "\" x2=\""
      << kSize - kMargin - 126 << "\" y2=\"" << y << "\" stroke=\"" << colour << "\" stroke-width=\"2.5\"/><text x=\""
      << kSize - kMargin - 120 << "\" y=\"" << y + 4 << "\">" << escape(label) << "</text></g>\n";
    y += 18;
  }
  s << "</g>\n";
  return s.str();
}

// Five-stop approximation of viridis.
std::string colour_map(double u) {
  static const double stops[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  u = std::clamp(std::isfinite(u) ? u : 0.0, 0.0, 1.0) * 4;
  const int k = std::min(3, static_cast<int>(u));
  const double w = u - k;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(stops[k][0] + w * (stops[k + 1][0] - stops[k][0])),
                static_cast<int>(stops[k][1] + w * (stops[k + 1][1] - stops[k][1])),
                static_cast<int>(stops[k][2] + w * (stops[k + 1][2] - stops[k][2])));
  return buf;
}

}  // namespace

std::vector<Path> streamlines(const DriftField& drift) {
  if (drift.dimension() != 2) throw ConfigError("drift", "streamlines need a planar drift");
  std::vector<Path> out;
  const double h = 0.01;
  const int steps = 400;
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 12; ++j) {
      Vector x(2);
      x << -2 + 4 * (i + 0.5) / 12, -2 + 4 * (j + 0.5) / 12;
      Path p;
      std::vector<Vector> pts{x};
      for (int k = 0; k < steps; ++k) {
        const Vector k1 = drift(x);
        const Vector k2 = drift(x + 0.5 * h * k1);
        const Vector k3 = drift(x + 0.5 * h * k2);
        const Vector k4 = drift(x + h * k3);
        x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 3) break;
        pts.push_back(x);
      }
      p.times = Vector::LinSpaced(static_cast<Eigen::Index>(pts.size()), 0, h * static_cast<double>(pts.size() - 1));
      p.states.resize(2, static_cast<Eigen::Index>(pts.size()));
      for (std::size_t k = 0; k < pts.size(); ++k) p.states.col(static_cast<Eigen::Index>(k)) = pts[k];
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::string paths_svg(const std::vector<LabeledPath>& paths, const DriftField* drift, const std::string& title) {
  if (paths.empty()) throw ConfigError("paths", "need at least one path");
  for (const auto& p : paths) {
    if (p.path.dimension() != 2) throw ConfigError("paths", "only planar paths can be drawn");
  }
  Frame f{-2, 2, -2, 2};
  if (!drift) {
    double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
    for (const auto& p : paths) {
      lo_x = std::min(lo_x, p.path.states.row(0).minCoeff());
      hi_x = std::max(hi_x, p.path.states.row(0).maxCoeff());
      lo_y = std::min(lo_y, p.path.states.row(1).minCoeff());
      hi_y = std::max(hi_y, p.path.states.row(1).maxCoeff());
    }
    const double span = std::max({hi_x - lo_x, hi_y - lo_y, 1e-6}) * 0.55;
    const double cx = 0.5 * (lo_x + hi_x), cy = 0.5 * (lo_y + hi_y);
    f = {cx - span, cx + span, cy - span, cy + span};
  }
  std::ostringstream s;
  s << open_svg(title) << axes(f, "x", "y");
  s << "<defs><clipPath id=\"plot\"><rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\""
    << kSize - 2 * kMargin << "\" height=\"" << kSize - 2 * kMargin << "\"/></clipPath></defs>\n";
  s << "<g clip-path=\"url(#plot)\">\n";
  if (drift) {
    s << "<g class=\"streamlines\">\n";
    for (const auto& line : streamlines(*drift)) {
      s << polyline(f, line.states.row(0).transpose(), line.states.row(1).transpose(),
                    "stroke=\"#b0b0b0\" stroke-width=\"0.8\"");
    }
    s << "</g>\n";
  }
  std::vector<std::pair<std::string, std::string>> entries;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const std::string colour = kPalette[i % std::size(kPalette)];
    s << polyline(f, paths[i].path.states.row(0).transpose(), paths[i].path.states.row(1).transpose(),
                  "class=\"path\" stroke=\"" + colour + "\" stroke-width=\"2.5\"");
    entries.emplace_back(paths[i].label, colour);
  }
  s << "</g>\n" << legend(entries) << "</svg>\n";
  return s.str();
}

std::string heatmap_svg(const Matrix& values, double half_width, const std::string& title) {
  if (values.size() == 0) throw ConfigError("values", "empty heat map");
  const Eigen::Index n = std::max(values.rows(), values.cols());
  const Eigen::Index factor = (n + 100) / 101;
  const Eigen::Index rows = (values.rows() + factor - 1) / factor;
  const Eigen::Index cols = (values.cols() + factor - 1) / factor;
  Matrix cells = Matrix::Constant(rows, cols, -std::numeric_limits<double>::infinity());
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      cells(r / factor, c / factor) = std::max(cells(r / factor, c / factor), values(r, c));
    }
  }
  const double top = cells.maxCoeff();
  const double bottom = cells.minCoeff();
  char peak[64];
  std::snprintf(peak, sizeof peak, "%.6e", top);
  const std::string full = (title.empty() ? std::string() : title + "; ") + "max cell value " + peak;

  const Frame f{-half_width, half_width, -half_width, half_width};
  std::ostringstream s;
  s << open_svg(full, std::string(" data-max-value=\"") + peak + "\" data-cells=\"" + std::to_string(rows) + "x" +
                          std::to_string(cols) + "\"");
  s << axes(f, "z1", "z2");
  const double w = (kSize - 2 * kMargin) / static_cast<double>(cols);
  const double h = (kSize - 2 * kMargin) / static_cast<double>(rows);
  s << "<g class=\"cells\" shape-rendering=\"crispEdges\">\n";
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double u = top > bottom ? (cells(r, c) - bottom) / (top - bottom) : 0.0;
      s << "<rect x=\"" << num(kMargin + c * w) << "\" y=\"" << num(kSize - kMargin - (r + 1) * h) << "\" width=\""
        << num(w + 0.05) << "\" height=\"" << num(h + 0.05) << "\" fill=\"" << colour_map(u) << "\"/>\n";
    }
  }
  s << "</g>\n</svg>\n";
  return s.str();
}

std::string history_svg(const std::vector<TrainRecord>& history, const std::string& title) {
  if (history.empty()) throw ConfigError("history", "empty training history");
  const auto n = static_cast<Eigen::Index>(history.size());
  Vector it(n);
  Matrix logs(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = history[static_cast<std::size_t>(i)];
    it(i) = static_cast<double>(r.iteration);
    const double v[3] = {r.loss_phi, r.loss_g, r.total};
    for (int k = 0; k < 3; ++k) logs(k, i) = v[k] > 0 ? std::log10(v[k]) : std::numeric_limits<double>::quiet_NaN();
  }
  double lo = 1e300, hi = -1e300;
  for (Eigen::Index i = 0; i < logs.size(); ++i) {
    if (std::isfinite(logs.data()[i])) {
      lo = std::min(lo, logs.data()[i]);
      hi = std::max(hi, logs.data()[i]);
    }
  }
  if (lo > hi) lo = -1, hi = 1;
  if (hi - lo < 1e-9) hi = lo + 1;
  const Frame f{it(0), std::max(it(n - 1), it(0) + 1), std::floor(lo), std::ceil(hi)};
  std::ostringstream s;
  s << open_svg(title) << axes(f, "iteration", "log10 loss");
  const char* names[3] = {"loss_phi", "loss_g", "total"};
  std::vector<std::pair<std::string, std::string>> entries;
  for (int k = 0; k < 3; ++k) {
    s << polyline(f, it, logs.row(k).transpose(), std::string("stroke=\"") + kPalette[k] + "\" stroke-width=\"1.5\"");
    entries.emplace_back(names[k], kPalette[k]);
  }
  s << legend(entries) << "</svg>\n";
  return s.str();
}

std::string rate_table_svg(const std::vector<std::pair<double, double>>& rates, const std::string& title) {
  if (rates.empty()) throw ConfigError("rates", "empty rate table");
  const auto n = static_cast<Eigen::Index>(rates.size());
  Vector t(n), r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    t(i) = rates[static_cast<std::size_t>(i)].first;
    r(i) = rates[static_cast<std::size_t>(i)].second;
  }
  const double pad = std::max(1e-12, 0.1 * (r.maxCoeff() - r.minCoeff()));
  const Frame f{0, t.maxCoeff() * 1.05, std::min(0.0, r.minCoeff() - pad), r.maxCoeff() + pad};
  std::ostringstream s;
  s << open_svg(title) << axes(f, "T", "rate");
  s << polyline(f, t, r, std::string("stroke=\"") + kPalette[0] + "\" stroke-width=\"2\"");
  for (Eigen::Index i = 0; i < n; ++i) {
    s << "<circle cx=\"" << num(f.px(t(i))) << "\" cy=\"" << num(f.py(r(i))) << "\" r=\"4\" fill=\"" << kPalette[0]
      << "\"/>\n";
  }
  s << "</svg>\n";
  return s.str();
}

Matrix running_cost_density(const ad::FeedForwardNet& g, const levy::QuadratureGrid& grid, double t, double horizon) {
  if (grid.dimension() != 2) throw ConfigError("dimension", "heat maps need a planar jump grid");
  const Eigen::Index k = grid.size();
  Matrix in(3, k);
  in.row(0).setConstant(t / horizon);
  in.bottomRows(2) = grid.nodes();
  const Matrix values = g.forward(in);
  const Eigen::Index n = grid.points_per_axis();
  Matrix out(n, n);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double v = values(0, j);
    if (!(v > 0)) throw AdmissibilityError("control field is not strictly positive");
    out(j / n, j % n) = std::max(0.0, v * std::log(v) - v + 1) * grid.spec().density(grid.nodes().col(j));
  }
  return out;
}

}  // namespace instanton::experiment
