#include "instanton/path.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace instanton {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

void Path::validate(Eigen::Index min_length) const {
  if (states.cols() != times.size()) throw ShapeError("path has " + std::to_string(times.size()) + " times but " +
                                                      std::to_string(states.cols()) + " states");
  if (times.size() < min_length) throw ConfigError("path", "needs at least " + std::to_string(min_length) + " points");
  if (states.rows() < 1) throw ShapeError("path states have no coordinates");
  if (!times.allFinite() || !states.allFinite()) throw ConfigError("path", "non-finite entries");
  for (Eigen::Index j = 1; j < times.size(); ++j) {
    if (!(times(j) > times(j - 1))) throw ConfigError("path", "times must be strictly increasing");
  }
}

Vector Path::at(double t) const {
  if (size() == 0) throw ConfigError("path", "empty path");
  if (t <= times(0)) return states.col(0);
  if (t >= times(size() - 1)) return states.col(size() - 1);
  const auto* begin = times.data();
  const auto* hi = std::upper_bound(begin, begin + size(), t);
  const Eigen::Index j = hi - begin;
  const double s = (t - times(j - 1)) / (times(j) - times(j - 1));
  return (1.0 - s) * states.col(j - 1) + s * states.col(j);
}

Path Path::reversed() const {
  Path r;
  r.times = times;
  r.states = states.rowwise().reverse();
  return r;
}

Path straight_path(const Vector& a, const Vector& b, double horizon, Eigen::Index n) {
  if (a.size() != b.size()) throw ShapeError("end points differ in dimension");
  if (n < 2) throw ConfigError("N", "need at least two nodes");
  Path p;
  p.times = Vector::LinSpaced(n, 0.0, horizon);
  p.states.resize(a.size(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double s = static_cast<double>(j) / static_cast<double>(n - 1);
    p.states.col(j) = (1.0 - s) * a + s * b;
  }
  return p;
}

void write_path_csv(std::ostream& out, const Path& path) {
  out << 't';
  for (int i = 1; i <= path.dimension(); ++i) out << ",x" << i;
  out << '\n';
  char buf[32];
  for (Eigen::Index j = 0; j < path.size(); ++j) {
    std::snprintf(buf, sizeof buf, "%.17g", path.times(j));
    out << buf;
    for (int i = 0; i < path.dimension(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", path.states(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

void write_path_csv(const std::filesystem::path& file, const Path& path) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  write_path_csv(out, path);
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

Path read_path_csv(std::istream& in) {
  std::string line;
  int lineno = 0;
  if (!std::getline(in, line)) throw ParseError("empty path file", 1);
  ++lineno;
  const auto header = split(trim(line));
  if (header.size() < 2 || trim(header[0]) != "t") throw ParseError("header must be t,x1,...,xd", lineno);
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (trim(header[i]) != "x" + std::to_string(i)) throw ParseError("header must be t,x1,...,xd", lineno);
  }
  const std::size_t d = header.size() - 1;

  std::vector<double> times;
  std::vector<double> values;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != d + 1) {
      throw ParseError("expected " + std::to_string(d + 1) + " fields, found " + std::to_string(cells.size()), lineno);
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const std::string c = trim(cells[i]);
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (c.empty() || used != c.size() || !std::isfinite(v)) throw ParseError("bad number '" + c + "'", lineno);
      (i == 0 ? times : values).push_back(v);
    }
    if (times.size() > 1 && !(times.back() > times[times.size() - 2])) {
      throw ParseError("times must be strictly increasing", lineno);
    }
  }
  if (times.empty()) throw ParseError("no data rows", lineno);

  Path p;
  p.times = Eigen::Map<const Vector>(times.data(), static_cast<Eigen::Index>(times.size()));
  p.states = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(times.size()));
  return p;
}

Path read_path_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot read " + file.string());
  return read_path_csv(in);
}

double distance_to_curve(const Path& path, const Vector& p) {
  const Matrix& s = path.states;
  if (s.cols() == 0) throw ConfigError("path", "empty path");
  if (p.size() != s.rows()) throw ShapeError("point dimension differs from the path");
  double best = (s.col(0) - p).norm();
  for (Eigen::Index j = 1; j < s.cols(); ++j) {
    const Vector seg = s.col(j) - s.col(j - 1);
    const double len2 = seg.squaredNorm();
    double u = len2 > 0 ? (p - s.col(j - 1)).dot(seg) / len2 : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    best = std::min(best, (s.col(j - 1) + u * seg - p).norm());
  }
  return best;
}

double hausdorff_distance(const Path& a, const Path& b) {
  double h = 0;
  for (Eigen::Index j = 0; j < a.states.cols(); ++j) h = std::max(h, distance_to_curve(b, a.states.col(j)));
  for (Eigen::Index j = 0; j < b.states.cols(); ++j) h = std::max(h, distance_to_curve(a, b.states.col(j)));
  return h;
}

double arc_length(const Path& path) {
  double len = 0;
  for (Eigen::Index j = 1; j < path.states.cols(); ++j) len += (path.states.col(j) - path.states.col(j - 1)).norm();
  return len;
}

Matrix resample_arc_length(const Path& path, Eigen::Index n) {
  const Matrix& s = path.states;
  if (n < 2) throw ConfigError("n", "need at least two resampling points");
  if (s.cols() == 0) throw ConfigError("path", "empty path");
  Vector cum(s.cols());
  cum(0) = 0;
  for (Eigen::Index j = 1; j < s.cols(); ++j) cum(j) = cum(j - 1) + (s.col(j) - s.col(j - 1)).norm();
  const double total = cum(s.cols() - 1);
  Matrix out(s.rows(), n);
  if (total == 0) {
    out.colwise() = Vector(s.col(0));
    return out;
  }
  Eigen::Index seg = 1;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double target = total * static_cast<double>(k) / static_cast<double>(n - 1);
    while (seg < s.cols() - 1 && cum(seg) < target) ++seg;
    const double span = cum(seg) - cum(seg - 1);
    const double u = span > 0 ? std::clamp((target - cum(seg - 1)) / span, 0.0, 1.0) : 0.0;
    out.col(k) = (1.0 - u) * s.col(seg - 1) + u * s.col(seg);
  }
  return out;
}

double mean_resampled_distance(const Path& a, const Path& b, Eigen::Index n) {
  if (a.dimension() != b.dimension()) throw ShapeError("paths differ in dimension");
  const Matrix ra = resample_arc_length(a, n);
  const Matrix rb = resample_arc_length(b, n);
  return (ra - rb).colwise().norm().mean();
}

}  // namespace instanton
