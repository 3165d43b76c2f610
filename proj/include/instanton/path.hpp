#pragma once

// Time-indexed state sequences and the shared path CSV format
// (header t,x1,...,xd; one row per time).

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <string>

#include "instanton/errors.hpp"

namespace instanton {

struct Path {
  /// Strictly increasing.
  Eigen::VectorXd times;
  /// d x n, column j is the state at times(j).
  Eigen::MatrixXd states;

  Eigen::Index size() const noexcept { return times.size(); }
  int dimension() const noexcept { return static_cast<int>(states.rows()); }
  Eigen::VectorXd state(Eigen::Index j) const { return states.col(j); }

  /// Throws ShapeError/ConfigError on mismatched sizes, non-monotone times or
  /// non-finite states. `min_length` defaults to the collocation minimum of 2.
  void validate(Eigen::Index min_length = 2) const;

  /// Linear interpolation in time, clamped at both ends.
  Eigen::VectorXd at(double t) const;
  /// Same path traversed backwards over the same time grid.
  Path reversed() const;
};

/// Uniform time grid on [0, T] with n nodes and the straight segment a -> b.
Path straight_path(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double horizon, Eigen::Index n);

void write_path_csv(std::ostream& out, const Path& path);
void write_path_csv(const std::filesystem::path& file, const Path& path);
/// Throws ParseError carrying the 1-based line number of the first bad row.
Path read_path_csv(std::istream& in);
Path read_path_csv(const std::filesystem::path& file);

// ---- geometry of the traced curve ------------------------------------------

/// Distance from p to the polyline through the path states.
double distance_to_curve(const Path& path, const Eigen::VectorXd& p);
/// Symmetric Hausdorff distance between the two state polylines.
double hausdorff_distance(const Path& a, const Path& b);
/// n points equally spaced in arc length along the state polyline.
Eigen::MatrixXd resample_arc_length(const Path& path, Eigen::Index n);
/// Mean pointwise distance after resampling both curves to n points.
double mean_resampled_distance(const Path& a, const Path& b, Eigen::Index n = 200);
double arc_length(const Path& path);

}  // namespace instanton
