#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace hftmfg {

/// One-sided evaluation at a trade time: Left returns the limit from below
/// (t_k-), Right the stored value at t_k.
enum class Side { Left, Right };

/// Uniform-per-segment time grid on [0, T] whose segments are separated by the
/// trade times. Segment s covers [b_s, b_{s+1}] with b_0 = 0, b_{K+1} = T, so
/// every t_k is an exact node and appears twice: as the last node of segment
/// k-1 (left limit) and the first node of segment k (right value).
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double T, std::span<const double> trade_times, int steps_per_unit_time);

  double T() const { return breaks_.back(); }
  int segments() const { return static_cast<int>(steps_.size()); }
  int trades() const { return segments() - 1; }
  int steps_per_unit_time() const { return steps_per_unit_; }

  double segment_start(int s) const { return breaks_[static_cast<std::size_t>(s)]; }
  double segment_end(int s) const { return breaks_[static_cast<std::size_t>(s) + 1]; }
  int steps(int s) const { return steps_[static_cast<std::size_t>(s)]; }
  double step(int s) const { return (segment_end(s) - segment_start(s)) / steps(s); }
  /// Node n of segment s; node steps(s) returns segment_end(s) exactly.
  double time(int s, int n) const;
  /// Trade time t_k for k = 1..K.
  double trade_time(int k) const { return breaks_[static_cast<std::size_t>(k)]; }

  /// Segment containing t for the requested side (t = 0 and t = T clamp).
  int segment_of(double t, Side side = Side::Right) const;

  /// Global index of node (s, n); total_nodes() counts doubled trade nodes twice.
  int node_index(int s, int n) const { return offsets_[static_cast<std::size_t>(s)] + n; }
  int total_nodes() const { return offsets_.back(); }
  int total_steps() const;

  bool operator==(const TimeGrid&) const = default;

 private:
  std::vector<double> breaks_;
  std::vector<int> steps_;
  std::vector<int> offsets_;
  int steps_per_unit_ = 0;
};

/// Vector-valued function of time sampled on a TimeGrid. Smooth within each
/// segment; at trade times both the left limit and the right value are kept.
/// When node derivatives are stored, evaluation between nodes is cubic
/// Hermite, otherwise linear.
class PiecewiseCurve {
 public:
  PiecewiseCurve() = default;
  PiecewiseCurve(TimeGrid grid, int dim, bool with_derivatives);

  const TimeGrid& grid() const { return grid_; }
  int dim() const { return dim_; }
  bool has_derivatives() const { return !derivatives_.empty(); }

  /// Column n of segment s holds the node value.
  Eigen::MatrixXd& values(int s) { return values_[static_cast<std::size_t>(s)]; }
  const Eigen::MatrixXd& values(int s) const { return values_[static_cast<std::size_t>(s)]; }
  Eigen::MatrixXd& derivatives(int s) { return derivatives_[static_cast<std::size_t>(s)]; }
  const Eigen::MatrixXd& derivatives(int s) const {
    return derivatives_[static_cast<std::size_t>(s)];
  }

  auto node(int s, int n) const { return values(s).col(n); }
  double node(int s, int n, int i) const { return values(s)(i, n); }

  Eigen::VectorXd eval(double t, Side side = Side::Right) const;
  double eval(double t, int i, Side side = Side::Right) const;
  /// Evaluation restricted to segment s (t is clamped into it). Used by
  /// integrators that must not see the other side of a jump.
  Eigen::VectorXd eval_in(int s, double t) const;

  /// Values at trade time k (1-based) from below and at t_k.
  Eigen::VectorXd left(int k) const;
  Eigen::VectorXd right(int k) const;
  Eigen::VectorXd front() const { return values_.front().col(0); }
  Eigen::VectorXd back() const { return values_.back().col(values_.back().cols() - 1); }

  /// Largest absolute node value over all components and segments.
  double max_abs() const;

 private:
  TimeGrid grid_;
  int dim_ = 0;
  std::vector<Eigen::MatrixXd> values_;
  std::vector<Eigen::MatrixXd> derivatives_;
};

/// Component-wise sup-norm distance between two curves on the same grid,
/// over every stored node (both sides of each trade time).
double sup_distance(const PiecewiseCurve& a, const PiecewiseCurve& b);

}  // namespace hftmfg
