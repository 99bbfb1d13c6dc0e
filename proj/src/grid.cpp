#include "hftmfg/grid.hpp"

#include <algorithm>
#include <cmath>

#include "hftmfg/errors.hpp"

namespace hftmfg {

TimeGrid::TimeGrid(double T, std::span<const double> trade_times, int steps_per_unit_time)
    : steps_per_unit_(steps_per_unit_time) {
  if (steps_per_unit_time < 1) throw SolverError("grid: steps per unit time must be positive");
  breaks_.reserve(trade_times.size() + 2);
  breaks_.push_back(0.0);
  for (double t : trade_times) breaks_.push_back(t);
  breaks_.push_back(T);
  offsets_.push_back(0);
  for (std::size_t s = 0; s + 1 < breaks_.size(); ++s) {
    const double len = breaks_[s + 1] - breaks_[s];
    if (!(len > 0.0)) throw SolverError("grid: segment boundaries must be strictly increasing");
    const int n = std::max(1, static_cast<int>(std::lround(len * steps_per_unit_time)));
    steps_.push_back(n);
    offsets_.push_back(offsets_.back() + n + 1);
  }
}

double TimeGrid::time(int s, int n) const {
  const int ns = steps(s);
  if (n == ns) return segment_end(s);
  const double a = segment_start(s);
  return a + (segment_end(s) - a) * (static_cast<double>(n) / ns);
}

int TimeGrid::segment_of(double t, Side side) const {
  const int last = segments() - 1;
  if (t <= breaks_.front()) return 0;
  if (t >= breaks_.back()) return last;
  // First break strictly greater than t (Right) or >= t (Left).
  auto first = breaks_.begin() + 1;
  auto end = breaks_.end() - 1;
  auto it = side == Side::Right ? std::upper_bound(first, end, t) : std::lower_bound(first, end, t);
  return static_cast<int>(it - first);
}

int TimeGrid::total_steps() const {
  int total = 0;
  for (int n : steps_) total += n;
  return total;
}

PiecewiseCurve::PiecewiseCurve(TimeGrid grid, int dim, bool with_derivatives)
    : grid_(std::move(grid)), dim_(dim) {
  values_.reserve(static_cast<std::size_t>(grid_.segments()));
  for (int s = 0; s < grid_.segments(); ++s) {
    values_.emplace_back(Eigen::MatrixXd::Zero(dim, grid_.steps(s) + 1));
    if (with_derivatives) derivatives_.emplace_back(Eigen::MatrixXd::Zero(dim, grid_.steps(s) + 1));
  }
}

Eigen::VectorXd PiecewiseCurve::eval(double t, Side side) const {
  return eval_in(grid_.segment_of(t, side), t);
}

Eigen::VectorXd PiecewiseCurve::eval_in(int s, double t) const {
  const double a = grid_.segment_start(s);
  const double h = grid_.step(s);
  const int ns = grid_.steps(s);
  double u = (t - a) / h;
  int n = std::clamp(static_cast<int>(std::floor(u)), 0, ns - 1);
  u = std::clamp(u - n, 0.0, 1.0);
  const Eigen::MatrixXd& v = values(s);
  if (!has_derivatives()) return (1.0 - u) * v.col(n) + u * v.col(n + 1);
  const Eigen::MatrixXd& d = derivatives(s);
  const double u2 = u * u;
  const double u3 = u2 * u;
  const double h00 = 2 * u3 - 3 * u2 + 1;
  const double h10 = u3 - 2 * u2 + u;
  const double h01 = -2 * u3 + 3 * u2;
  const double h11 = u3 - u2;
  return h00 * v.col(n) + h10 * h * d.col(n) + h01 * v.col(n + 1) + h11 * h * d.col(n + 1);
}

double PiecewiseCurve::eval(double t, int i, Side side) const {
  const int s = grid_.segment_of(t, side);
  const double a = grid_.segment_start(s);
  const double h = grid_.step(s);
  const int ns = grid_.steps(s);
  double u = (t - a) / h;
  int n = std::clamp(static_cast<int>(std::floor(u)), 0, ns - 1);
  u = std::clamp(u - n, 0.0, 1.0);
  const Eigen::MatrixXd& v = values(s);
  if (!has_derivatives()) return (1.0 - u) * v(i, n) + u * v(i, n + 1);
  const Eigen::MatrixXd& d = derivatives(s);
  const double u2 = u * u;
  const double u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * v(i, n) + (u3 - 2 * u2 + u) * h * d(i, n) +
         (-2 * u3 + 3 * u2) * v(i, n + 1) + (u3 - u2) * h * d(i, n + 1);
}

Eigen::VectorXd PiecewiseCurve::left(int k) const {
  const Eigen::MatrixXd& v = values(k - 1);
  return v.col(v.cols() - 1);
}

Eigen::VectorXd PiecewiseCurve::right(int k) const { return values(k).col(0); }

double PiecewiseCurve::max_abs() const {
  double m = 0.0;
  for (const auto& v : values_) m = std::max(m, v.cwiseAbs().maxCoeff());
  return m;
}

double sup_distance(const PiecewiseCurve& a, const PiecewiseCurve& b) {
  if (!(a.grid() == b.grid()) || a.dim() != b.dim()) {
    throw SolverError("sup_distance: curves live on different grids");
  }
  double m = 0.0;
  for (int s = 0; s < a.grid().segments(); ++s) {
    m = std::max(m, (a.values(s) - b.values(s)).cwiseAbs().maxCoeff());
  }
  return m;
}

}  // namespace hftmfg
