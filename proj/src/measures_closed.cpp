#include "ftl/measures.hpp"

#include <cmath>
#include <stdexcept>

namespace ftl {

namespace {
// Boundary guard for the geometric-series convergence tests: the series for
// a scaled-copy cell requires branching < (1/contraction)^(alpha+2) strictly;
// values within 1e-12 of the boundary are flagged divergent so that the
// exact threshold exponents (log8/log3-2, log3/log2-2) classify as such
// despite rounding.
constexpr double kSeriesGuard = 1e-12;
}  // namespace

double carpet_hole_constant(double alpha) {
  return 8.0 / ((alpha + 1.0) * (alpha + 2.0)) * std::pow(2.0, -(alpha + 2.0));
}

IntervalValue hole_measure_carpet(int k, double alpha) {
  if (k < 1) throw std::invalid_argument("hole_measure_carpet: k >= 1 required");
  if (alpha <= -1.0) return IntervalValue::divergent();
  double v = carpet_hole_constant(alpha) * std::pow(3.0, -double(k) * (alpha + 2.0));
  return IntervalValue::exact(v);
}

IntervalValue carpet_cell_measure(int k, double alpha) {
  if (alpha <= -1.0) return IntervalValue::divergent();
  double ratio = 8.0 * std::pow(3.0, -(alpha + 2.0));
  if (ratio >= 1.0 - kSeriesGuard) return IntervalValue::divergent();
  double v = carpet_hole_constant(alpha) * std::pow(3.0, -double(k) * (alpha + 2.0)) /
             (std::pow(3.0, alpha + 2.0) - 8.0);
  return IntervalValue::exact(v);
}

IntervalValue hole_measure_gasket(double side, double alpha) {
  if (side <= 0.0) throw std::invalid_argument("hole_measure_gasket: side > 0");
  if (alpha <= -1.0) return IntervalValue::divergent();
  double v = 6.0 / ((alpha + 1.0) * (alpha + 2.0)) *
             std::pow(3.0, -(alpha + 1.0) / 2.0) *
             std::pow(0.5 * side, alpha + 2.0);
  return IntervalValue::exact(v);
}

IntervalValue gasket_triangle_measure(int k, double alpha) {
  if (k < 0) throw std::invalid_argument("gasket_triangle_measure: k >= 0");
  if (alpha <= -1.0) return IntervalValue::divergent();
  double ratio = 3.0 * std::pow(2.0, -(alpha + 2.0));
  if (ratio >= 1.0 - kSeriesGuard) return IntervalValue::divergent();
  double unit_hole = hole_measure_gasket(1.0, alpha).lo;  // A'_alpha
  double v = unit_hole * std::pow(2.0, -double(k + 1) * (alpha + 2.0)) / (1.0 - ratio);
  return IntervalValue::exact(v);
}

}  // namespace ftl
