#pragma once

#include "ftl/core.hpp"
#include "ftl/geometry.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace ftl {

// Weight/exponent bundle (alpha, p, theta, q) with the derived codimension
// gamma = alpha + 2 - Q driving every inequality (n = 2 throughout).
struct WeightParams {
  double alpha = 0.0;   // weight exponent, <= 0 in the admissible regimes
  double p = 2.0;       // > 1
  double theta = 0.5;   // in (0,1)
  double q = 1.5;       // Poincare exponent in [1,p)
  double Q = 0.0;       // Hausdorff dimension of E

  double gamma() const { return alpha + 2.0 - Q; }

  static WeightParams for_spec(const FractalSpec& spec, double alpha, double p,
                               double theta, double q = 0.0) {
    WeightParams w;
    w.alpha = alpha;
    w.p = p;
    w.theta = theta;
    w.q = q > 0.0 ? q : 0.5 * (1.0 + p);
    w.Q = spec.hausdorff_dim;
    return w;
  }
};

struct MeasureEstimate {
  IntervalValue value;
  std::int64_t cells_used = 0;
  double tolerance_requested = 0.0;

  bool converged() const { return value.status == Status::Converged; }
};

// --- closed forms (carpet) ---------------------------------------------------

// c_alpha = 8 / ((alpha+1)(alpha+2)) * 2^-(alpha+2)
double carpet_hole_constant(double alpha);

// mu_alpha of a generation-k carpet hole: c_alpha 3^{-k(alpha+2)} for
// alpha > -1, divergent otherwise.
IntervalValue hole_measure_carpet(int k, double alpha);

// mu_alpha of a level-k carpet cell (a scaled copy of the carpet):
// c_alpha 3^{-k(alpha+2)} / (3^{alpha+2} - 8); needs 3^{alpha+2} > 8.
IntervalValue carpet_cell_measure(int k, double alpha);

// Grid square S in S^k: case (i) scaled carpet, case (ii) hole (both exact,
// degenerate interval), case (iii) anything else -> adaptive quadrature.
MeasureEstimate grid_square_measure_carpet(const FractalSpec& spec,
                                           const Square& s, double alpha,
                                           double tol);

// --- closed forms (gasket) ---------------------------------------------------

// mu'_alpha of a downward hole triangle of side s:
// 6/((alpha+1)(alpha+2)) * 3^{-(alpha+1)/2} * (s/2)^{alpha+2}
IntervalValue hole_measure_gasket(double side, double alpha);

// mu'_alpha of a level-k gasket triangle (side 2^-k): hole series
// A'_alpha 2^{-(k+1)(alpha+2)} / (1 - 3*2^{-(alpha+2)}); needs 2^{alpha+2} > 3.
IntervalValue gasket_triangle_measure(int k, double alpha);

// --- adaptive quadrature -----------------------------------------------------

struct QuadratureOptions {
  double tol = 1e-4;                  // relative interval width target
  std::int64_t budget = 10'000'000;   // max cells examined
  double divergence_factor = 1e6;     // lo beyond factor * crude bound => divergent
  int max_depth = 48;
};

// mu_alpha(region) = integral over the region of dist(x,E)^alpha dx (for the
// Koch spec the integrand carries the indicator of the snowflake domain).
// Returns a rigorous bracket for carpet/gasket; Koch intervals are widened
// by the polygon band.
MeasureEstimate mu_alpha_region(const FractalSpec& spec, const Region& region,
                                double alpha,
                                const QuadratureOptions& opt = {});

// Per-cell value bounds for an extra bounded factor in the integrand.
// Given the cell box, return [f_lo, f_hi] over it.
using CellRangeFn =
    std::function<void(const Point2& lo, const Point2& hi, double& f_lo, double& f_hi)>;

struct WeightedIntegral {
  IntervalValue integral;   // integral of f * dist^alpha over the region
  IntervalValue measure;    // integral of dist^alpha over the region
  std::int64_t cells_used = 0;

  // mu_alpha-average of f; conservative interval ratio
  IntervalValue average() const;
};

// Simultaneous quadrature of f dmu_alpha and dmu_alpha over the region with
// one traversal (identical cell set, so f == 1 gives average exactly 1).
WeightedIntegral weighted_mu_alpha(const FractalSpec& spec, const Region& region,
                                   double alpha, const CellRangeFn& f_range,
                                   const QuadratureOptions& opt = {});

// Monte Carlo oracle: uniform samples over the region, averaging
// dist^alpha * area (times the domain indicator for Koch).  Deterministic
// per seed; independent of the quadrature path.
struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::int64_t n = 0;
};
McEstimate mu_alpha_mc_oracle(const FractalSpec& spec, const Region& region,
                              double alpha, std::int64_t n_samples,
                              std::uint64_t seed);

// --- boundary measure nu -----------------------------------------------------

// Cell-counting estimate of nu(B(center,r)): total self-similar mass of the
// level-k cells of E intersecting the ball.  Overcounts by at most the mass
// of cells within one cell-diameter of the sphere.
double nu_ball(const FractalSpec& spec, const Point2& center, double r, int level);

struct BoundarySample {
  Point2 point;
  Address address;
  double mass = 0.0;
};

struct BoundarySampleSet {
  std::vector<BoundarySample> points;
  double total_mass = 1.0;
  std::uint64_t seed = 0;
  int depth = 0;

  std::size_t size() const { return points.size(); }
};

// n iid points from the self-similar law: uniform digit strings of depth
// ceil(log n / log branching) + 10, mass 1/n each.  Deterministic per seed.
BoundarySampleSet boundary_sample(const FractalSpec& spec, std::int64_t n,
                                  std::uint64_t seed);

}  // namespace ftl
