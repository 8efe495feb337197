#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

namespace ftl {

using Point2 = Eigen::Vector2d;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Outcome of an interval computation.  Divergent means the quantity is
// provably (or by the detection rule, almost surely) infinite; the hi bound
// is then the +inf sentinel.
enum class Status { Converged, Divergent, BudgetExceeded };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Converged: return "converged";
    case Status::Divergent: return "divergent";
    case Status::BudgetExceeded: return "budget_exceeded";
  }
  return "unknown";
}

struct IntervalValue {
  double lo = 0.0;
  double hi = 0.0;
  Status status = Status::Converged;

  double mid() const { return 0.5 * (lo + hi); }
  double width() const { return hi - lo; }
  bool contains(double x) const { return lo <= x && x <= hi; }

  static IntervalValue divergent() { return {0.0, kInf, Status::Divergent}; }
  static IntervalValue exact(double v) { return {v, v, Status::Converged}; }
};

// Open axis-aligned square S(x,s) = {y : ||x-y||_inf < s/2}.
struct Square {
  Point2 center{0.0, 0.0};
  double side = 1.0;

  Square scaled(double tau) const { return {center, tau * side}; }
  double xmin() const { return center.x() - 0.5 * side; }
  double xmax() const { return center.x() + 0.5 * side; }
  double ymin() const { return center.y() - 0.5 * side; }
  double ymax() const { return center.y() + 0.5 * side; }
  double area() const { return side * side; }
};

struct Ball {
  Point2 center{0.0, 0.0};
  double radius = 1.0;
  double area() const { return M_PI * radius * radius; }
};

// Integration region: axis square or Euclidean ball.
struct Region {
  enum class Kind { SquareKind, BallKind } kind = Kind::SquareKind;
  Square square;
  Ball ball;

  static Region of(const Square& s) {
    Region r;
    r.kind = Kind::SquareKind;
    r.square = s;
    return r;
  }
  static Region of(const Ball& b) {
    Region r;
    r.kind = Kind::BallKind;
    r.ball = b;
    return r;
  }
  double bounding_half() const {
    return kind == Kind::SquareKind ? 0.5 * square.side : ball.radius;
  }
  Point2 center() const {
    return kind == Kind::SquareKind ? square.center : ball.center;
  }
};

// --- deterministic RNG -----------------------------------------------------
//
// All randomness flows from one seed; sub-tasks derive independent streams
// via a counted splitting scheme so that results do not depend on worker
// count or evaluation order.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : s_(seed ? seed : 0x5bd1e995u) {
    // warm up
    for (int i = 0; i < 4; ++i) splitmix64(s_);
  }

  // Derive a child stream deterministically from (seed, stream id, index).
  Rng split(std::uint64_t stream, std::uint64_t index = 0) const {
    std::uint64_t t = s_;
    std::uint64_t a = splitmix64(t) ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    std::uint64_t b = a + 0xd1342543de82ef95ULL * (index + 1);
    return Rng(b);
  }

  std::uint64_t next_u64() { return splitmix64(s_); }

  // uniform in [0,1) with 53 random bits
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * next_double(); }

  // log-uniform over [a,b], a,b > 0
  double log_uniform(double a, double b) {
    return std::exp(uniform(std::log(a), std::log(b)));
  }

  std::uint32_t next_below(std::uint32_t n) {
    return std::uint32_t(next_u64() % n);
  }

 private:
  std::uint64_t s_;
};

// --- worker pool -----------------------------------------------------------
//
// parallel_for runs fn(i) for i in [0,n) on up to worker_count() threads.
// Callers must write results into per-index slots; reductions happen after
// the join in index order, so output is worker-count independent.

int worker_count();                 // from FRACTAL_TRACE_LAB_WORKERS, default hw
void set_worker_count(int n);       // override (0 restores default)

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ftl
