#pragma once

#include "ftl/core.hpp"

#include <memory>
#include <string>
#include <vector>

namespace ftl {

enum class FractalKind { Carpet, Gasket, Koch };

inline const char* to_string(FractalKind k) {
  switch (k) {
    case FractalKind::Carpet: return "carpet";
    case FractalKind::Gasket: return "gasket";
    case FractalKind::Koch: return "koch";
  }
  return "unknown";
}

// One of the three built-in planar fractals, with its IFS bookkeeping.
// `origin`/`scale` place the base cell in the plane (carpet base cell
// defaults to [0,1]^2, gasket/koch to the unit triangle on (0,0),(1,0)).
// The sets live in their natural coordinates with diam(E) <= 2; the
// `rescaled_to_unit_diam` flag records whether a global normalization to
// unit diameter has been applied (bookkeeping only, off by default).
struct FractalSpec {
  FractalKind kind = FractalKind::Carpet;
  double hausdorff_dim = 0.0;  // Q
  int branching = 8;           // alphabet size of the IFS addressing
  double contraction = 1.0 / 3.0;
  Point2 origin{0.0, 0.0};
  double scale = 1.0;
  int koch_level = 9;  // polygon iteration used by the Koch oracles
  bool rescaled_to_unit_diam = false;

  static FractalSpec carpet();
  static FractalSpec gasket();
  static FractalSpec koch(int level = 9);

  // codimension parameter gamma = alpha + 2 - Q
  double gamma(double alpha) const { return alpha + 2.0 - hausdorff_dim; }

  // Ball B with E inside (1/2)B, shared by surveys, covers and operators.
  Ball ambient_ball() const;
  double diam_bound() const;

  // map between ambient coordinates and the unit base cell
  Point2 to_unit(const Point2& p) const { return (p - origin) / scale; }
  Point2 from_unit(const Point2& p) const { return origin + scale * p; }
};

// IFS address: digit string over the fractal's alphabet.  Carpet digits
// 0..7 enumerate the eight retained subsquares row-major from the lower
// left; gasket digits 0..2 pick the corner map; Koch digits address the
// snowflake hierarchically (first digit 0..2 = side of the base triangle,
// later digits 0..3 = sub-arc of the bump substitution).
struct Address {
  std::vector<std::uint8_t> digits;

  std::string to_string() const;
  static Address parse(const std::string& s);  // throws on bad digit
  std::size_t depth() const { return digits.size(); }
};

// --- distance oracles -------------------------------------------------------

// Exact Euclidean distance to the Sierpinski carpet; total function, digit
// descent capped at `cap` levels (3^-60 is far below double resolution).
double carpet_distance(const FractalSpec& spec, const Point2& p, int cap = 60);

// Exact distance to the Sierpinski gasket.
double gasket_distance(const FractalSpec& spec, const Point2& p, int cap = 60);

// True iff the descent classifies p as a point of E (distance zero).
bool carpet_contains(const FractalSpec& spec, const Point2& p, int cap = 60);
bool gasket_contains(const FractalSpec& spec, const Point2& p, int cap = 60);

// --- Koch snowflake ----------------------------------------------------------

// Closed polyline of the n-th snowflake iterate: 3*4^n segments of length
// 3^-n, counterclockwise, starting from the base triangle (0,0),(1,0),
// (1/2,sqrt(3)/2) with bumps pointing outward.  Throws on absurd n.
std::vector<Point2> koch_polygon(const FractalSpec& spec, int n);

enum class SnowflakeSide { Inside, Outside, Unknown };

inline const char* to_string(SnowflakeSide s) {
  switch (s) {
    case SnowflakeSide::Inside: return "inside";
    case SnowflakeSide::Outside: return "outside";
    case SnowflakeSide::Unknown: return "unknown";
  }
  return "unknown";
}

// Segment-soup accelerator for one snowflake iterate.  Built once per level
// and shared; queries are pure and thread-safe.
class KochOracle {
 public:
  KochOracle(const FractalSpec& spec, int level);

  int level() const { return level_; }
  // Hausdorff gap between K_n and the limit curve K (conservative: 3^-n,
  // one bump step is (sqrt3/6) 3^-n and the tail sums below 3^-n).
  double band() const { return band_; }

  // distance to the polygon K_n (exact up to fp rounding)
  double polygon_distance(const Point2& p) const;

  // [d_n - band, d_n + band] with lo clamped at 0
  IntervalValue limit_distance(const Point2& p) const;

  // Inside/Outside verdict for the snowflake domain; Unknown inside the
  // K-vs-K_n ambiguity band.
  SnowflakeSide side(const Point2& p) const;

  // polygon crossing-parity only (no band logic)
  bool polygon_contains(const Point2& p) const;

  const std::vector<Point2>& vertices() const { return verts_; }

 private:
  struct Node {
    double x0, y0, x1, y1;  // aabb
    int begin, end;         // segment range
    int left = -1, right = -1;
  };
  void build(int node, int begin, int end);
  int level_;
  double band_;
  std::vector<Point2> verts_;  // closed: verts_[i], verts_[i+1] per segment
  std::vector<Node> nodes_;
};

// Shared per-level cache (oracle construction is O(4^n)).
const KochOracle& koch_oracle(const FractalSpec& spec, int level);

IntervalValue koch_distance(const FractalSpec& spec, const Point2& p, int level);
SnowflakeSide inside_snowflake(const FractalSpec& spec, const Point2& p, int level);

// Unified point->distance lower/upper interface used by the quadrature and
// Whitney modules.  Carpet/gasket return exact values (zero-width), Koch
// widens by the level band.
IntervalValue distance_interval(const FractalSpec& spec, const Point2& p);

// --- IFS addressing ----------------------------------------------------------

// Anchor point of the cell named by the address (a point of E).  Changing
// digits after position k moves the result by <= diam(E) * contraction^k.
Point2 address_to_point(const FractalSpec& spec, const Address& a);

// Geometry of the level-k cell structure, used by nu_ball and sampling.
// For carpet/gasket the level-k cell is an exact square/triangle; for Koch
// it is an arc enclosed by a disk around its base segment.
struct CellGeometry {
  Point2 anchor;      // a point of E in the cell
  Point2 bbox_min;    // conservative axis box containing the whole cell
  Point2 bbox_max;
};
CellGeometry address_cell(const FractalSpec& spec, const Address& a);

// Number of level-k cells: 8^k, 3^k, or 3*4^(k-1) (k>=1) for Koch.
std::int64_t cell_count(const FractalSpec& spec, int k);

// Self-similar mass of one level-k cell (total mass 1).
double cell_mass(const FractalSpec& spec, int k);

}  // namespace ftl
