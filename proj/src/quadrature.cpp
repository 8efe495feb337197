#include "ftl/measures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

// Adaptive quadrature of f(x) dist(x,E)^alpha dx over squares and balls.
//
// The carpet and gasket engines descend the fractal's own cell tree (ternary
// squares / bisection triangles) so that cells meeting E are exactly scaled
// copies of the fractal or holes, whose measures have closed forms.  This is
// what makes small relative tolerances reachable at alpha < 0: the codimension
// gamma = alpha + 2 - Q can be arbitrarily small, and no scheme that resolves
// the weight near E purely geometrically converges at a usable rate there.
// Cells strictly inside a hole (or outside the base cell) see a smooth
// integrand with exact range bounds; cells adjacent to the singular boundary
// get one-dimensional power-integral bounds.  The Koch engine uses a plain
// quadtree with the polygon-band interval oracle and a covering-argument
// bound for curve-touching cells.

namespace ftl {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;
constexpr double kFloor = 1e-12;  // relative-width floor for tiny measures

// integral of t^alpha over [t0,t1], 0 <= t0 <= t1
double power_line_integral(double t0, double t1, double alpha) {
  if (t1 <= t0) return 0.0;
  if (alpha == 0.0) return t1 - t0;
  if (t0 <= 0.0) {
    if (alpha <= -1.0) return kInf;
    return std::pow(t1, alpha + 1.0) / (alpha + 1.0);
  }
  if (alpha == -1.0) return std::log(t1 / t0);
  return (std::pow(t1, alpha + 1.0) - std::pow(t0, alpha + 1.0)) / (alpha + 1.0);
}

// [lo,hi] of t^alpha over 0 <= dlo <= dhi
void weight_range(double dlo, double dhi, double alpha, double& wlo, double& whi) {
  if (alpha == 0.0) {
    wlo = whi = 1.0;
    return;
  }
  if (alpha > 0.0) {
    wlo = std::pow(dlo, alpha);
    whi = std::pow(dhi, alpha);
  } else {
    wlo = dhi > 0.0 ? std::pow(dhi, alpha) : kInf;
    whi = dlo > 0.0 ? std::pow(dlo, alpha) : kInf;
  }
}

// --- exact disk / box intersection areas -------------------------------------

double clampd(double v, double lo, double hi) {
  return std::min(hi, std::max(lo, v));
}

// integral of sqrt(r^2-u^2) over [a,b] clamped to [-r,r]
double chord_integral(double a, double b, double r) {
  a = clampd(a, -r, r);
  b = clampd(b, -r, r);
  if (b <= a) return 0.0;
  auto F = [&](double u) {
    double s = std::sqrt(std::max(0.0, r * r - u * u));
    return 0.5 * (u * s + r * r * std::asin(clampd(u / r, -1.0, 1.0)));
  };
  return F(b) - F(a);
}

// area of disk(0,r) cut to {u <= x, v <= y}
double disk_corner_area(double x, double y, double r) {
  if (x <= -r || y <= -r) return 0.0;
  double xc = std::min(x, r);
  double yc = std::min(y, r);
  double chord_all = chord_integral(-r, xc, r);
  if (yc >= r) return 2.0 * chord_all;
  double uc = std::sqrt(std::max(0.0, r * r - yc * yc));
  if (yc >= 0.0) {
    double a = chord_integral(-r, std::min(xc, -uc), r);
    double lo2 = -uc, hi2 = clampd(xc, -uc, uc);
    double b = yc * std::max(0.0, hi2 - lo2);
    double c = chord_integral(uc, xc, r);
    return a + b + c + chord_all;
  }
  double lo = std::max(-r, -uc), hi = std::min(xc, uc);
  if (hi <= lo) return 0.0;
  return yc * (hi - lo) + chord_integral(lo, hi, r);
}

double disk_box_area(const Point2& c, double r, double x0, double y0, double x1,
                     double y1) {
  double a = disk_corner_area(x1 - c.x(), y1 - c.y(), r) -
             disk_corner_area(x0 - c.x(), y1 - c.y(), r) -
             disk_corner_area(x1 - c.x(), y0 - c.y(), r) +
             disk_corner_area(x0 - c.x(), y0 - c.y(), r);
  return std::max(0.0, a);
}

double box_box_area(double ax0, double ay0, double ax1, double ay1, double bx0,
                    double by0, double bx1, double by1) {
  double w = std::min(ax1, bx1) - std::max(ax0, bx0);
  double h = std::min(ay1, by1) - std::max(ay0, by0);
  return w > 0.0 && h > 0.0 ? w * h : 0.0;
}

// --- region handling (unit coordinates) --------------------------------------

enum class Overlap { Out, Partial, In };

struct RegionU {
  bool is_ball = false;
  Point2 c{0, 0};
  double half = 0.5;  // half side or radius
  double area = 1.0;

  // The In test carries a 1e-12-relative epsilon so that regions placed
  // exactly on the fractal grid (hole squares, grid cells) classify as fully
  // inside despite last-ulp differences; the induced bracket error is far
  // below every tolerance in use.
  Overlap classify_box(double x0, double y0, double x1, double y1) const {
    double eps = 1e-12 * std::max(half, 1.0);
    if (!is_ball) {
      double rx0 = c.x() - half, rx1 = c.x() + half;
      double ry0 = c.y() - half, ry1 = c.y() + half;
      if (x1 <= rx0 || x0 >= rx1 || y1 <= ry0 || y0 >= ry1) return Overlap::Out;
      if (x0 >= rx0 - eps && x1 <= rx1 + eps && y0 >= ry0 - eps && y1 <= ry1 + eps)
        return Overlap::In;
      return Overlap::Partial;
    }
    double dx = std::max({x0 - c.x(), 0.0, c.x() - x1});
    double dy = std::max({y0 - c.y(), 0.0, c.y() - y1});
    if (dx * dx + dy * dy >= half * half) return Overlap::Out;
    double fx = std::max(std::abs(x0 - c.x()), std::abs(x1 - c.x()));
    double fy = std::max(std::abs(y0 - c.y()), std::abs(y1 - c.y()));
    double re = half + eps;
    if (fx * fx + fy * fy <= re * re) return Overlap::In;
    return Overlap::Partial;
  }

  double box_part_area(double x0, double y0, double x1, double y1) const {
    if (!is_ball)
      return box_box_area(x0, y0, x1, y1, c.x() - half, c.y() - half,
                          c.x() + half, c.y() + half);
    return disk_box_area(c, half, x0, y0, x1, y1);
  }
};

RegionU make_region_unit(const FractalSpec& spec, const Region& region) {
  RegionU r;
  if (region.kind == Region::Kind::BallKind) {
    r.is_ball = true;
    r.c = spec.to_unit(region.ball.center);
    r.half = region.ball.radius / spec.scale;
    r.area = M_PI * r.half * r.half;
  } else {
    r.is_ball = false;
    r.c = spec.to_unit(region.square.center);
    r.half = 0.5 * region.square.side / spec.scale;
    r.area = 4.0 * r.half * r.half;
  }
  if (r.half <= 0.0) throw std::invalid_argument("region has nonpositive size");
  return r;
}

// --- shared accumulator -------------------------------------------------------

struct Acc {
  double mu_lo = 0.0, mu_hi = 0.0;
  double fmu_lo = 0.0, fmu_hi = 0.0;
  std::int64_t cells = 0;
  bool divergent_form = false;  // a fully-in cell with provably infinite mass
  bool hi_unbounded = false;    // some capped cell had no finite upper bound
  bool aborted = false;         // budget ran out mid-round

  void add(double mlo, double mhi, double flo_m, double fhi_m) {
    mu_lo += mlo;
    if (mhi == kInf)
      hi_unbounded = true;
    else
      mu_hi += mhi;
    fmu_lo += flo_m;
    fmu_hi += fhi_m;
  }
};

// contribution of f-range x measure-range, measure >= 0
void product_interval(double flo, double fhi, double mlo, double mhi, double& lo,
                      double& hi) {
  if (mhi == kInf) {
    lo = flo < 0.0 ? -kInf : flo * mlo;
    hi = fhi > 0.0 ? kInf : fhi * mlo;
    return;
  }
  double a = flo * mlo, b = flo * mhi, c = fhi * mlo, d = fhi * mhi;
  lo = std::min(std::min(a, b), std::min(c, d));
  hi = std::max(std::max(a, b), std::max(c, d));
}

struct EngineCtx {
  const FractalSpec* spec = nullptr;
  const CellRangeFn* f = nullptr;  // nullable
  RegionU reg;
  double alpha = 0.0;
  int max_depth = 12;
  double slack_per_area = 0.0;  // terminal when width <= slack * cell area
  std::int64_t budget_left = 0;
  Acc acc;

  void f_range(double x0, double y0, double x1, double y1, double& flo,
               double& fhi) const {
    if (!f || !*f) {
      flo = fhi = 1.0;
      return;
    }
    Point2 lo = spec->from_unit(Point2{x0, y0});
    Point2 hi = spec->from_unit(Point2{x1, y1});
    (*f)(lo, hi, flo, fhi);
  }

  // Record a terminal cell: measure bounds [mlo,mhi] over cell-intersect-region.
  void emit(double x0, double y0, double x1, double y1, double mlo, double mhi) {
    double flo, fhi, plo, phi;
    f_range(x0, y0, x1, y1, flo, fhi);
    product_interval(flo, fhi, mlo, mhi, plo, phi);
    acc.add(mlo, mhi, plo, phi);
  }

  // width of the would-be contribution, for the terminal test
  double width_of(double x0, double y0, double x1, double y1, double mlo,
                  double mhi) {
    double flo, fhi, plo, phi;
    f_range(x0, y0, x1, y1, flo, fhi);
    product_interval(flo, fhi, mlo, mhi, plo, phi);
    if (phi == kInf || plo == -kInf || mhi == kInf) return kInf;
    return std::max(phi - plo, mhi - mlo);
  }

  bool count_cell() {
    ++acc.cells;
    if (--budget_left < 0) {
      acc.aborted = true;
      return false;
    }
    return true;
  }
};

// --- carpet engine -------------------------------------------------------------
//
// Ternary tree rooted at [-40,41]^2 (side 81 = 3^4); the unit square is the
// center-path descendant at depth 4.  Cell types below the unit square follow
// the carpet subdivision: digit pair (1,1) is the hole, everything else stays
// a scaled carpet copy.

enum class CarpetType { Ancestor, Outside, CarpetCell, HoleCell, InHole };

struct CarpetEngine {
  EngineCtx ctx;
  // measures of level-k cells/holes (alpha-dependent), k = depth-4
  std::array<double, 64> cell_mu{};
  std::array<double, 64> hole_mu{};
  bool cell_mu_divergent = false;
  bool hole_mu_divergent = false;

  void prepare() {
    double alpha = ctx.alpha;
    hole_mu_divergent = alpha <= -1.0;
    cell_mu_divergent =
        hole_mu_divergent || 8.0 * std::pow(3.0, -(alpha + 2.0)) >= 1.0 - 1e-12;
    for (int k = 0; k < 64; ++k) {
      double h = hole_mu_divergent
                     ? kInf
                     : carpet_hole_constant(alpha) *
                           std::pow(3.0, -double(k) * (alpha + 2.0));
      hole_mu[std::size_t(k)] = h;
      cell_mu[std::size_t(k)] =
          cell_mu_divergent ? kInf : h / (std::pow(3.0, alpha + 2.0) - 8.0);
    }
  }

  // distance range from a box to the unit square (exact; box disjoint from it)
  static void outside_range(double x0, double y0, double x1, double y1,
                            double& dlo, double& dhi) {
    double dx = std::max({0.0 - x1, 0.0, x0 - 1.0});
    double dy = std::max({0.0 - y1, 0.0, y0 - 1.0});
    dlo = std::hypot(dx, dy);
    dhi = 0.0;
    const double xs[2] = {x0, x1};
    const double ys[2] = {y0, y1};
    for (double cx : xs)
      for (double cy : ys) {
        double ddx = std::max({0.0 - cx, 0.0, cx - 1.0});
        double ddy = std::max({0.0 - cy, 0.0, cy - 1.0});
        dhi = std::max(dhi, std::hypot(ddx, ddy));
      }
  }

  // upper bound for the cell integral of dist^alpha when the cell hugs the
  // singular boundary: 1-d power integral across the best separating strip
  double outside_strip_hi(double x0, double y0, double x1, double y1) const {
    double alpha = ctx.alpha;
    double best = kInf;
    if (x0 >= 1.0)
      best = std::min(best, (y1 - y0) * power_line_integral(x0 - 1.0, x1 - 1.0, alpha));
    if (x1 <= 0.0)
      best = std::min(best, (y1 - y0) * power_line_integral(-x1, -x0, alpha));
    if (y0 >= 1.0)
      best = std::min(best, (x1 - x0) * power_line_integral(y0 - 1.0, y1 - 1.0, alpha));
    if (y1 <= 0.0)
      best = std::min(best, (x1 - x0) * power_line_integral(-y1, -y0, alpha));
    return best;
  }

  double inhole_strip_hi(double x0, double y0, double x1, double y1, double ha0,
                         double hb0, double ha1, double hb1) const {
    // dist = min of four edge offsets; dist^alpha <= sum of per-edge powers
    double alpha = ctx.alpha;
    double sx = x1 - x0, sy = y1 - y0;
    double s = 0.0;
    s += sy * power_line_integral(x0 - ha0, x1 - ha0, alpha);
    s += sy * power_line_integral(ha1 - x1, ha1 - x0, alpha);
    s += sx * power_line_integral(y0 - hb0, y1 - hb0, alpha);
    s += sx * power_line_integral(hb1 - y1, hb1 - y0, alpha);
    return s;
  }

  void visit(double x0, double y0, double s, int depth, CarpetType type,
             double ha0, double hb0, double ha1, double hb1) {
    if (ctx.acc.aborted || ctx.acc.divergent_form) return;
    double x1 = x0 + s, y1 = y0 + s;
    Overlap ov = ctx.reg.classify_box(x0, y0, x1, y1);
    if (ov == Overlap::Out) return;
    if (!ctx.count_cell()) return;
    bool full = ov == Overlap::In;
    double alpha = ctx.alpha;

    auto recurse = [&] {
      double cs = s / 3.0;
      for (int iy = 0; iy < 3; ++iy)
        for (int ix = 0; ix < 3; ++ix) {
          double cx0 = x0 + ix * cs, cy0 = y0 + iy * cs;
          CarpetType ct = type;
          double nha0 = ha0, nhb0 = hb0, nha1 = ha1, nhb1 = hb1;
          switch (type) {
            case CarpetType::Ancestor: {
              // children either contain the unit square or miss it (alignment)
              bool contains = cx0 <= 0.0 && cx0 + cs >= 1.0 && cy0 <= 0.0 &&
                              cy0 + cs >= 1.0;
              ct = contains ? (depth + 1 == 4 ? CarpetType::CarpetCell
                                              : CarpetType::Ancestor)
                            : CarpetType::Outside;
              break;
            }
            case CarpetType::CarpetCell:
              ct = (ix == 1 && iy == 1) ? CarpetType::HoleCell
                                        : CarpetType::CarpetCell;
              break;
            case CarpetType::HoleCell:
              ct = CarpetType::InHole;
              nha0 = x0;
              nhb0 = y0;
              nha1 = x1;
              nhb1 = y1;
              break;
            default:
              break;
          }
          visit(cx0, cy0, cs, depth + 1, ct, nha0, nhb0, nha1, nhb1);
        }
    };

    switch (type) {
      case CarpetType::Ancestor:
        recurse();
        return;
      case CarpetType::CarpetCell:
      case CarpetType::HoleCell: {
        int k = depth - 4;
        bool div = type == CarpetType::CarpetCell ? cell_mu_divergent
                                                  : hole_mu_divergent;
        double mu = type == CarpetType::CarpetCell ? cell_mu[std::size_t(k)]
                                                   : hole_mu[std::size_t(k)];
        if (div) {
          if (full) {
            ctx.acc.divergent_form = true;
            return;
          }
          if (depth < ctx.max_depth) {
            recurse();
            return;
          }
          ctx.emit(x0, y0, x1, y1, 0.0, kInf);
          return;
        }
        double mlo = full ? mu : 0.0;
        double w = ctx.width_of(x0, y0, x1, y1, mlo, mu);
        if (w <= ctx.slack_per_area * s * s || depth >= ctx.max_depth) {
          ctx.emit(x0, y0, x1, y1, mlo, mu);
          return;
        }
        recurse();
        return;
      }
      case CarpetType::Outside:
      case CarpetType::InHole: {
        double dlo, dhi;
        if (type == CarpetType::Outside) {
          outside_range(x0, y0, x1, y1, dlo, dhi);
        } else {
          dlo = std::max(
              0.0, std::min(std::min(x0 - ha0, ha1 - x1), std::min(y0 - hb0, hb1 - y1)));
          dhi = std::min(std::min(x1 - ha0, ha1 - x0), std::min(y1 - hb0, hb1 - y0));
        }
        double wlo, whi;
        weight_range(dlo, dhi, alpha, wlo, whi);
        double part = full ? s * s : ctx.reg.box_part_area(x0, y0, x1, y1);
        double mlo = part * wlo;
        double mhi;
        if (whi != kInf) {
          mhi = part * whi;
        } else {
          mhi = type == CarpetType::Outside
                    ? outside_strip_hi(x0, y0, x1, y1)
                    : inhole_strip_hi(x0, y0, x1, y1, ha0, hb0, ha1, hb1);
        }
        double w = ctx.width_of(x0, y0, x1, y1, mlo, mhi);
        if (w <= ctx.slack_per_area * s * s || depth >= ctx.max_depth) {
          ctx.emit(x0, y0, x1, y1, mlo, mhi);
          return;
        }
        recurse();
        return;
      }
    }
  }

  void run() {
    prepare();
    visit(-40.0, -40.0, 81.0, 0, CarpetType::Ancestor, 0, 0, 0, 0);
  }
};

// --- gasket engine --------------------------------------------------------------
//
// Bisection triangle tree.  Upward cells on the gasket path are scaled gasket
// copies; the central downward child is the hole.  The root is grown from the
// base triangle until it covers every admissible region.

struct Tri {
  // 'up' triangle: vertices (x,y), (x+s,y), (x+s/2, y+s*sqrt3/2)
  // 'down' triangle: vertices (x,y), (x+s,y), (x+s/2, y-s*sqrt3/2)
  double x, y, s;
  bool up;

  std::array<Point2, 3> verts() const {
    double h = 0.5 * kSqrt3 * s;
    if (up)
      return {Point2{x, y}, Point2{x + s, y}, Point2{x + 0.5 * s, y + h}};
    return {Point2{x, y}, Point2{x + s, y}, Point2{x + 0.5 * s, y - h}};
  }
  void bbox(double& x0, double& y0, double& x1, double& y1) const {
    double h = 0.5 * kSqrt3 * s;
    x0 = x;
    x1 = x + s;
    if (up) {
      y0 = y;
      y1 = y + h;
    } else {
      y0 = y - h;
      y1 = y;
    }
  }
  double area() const { return 0.25 * kSqrt3 * s * s; }

  // children 0..2 corner triangles (same orientation), 3 = flipped center
  Tri child(int i) const {
    double hs = 0.5 * s;
    double hh = 0.5 * kSqrt3 * hs;
    if (up) {
      switch (i) {
        case 0: return {x, y, hs, true};
        case 1: return {x + hs, y, hs, true};
        case 2: return {x + 0.5 * hs, y + hh, hs, true};
        default: return {x + 0.5 * hs, y + hh, hs, false};
      }
    }
    switch (i) {
      case 0: return {x, y, hs, false};
      case 1: return {x + hs, y, hs, false};
      case 2: return {x + 0.5 * hs, y - hh, hs, false};
      default: return {x + 0.5 * hs, y - hh, hs, true};
    }
  }
};

double point_seg_dist(const Point2& p, const Point2& a, const Point2& b) {
  Point2 ab = b - a;
  double t = clampd((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

bool point_in_tri(const Point2& p, const std::array<Point2, 3>& v) {
  double d1 = (p - v[0]).x() * (v[1] - v[0]).y() - (p - v[0]).y() * (v[1] - v[0]).x();
  double d2 = (p - v[1]).x() * (v[2] - v[1]).y() - (p - v[1]).y() * (v[2] - v[1]).x();
  double d3 = (p - v[2]).x() * (v[0] - v[2]).y() - (p - v[2]).y() * (v[0] - v[2]).x();
  bool neg = d1 < 0 || d2 < 0 || d3 < 0;
  bool pos = d1 > 0 || d2 > 0 || d3 > 0;
  return !(neg && pos);
}

double point_tri_dist(const Point2& p, const std::array<Point2, 3>& v) {
  if (point_in_tri(p, v)) return 0.0;
  return std::min({point_seg_dist(p, v[0], v[1]), point_seg_dist(p, v[1], v[2]),
                   point_seg_dist(p, v[2], v[0])});
}

double seg_seg_dist(const Point2& a0, const Point2& a1, const Point2& b0,
                    const Point2& b1) {
  auto orient = [](const Point2& p, const Point2& q, const Point2& r) {
    return (q - p).x() * (r - p).y() - (q - p).y() * (r - p).x();
  };
  double o1 = orient(a0, a1, b0), o2 = orient(a0, a1, b1);
  double o3 = orient(b0, b1, a0), o4 = orient(b0, b1, a1);
  if (((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0))) return 0.0;
  return std::min({point_seg_dist(b0, a0, a1), point_seg_dist(b1, a0, a1),
                   point_seg_dist(a0, b0, b1), point_seg_dist(a1, b0, b1)});
}

double tri_tri_dist(const std::array<Point2, 3>& a, const std::array<Point2, 3>& b) {
  for (const auto& p : a)
    if (point_in_tri(p, b)) return 0.0;
  for (const auto& p : b)
    if (point_in_tri(p, a)) return 0.0;
  double best = kInf;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      best = std::min(best, seg_seg_dist(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3]));
  return best;
}

enum class GasketType { Ancestor, Outside, GasketCell, HoleCell, InHole };

struct HoleEdges {
  // inward-pointing half-plane forms: signed(x) = n . (x - p), >= 0 inside
  std::array<Point2, 3> pt;
  std::array<Point2, 3> n;
  static HoleEdges of(const std::array<Point2, 3>& v) {
    HoleEdges h;
    Point2 centroid = (v[0] + v[1] + v[2]) / 3.0;
    for (int i = 0; i < 3; ++i) {
      Point2 a = v[i], b = v[(i + 1) % 3];
      Point2 e = b - a;
      Point2 n{-e.y(), e.x()};
      n.normalize();
      if (n.dot(centroid - a) < 0.0) n = -n;
      h.pt[std::size_t(i)] = a;
      h.n[std::size_t(i)] = n;
    }
    return h;
  }
};

struct GasketEngine {
  EngineCtx ctx;
  Tri root;
  std::vector<int> path;  // child indices from root down to the base triangle
  std::array<Point2, 3> base_verts;
  std::array<double, 64> cell_mu{};  // level-k gasket copy, side 2^-k
  bool cell_mu_divergent = false;
  bool hole_divergent = false;

  void prepare() {
    double alpha = ctx.alpha;
    hole_divergent = alpha <= -1.0;
    cell_mu_divergent =
        hole_divergent || 3.0 * std::pow(2.0, -(alpha + 2.0)) >= 1.0 - 1e-12;
    for (int k = 0; k < 64; ++k) {
      IntervalValue v = cell_mu_divergent ? IntervalValue::divergent()
                                          : gasket_triangle_measure(k, alpha);
      cell_mu[std::size_t(k)] = v.status == Status::Divergent ? kInf : v.lo;
    }
    // grow the root from the base triangle until it covers the working box
    Tri t{0.0, 0.0, 1.0, true};
    base_verts = t.verts();
    std::vector<int> rev;
    int cycle[2] = {1, 2};
    int ci = 0;
    auto contains_box = [&](const Tri& tr) {
      auto v = tr.verts();
      const double L = 21.0;
      Point2 corners[4] = {{-L, -L}, {L, -L}, {-L, L}, {L, L}};
      for (const auto& p : corners)
        if (!point_in_tri(p, v)) return false;
      return true;
    };
    while (!contains_box(t)) {
      int child = cycle[ci % 2];
      ++ci;
      // invert Tri::child(child) for an 'up' parent
      double ps = 2.0 * t.s;
      double hh = 0.5 * kSqrt3 * t.s;
      switch (child) {
        case 0: t = {t.x, t.y, ps, true}; break;
        case 1: t = {t.x - t.s, t.y, ps, true}; break;
        default: t = {t.x - 0.5 * t.s, t.y - hh, ps, true}; break;
      }
      rev.push_back(child);
      if (rev.size() > 40) throw std::runtime_error("gasket root growth failed");
    }
    root = t;
    path.assign(rev.rbegin(), rev.rend());
  }

  Overlap classify(const Tri& t) const {
    auto v = t.verts();
    if (!ctx.reg.is_ball) {
      double rx0 = ctx.reg.c.x() - ctx.reg.half, rx1 = ctx.reg.c.x() + ctx.reg.half;
      double ry0 = ctx.reg.c.y() - ctx.reg.half, ry1 = ctx.reg.c.y() + ctx.reg.half;
      double x0, y0, x1, y1;
      t.bbox(x0, y0, x1, y1);
      if (x1 <= rx0 || x0 >= rx1 || y1 <= ry0 || y0 >= ry1) return Overlap::Out;
      bool in = true;
      for (const auto& p : v)
        in = in && p.x() >= rx0 && p.x() <= rx1 && p.y() >= ry0 && p.y() <= ry1;
      if (in) return Overlap::In;
      // bbox overlaps; triangle may still miss a corner region of the square,
      // which only costs an extra subdivision level
      return Overlap::Partial;
    }
    double dc = point_tri_dist(ctx.reg.c, v);
    if (dc >= ctx.reg.half) return Overlap::Out;
    bool in = true;
    for (const auto& p : v) in = in && (p - ctx.reg.c).norm() <= ctx.reg.half;
    return in ? Overlap::In : Overlap::Partial;
  }

  // distance range from an outside cell to the closed base triangle
  void outside_range(const Tri& t, double& dlo, double& dhi) const {
    auto v = t.verts();
    dlo = tri_tri_dist(v, base_verts);
    dhi = 0.0;
    for (const auto& p : v) dhi = std::max(dhi, point_tri_dist(p, base_verts));
  }

  double strip_hi_outside(const Tri& t) const {
    // per-edge outward strips of the base triangle; cells straddling a vertex
    // use the 60-degree corner bound dist >= |x-V|/2
    double alpha = ctx.alpha;
    auto v = t.verts();
    double best = kInf;
    HoleEdges base = HoleEdges::of(base_verts);
    for (int e = 0; e < 3; ++e) {
      // outward signed distance = -(inward signed)
      double t0 = kInf, t1 = -kInf;
      for (const auto& p : v) {
        double sd = -(base.n[std::size_t(e)].dot(p - base.pt[std::size_t(e)]));
        t0 = std::min(t0, sd);
        t1 = std::max(t1, sd);
      }
      if (t0 >= -1e-15) {
        double val = t.s * power_line_integral(std::max(0.0, t0), t1, alpha);
        best = std::min(best, val);
      }
    }
    if (best < kInf) return best;
    for (const auto& V : base_verts) {
      if (point_tri_dist(V, v) < 1e-15 && t.s <= 0.25) {
        double R = 0.0;
        for (const auto& p : v) R = std::max(R, (p - V).norm());
        // dist(x, base) >= |x-V|/2 near a 60-degree corner
        double val = std::pow(2.0, -alpha) * 2.0 * M_PI *
                     std::pow(R, alpha + 2.0) / (alpha + 2.0);
        return val;
      }
    }
    return kInf;
  }

  double strip_hi_inhole(const Tri& t, const HoleEdges& h) const {
    double alpha = ctx.alpha;
    auto v = t.verts();
    double sum = 0.0;
    for (int e = 0; e < 3; ++e) {
      double t0 = kInf, t1 = -kInf;
      for (const auto& p : v) {
        double sd = h.n[std::size_t(e)].dot(p - h.pt[std::size_t(e)]);
        t0 = std::min(t0, sd);
        t1 = std::max(t1, sd);
      }
      sum += t.s * power_line_integral(std::max(0.0, t0), t1, alpha);
    }
    return sum;
  }

  void emit_tri(const Tri& t, double mlo, double mhi) {
    double x0, y0, x1, y1;
    t.bbox(x0, y0, x1, y1);
    ctx.emit(x0, y0, x1, y1, mlo, mhi);
  }
  double width_tri(const Tri& t, double mlo, double mhi) {
    double x0, y0, x1, y1;
    t.bbox(x0, y0, x1, y1);
    return ctx.width_of(x0, y0, x1, y1, mlo, mhi);
  }

  void visit(const Tri& t, int depth, GasketType type, const HoleEdges* hole) {
    if (ctx.acc.aborted || ctx.acc.divergent_form) return;
    Overlap ov = classify(t);
    if (ov == Overlap::Out) return;
    if (!ctx.count_cell()) return;
    bool full = ov == Overlap::In;
    double alpha = ctx.alpha;

    auto recurse = [&] {
      if (type == GasketType::HoleCell) {
        HoleEdges he = HoleEdges::of(t.verts());
        for (int i = 0; i < 4; ++i)
          visit(t.child(i), depth + 1, GasketType::InHole, &he);
        return;
      }
      for (int i = 0; i < 4; ++i) {
        GasketType ct = type;
        if (type == GasketType::Ancestor) {
          ct = i == path[std::size_t(depth)]
                   ? (std::size_t(depth) + 1 == path.size() ? GasketType::GasketCell
                                                            : GasketType::Ancestor)
                   : GasketType::Outside;
        } else if (type == GasketType::GasketCell) {
          ct = i == 3 ? GasketType::HoleCell : GasketType::GasketCell;
        }
        visit(t.child(i), depth + 1, ct, hole);
      }
    };

    switch (type) {
      case GasketType::Ancestor:
        recurse();
        return;
      case GasketType::GasketCell: {
        int k = depth - int(path.size());
        double mu = cell_mu[std::size_t(std::min(k, 63))];
        if (cell_mu_divergent) {
          if (full) {
            ctx.acc.divergent_form = true;
            return;
          }
          if (depth < ctx.max_depth) {
            recurse();
            return;
          }
          emit_tri(t, 0.0, kInf);
          return;
        }
        double mlo = full ? mu : 0.0;
        double w = width_tri(t, mlo, mu);
        if (w <= ctx.slack_per_area * t.area() || depth >= ctx.max_depth) {
          emit_tri(t, mlo, mu);
          return;
        }
        recurse();
        return;
      }
      case GasketType::HoleCell: {
        IntervalValue hv = hole_divergent ? IntervalValue::divergent()
                                          : hole_measure_gasket(t.s, alpha);
        if (hv.status == Status::Divergent) {
          if (full) {
            ctx.acc.divergent_form = true;
            return;
          }
          if (depth < ctx.max_depth) {
            recurse();
            return;
          }
          emit_tri(t, 0.0, kInf);
          return;
        }
        double mlo = full ? hv.lo : 0.0;
        double w = width_tri(t, mlo, hv.lo);
        if (w <= ctx.slack_per_area * t.area() || depth >= ctx.max_depth) {
          emit_tri(t, mlo, hv.lo);
          return;
        }
        recurse();
        return;
      }
      case GasketType::Outside:
      case GasketType::InHole: {
        double dlo, dhi;
        if (type == GasketType::Outside) {
          outside_range(t, dlo, dhi);
        } else {
          dlo = kInf;
          dhi = kInf;
          auto v = t.verts();
          for (int e = 0; e < 3; ++e) {
            double lo_e = kInf, hi_e = -kInf;
            for (const auto& p : v) {
              double sd = hole->n[std::size_t(e)].dot(p - hole->pt[std::size_t(e)]);
              lo_e = std::min(lo_e, sd);
              hi_e = std::max(hi_e, sd);
            }
            dlo = std::min(dlo, std::max(0.0, lo_e));
            dhi = std::min(dhi, hi_e);
          }
        }
        double wlo, whi;
        weight_range(dlo, dhi, alpha, wlo, whi);
        // partial cells: no exact triangle clip area; [0, full] bracket
        double area = t.area();
        double mlo = full ? area * wlo : 0.0;
        double mhi;
        if (whi != kInf) {
          mhi = area * whi;
        } else {
          mhi = type == GasketType::Outside ? strip_hi_outside(t)
                                            : strip_hi_inhole(t, *hole);
        }
        double w = width_tri(t, mlo, mhi);
        if (w <= ctx.slack_per_area * area || depth >= ctx.max_depth) {
          emit_tri(t, mlo, mhi);
          return;
        }
        recurse();
        return;
      }
    }
  }

  void run() {
    visit(root, 0, path.empty() ? GasketType::GasketCell : GasketType::Ancestor,
          nullptr);
  }
};

// --- Koch engine -----------------------------------------------------------------
//
// Plain quadtree over the region box; the integrand carries the snowflake
// domain indicator.  Cells that provably clear the polygon band get exact
// ranges; band cells either use the covering bound below (alpha < 0) or the
// trivial area bound.
//
// Touching-cell bound: the level-j construction covers K by 3*4^j arcs of
// diameter <= D_j = 1.87 * 3^-j.  For a cell C of side w pick J minimal with
// D_J <= w; points of C with dist < D_j lie in one of at most kappa * 4^(j-J)
// local arc neighborhoods of area <= 9 pi D_j^2, so
//   integral_C dist^alpha <= [9 pi kappa 3^-alpha / (1 - 4*3^-(2+alpha))
//                              + 3^-alpha] * w^(2+alpha)
// whenever 4 * 3^-(2+alpha) < 1, i.e. alpha > Q - 2.  kappa = 64 is a
// generous local covering multiplicity; slack here only affects speed.

struct KochEngine {
  EngineCtx ctx;
  const KochOracle* oracle = nullptr;
  double touch_const = kInf;

  void prepare() {
    oracle = &koch_oracle(*ctx.spec, ctx.spec->koch_level);
    double alpha = ctx.alpha;
    double ratio = 4.0 * std::pow(3.0, -(2.0 + alpha));
    if (alpha >= 0.0) {
      touch_const = 0.0;  // unused
    } else if (ratio < 1.0 - 1e-12) {
      touch_const = 9.0 * M_PI * 64.0 * std::pow(3.0, -alpha) / (1.0 - ratio) +
                    std::pow(3.0, -alpha);
    } else {
      touch_const = kInf;
    }
  }

  void visit(double cx, double cy, double half, int depth) {
    if (ctx.acc.aborted) return;
    double x0 = cx - half, y0 = cy - half, x1 = cx + half, y1 = cy + half;
    Overlap ov = ctx.reg.classify_box(x0, y0, x1, y1);
    if (ov == Overlap::Out) return;
    if (!ctx.count_cell()) return;
    bool full = ov == Overlap::In;
    double alpha = ctx.alpha;
    double band = oracle->band();
    double hd = half * std::sqrt(2.0);
    Point2 c{cx, cy};
    double d = oracle->polygon_distance(c);

    double mlo = 0.0, mhi = 0.0;
    bool resolved = false;
    if (d - band > hd) {
      // the whole cell is on one side of the snowflake boundary
      if (!oracle->polygon_contains(c)) {
        return;  // outside the domain: integrand zero
      }
      double dlo = std::max(0.0, d - hd - band);
      double dhi = d + hd + band;
      double wlo, whi;
      weight_range(dlo, dhi, alpha, wlo, whi);
      double part = full ? 4.0 * half * half : ctx.reg.box_part_area(x0, y0, x1, y1);
      mlo = part * wlo;
      mhi = part * whi;  // dlo > 0, so whi finite
      resolved = true;
    } else {
      // band cell: inside-fraction unknown, weight may be singular
      mlo = 0.0;
      double w = 2.0 * half;
      if (alpha >= 0.0) {
        mhi = w * w * std::pow(d + hd + band, alpha);
      } else {
        mhi = touch_const == kInf ? kInf
                                  : touch_const * std::pow(w, 2.0 + alpha);
      }
    }
    double wdt = ctx.width_of(x0, y0, x1, y1, mlo, mhi);
    double area = 4.0 * half * half;
    if ((resolved && wdt <= ctx.slack_per_area * area) || depth >= ctx.max_depth ||
        (resolved && wdt <= 0.0)) {
      ctx.emit(x0, y0, x1, y1, mlo, mhi);
      return;
    }
    if (!resolved && depth >= ctx.max_depth) {
      ctx.emit(x0, y0, x1, y1, mlo, mhi);
      return;
    }
    double q = 0.5 * half;
    visit(cx - q, cy - q, q, depth + 1);
    visit(cx + q, cy - q, q, depth + 1);
    visit(cx - q, cy + q, q, depth + 1);
    visit(cx + q, cy + q, q, depth + 1);
  }

  void run() {
    // root square: the region's bounding box
    double half = ctx.reg.half * (ctx.reg.is_ball ? 1.0 : 1.0);
    visit(ctx.reg.c.x(), ctx.reg.c.y(), half, 0);
  }
};

// --- round driver -----------------------------------------------------------------

struct RoundResult {
  IntervalValue mu;
  IntervalValue fmu;
  std::int64_t cells = 0;
  Status status = Status::Converged;
};

template <typename Engine>
RoundResult run_rounds(Engine& eng, const FractalSpec& spec, const RegionU& reg,
                       double alpha, const CellRangeFn* f,
                       const QuadratureOptions& opt, bool has_f) {
  eng.ctx.spec = &spec;
  eng.ctx.f = f;
  eng.ctx.reg = reg;
  eng.ctx.alpha = alpha;
  eng.prepare();

  // depth at which cells reach the region scale
  double root_span = 81.0;  // carpet root; others comparable, only a heuristic
  int depth_region = std::max(1, int(std::ceil(std::log(root_span / reg.half) /
                                               std::log(3.0))));
  int L = depth_region + 4;
  std::int64_t budget = opt.budget;
  double slack = 0.0;
  double first_lo = -1.0;
  RoundResult best;
  bool have_best = false;

  for (int round = 0; round < 64; ++round) {
    eng.ctx.acc = Acc{};
    eng.ctx.max_depth = std::min(L, opt.max_depth + depth_region);
    eng.ctx.slack_per_area = slack;
    eng.ctx.budget_left = budget;
    eng.run();
    Acc& a = eng.ctx.acc;
    budget -= a.cells;

    if (a.divergent_form) {
      RoundResult r;
      r.mu = IntervalValue::divergent();
      r.fmu = IntervalValue::divergent();
      r.cells = opt.budget - budget;
      r.status = Status::Divergent;
      return r;
    }
    if (a.aborted) {
      if (have_best) {
        best.status = Status::BudgetExceeded;
        best.cells = opt.budget - budget;
        return best;
      }
      RoundResult r;
      r.mu = {a.mu_lo, kInf, Status::BudgetExceeded};
      r.fmu = {-kInf, kInf, Status::BudgetExceeded};
      r.cells = opt.budget - budget;
      r.status = Status::BudgetExceeded;
      return r;
    }

    RoundResult r;
    double mu_hi = a.hi_unbounded ? kInf : a.mu_hi;
    r.mu = {a.mu_lo, mu_hi, Status::Converged};
    r.fmu = {a.fmu_lo, a.hi_unbounded && has_f ? kInf : a.fmu_hi, Status::Converged};
    r.cells = opt.budget - budget;
    if (!have_best || (r.mu.width() <= best.mu.width() &&
                       r.fmu.width() <= best.fmu.width())) {
      best = r;
      have_best = true;
    }
    if (first_lo < 0.0) first_lo = a.mu_lo;

    bool mu_ok = r.mu.width() <= opt.tol * std::max(r.mu.lo, kFloor);
    bool f_ok = !has_f || r.fmu.width() <= opt.tol * std::max(std::abs(r.fmu.mid()),
                                                              std::max(r.mu.lo, kFloor));
    if (mu_ok && f_ok) {
      r.status = Status::Converged;
      return r;
    }
    // divergence heuristic: lower bound runs away while the upper bound is
    // still unbounded by singular cells
    if (mu_hi == kInf &&
        a.mu_lo > opt.divergence_factor * std::max(1.0, first_lo)) {
      r.mu = {a.mu_lo, kInf, Status::Divergent};
      r.fmu = IntervalValue::divergent();
      r.status = Status::Divergent;
      return r;
    }
    if (budget <= 0) {
      best.status = Status::BudgetExceeded;
      return best;
    }
    slack = 0.25 * opt.tol * std::max(a.mu_lo, kFloor) / reg.area;
    L += 3;
    if (eng.ctx.max_depth >= opt.max_depth + depth_region && round > 2) {
      best.status = Status::BudgetExceeded;
      return best;
    }
  }
  best.status = Status::BudgetExceeded;
  return best;
}

RoundResult dispatch(const FractalSpec& spec, const Region& region, double alpha,
                     const CellRangeFn* f, const QuadratureOptions& opt) {
  RegionU reg = make_region_unit(spec, region);
  bool has_f = f && *f;
  RoundResult r;
  switch (spec.kind) {
    case FractalKind::Carpet: {
      if (std::abs(reg.c.x()) + reg.half > 39.0 ||
          std::abs(reg.c.y()) + reg.half > 39.0)
        throw std::invalid_argument("region outside the carpet working box");
      CarpetEngine eng;
      r = run_rounds(eng, spec, reg, alpha, f, opt, has_f);
      break;
    }
    case FractalKind::Gasket: {
      if (std::abs(reg.c.x()) + reg.half > 20.0 ||
          std::abs(reg.c.y()) + reg.half > 20.0)
        throw std::invalid_argument("region outside the gasket working box");
      GasketEngine eng;
      r = run_rounds(eng, spec, reg, alpha, f, opt, has_f);
      break;
    }
    case FractalKind::Koch: {
      KochEngine eng;
      r = run_rounds(eng, spec, reg, alpha, f, opt, has_f);
      break;
    }
  }
  // rescale unit-space result to ambient coordinates
  double sc = std::pow(spec.scale, 2.0 + alpha);
  if (sc != 1.0 && spec.kind != FractalKind::Koch) {
    r.mu.lo *= sc;
    r.mu.hi *= sc;
    r.fmu.lo *= sc;
    r.fmu.hi *= sc;
  }
  return r;
}

}  // namespace

MeasureEstimate mu_alpha_region(const FractalSpec& spec, const Region& region,
                                double alpha, const QuadratureOptions& opt) {
  RoundResult r = dispatch(spec, region, alpha, nullptr, opt);
  MeasureEstimate e;
  e.value = r.mu;
  e.value.status = r.status;
  if (r.status == Status::Divergent) e.value = IntervalValue::divergent();
  e.cells_used = r.cells;
  e.tolerance_requested = opt.tol;
  return e;
}

IntervalValue WeightedIntegral::average() const {
  if (measure.lo <= 0.0 || measure.status != Status::Converged)
    return {-kInf, kInf, measure.status};
  double a = integral.lo / measure.lo, b = integral.lo / measure.hi;
  double c = integral.hi / measure.lo, d = integral.hi / measure.hi;
  return {std::min(std::min(a, b), std::min(c, d)),
          std::max(std::max(a, b), std::max(c, d)), integral.status};
}

WeightedIntegral weighted_mu_alpha(const FractalSpec& spec, const Region& region,
                                   double alpha, const CellRangeFn& f_range,
                                   const QuadratureOptions& opt) {
  RoundResult r = dispatch(spec, region, alpha, &f_range, opt);
  WeightedIntegral w;
  w.integral = r.fmu;
  w.integral.status = r.status;
  w.measure = r.mu;
  w.measure.status = r.status;
  w.cells_used = r.cells;
  return w;
}

McEstimate mu_alpha_mc_oracle(const FractalSpec& spec, const Region& region,
                              double alpha, std::int64_t n_samples,
                              std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("mc oracle: n_samples >= 1");
  Rng rng = Rng(seed).split(0xACC0, 0);
  double area;
  Point2 c = region.center();
  double half = region.bounding_half();
  bool is_ball = region.kind == Region::Kind::BallKind;
  area = is_ball ? M_PI * half * half : 4.0 * half * half;

  const KochOracle* ko = spec.kind == FractalKind::Koch
                             ? &koch_oracle(spec, spec.koch_level)
                             : nullptr;

  double sum = 0.0, sum2 = 0.0;
  for (std::int64_t i = 0; i < n_samples; ++i) {
    Point2 p;
    for (;;) {
      p = Point2{rng.uniform(c.x() - half, c.x() + half),
                 rng.uniform(c.y() - half, c.y() + half)};
      if (!is_ball || (p - c).norm() <= half) break;
    }
    double v;
    if (ko) {
      // the polygon stands in for the limit domain here; the band error is
      // far below MC noise at the sample counts in use
      v = ko->polygon_contains(p)
              ? std::pow(std::max(ko->polygon_distance(p), 1e-300), alpha)
              : 0.0;
    } else {
      double d = spec.kind == FractalKind::Carpet ? carpet_distance(spec, p)
                                                  : gasket_distance(spec, p);
      v = std::pow(std::max(d, 1e-300), alpha);
    }
    sum += v;
    sum2 += v * v;
  }
  double mean = sum / double(n_samples);
  double var = std::max(0.0, sum2 / double(n_samples) - mean * mean);
  McEstimate e;
  e.mean = area * mean;
  e.stderr_ = area * std::sqrt(var / double(n_samples));
  e.n = n_samples;
  return e;
}

// --- grid square classification ----------------------------------------------

MeasureEstimate grid_square_measure_carpet(const FractalSpec& spec,
                                           const Square& s, double alpha,
                                           double tol) {
  // recover (k, m, n) from the square; must be a member of the S^k grid
  Square us{spec.to_unit(s.center), s.side / spec.scale};
  double k_real = -std::log(us.side) / std::log(3.0);
  int k = int(std::lround(k_real));
  double cell = std::pow(3.0, -double(k));
  if (k < 0 || std::abs(us.side - cell) > 1e-9 * cell)
    throw std::invalid_argument("not a grid square of any S^k");
  auto index_of = [&](double coord) {
    return std::llround(coord / cell - 0.5);
  };
  long long m = index_of(us.center.x());
  long long n = index_of(us.center.y());
  if (std::abs(us.center.x() - (double(m) + 0.5) * cell) > 1e-9 * cell ||
      std::abs(us.center.y() - (double(n) + 0.5) * cell) > 1e-9 * cell)
    throw std::invalid_argument("square center is not on the S^k grid");

  MeasureEstimate e;
  e.tolerance_requested = tol;
  double sc = std::pow(spec.scale, 2.0 + alpha);

  long long three_k = 1;
  for (int i = 0; i < k; ++i) three_k *= 3;
  bool inside_unit = m >= 0 && m < three_k && n >= 0 && n < three_k;
  if (inside_unit) {
    // walk digits most-significant first; the first (1,1) pair decides
    int first_center = -1;
    long long mm = m, nn = n, div = three_k / 3;
    for (int level = 1; level <= k; ++level) {
      int dm = div > 0 ? int(mm / div) : 0;
      int dn = div > 0 ? int(nn / div) : 0;
      if (dm == 1 && dn == 1) {
        first_center = level;
        break;
      }
      mm %= std::max<long long>(div, 1);
      nn %= std::max<long long>(div, 1);
      div /= 3;
    }
    if (first_center == -1) {
      // case (i): scaled copy of the carpet
      e.value = carpet_cell_measure(k, alpha);
      e.value.lo *= sc;
      e.value.hi *= sc;
      e.cells_used = 1;
      return e;
    }
    if (first_center == k) {
      // case (ii): the square is a generation-k hole
      e.value = hole_measure_carpet(k, alpha);
      e.value.lo *= sc;
      e.value.hi *= sc;
      e.cells_used = 1;
      return e;
    }
  }
  // case (iii): inside some larger hole, or outside the unit square
  QuadratureOptions opt;
  opt.tol = tol;
  return mu_alpha_region(spec, Region::of(s), alpha, opt);
}

}  // namespace ftl
