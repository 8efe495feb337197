#include "ftl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace ftl {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

double point_segment_distance(const Point2& p, const Point2& a, const Point2& b) {
  Point2 ab = b - a;
  double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  double t = clamp01((p - a).dot(ab) / len2);
  return (p - (a + t * ab)).norm();
}

// carpet digit -> lower-left offsets of the retained subsquares,
// row-major from the bottom-left, center skipped
constexpr int kCarpetIx[8] = {0, 1, 2, 0, 2, 0, 1, 2};
constexpr int kCarpetIy[8] = {0, 0, 0, 1, 1, 2, 2, 2};

const Point2 kTriA{0.0, 0.0};
const Point2 kTriB{1.0, 0.0};
const Point2 kTriC{0.5, 0.5 * kSqrt3};

}  // namespace

FractalSpec FractalSpec::carpet() {
  FractalSpec s;
  s.kind = FractalKind::Carpet;
  s.hausdorff_dim = std::log(8.0) / std::log(3.0);
  s.branching = 8;
  s.contraction = 1.0 / 3.0;
  return s;
}

FractalSpec FractalSpec::gasket() {
  FractalSpec s;
  s.kind = FractalKind::Gasket;
  s.hausdorff_dim = std::log(3.0) / std::log(2.0);
  s.branching = 3;
  s.contraction = 0.5;
  return s;
}

FractalSpec FractalSpec::koch(int level) {
  FractalSpec s;
  s.kind = FractalKind::Koch;
  s.hausdorff_dim = std::log(4.0) / std::log(3.0);
  s.branching = 4;
  s.contraction = 1.0 / 3.0;
  s.koch_level = level;
  return s;
}

Ball FractalSpec::ambient_ball() const {
  // carpet: centroid of [0,1]^2; gasket/koch: centroid of the base triangle.
  // Radius 2 keeps E inside (1/2)B for all three (max centroid distance is
  // sqrt(2)/2, sqrt(3)/3 and ~0.73 respectively).
  Point2 c = kind == FractalKind::Carpet ? Point2{0.5, 0.5}
                                         : Point2{0.5, kSqrt3 / 6.0};
  return Ball{from_unit(c), 2.0 * scale};
}

double FractalSpec::diam_bound() const {
  switch (kind) {
    case FractalKind::Carpet: return scale * std::sqrt(2.0);
    case FractalKind::Gasket: return scale * 1.0;
    case FractalKind::Koch: return scale * 1.5;  // K_0 diam 1 plus two bands
  }
  return 2.0 * scale;
}

// --- carpet ------------------------------------------------------------------

namespace {

// Ternary descent in unit coordinates.  Returns the exact distance; a point
// on a hole boundary yields 0 (the boundary belongs to the carpet).
double carpet_distance_unit(const Point2& p, int cap) {
  double cx = clamp01(p.x());
  double cy = clamp01(p.y());
  if (cx != p.x() || cy != p.y())
    return std::hypot(p.x() - cx, p.y() - cy);
  double x0 = 0.0, y0 = 0.0, s = 1.0;
  for (int k = 0; k < cap; ++k) {
    s /= 3.0;
    int ix = std::min(2, std::max(0, int((p.x() - x0) / s)));
    int iy = std::min(2, std::max(0, int((p.y() - y0) / s)));
    if (ix == 1 && iy == 1) {
      double hx0 = x0 + s, hx1 = x0 + 2.0 * s;
      double hy0 = y0 + s, hy1 = y0 + 2.0 * s;
      double d = std::min(std::min(p.x() - hx0, hx1 - p.x()),
                          std::min(p.y() - hy0, hy1 - p.y()));
      return std::max(d, 0.0);
    }
    x0 += ix * s;
    y0 += iy * s;
  }
  return 0.0;  // in E up to resolution 3^-cap
}

}  // namespace

double carpet_distance(const FractalSpec& spec, const Point2& p, int cap) {
  return spec.scale * carpet_distance_unit(spec.to_unit(p), cap);
}

bool carpet_contains(const FractalSpec& spec, const Point2& p, int cap) {
  return carpet_distance(spec, p, cap) == 0.0;
}

// --- gasket ------------------------------------------------------------------

namespace {

struct Bary {
  double a, b, c;
};

Bary barycentric(const Point2& p, const Point2& A, const Point2& B, const Point2& C) {
  Point2 v0 = B - A, v1 = C - A, v2 = p - A;
  double den = v0.x() * v1.y() - v1.x() * v0.y();
  double lb = (v2.x() * v1.y() - v1.x() * v2.y()) / den;
  double lc = (v0.x() * v2.y() - v2.x() * v0.y()) / den;
  return {1.0 - lb - lc, lb, lc};
}

double gasket_distance_unit(const Point2& p, int cap) {
  Point2 A = kTriA, B = kTriB, C = kTriC;
  Bary l = barycentric(p, A, B, C);
  if (l.a < 0.0 || l.b < 0.0 || l.c < 0.0) {
    // outside the closed base triangle; its boundary lies in the gasket
    return std::min({point_segment_distance(p, A, B),
                     point_segment_distance(p, B, C),
                     point_segment_distance(p, C, A)});
  }
  for (int k = 0; k < cap; ++k) {
    Point2 mab = 0.5 * (A + B), mbc = 0.5 * (B + C), mac = 0.5 * (A + C);
    if (l.a >= 0.5) {
      B = mab;
      C = mac;
    } else if (l.b >= 0.5) {
      A = mab;
      C = mbc;
    } else if (l.c >= 0.5) {
      A = mac;
      B = mbc;
    } else {
      // interior of the downward hole triangle (mab, mbc, mac)
      return std::min({point_segment_distance(p, mab, mbc),
                       point_segment_distance(p, mbc, mac),
                       point_segment_distance(p, mac, mab)});
    }
    l = barycentric(p, A, B, C);
  }
  return 0.0;
}

}  // namespace

double gasket_distance(const FractalSpec& spec, const Point2& p, int cap) {
  return spec.scale * gasket_distance_unit(spec.to_unit(p), cap);
}

bool gasket_contains(const FractalSpec& spec, const Point2& p, int cap) {
  return gasket_distance(spec, p, cap) == 0.0;
}

// --- Koch snowflake ----------------------------------------------------------

std::vector<Point2> koch_polygon(const FractalSpec& spec, int n) {
  if (n < 0) throw std::invalid_argument("koch_polygon: negative level");
  if (n > 10)
    throw std::runtime_error("koch_polygon: level exceeds memory budget (max 10)");
  std::vector<Point2> verts = {kTriA, kTriB, kTriC};
  for (int it = 0; it < n; ++it) {
    std::vector<Point2> next;
    next.reserve(verts.size() * 4);
    for (std::size_t i = 0; i < verts.size(); ++i) {
      const Point2& a = verts[i];
      const Point2& b = verts[(i + 1) % verts.size()];
      Point2 d = b - a;
      double len = d.norm();
      Point2 rn{d.y() / len, -d.x() / len};  // outward for a CCW polygon
      Point2 q1 = a + d / 3.0;
      Point2 apex = 0.5 * (a + b) + rn * (len * kSqrt3 / 6.0);
      Point2 q2 = a + 2.0 * d / 3.0;
      next.push_back(a);
      next.push_back(q1);
      next.push_back(apex);
      next.push_back(q2);
    }
    verts = std::move(next);
  }
  for (auto& v : verts) v = spec.from_unit(v);
  return verts;
}

KochOracle::KochOracle(const FractalSpec& spec, int level)
    : level_(level), band_(spec.scale * std::pow(3.0, -level)) {
  verts_ = koch_polygon(spec, level);
  verts_.push_back(verts_.front());  // close the loop
  int nseg = int(verts_.size()) - 1;
  nodes_.reserve(std::size_t(2 * nseg / 4 + 2));
  nodes_.push_back({});
  build(0, 0, nseg);
}

void KochOracle::build(int node, int begin, int end) {
  Node& n0 = nodes_[std::size_t(node)];
  n0.begin = begin;
  n0.end = end;
  double x0 = kInf, y0 = kInf, x1 = -kInf, y1 = -kInf;
  for (int i = begin; i <= end; ++i) {  // inclusive of the end vertex
    x0 = std::min(x0, verts_[std::size_t(i)].x());
    y0 = std::min(y0, verts_[std::size_t(i)].y());
    x1 = std::max(x1, verts_[std::size_t(i)].x());
    y1 = std::max(y1, verts_[std::size_t(i)].y());
  }
  n0.x0 = x0;
  n0.y0 = y0;
  n0.x1 = x1;
  n0.y1 = y1;
  if (end - begin <= 8) return;
  int mid = begin + (end - begin) / 2;
  int li = int(nodes_.size());
  nodes_.push_back({});
  int ri = int(nodes_.size());
  nodes_.push_back({});
  nodes_[std::size_t(node)].left = li;
  nodes_[std::size_t(node)].right = ri;
  build(li, begin, mid);
  build(ri, mid, end);
}

namespace {
double box_dist2(const Point2& p, double x0, double y0, double x1, double y1) {
  double dx = std::max({x0 - p.x(), 0.0, p.x() - x1});
  double dy = std::max({y0 - p.y(), 0.0, p.y() - y1});
  return dx * dx + dy * dy;
}
}  // namespace

double KochOracle::polygon_distance(const Point2& p) const {
  double best = kInf;
  int stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& n = nodes_[std::size_t(stack[--top])];
    if (box_dist2(p, n.x0, n.y0, n.x1, n.y1) >= best) continue;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        double d = point_segment_distance(p, verts_[std::size_t(i)],
                                          verts_[std::size_t(i) + 1]);
        best = std::min(best, d * d);
      }
    } else {
      // visit the nearer child first for tighter pruning
      const Node& l = nodes_[std::size_t(n.left)];
      const Node& r = nodes_[std::size_t(n.right)];
      double dl = box_dist2(p, l.x0, l.y0, l.x1, l.y1);
      double dr = box_dist2(p, r.x0, r.y0, r.x1, r.y1);
      if (dl < dr) {
        stack[top++] = n.right;
        stack[top++] = n.left;
      } else {
        stack[top++] = n.left;
        stack[top++] = n.right;
      }
    }
  }
  return std::sqrt(best);
}

bool KochOracle::polygon_contains(const Point2& p) const {
  // crossing parity of the upward vertical ray
  bool inside = false;
  int stack[64];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& n = nodes_[std::size_t(stack[--top])];
    if (p.x() < n.x0 || p.x() >= n.x1 || n.y1 <= p.y()) continue;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const Point2& a = verts_[std::size_t(i)];
        const Point2& b = verts_[std::size_t(i) + 1];
        if ((a.x() > p.x()) != (b.x() > p.x())) {
          double t = (p.x() - a.x()) / (b.x() - a.x());
          double yc = a.y() + t * (b.y() - a.y());
          if (yc > p.y()) inside = !inside;
        }
      }
    } else {
      stack[top++] = n.left;
      stack[top++] = n.right;
    }
  }
  return inside;
}

IntervalValue KochOracle::limit_distance(const Point2& p) const {
  double d = polygon_distance(p);
  return {std::max(0.0, d - band_), d + band_, Status::Converged};
}

SnowflakeSide KochOracle::side(const Point2& p) const {
  double d = polygon_distance(p);
  if (d <= band_) return SnowflakeSide::Unknown;
  return polygon_contains(p) ? SnowflakeSide::Inside : SnowflakeSide::Outside;
}

const KochOracle& koch_oracle(const FractalSpec& spec, int level) {
  struct Key {
    int level;
    double scale, ox, oy;
    bool operator<(const Key& o) const {
      return std::tie(level, scale, ox, oy) <
             std::tie(o.level, o.scale, o.ox, o.oy);
    }
  };
  static std::map<Key, std::unique_ptr<KochOracle>> cache;
  static std::mutex mu;
  Key key{level, spec.scale, spec.origin.x(), spec.origin.y()};
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it == cache.end()) {
    it = cache.emplace(key, std::make_unique<KochOracle>(spec, level)).first;
  }
  return *it->second;
}

IntervalValue koch_distance(const FractalSpec& spec, const Point2& p, int level) {
  return koch_oracle(spec, level).limit_distance(p);
}

SnowflakeSide inside_snowflake(const FractalSpec& spec, const Point2& p, int level) {
  return koch_oracle(spec, level).side(p);
}

IntervalValue distance_interval(const FractalSpec& spec, const Point2& p) {
  switch (spec.kind) {
    case FractalKind::Carpet:
      return IntervalValue::exact(carpet_distance(spec, p));
    case FractalKind::Gasket:
      return IntervalValue::exact(gasket_distance(spec, p));
    case FractalKind::Koch:
      return koch_distance(spec, p, spec.koch_level);
  }
  return IntervalValue::exact(0.0);
}

// --- addressing --------------------------------------------------------------

std::string Address::to_string() const {
  std::string s;
  s.reserve(digits.size());
  for (auto d : digits) s.push_back(char('0' + d));
  return s;
}

Address Address::parse(const std::string& s) {
  Address a;
  a.digits.reserve(s.size());
  for (char c : s) {
    if (c < '0' || c > '9')
      throw std::invalid_argument("Address::parse: bad digit character");
    a.digits.push_back(std::uint8_t(c - '0'));
  }
  return a;
}

namespace {

void check_digits(const FractalSpec& spec, const Address& a) {
  for (std::size_t i = 0; i < a.digits.size(); ++i) {
    int d = a.digits[i];
    int limit = spec.branching;
    if (spec.kind == FractalKind::Koch && i == 0) limit = 3;  // side selector
    if (d < 0 || d >= limit)
      throw std::invalid_argument("address digit out of range for fractal");
  }
}

}  // namespace

CellGeometry address_cell(const FractalSpec& spec, const Address& a) {
  check_digits(spec, a);
  CellGeometry g;
  switch (spec.kind) {
    case FractalKind::Carpet: {
      double x0 = 0.0, y0 = 0.0, s = 1.0;
      for (auto d : a.digits) {
        s /= 3.0;
        x0 += kCarpetIx[d] * s;
        y0 += kCarpetIy[d] * s;
      }
      g.anchor = Point2{x0, y0};
      g.bbox_min = g.anchor;
      g.bbox_max = Point2{x0 + s, y0 + s};
      break;
    }
    case FractalKind::Gasket: {
      const Point2 verts[3] = {kTriA, kTriB, kTriC};
      Point2 p{0.0, 0.0};
      double s = 1.0;
      for (auto d : a.digits) {
        s /= 2.0;
        p += verts[d] * s;
      }
      g.anchor = p;
      g.bbox_min = p;
      g.bbox_max = p + Point2{s, 0.5 * kSqrt3 * s};
      break;
    }
    case FractalKind::Koch: {
      if (a.digits.empty()) {
        g.anchor = kTriA;
        g.bbox_min = Point2{-0.5, -0.5};
        g.bbox_max = Point2{1.5, 0.5 * kSqrt3 + 0.5};
        break;
      }
      const Point2 verts[3] = {kTriA, kTriB, kTriC};
      Point2 sa = verts[a.digits[0]];
      Point2 sb = verts[(a.digits[0] + 1) % 3];
      for (std::size_t i = 1; i < a.digits.size(); ++i) {
        Point2 d = sb - sa;
        double len = d.norm();
        Point2 rn{d.y() / len, -d.x() / len};
        Point2 q1 = sa + d / 3.0;
        Point2 apex = 0.5 * (sa + sb) + rn * (len * kSqrt3 / 6.0);
        Point2 q2 = sa + 2.0 * d / 3.0;
        switch (a.digits[i]) {
          case 0: sb = q1; break;
          case 1: sa = q1; sb = apex; break;
          case 2: sa = apex; sb = q2; break;
          case 3: sa = q2; break;
        }
      }
      g.anchor = sa;
      // arc over (sa,sb) stays within (sqrt3/4)|sb-sa| of the segment
      double pad = 0.434 * (sb - sa).norm();
      g.bbox_min = Point2{std::min(sa.x(), sb.x()) - pad,
                          std::min(sa.y(), sb.y()) - pad};
      g.bbox_max = Point2{std::max(sa.x(), sb.x()) + pad,
                          std::max(sa.y(), sb.y()) + pad};
      break;
    }
  }
  g.anchor = spec.from_unit(g.anchor);
  g.bbox_min = spec.from_unit(g.bbox_min);
  g.bbox_max = spec.from_unit(g.bbox_max);
  return g;
}

Point2 address_to_point(const FractalSpec& spec, const Address& a) {
  return address_cell(spec, a).anchor;
}

std::int64_t cell_count(const FractalSpec& spec, int k) {
  if (k < 0) throw std::invalid_argument("cell_count: negative level");
  switch (spec.kind) {
    case FractalKind::Carpet: {
      std::int64_t n = 1;
      for (int i = 0; i < k; ++i) n *= 8;
      return n;
    }
    case FractalKind::Gasket: {
      std::int64_t n = 1;
      for (int i = 0; i < k; ++i) n *= 3;
      return n;
    }
    case FractalKind::Koch: {
      if (k == 0) return 1;
      std::int64_t n = 3;
      for (int i = 1; i < k; ++i) n *= 4;
      return n;
    }
  }
  return 1;
}

double cell_mass(const FractalSpec& spec, int k) {
  return 1.0 / double(cell_count(spec, k));
}

}  // namespace ftl
