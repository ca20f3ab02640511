#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "barseg/image.hpp"
#include "barseg/tensor.hpp"

namespace barseg {

struct Point {
  double x = 0, y = 0;
};

inline double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Andrew monotone chain. Returns the hull without interior collinear points;
// orientation is counterclockwise in (x right, y up) coordinates.
inline std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const Point& a, const Point& b) { return a.x == b.x && a.y == b.y; }),
            pts.end());
  const int n = static_cast<int>(pts.size());
  if (n <= 2) return pts;
  std::vector<Point> hull(2 * n);
  int k = 0;
  for (int i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (int i = n - 2, lower = k + 1; i >= 0; --i) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

// Minimum-area enclosing rectangle, min-area-rect convention: angle in
// [-90, 0) degrees, measured for the edge paired with `w`.
struct RotatedRect {
  double cx = 0, cy = 0;
  double w = 0, h = 0;
  double angle = -90.0;

  double area() const { return w * h; }

  std::array<Point, 4> corners() const {
    const double a = angle * 3.14159265358979323846 / 180.0;
    const Point wd{std::cos(a), std::sin(a)};
    const Point hd{-std::sin(a), std::cos(a)};
    const double hw = w / 2, hh = h / 2;
    return {Point{cx - wd.x * hw - hd.x * hh, cy - wd.y * hw - hd.y * hh},
            Point{cx + wd.x * hw - hd.x * hh, cy + wd.y * hw - hd.y * hh},
            Point{cx + wd.x * hw + hd.x * hh, cy + wd.y * hw + hd.y * hh},
            Point{cx - wd.x * hw + hd.x * hh, cy - wd.y * hw + hd.y * hh}};
  }

  bool contains(const Point& p, double eps = 1e-6) const {
    const double a = angle * 3.14159265358979323846 / 180.0;
    const double dx = p.x - cx, dy = p.y - cy;
    const double pu = dx * std::cos(a) + dy * std::sin(a);
    const double pv = -dx * std::sin(a) + dy * std::cos(a);
    return std::fabs(pu) <= w / 2 + eps && std::fabs(pv) <= h / 2 + eps;
  }
};

// Convex hull + caliper sweep: the optimal rectangle has one side collinear
// with a hull edge, so only hull-edge orientations are examined.
inline RotatedRect min_area_rect(const std::vector<Point>& points) {
  require(!points.empty(), "min_area_rect: empty point set");
  auto hull = convex_hull(points);
  if (hull.size() == 1) return RotatedRect{hull[0].x, hull[0].y, 0, 0, -90.0};

  double best_area = -1;
  double bu0 = 0, bu1 = 0, bv0 = 0, bv1 = 0;
  Point bdir{1, 0};
  Point banchor{hull[0].x, hull[0].y};
  const int n = static_cast<int>(hull.size());
  for (int i = 0; i < n; ++i) {
    const Point& a = hull[i];
    const Point& b = hull[(i + 1) % n];
    double len = std::hypot(b.x - a.x, b.y - a.y);
    if (len < 1e-12) continue;
    Point u{(b.x - a.x) / len, (b.y - a.y) / len};
    double u0 = 0, u1 = 0, v0 = 0, v1 = 0;
    bool first = true;
    for (const Point& p : hull) {
      double du = (p.x - a.x) * u.x + (p.y - a.y) * u.y;
      double dv = -(p.x - a.x) * u.y + (p.y - a.y) * u.x;
      if (first) {
        u0 = u1 = du;
        v0 = v1 = dv;
        first = false;
      } else {
        u0 = std::min(u0, du);
        u1 = std::max(u1, du);
        v0 = std::min(v0, dv);
        v1 = std::max(v1, dv);
      }
    }
    double area = (u1 - u0) * (v1 - v0);
    if (best_area < 0 || area < best_area) {
      best_area = area;
      bu0 = u0;
      bu1 = u1;
      bv0 = v0;
      bv1 = v1;
      bdir = u;
      banchor = a;
    }
  }

  const Point& a = banchor;
  const Point u = bdir;
  const Point v{-u.y, u.x};
  RotatedRect r;
  const double mu = (bu0 + bu1) / 2, mv = (bv0 + bv1) / 2;
  r.cx = a.x + u.x * mu + v.x * mv;
  r.cy = a.y + u.y * mu + v.y * mv;
  double theta = std::atan2(u.y, u.x) * 180.0 / 3.14159265358979323846;
  double t = std::fmod(theta + 360.0, 180.0);
  const double eu = bu1 - bu0, ev = bv1 - bv0;
  if (t < 90.0) {
    r.angle = t - 90.0;
    r.w = ev;
    r.h = eu;
  } else {
    r.angle = t - 180.0;
    r.w = eu;
    r.h = ev;
  }
  return r;
}

// Rotated rectangle to a full-resolution binary mask via center-of-pixel
// inclusion: pixel (y, x) is covered when point (x, y) lies in the rectangle.
inline Grid<std::uint8_t> rasterize_rect(const RotatedRect& r, int w, int h) {
  Grid<std::uint8_t> out(w, h, 0);
  auto cs = r.corners();
  double x0 = cs[0].x, x1 = cs[0].x, y0 = cs[0].y, y1 = cs[0].y;
  for (const auto& c : cs) {
    x0 = std::min(x0, c.x);
    x1 = std::max(x1, c.x);
    y0 = std::min(y0, c.y);
    y1 = std::max(y1, c.y);
  }
  int xa = std::max(0, static_cast<int>(std::floor(x0 - 1)));
  int xb = std::min(w - 1, static_cast<int>(std::ceil(x1 + 1)));
  int ya = std::max(0, static_cast<int>(std::floor(y0 - 1)));
  int yb = std::min(h - 1, static_cast<int>(std::ceil(y1 + 1)));
  for (int y = ya; y <= yb; ++y)
    for (int x = xa; x <= xb; ++x)
      if (r.contains(Point{static_cast<double>(x), static_cast<double>(y)})) out.at(y, x) = 1;
  return out;
}

// Report ordering: clockwise on screen (y down), starting from the
// topmost vertex, leftmost on ties.
inline std::array<Point, 4> ordered_corners(const RotatedRect& r) {
  auto cs = r.corners();
  // shoelace in screen coordinates: positive = clockwise on screen
  double s = 0;
  for (int i = 0; i < 4; ++i) {
    const Point& p = cs[i];
    const Point& q = cs[(i + 1) % 4];
    s += p.x * q.y - q.x * p.y;
  }
  std::array<Point, 4> cyc = cs;
  if (s < 0) cyc = {cs[0], cs[3], cs[2], cs[1]};
  int start = 0;
  for (int i = 1; i < 4; ++i)
    if (cyc[i].y < cyc[start].y - 1e-9 ||
        (std::fabs(cyc[i].y - cyc[start].y) <= 1e-9 && cyc[i].x < cyc[start].x))
      start = i;
  std::array<Point, 4> out;
  for (int i = 0; i < 4; ++i) out[i] = cyc[(start + i) % 4];
  return out;
}

}  // namespace barseg
