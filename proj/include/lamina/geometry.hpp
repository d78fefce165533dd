#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace lamina {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double xx, double yy) : x(xx), y(yy) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
  Vec2& operator-=(const Vec2& o) { x -= o.x; y -= o.y; return *this; }
};

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline double norm2(const Vec2& a) { return a.x * a.x + a.y * a.y; }
inline double norm(const Vec2& a) { return std::sqrt(norm2(a)); }
inline double dist(const Vec2& a, const Vec2& b) { return norm(a - b); }

inline Vec2 normalized(const Vec2& a) {
  double n = norm(a);
  return n > 0.0 ? a / n : Vec2{0.0, 0.0};
}

// quarter turns; rot_cw(tangent) points to the side kept on the right when walking along tangent
inline Vec2 rot_ccw(const Vec2& a) { return {-a.y, a.x}; }
inline Vec2 rot_cw(const Vec2& a) { return {a.y, -a.x}; }

using Polyline = std::vector<Vec2>;

inline double polyline_length(const Polyline& p) {
  double L = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i) L += dist(p[i - 1], p[i]);
  return L;
}

inline double point_segment_dist(const Vec2& p, const Vec2& a, const Vec2& b) {
  Vec2 ab = b - a;
  double L2 = norm2(ab);
  if (L2 == 0.0) return dist(p, a);
  double t = std::clamp(dot(p - a, ab) / L2, 0.0, 1.0);
  return dist(p, a + ab * t);
}

inline double point_polyline_dist(const Vec2& p, const Polyline& poly) {
  double d = std::numeric_limits<double>::infinity();
  if (poly.size() == 1) return dist(p, poly[0]);
  for (std::size_t i = 1; i < poly.size(); ++i)
    d = std::min(d, point_segment_dist(p, poly[i - 1], poly[i]));
  return d;
}

// directed sample-based Hausdorff; symmetric wrapper below
inline double hausdorff_directed(const Polyline& a, const Polyline& b) {
  double worst = 0.0;
  for (const Vec2& p : a) worst = std::max(worst, point_polyline_dist(p, b));
  return worst;
}

inline double hausdorff_distance(const Polyline& a, const Polyline& b) {
  return std::max(hausdorff_directed(a, b), hausdorff_directed(b, a));
}

// proper crossing test, touching endpoints do not count
inline bool segments_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  double d1 = cross(b - a, c - a);
  double d2 = cross(b - a, d - a);
  double d3 = cross(d - c, a - c);
  double d4 = cross(d - c, b - c);
  return ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0)) &&
         d1 != 0.0 && d2 != 0.0 && d3 != 0.0 && d4 != 0.0;
}

// signed curvature from three points (Menger), positive when turning left
inline double menger_curvature(const Vec2& p, const Vec2& q, const Vec2& r) {
  double a = dist(p, q), b = dist(q, r), c = dist(r, p);
  if (a * b * c == 0.0) return 0.0;
  return 2.0 * cross(q - p, r - q) / (a * b * c);
}

inline void simplify_rec(const Polyline& in, std::size_t lo, std::size_t hi, double tol,
                         std::vector<char>& keep) {
  if (hi <= lo + 1) return;
  double worst = -1.0;
  std::size_t arg = lo;
  for (std::size_t i = lo + 1; i < hi; ++i) {
    double d = point_segment_dist(in[i], in[lo], in[hi]);
    if (d > worst) { worst = d; arg = i; }
  }
  if (worst > tol) {
    keep[arg] = 1;
    simplify_rec(in, lo, arg, tol, keep);
    simplify_rec(in, arg, hi, tol, keep);
  }
}

// Douglas-Peucker
inline Polyline simplify_polyline(const Polyline& in, double tol) {
  if (in.size() < 3) return in;
  std::vector<char> keep(in.size(), 0);
  keep.front() = keep.back() = 1;
  simplify_rec(in, 0, in.size() - 1, tol, keep);
  Polyline out;
  for (std::size_t i = 0; i < in.size(); ++i)
    if (keep[i]) out.push_back(in[i]);
  return out;
}

// uniform arclength resampling, n >= 2 output points
inline Polyline resample_polyline(const Polyline& in, std::size_t n) {
  if (in.size() < 2 || n < 2) return in;
  double total = polyline_length(in);
  Polyline out;
  out.reserve(n);
  out.push_back(in.front());
  double step = total / double(n - 1);
  double want = step;
  double acc = 0.0;
  std::size_t seg = 1;
  while (out.size() < n - 1 && seg < in.size()) {
    double d = dist(in[seg - 1], in[seg]);
    if (acc + d >= want && d > 0.0) {
      double t = (want - acc) / d;
      out.push_back(in[seg - 1] + (in[seg] - in[seg - 1]) * t);
      want += step;
    } else {
      acc += d;
      ++seg;
    }
  }
  while (out.size() < n) out.push_back(in.back());
  return out;
}

inline double wrap_angle(double a) {
  const double two_pi = 2.0 * M_PI;
  a = std::fmod(a, two_pi);
  if (a < 0.0) a += two_pi;
  return a;
}

// absolute difference of angles mod 2pi, in [0, pi]
inline double angle_dist(double a, double b) {
  double d = std::fabs(wrap_angle(a) - wrap_angle(b));
  return std::min(d, 2.0 * M_PI - d);
}

// angle between directions where v and -v are the same line, in [0, pi/2]
inline double line_angle_dist(const Vec2& a, const Vec2& b) {
  double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  double c = std::fabs(dot(a, b)) / (na * nb);
  return std::acos(std::clamp(c, 0.0, 1.0));
}

}  // namespace lamina
