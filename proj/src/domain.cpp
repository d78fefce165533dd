#include "lamina/domain.hpp"

#include <cmath>
#include <deque>
#include <queue>

namespace lamina {

namespace {

double parse_disk_radius(const std::string& mask) {
  auto pos = mask.find(':');
  if (pos == std::string::npos || pos + 1 >= mask.size())
    throw Error(Errc::ConfigInvalid, "disk mask needs a radius, e.g. disk:0.9");
  try {
    double r = std::stod(mask.substr(pos + 1));
    if (r <= 0.0) throw Error(Errc::ConfigInvalid, "disk radius must be positive");
    return r;
  } catch (const std::invalid_argument&) {
    throw Error(Errc::ConfigInvalid, "unparseable disk radius in '" + mask + "'");
  }
}

}  // namespace

MetricDomain build_domain(const DomainConfig& cfg) {
  const int nx = cfg.grid.nx, ny = cfg.grid.ny;
  const double h = cfg.grid.h;
  if (h <= 0.0) throw Error(Errc::NonpositiveSpacing, "grid spacing must be > 0");
  if (nx < 2 || ny < 2) throw Error(Errc::ConfigInvalid, "grid must be at least 2x2");

  MetricDomain d;
  d.nx_ = nx;
  d.ny_ = ny;
  d.h_ = h;

  const std::size_t nn = d.nn();
  d.mask_.assign(nn, 0);
  d.rho_.assign(nn, 1.0);

  bool centered = cfg.mask.rfind("disk", 0) == 0 || cfg.metric == "poincare";
  if (centered) {
    d.origin_ = {-0.5 * h * (nx - 1), -0.5 * h * (ny - 1)};
  } else {
    d.origin_ = {0.5 * h, 0.5 * h};
  }

  if (cfg.mask == "rect") {
    for (std::size_t k = 0; k < nn; ++k) d.mask_[k] = 1;
  } else if (cfg.mask.rfind("disk", 0) == 0) {
    double r = parse_disk_radius(cfg.mask);
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i)
        if (norm(d.node_pos(i, j)) <= r) d.mask_[d.idx(i, j)] = 1;
  } else if (cfg.mask == "table") {
    if (cfg.mask_table.size() != nn)
      throw Error(Errc::ShapeMismatch, "mask table size does not match grid");
    d.mask_ = cfg.mask_table;
  } else {
    throw Error(Errc::ConfigInvalid, "unknown mask kind '" + cfg.mask + "'");
  }

  if (cfg.metric == "euclidean") {
    d.kind_ = MetricKind::Euclidean;
    d.riem_bound_ = cfg.riem_bound >= 0.0 ? cfg.riem_bound : 0.0;
    d.inj_radius_ = cfg.injectivity_radius > 0.0
                        ? cfg.injectivity_radius
                        : 0.5 * h * std::min(nx, ny);
  } else if (cfg.metric == "poincare") {
    d.kind_ = MetricKind::PoincareDisk;
    // keep the conformal factor bounded: clip to |p| <= 1 - 2h
    const double rmax = 1.0 - 2.0 * h;
    if (rmax <= 0.0) throw Error(Errc::ConfigInvalid, "grid too coarse for poincare clip");
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        int k = d.idx(i, j);
        Vec2 p = d.node_pos(i, j);
        double r2 = norm2(p);
        if (r2 > rmax * rmax) d.mask_[k] = 0;
        if (r2 < 1.0) d.rho_[k] = 2.0 / (1.0 - r2);
      }
    d.riem_bound_ = cfg.riem_bound >= 0.0 ? cfg.riem_bound : 1.0;
    d.inj_radius_ = cfg.injectivity_radius > 0.0 ? cfg.injectivity_radius : 1e9;
  } else if (cfg.metric == "table") {
    d.kind_ = MetricKind::Custom;
    if (cfg.rho_table.size() != nn)
      throw Error(Errc::ShapeMismatch, "rho table size does not match grid");
    for (std::size_t k = 0; k < nn; ++k) {
      if (d.mask_[k] && !(cfg.rho_table[k] > 0.0))
        throw Error(Errc::NonpositiveConformalFactor, "rho must be positive on the mask");
    }
    d.rho_ = cfg.rho_table;
    d.riem_bound_ = cfg.riem_bound >= 0.0 ? cfg.riem_bound : 0.0;
    d.inj_radius_ = cfg.injectivity_radius > 0.0
                        ? cfg.injectivity_radius
                        : 0.5 * h * std::min(nx, ny);
  } else {
    throw Error(Errc::ConfigInvalid, "unknown metric kind '" + cfg.metric + "'");
  }

  d.mask_nodes_.clear();
  for (std::size_t k = 0; k < nn; ++k)
    if (d.mask_[k]) d.mask_nodes_.push_back(int(k));
  if (d.mask_nodes_.empty()) throw Error(Errc::EmptyMask, "mask has no cells");

  // 4-connectivity of the mask
  {
    std::vector<std::uint8_t> seen(nn, 0);
    std::deque<int> q{d.mask_nodes_.front()};
    seen[q.front()] = 1;
    std::size_t cnt = 0;
    while (!q.empty()) {
      int k = q.front();
      q.pop_front();
      ++cnt;
      int i = k % nx, j = k / nx;
      const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
      for (int s = 0; s < 4; ++s) {
        int ii = i + di[s], jj = j + dj[s];
        if (d.in_mask(ii, jj) && !seen[d.idx(ii, jj)]) {
          seen[d.idx(ii, jj)] = 1;
          q.push_back(d.idx(ii, jj));
        }
      }
    }
    if (cnt != d.mask_nodes_.size())
      throw Error(Errc::DisconnectedMask, "mask is not 4-connected");
  }

  d.bdry_.assign(nn, 0);
  d.boundary_nodes_.clear();
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (!d.in_mask(i, j)) continue;
      int exposed = 0;
      if (!d.in_mask(i + 1, j)) ++exposed;
      if (!d.in_mask(i - 1, j)) ++exposed;
      if (!d.in_mask(i, j + 1)) ++exposed;
      if (!d.in_mask(i, j - 1)) ++exposed;
      if (exposed > 0) {
        d.bdry_[d.idx(i, j)] = std::uint8_t(exposed);
        d.boundary_nodes_.push_back(d.idx(i, j));
      }
    }

  return d;
}

double MetricDomain::rho_at(const Vec2& p) const {
  double fx = (p.x - origin_.x) / h_;
  double fy = (p.y - origin_.y) / h_;
  fx = std::clamp(fx, 0.0, double(nx_ - 1));
  fy = std::clamp(fy, 0.0, double(ny_ - 1));
  int i0 = std::min(int(fx), nx_ - 2);
  int j0 = std::min(int(fy), ny_ - 2);
  double tx = fx - i0, ty = fy - j0;
  double w[4] = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
  int ks[4] = {idx(i0, j0), idx(i0 + 1, j0), idx(i0, j0 + 1), idx(i0 + 1, j0 + 1)};
  double acc = 0.0, wacc = 0.0;
  for (int s = 0; s < 4; ++s) {
    if (mask_[ks[s]]) {
      acc += w[s] * rho_[ks[s]];
      wacc += w[s];
    }
  }
  if (wacc <= 0.0) {
    // off the mask: fall back to the plain bilinear value
    for (int s = 0; s < 4; ++s) acc += w[s] * rho_[ks[s]];
    return acc;
  }
  return acc / wacc;
}

bool MetricDomain::nearest_node(const Vec2& p, int& i, int& j) const {
  int ci = std::clamp(int(std::lround((p.x - origin_.x) / h_)), 0, nx_ - 1);
  int cj = std::clamp(int(std::lround((p.y - origin_.y) / h_)), 0, ny_ - 1);
  if (in_mask(ci, cj)) {
    i = ci;
    j = cj;
    return true;
  }
  for (int r = 1; r < std::max(nx_, ny_); ++r) {
    int best = -1;
    double bestd = 0.0;
    for (int dj = -r; dj <= r; ++dj)
      for (int di = -r; di <= r; ++di) {
        if (std::max(std::abs(di), std::abs(dj)) != r) continue;
        if (!in_mask(ci + di, cj + dj)) continue;
        double dd = dist(node_pos(ci + di, cj + dj), p);
        if (best < 0 || dd < bestd) {
          best = idx(ci + di, cj + dj);
          bestd = dd;
        }
      }
    if (best >= 0) {
      i = best % nx_;
      j = best / nx_;
      return true;
    }
  }
  return false;
}

double MetricDomain::mask_area_g() const {
  double A = 0.0;
  for (int k : mask_nodes_) A += rho_[k] * rho_[k] * h_ * h_;
  return A;
}

Form1 grad(const Form0& u, const MetricDomain& dom) {
  if (u.a.size() != dom.nn()) throw Error(Errc::ShapeMismatch, "grad: field size");
  Form1 g(dom.nn());
  const int nx = dom.nx(), ny = dom.ny();
  const double inv_h = 1.0 / dom.h();
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      int k = dom.idx(i, j);
      if (dom.has_hedge(i, j)) g.hx[k] = (u.a[k + 1] - u.a[k]) * inv_h;
      if (dom.has_vedge(i, j)) g.vy[k] = (u.a[k + nx] - u.a[k]) * inv_h;
    }
  return g;
}

Form0 divergence(const Form1& X, const MetricDomain& dom) {
  if (X.hx.size() != dom.nn()) throw Error(Errc::ShapeMismatch, "divergence: field size");
  Form0 d(dom.nn());
  const int nx = dom.nx(), ny = dom.ny();
  const double inv_h = 1.0 / dom.h();
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (!dom.in_mask(i, j)) continue;
      int k = dom.idx(i, j);
      double acc = 0.0;
      if (dom.has_hedge(i, j)) acc += X.hx[k];
      if (i > 0 && dom.has_hedge(i - 1, j)) acc -= X.hx[k - 1];
      if (dom.has_vedge(i, j)) acc += X.vy[k];
      if (j > 0 && dom.has_vedge(i, j - 1)) acc -= X.vy[k - nx];
      double r = dom.rho_idx(k);
      d.a[k] = acc * inv_h / (r * r);
    }
  return d;
}

Form2 curl(const Form1& X, const MetricDomain& dom) {
  const int nx = dom.nx(), ny = dom.ny();
  Form2 w(std::size_t(nx - 1) * std::size_t(ny - 1));
  const double inv_h = 1.0 / dom.h();
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      if (!(dom.has_hedge(i, j) && dom.has_hedge(i, j + 1) && dom.has_vedge(i, j) &&
            dom.has_vedge(i + 1, j)))
        continue;
      int k = dom.idx(i, j);
      double circ = X.hx[k] + X.vy[k + 1] - X.hx[k + nx] - X.vy[k];
      w.c[std::size_t(j) * (nx - 1) + i] = circ * inv_h;
    }
  return w;
}

double inner0(const Form0& u, const Form0& v, const MetricDomain& dom) {
  double s = 0.0;
  const double h2 = dom.h() * dom.h();
  for (int k : dom.mask_nodes()) {
    double r = dom.rho_idx(k);
    s += u.a[k] * v.a[k] * r * r * h2;
  }
  return s;
}

double inner1(const Form1& X, const Form1& Y, const MetricDomain& dom) {
  double s = 0.0;
  const double h2 = dom.h() * dom.h();
  const int nx = dom.nx(), ny = dom.ny();
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      int k = dom.idx(i, j);
      if (dom.has_hedge(i, j)) s += X.hx[k] * Y.hx[k] * h2;
      if (dom.has_vedge(i, j)) s += X.vy[k] * Y.vy[k] * h2;
    }
  return s;
}

Form0 metric_norm_1form(const Form1& X, const MetricDomain& dom) {
  Form0 out(dom.nn());
  const int nx = dom.nx(), ny = dom.ny();
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (!dom.in_mask(i, j)) continue;
      int k = dom.idx(i, j);
      double ax = 0.0;
      int cx = 0;
      if (dom.has_hedge(i, j)) { ax += X.hx[k]; ++cx; }
      if (i > 0 && dom.has_hedge(i - 1, j)) { ax += X.hx[k - 1]; ++cx; }
      if (cx) ax /= cx;
      double ay = 0.0;
      int cy = 0;
      if (dom.has_vedge(i, j)) { ay += X.vy[k]; ++cy; }
      if (j > 0 && dom.has_vedge(i, j - 1)) { ay += X.vy[k - nx]; ++cy; }
      if (cy) ay /= cy;
      out.a[k] = std::sqrt(ax * ax + ay * ay) / dom.rho_idx(k);
    }
  return out;
}

Form0 mass_density(const Form1& X, const MetricDomain& dom) {
  Form0 out(dom.nn());
  const int nx = dom.nx(), ny = dom.ny();
  const double h2 = dom.h() * dom.h();
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (!dom.in_mask(i, j)) continue;
      int k = dom.idx(i, j);
      double gx = dom.has_hedge(i, j) ? X.hx[k] : 0.0;
      double gy = dom.has_vedge(i, j) ? X.vy[k] : 0.0;
      out.a[k] = dom.rho_idx(k) * h2 * std::sqrt(gx * gx + gy * gy);
    }
  return out;
}

double total_mass(const Form1& X, const MetricDomain& dom) {
  Form0 m = mass_density(X, dom);
  double s = 0.0;
  for (int k : dom.mask_nodes()) s += m.a[k];
  return s;
}

namespace {

Polyline sample_segment(const Vec2& p, const Vec2& q, double step) {
  int n = std::max(1, int(std::ceil(dist(p, q) / step)));
  Polyline out;
  out.reserve(n + 1);
  for (int s = 0; s <= n; ++s) out.push_back(p + (q - p) * (double(s) / n));
  return out;
}

}  // namespace

Polyline geodesic_arc(const Vec2& p, const Vec2& q, const MetricDomain& dom, double step) {
  if (step <= 0.0) step = dom.h();
  if (dist(p, q) < 1e-14) throw Error(Errc::IdenticalEndpoints, "geodesic endpoints coincide");

  if (dom.metric_kind() == MetricKind::Euclidean) {
    Vec2 lo = dom.node_pos(0, 0), hi = dom.node_pos(dom.nx() - 1, dom.ny() - 1);
    auto inside = [&](const Vec2& a) {
      return a.x >= lo.x - dom.h() && a.x <= hi.x + dom.h() && a.y >= lo.y - dom.h() &&
             a.y <= hi.y + dom.h();
    };
    if (!inside(p) || !inside(q)) throw Error(Errc::OutsideDomain, "endpoint off the grid");
    return sample_segment(p, q, step);
  }
  if (dom.metric_kind() == MetricKind::Custom)
    throw Error(Errc::WrongMetric, "no closed-form geodesics for a tabulated metric");

  if (norm(p) >= 1.0 || norm(q) >= 1.0)
    throw Error(Errc::OutsideDomain, "hyperbolic endpoints must be inside the unit disk");

  // Geodesics are circular arcs orthogonal to the unit circle; through the
  // origin they degenerate to diameters. Orthogonality gives |c|^2 = R^2 + 1,
  // so a point p on the circle satisfies 2 c.p = |p|^2 + 1, linear in c.
  double denom = 2.0 * cross(p, q);
  double bp = norm2(p) + 1.0, bq = norm2(q) + 1.0;
  if (std::fabs(denom) < 1e-12 * (1.0 + bp + bq)) {
    return sample_segment(p, q, step);  // collinear with the origin
  }
  // solve 2 [p; q] c = [bp; bq]
  Vec2 c{(bp * q.y - bq * p.y) / denom, (bq * p.x - bp * q.x) / denom};
  double R = std::sqrt(std::max(norm2(c) - 1.0, 0.0));
  double a1 = std::atan2(p.y - c.y, p.x - c.x);
  double a2 = std::atan2(q.y - c.y, q.x - c.x);
  double da = a2 - a1;
  while (da > M_PI) da -= 2.0 * M_PI;
  while (da < -M_PI) da += 2.0 * M_PI;
  int n = std::max(1, int(std::ceil(std::fabs(da) * R / step)));
  Polyline out;
  out.reserve(n + 1);
  for (int s = 0; s <= n; ++s) {
    double a = a1 + da * double(s) / n;
    out.push_back({c.x + R * std::cos(a), c.y + R * std::sin(a)});
  }
  out.front() = p;
  out.back() = q;
  return out;
}

std::pair<double, double> poincare_ideal_endpoints(const Vec2& p, const Vec2& v) {
  if (norm(p) >= 1.0) throw Error(Errc::OutsideDomain, "point outside the unit disk");
  if (norm(v) == 0.0) throw Error(Errc::ConfigInvalid, "zero direction");
  Vec2 t = normalized(v);
  // center of the orthogonal circle lies along the normal: c = p + s * rot(t),
  // with |c|^2 = R^2 + 1 and R = |c - p| forcing s = (1 - |p|^2) / (2 p.rot(t))
  double pn = dot(p, rot_ccw(t));
  double th1, th2;
  if (std::fabs(pn) < 1e-12) {
    // diameter
    th1 = std::atan2(t.y, t.x);
    th2 = th1 + M_PI;
  } else {
    double s = (1.0 - norm2(p)) / (2.0 * pn);
    Vec2 c = p + rot_ccw(t) * s;
    double cn2 = norm2(c);
    // intersection of |x| = 1 with the radical line x.c = 1
    double tt = std::sqrt(std::max(1.0 - 1.0 / cn2, 0.0));
    Vec2 base = c / cn2;
    Vec2 side = rot_ccw(c) * (tt / std::sqrt(cn2));
    Vec2 e1 = base + side, e2 = base - side;
    th1 = std::atan2(e1.y, e1.x);
    th2 = std::atan2(e2.y, e2.x);
  }
  th1 = wrap_angle(th1);
  th2 = wrap_angle(th2);
  if (th1 > th2) std::swap(th1, th2);
  return {th1, th2};
}

double polyline_length_g(const Polyline& poly, const MetricDomain& dom) {
  double L = 0.0;
  const double sub = 0.5 * dom.h();
  for (std::size_t s = 1; s < poly.size(); ++s) {
    double d = dist(poly[s - 1], poly[s]);
    if (d == 0.0) continue;
    int n = std::max(1, int(std::ceil(d / sub)));
    for (int t = 0; t < n; ++t) {
      Vec2 mid = poly[s - 1] + (poly[s] - poly[s - 1]) * ((t + 0.5) / n);
      L += (d / n) * dom.rho_at(mid);
    }
  }
  return L;
}

PathResult graph_shortest_path(const MetricDomain& dom, const Vec2& a, const Vec2& b) {
  int ia, ja, ib, jb;
  if (!dom.nearest_node(a, ia, ja) || !dom.nearest_node(b, ib, jb))
    throw Error(Errc::OutsideDomain, "no mask node near an endpoint");
  const int nx = dom.nx();
  const std::size_t nn = dom.nn();
  std::vector<double> distv(nn, std::numeric_limits<double>::infinity());
  std::vector<int> prev(nn, -1);
  using QE = std::pair<double, int>;
  std::priority_queue<QE, std::vector<QE>, std::greater<QE>> pq;
  int src = dom.idx(ia, ja), dst = dom.idx(ib, jb);
  distv[src] = 0.0;
  pq.push({0.0, src});
  const int di[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  const int dj[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  const double hh = dom.h();
  while (!pq.empty()) {
    auto [dcur, k] = pq.top();
    pq.pop();
    if (dcur > distv[k]) continue;
    if (k == dst) break;
    int i = k % nx, j = k / nx;
    double rk = dom.rho_idx(k);
    for (int s = 0; s < 8; ++s) {
      int ii = i + di[s], jj = j + dj[s];
      if (!dom.in_mask(ii, jj)) continue;
      int k2 = dom.idx(ii, jj);
      double steplen = (s < 4 ? hh : hh * M_SQRT2);
      double w = steplen * 0.5 * (rk + dom.rho_idx(k2));
      if (dcur + w < distv[k2]) {
        distv[k2] = dcur + w;
        prev[k2] = k;
        pq.push({distv[k2], k2});
      }
    }
  }
  if (!std::isfinite(distv[dst]))
    throw Error(Errc::DisconnectedMask, "endpoints not connected in the mask graph");
  PathResult res;
  res.length = distv[dst];
  for (int k = dst; k != -1; k = prev[k]) res.points.push_back(dom.node_pos(k % nx, k / nx));
  std::reverse(res.points.begin(), res.points.end());
  return res;
}

double gauss_curvature(const MetricDomain& dom, int i, int j) {
  if (!(dom.in_mask(i - 1, j) && dom.in_mask(i + 1, j) && dom.in_mask(i, j - 1) &&
        dom.in_mask(i, j + 1) && dom.in_mask(i, j)))
    throw Error(Errc::OutsideDomain, "curvature needs a full interior stencil");
  auto lg = [&](int ii, int jj) { return std::log(dom.rho(ii, jj)); };
  double h2 = dom.h() * dom.h();
  double lap = (lg(i + 1, j) + lg(i - 1, j) + lg(i, j + 1) + lg(i, j - 1) - 4.0 * lg(i, j)) / h2;
  double r = dom.rho(i, j);
  return -lap / (r * r);
}

}  // namespace lamina
