#include "lamina/lamination.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <unordered_map>

#include "lamina/error.hpp"

namespace lamina {

namespace {

struct Seg {
  Vec2 a, b;
};

// crossing points lie on lattice edges and adjacent squares compute them from
// the same corner values, so quantized keys match exactly
std::int64_t point_key(const MetricDomain& dom, const Vec2& p) {
  double s = 4096.0 / dom.h();
  std::int64_t kx = llround((p.x - dom.origin().x) * s);
  std::int64_t ky = llround((p.y - dom.origin().y) * s);
  return kx * 0x100000001LL + ky;
}

// marching squares on node-centered samples; emits directed segments with
// {v > y} on the left of the walking direction
std::vector<Seg> level_segments(const MetricDomain& dom, const std::vector<double>& v,
                                double y) {
  std::vector<Seg> out;
  const int nx = dom.nx(), ny = dom.ny();
  const double h = dom.h();
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      if (!dom.in_mask(i, j) || !dom.in_mask(i + 1, j) || !dom.in_mask(i, j + 1) ||
          !dom.in_mask(i + 1, j + 1))
        continue;
      double va = v[dom.idx(i, j)] - y;
      double vb = v[dom.idx(i + 1, j)] - y;
      double vc = v[dom.idx(i + 1, j + 1)] - y;
      double vd = v[dom.idx(i, j + 1)] - y;
      int code = (va > 0.0 ? 1 : 0) | (vb > 0.0 ? 2 : 0) | (vc > 0.0 ? 4 : 0) |
                 (vd > 0.0 ? 8 : 0);
      if (code == 0 || code == 15) continue;
      Vec2 p0 = dom.node_pos(i, j);
      auto B = [&] { return Vec2{p0.x + h * (va / (va - vb)), p0.y}; };
      auto R = [&] { return Vec2{p0.x + h, p0.y + h * (vb / (vb - vc))}; };
      auto T = [&] { return Vec2{p0.x + h * (vd / (vd - vc)), p0.y + h}; };
      auto L = [&] { return Vec2{p0.x, p0.y + h * (va / (va - vd))}; };
      switch (code) {
        case 1: out.push_back({B(), L()}); break;
        case 2: out.push_back({R(), B()}); break;
        case 3: out.push_back({R(), L()}); break;
        case 4: out.push_back({T(), R()}); break;
        case 5:
          if (va + vb + vc + vd > 0.0) {
            out.push_back({B(), R()});
            out.push_back({T(), L()});
          } else {
            out.push_back({B(), L()});
            out.push_back({T(), R()});
          }
          break;
        case 6: out.push_back({T(), B()}); break;
        case 7: out.push_back({T(), L()}); break;
        case 8: out.push_back({L(), T()}); break;
        case 9: out.push_back({B(), T()}); break;
        case 10:
          if (va + vb + vc + vd > 0.0) {
            out.push_back({L(), B()});
            out.push_back({R(), T()});
          } else {
            out.push_back({R(), B()});
            out.push_back({L(), T()});
          }
          break;
        case 11: out.push_back({R(), T()}); break;
        case 12: out.push_back({L(), R()}); break;
        case 13: out.push_back({B(), R()}); break;
        case 14: out.push_back({L(), B()}); break;
        default: break;
      }
    }
  return out;
}

struct Chain {
  Polyline pts;
  bool closed = false;
};

std::vector<Chain> chain_segments(const MetricDomain& dom, const std::vector<Seg>& segs) {
  std::unordered_map<std::int64_t, std::vector<std::size_t>> by_start;
  by_start.reserve(segs.size() * 2);
  for (std::size_t s = 0; s < segs.size(); ++s)
    by_start[point_key(dom, segs[s].a)].push_back(s);
  std::vector<char> used(segs.size(), 0);

  auto take_from = [&](std::int64_t key) -> std::ptrdiff_t {
    auto it = by_start.find(key);
    if (it == by_start.end()) return -1;
    for (std::size_t s : it->second)
      if (!used[s]) return std::ptrdiff_t(s);
    return -1;
  };

  std::vector<Chain> chains;
  for (std::size_t seed = 0; seed < segs.size(); ++seed) {
    if (used[seed]) continue;
    used[seed] = 1;
    Chain c;
    c.pts.push_back(segs[seed].a);
    c.pts.push_back(segs[seed].b);
    std::int64_t start_key = point_key(dom, segs[seed].a);
    for (;;) {
      std::int64_t k = point_key(dom, c.pts.back());
      if (k == start_key) {
        c.closed = true;
        break;
      }
      std::ptrdiff_t nxt = take_from(k);
      if (nxt < 0) break;
      used[nxt] = 1;
      c.pts.push_back(segs[nxt].b);
    }
    if (!c.closed) {
      // extend backward: find segments ending at the chain head
      for (;;) {
        std::int64_t k = point_key(dom, c.pts.front());
        std::ptrdiff_t prev = -1;
        for (std::size_t s = 0; s < segs.size() && prev < 0; ++s)
          if (!used[s] && point_key(dom, segs[s].b) == k) prev = std::ptrdiff_t(s);
        if (prev < 0) break;
        used[prev] = 1;
        c.pts.insert(c.pts.begin(), segs[prev].a);
      }
    }
    chains.push_back(std::move(c));
  }
  return chains;
}

void fill_normals(Leaf& leaf) {
  std::size_t n = leaf.poly.size();
  leaf.normal.assign(n, Vec2{0.0, 0.0});
  if (n < 2) return;
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 t;
    if (leaf.closed && n > 2) {
      const Vec2& prev = i == 0 ? leaf.poly[n - 2] : leaf.poly[i - 1];
      const Vec2& next = i + 1 == n ? leaf.poly[1] : leaf.poly[i + 1];
      t = next - prev;
    } else if (i == 0) {
      t = leaf.poly[1] - leaf.poly[0];
    } else if (i + 1 == n) {
      t = leaf.poly[n - 1] - leaf.poly[n - 2];
    } else {
      t = leaf.poly[i + 1] - leaf.poly[i - 1];
    }
    Vec2 nrm = leaf.kind == LeafKind::Superlevel ? rot_ccw(t) : rot_cw(t);
    leaf.normal[i] = normalized(nrm);
  }
}

// resampled polyline and its signed euclidean curvature at every kept vertex;
// interior vertices only for open curves, wraparound for closed ones
struct CurvSamples {
  Polyline pts;
  std::vector<std::size_t> index;  // vertices carrying a curvature value
  std::vector<double> kappa_e;
  bool closed = false;
};

CurvSamples euclid_curvature(const Polyline& poly, double h) {
  CurvSamples cs;
  cs.closed = poly.size() > 3 && dist(poly.front(), poly.back()) < 1e-12;
  Polyline s = simplify_polyline(poly, 0.25 * h);
  double len = polyline_length(s);
  std::size_t n = std::max<std::size_t>(5, std::size_t(len / (2.0 * h)) + 2);
  cs.pts = resample_polyline(s, n);
  n = cs.pts.size();
  if (n < 3) return cs;
  std::size_t lo = cs.closed ? 0 : 1;
  std::size_t hi = cs.closed ? n - 1 : n - 1;
  for (std::size_t i = lo; i < hi; ++i) {
    const Vec2& prev = (i == 0) ? cs.pts[n - 2] : cs.pts[i - 1];
    const Vec2& next = cs.pts[i + 1];
    cs.index.push_back(i);
    cs.kappa_e.push_back(menger_curvature(prev, cs.pts[i], next));
  }
  return cs;
}

double coincidence_tol(const MetricDomain& dom) { return 2.0 * dom.h(); }

Leaf make_leaf(Polyline pts, bool closed, double y, LeafKind kind, const MetricDomain& dom,
               const ExtractOptions& opts) {
  Leaf leaf;
  leaf.poly = simplify_polyline(pts, opts.simplify_tol_cells * dom.h());
  leaf.label = y;
  leaf.kind = kind;
  leaf.closed = closed;
  fill_normals(leaf);
  if (leaf.poly.size() >= 5) {
    leaf.curvature = leaf_curvature(leaf, dom);
    for (double k : leaf.curvature)
      leaf.sup_curvature = std::max(leaf.sup_curvature, std::fabs(k));
  }
  return leaf;
}

}  // namespace

std::vector<double> leaf_curvature(const Leaf& leaf, const MetricDomain& dom) {
  if (leaf.poly.size() < 5) throw Error(Errc::TooShort, "need at least 5 vertices");
  CurvSamples cs = euclid_curvature(leaf.poly, dom.h());
  std::vector<double> out;
  out.reserve(cs.index.size());
  double h = dom.h();
  for (std::size_t q = 0; q < cs.index.size(); ++q) {
    std::size_t i = cs.index[q];
    const Vec2& p = cs.pts[i];
    const Vec2& prev = (i == 0) ? cs.pts[cs.pts.size() - 2] : cs.pts[i - 1];
    const Vec2& next = cs.pts[i + 1];
    Vec2 nu = normalized(rot_ccw(next - prev));
    // connection term for the conformal metric, central differences of log rho
    double rp = dom.rho_at(p + nu * h);
    double rm = dom.rho_at(p - nu * h);
    double dlog = (std::log(rp) - std::log(rm)) / (2.0 * h);
    out.push_back((cs.kappa_e[q] - dlog) / dom.rho_at(p));
  }
  return out;
}

std::vector<Leaf> extract_leaves(const MetricDomain& dom, const Form0& u,
                                 const std::vector<double>& thresholds,
                                 const ExtractOptions& opts, ExtractReport* report) {
  if (u.a.size() != dom.nn()) throw Error(Errc::ShapeMismatch, "field size != node count");
  double umin = std::numeric_limits<double>::infinity(), umax = -umin;
  for (int k : dom.mask_nodes()) {
    umin = std::min(umin, u.a[k]);
    umax = std::max(umax, u.a[k]);
  }
  std::vector<double> neg(u.a.size());
  for (std::size_t k = 0; k < u.a.size(); ++k) neg[k] = -u.a[k];

  ExtractReport rep;
  std::vector<Leaf> leaves;
  double min_len = opts.min_len_cells * dom.h();
  bool saw_contour = false;

  for (double y : thresholds) {
    // the extremes stay legal: a sublevel boundary at the top value is the
    // plateau-edge leaf that bounds no superlevel set
    if (y < umin || y > umax)
      throw Error(Errc::ThresholdOutOfRange, "threshold outside the value range");

    std::vector<Leaf> supers;
    for (auto& c : chain_segments(dom, level_segments(dom, u.a, y))) {
      saw_contour = true;
      if (polyline_length(c.pts) < min_len) {
        ++rep.dropped_degenerate;
        continue;
      }
      supers.push_back(make_leaf(std::move(c.pts), c.closed, y, LeafKind::Superlevel, dom, opts));
    }
    std::vector<Leaf> subs;
    if (opts.both_kinds) {
      for (auto& c : chain_segments(dom, level_segments(dom, neg, -y))) {
        saw_contour = true;
        if (polyline_length(c.pts) < min_len) {
          ++rep.dropped_degenerate;
          continue;
        }
        Leaf lf = make_leaf(std::move(c.pts), c.closed, y, LeafKind::Sublevel, dom, opts);
        // generically both families trace the same curve; keep the sublevel
        // copy only where it bounds a plateau no superlevel set sees
        bool dup = false;
        for (const Leaf& s : supers)
          if (hausdorff_distance(lf.poly, s.poly) <= coincidence_tol(dom)) {
            dup = true;
            break;
          }
        if (!dup) subs.push_back(std::move(lf));
      }
    }
    for (auto& l : supers) leaves.push_back(std::move(l));
    for (auto& l : subs) leaves.push_back(std::move(l));
  }
  if (leaves.empty()) {
    if (saw_contour)
      throw Error(Errc::DegenerateContour, "all contours shorter than the length floor");
    throw Error(Errc::DegenerateContour, "no contour found at any requested threshold");
  }
  if (report) *report = rep;
  return leaves;
}

std::vector<double> select_thresholds(const MetricDomain& dom, const Form0& u, int count,
                                      double mass_floor_rel) {
  if (u.a.size() != dom.nn()) throw Error(Errc::ShapeMismatch, "field size != node count");
  if (count < 1) throw Error(Errc::ConfigInvalid, "threshold count must be positive");
  Form0 m = mass_density(grad(u, dom), dom);
  double mmax = 0.0;
  for (int k : dom.mask_nodes()) mmax = std::max(mmax, m.a[k]);
  if (mmax <= 0.0) return {};
  double floor_v = mass_floor_rel * mmax;

  // value -> carried mass, so plateaus do not eat the threshold budget
  std::map<double, double> mass_at;
  double total = 0.0;
  for (int k : dom.mask_nodes())
    if (m.a[k] > floor_v) {
      mass_at[u.a[k]] += m.a[k];
      total += m.a[k];
    }
  if (mass_at.empty() || total <= 0.0) return {};

  double umin = std::numeric_limits<double>::infinity(), umax = -umin;
  for (int k : dom.mask_nodes()) {
    umin = std::min(umin, u.a[k]);
    umax = std::max(umax, u.a[k]);
  }

  std::vector<std::pair<double, double>> cum;  // value, cumulative mass
  double acc = 0.0;
  for (auto& [v, w] : mass_at) {
    acc += w;
    cum.push_back({v, acc});
  }
  std::vector<double> out;
  for (int q = 0; q < count; ++q) {
    double target = (q + 0.5) / count * total;
    std::size_t i = 0;
    while (i + 1 < cum.size() && cum[i].second < target) ++i;
    // place the cut between distinct carried values so it separates them
    double lo = cum[i].first;
    double hi = i + 1 < cum.size() ? cum[i + 1].first : cum[i].first;
    double y = i + 1 < cum.size() ? 0.5 * (lo + hi)
                                  : (i > 0 ? 0.5 * (cum[i - 1].first + lo) : lo);
    if (y > umin && y < umax && (out.empty() || std::fabs(y - out.back()) > 1e-15))
      out.push_back(y);
  }
  return out;
}

DisjointnessReport check_disjointness(const std::vector<Leaf>& leaves) {
  if (leaves.size() < 2) throw Error(Errc::TooFewItems, "need at least 2 leaves");
  DisjointnessReport rep;
  rep.min_distance = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < leaves.size(); ++a)
    for (std::size_t b = a + 1; b < leaves.size(); ++b) {
      const Polyline& pa = leaves[a].poly;
      const Polyline& pb = leaves[b].poly;
      for (const Vec2& p : pa) rep.min_distance = std::min(rep.min_distance, point_polyline_dist(p, pb));
      for (const Vec2& p : pb) rep.min_distance = std::min(rep.min_distance, point_polyline_dist(p, pa));
      for (std::size_t s = 1; s < pa.size(); ++s)
        for (std::size_t t = 1; t < pb.size(); ++t)
          if (segments_cross(pa[s - 1], pa[s], pb[t - 1], pb[t])) {
            rep.disjoint = false;
            // report the crossing location, found by midpoint of the overlap
            Vec2 d1 = pa[s] - pa[s - 1], d2 = pb[t] - pb[t - 1];
            double den = cross(d1, d2);
            double tt = den != 0.0 ? cross(pb[t - 1] - pa[s - 1], d2) / den : 0.5;
            rep.crossings.push_back(pa[s - 1] + d1 * tt);
          }
    }
  return rep;
}

TubeReport tube_check(const Leaf& leaf, const MetricDomain& dom) {
  TubeReport rep;
  CurvSamples cs = euclid_curvature(leaf.poly, dom.h());
  if (cs.pts.size() < 3) return rep;
  double A = 0.0;
  for (double k : cs.kappa_e) A = std::max(A, std::fabs(k));
  double h = dom.h();
  double w = std::min(1.0, A > 1e-9 ? 0.125 / A : 1.0);
  if (w < 4.0 * h) w = 4.0 * h;

  std::size_t n = cs.pts.size();
  std::size_t stride = std::max<std::size_t>(1, n / 16);
  for (std::size_t q = 1; q + 1 < n; q += stride) {
    Vec2 base = cs.pts[q];
    Vec2 t = normalized(cs.pts[q + 1] - cs.pts[q - 1]);
    Vec2 nu = rot_ccw(t);
    ++rep.windows;
    bool failed = false;
    for (int dir = -1; dir <= 1 && !failed; dir += 2) {
      double prev_xi = 0.0, prev_f = 0.0;
      for (std::size_t step = 1; step < n; ++step) {
        std::ptrdiff_t i = std::ptrdiff_t(q) + dir * std::ptrdiff_t(step);
        if (cs.closed) {
          i = (i % std::ptrdiff_t(n - 1) + std::ptrdiff_t(n - 1)) % std::ptrdiff_t(n - 1);
        } else if (i < 0 || i >= std::ptrdiff_t(n)) {
          break;
        }
        Vec2 d = cs.pts[i] - base;
        double xi = dot(d, t), f = dot(d, nu);
        if (std::fabs(xi) > w) break;
        // the leaf must advance along the tangent and stay under 45 degrees
        if ((xi - prev_xi) * dir <= 0.0 || std::fabs(f - prev_f) > std::fabs(xi - prev_xi)) {
          ++rep.graph_failures;
          failed = true;
          break;
        }
        double excess = std::fabs(f) - (A * xi * xi + 3.0 * h);
        rep.worst_excess = std::max(rep.worst_excess, excess);
        if (excess > 0.0) rep.ok = false;
        prev_xi = xi;
        prev_f = f;
      }
    }
  }
  return rep;
}

double FlowBox::f(double xi, double eta) const {
  auto sample = [&](std::size_t g) {
    if (xi_grid.size() < 2) return graphs[g].empty() ? 0.0 : graphs[g][0];
    double step = xi_grid[1] - xi_grid[0];
    double s = (xi - xi_grid[0]) / step;
    s = std::clamp(s, 0.0, double(xi_grid.size() - 1));
    std::size_t i = std::min(std::size_t(s), xi_grid.size() - 2);
    double t = s - double(i);
    return graphs[g][i] * (1.0 - t) + graphs[g][i + 1] * t;
  };
  if (labels.empty()) return eta;
  if (eta <= labels.front()) return sample(0) + (eta - labels.front());
  if (eta >= labels.back()) return sample(labels.size() - 1) + (eta - labels.back());
  std::size_t k = 0;
  while (k + 1 < labels.size() && labels[k + 1] < eta) ++k;
  double t = (eta - labels[k]) / (labels[k + 1] - labels[k]);
  return sample(k) * (1.0 - t) + sample(k + 1) * t;
}

Vec2 FlowBox::map(double xi, double eta) const {
  return base + tangent * xi + normal * f(xi, eta);
}

bool FlowBox::invert(const Vec2& q, double& xi, double& eta) const {
  Vec2 d = q - base;
  xi = dot(d, tangent);
  double v = dot(d, normal);
  if (std::fabs(xi) > half_w) return false;
  auto sample = [&](std::size_t g) {
    double step = xi_grid.size() > 1 ? xi_grid[1] - xi_grid[0] : 1.0;
    double s = (xi - xi_grid[0]) / step;
    s = std::clamp(s, 0.0, double(xi_grid.size() - 1));
    std::size_t i = std::min(std::size_t(s), xi_grid.size() >= 2 ? xi_grid.size() - 2 : 0);
    double t = s - double(i);
    return graphs[g].size() >= 2 ? graphs[g][i] * (1.0 - t) + graphs[g][i + 1] * t
                                 : (graphs[g].empty() ? 0.0 : graphs[g][0]);
  };
  if (labels.empty()) {
    eta = v;
  } else if (v <= sample(0)) {
    eta = labels.front() + (v - sample(0));
  } else if (v >= sample(labels.size() - 1)) {
    eta = labels.back() + (v - sample(labels.size() - 1));
  } else {
    std::size_t k = 0;
    while (k + 1 < labels.size() && sample(k + 1) < v) ++k;
    double g0 = sample(k), g1 = sample(k + 1);
    double t = g1 > g0 ? (v - g0) / (g1 - g0) : 0.5;
    eta = labels[k] + t * (labels[k + 1] - labels[k]);
  }
  return std::fabs(eta) <= half_h + 1e-12;
}

FlowBox build_flow_box(const Lamination& lam, const Vec2& p, const MetricDomain& dom,
                       const FlowBoxOptions& opts) {
  if (lam.leaves.empty()) throw Error(Errc::NoLeavesNearby, "lamination has no leaves");
  const double h = dom.h();
  double extent = std::min(dom.nx(), dom.ny()) * h;
  double hw = opts.half_width > 0.0 ? opts.half_width : 0.2 * extent;
  double hh = opts.half_height > 0.0 ? opts.half_height : hw;

  // closest leaf point fixes the frame
  double best = std::numeric_limits<double>::infinity();
  Vec2 base, tangent;
  for (const Leaf& leaf : lam.leaves) {
    const Polyline& poly = leaf.poly;
    for (std::size_t s = 1; s < poly.size(); ++s) {
      Vec2 ab = poly[s] - poly[s - 1];
      double L2 = norm2(ab);
      if (L2 == 0.0) continue;
      double t = std::clamp(dot(p - poly[s - 1], ab) / L2, 0.0, 1.0);
      Vec2 q = poly[s - 1] + ab * t;
      double d = dist(p, q);
      if (d < best) {
        best = d;
        base = q;
        tangent = normalized(ab);
      }
    }
  }
  if (best > std::max(hw, hh))
    throw Error(Errc::NoLeavesNearby, "no leaf within the box radius");
  Vec2 nu = rot_ccw(tangent);

  double slope_cap = 3.0 * opts.delta + 1e-9;
  for (int halving = 0;; ++halving) {
    if (hw < 8.0 * h || hh < 8.0 * h)
      throw Error(Errc::BoxDegenerate, "box shrank below eight cells");
    bool bad = false;

    struct Branch {
      std::vector<std::pair<double, double>> pts;  // xi, eta along the leaf
      int leaf_id = 0;
    };
    std::vector<Branch> branches;
    double pad = 2.0 * h;
    for (std::size_t li = 0; li < lam.leaves.size() && !bad; ++li) {
      const Polyline& poly = lam.leaves[li].poly;
      Branch cur;
      auto flush = [&]() {
        if (cur.pts.size() < 2) {
          cur.pts.clear();
          return;
        }
        double xmin = cur.pts.front().first, xmax = cur.pts.back().first;
        if (xmin > xmax) {
          std::reverse(cur.pts.begin(), cur.pts.end());
          std::swap(xmin, xmax);
        }
        double emin = std::numeric_limits<double>::infinity();
        for (auto& [x, e] : cur.pts)
          if (std::fabs(x) <= hw) emin = std::min(emin, std::fabs(e));
        bool relevant = emin <= hh;
        if (!relevant) {
          cur.pts.clear();
          return;
        }
        // a leaf meeting the box must cross it as a full-width graph
        if (xmin > -hw || xmax < hw) {
          bad = true;
          return;
        }
        double sgn = 0.0;
        for (std::size_t s = 1; s < cur.pts.size(); ++s) {
          double dx = cur.pts[s].first - cur.pts[s - 1].first;
          double de = cur.pts[s].second - cur.pts[s - 1].second;
          if (dx == 0.0 || (sgn != 0.0 && dx * sgn < 0.0)) {
            bad = true;
            return;
          }
          sgn = dx > 0.0 ? 1.0 : -1.0;
          if (std::fabs(de / dx) > slope_cap) {
            bad = true;
            return;
          }
        }
        cur.leaf_id = int(li);
        branches.push_back(std::move(cur));
        cur.pts.clear();
      };
      for (const Vec2& q : poly) {
        Vec2 d = q - base;
        double xi = dot(d, tangent), eta = dot(d, nu);
        if (std::fabs(xi) <= hw + pad && std::fabs(eta) <= hh + hw * slope_cap + pad) {
          cur.pts.push_back({xi, eta});
        } else {
          flush();
          if (bad) break;
        }
      }
      if (!bad) flush();
    }

    if (!bad && branches.empty()) bad = true;  // base leaf should always qualify

    FlowBox box;
    if (!bad) {
      box.base = base;
      box.tangent = tangent;
      box.normal = nu;
      box.half_w = hw;
      box.half_h = hh;
      std::size_t m = std::max<std::size_t>(9, 2 * std::size_t(hw / (0.5 * h)) / 2 + 1);
      box.xi_grid.resize(m);
      for (std::size_t i = 0; i < m; ++i)
        box.xi_grid[i] = -hw + 2.0 * hw * double(i) / double(m - 1);

      struct Row {
        double label;
        int leaf_id;
        std::vector<double> g;
      };
      std::vector<Row> rows;
      for (const Branch& br : branches) {
        Row row;
        row.leaf_id = br.leaf_id;
        row.g.resize(m);
        std::size_t s = 0;
        for (std::size_t i = 0; i < m; ++i) {
          double x = box.xi_grid[i];
          while (s + 2 < br.pts.size() && br.pts[s + 1].first < x) ++s;
          double x0 = br.pts[s].first, x1 = br.pts[s + 1].first;
          double e0 = br.pts[s].second, e1 = br.pts[s + 1].second;
          double t = x1 > x0 ? std::clamp((x - x0) / (x1 - x0), 0.0, 1.0) : 0.0;
          row.g[i] = e0 + t * (e1 - e0);
        }
        row.label = row.g[m / 2];
        rows.push_back(std::move(row));
      }
      std::sort(rows.begin(), rows.end(),
                [](const Row& a, const Row& b) { return a.label < b.label; });
      for (std::size_t r = 0; r + 1 < rows.size() && !bad; ++r)
        for (std::size_t i = 0; i < m; ++i)
          if (rows[r].g[i] >= rows[r + 1].g[i] - 1e-12) {
            bad = true;
            break;
          }
      if (!bad) {
        for (Row& r : rows) {
          box.labels.push_back(r.label);
          box.leaf_ids.push_back(r.leaf_id);
          box.graphs.push_back(std::move(r.g));
        }

        std::mt19937_64 rng(opts.seed);
        std::uniform_real_distribution<double> UX(-hw, hw), UY(-hh, hh);
        std::uniform_real_distribution<double> UA(0.0, 2.0 * M_PI), UR(0.25 * h, 2.0 * h);
        box.lip_F = 0.0;
        box.lip_Finv = 0.0;
        for (int s = 0; s < opts.lip_samples; ++s) {
          double x1 = UX(rng), e1 = UY(rng);
          double ang = UA(rng), rr = UR(rng);
          double x2 = std::clamp(x1 + rr * std::cos(ang), -hw, hw);
          double e2 = std::clamp(e1 + rr * std::sin(ang), -hh, hh);
          double dc = std::hypot(x2 - x1, e2 - e1);
          if (dc < 1e-12) continue;
          Vec2 q1 = box.map(x1, e1), q2 = box.map(x2, e2);
          double dm = dom.rho_at((q1 + q2) * 0.5) * dist(q1, q2);
          if (dm < 1e-15) continue;
          box.lip_F = std::max(box.lip_F, dm / dc);
          box.lip_Finv = std::max(box.lip_Finv, dc / dm);
        }
        return box;
      }
    }
    if (halving >= opts.max_halvings)
      throw Error(Errc::BoxDegenerate, "halving limit reached");
    hw *= 0.5;
    hh *= 0.5;
  }
}

Lamination assemble_lamination(const std::vector<Leaf>& leaves, const MetricDomain& dom,
                               const AssembleOptions& opts) {
  Lamination lam;
  double tol = opts.dedup_tol_cells * dom.h();
  for (const Leaf& cand : leaves) {
    bool dup = false;
    for (const Leaf& kept : lam.leaves)
      if (hausdorff_distance(cand.poly, kept.poly) <= tol) {
        dup = true;
        break;
      }
    if (dup)
      ++lam.merged_duplicates;
    else
      lam.leaves.push_back(cand);
  }
  for (const Leaf& l : lam.leaves)
    lam.curvature_bound = std::max(lam.curvature_bound, l.sup_curvature);

  if (lam.leaves.size() >= 2) {
    auto rep = check_disjointness(lam.leaves);
    if (!rep.disjoint)
      throw Error(Errc::DisjointnessViolated, "leaves cross after deduplication");
  }

  // support raster: nodes the leaves pass through
  lam.support.assign(dom.nn(), 0);
  const double h = dom.h();
  for (const Leaf& leaf : lam.leaves)
    for (std::size_t s = 1; s < leaf.poly.size(); ++s) {
      Vec2 a = leaf.poly[s - 1], b = leaf.poly[s];
      int steps = std::max(1, int(dist(a, b) / (0.3 * h)));
      for (int q = 0; q <= steps; ++q) {
        Vec2 pt = a + (b - a) * (double(q) / steps);
        int i, j;
        if (dom.nearest_node(pt, i, j) && dom.in_mask(i, j)) lam.support[dom.idx(i, j)] = 1;
      }
    }

  if (opts.build_atlas) {
    double margin = 2.0 * h;
    auto covered = [&](const Vec2& q) {
      for (const FlowBox& b : lam.atlas) {
        double xi, eta;
        if (b.invert(q, xi, eta) && std::fabs(xi) <= b.half_w - margin &&
            std::fabs(eta) <= b.half_h - margin)
          return true;
      }
      return false;
    };
    for (int j = 0; j < dom.ny(); ++j)
      for (int i = 0; i < dom.nx(); ++i) {
        if (!lam.support[dom.idx(i, j)]) continue;
        Vec2 q = dom.node_pos(i, j);
        if (covered(q)) continue;
        try {
          lam.atlas.push_back(build_flow_box(lam, q, dom, opts.box));
        } catch (const Error&) {
          ++lam.uncovered;
        }
      }

    // label pairings on overlapping charts; the pairing must be monotone
    for (std::size_t a = 0; a < lam.atlas.size(); ++a)
      for (std::size_t b = a + 1; b < lam.atlas.size(); ++b) {
        const FlowBox& A = lam.atlas[a];
        const FlowBox& B = lam.atlas[b];
        Transition tr;
        tr.box_a = int(a);
        tr.box_b = int(b);
        for (std::size_t ka = 0; ka < A.labels.size(); ++ka) {
          // the other chart's label for the same leaf portion, found by
          // inverting the mapped graph midpoint
          Vec2 q = A.map(0.0, A.labels[ka]);
          double xi, eta;
          if (!B.invert(q, xi, eta)) continue;
          for (std::size_t kb = 0; kb < B.labels.size(); ++kb)
            if (B.leaf_ids[kb] == A.leaf_ids[ka]) {
              Vec2 qq = B.map(std::clamp(dot(q - B.base, B.tangent), -B.half_w, B.half_w),
                              B.labels[kb]);
              if (dist(q, qq) <= 4.0 * h) {
                tr.label_pairs.push_back({A.labels[ka], B.labels[kb]});
                break;
              }
            }
        }
        if (tr.label_pairs.size() >= 2) {
          bool inc = true, dec = true;
          for (std::size_t s = 1; s < tr.label_pairs.size(); ++s) {
            if (tr.label_pairs[s].second <= tr.label_pairs[s - 1].second) inc = false;
            if (tr.label_pairs[s].second >= tr.label_pairs[s - 1].second) dec = false;
          }
          tr.consistent = inc || dec;
        }
        if (!tr.label_pairs.empty()) lam.transitions.push_back(std::move(tr));
      }
  }
  return lam;
}

MinimalityReport local_minimality_test(const Leaf& leaf, const MetricDomain& dom,
                                       const Vec2& center, double radius) {
  const double h = dom.h();
  if (radius < 4.0 * h) throw Error(Errc::WindowTooSmall, "window under four cells");
  double A = std::max(leaf.sup_curvature, 1e-9);
  double K = std::max(dom.riem_bound(), 0.0);
  double cap = std::min({dom.injectivity_radius(), 0.25 / A, 0.25 / std::sqrt(K + 1e-9)});
  double r = std::min(radius, cap);
  if (r < 4.0 * h) throw Error(Errc::WindowTooSmall, "curvature caps the window below four cells");

  // walk outward from the vertex closest to the center until the leaf exits
  const Polyline& poly = leaf.poly;
  std::size_t q = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i) {
    double d = dist(poly[i], center);
    if (d < bd) {
      bd = d;
      q = i;
    }
  }
  if (bd > r) throw Error(Errc::WindowTooSmall, "leaf does not meet the window");

  auto exit_point = [&](std::ptrdiff_t from, int dir, Vec2& exit, Polyline& part) -> bool {
    std::ptrdiff_t n = std::ptrdiff_t(poly.size());
    std::ptrdiff_t i = from;
    for (;;) {
      std::ptrdiff_t j = i + dir;
      if (leaf.closed) {
        j = (j % (n - 1) + (n - 1)) % (n - 1);
      } else if (j < 0 || j >= n) {
        return false;  // leaf ends inside the window
      }
      Vec2 a = poly[i], b = poly[j];
      if (dist(b, center) > r) {
        // solve |a + t(b-a) - c| = r for the crossing
        Vec2 d = b - a, f = a - center;
        double A2 = norm2(d), B2 = 2.0 * dot(f, d), C2 = norm2(f) - r * r;
        double disc = std::max(0.0, B2 * B2 - 4.0 * A2 * C2);
        double t = A2 > 0.0 ? (-B2 + std::sqrt(disc)) / (2.0 * A2) : 0.0;
        exit = a + d * std::clamp(t, 0.0, 1.0);
        part.push_back(exit);
        return true;
      }
      part.push_back(b);
      i = j;
      if (leaf.closed && i == from) return false;
    }
  };

  MinimalityReport rep;
  Polyline fwd{poly[q]}, bwd{poly[q]};
  Vec2 ea, eb;
  if (!exit_point(std::ptrdiff_t(q), +1, ea, fwd) ||
      !exit_point(std::ptrdiff_t(q), -1, eb, bwd))
    throw Error(Errc::WindowTooSmall, "leaf does not exit the window on both sides");
  Polyline inside(bwd.rbegin(), bwd.rend());
  inside.insert(inside.end(), fwd.begin() + 1, fwd.end());
  rep.exit_a = eb;
  rep.exit_b = ea;
  rep.leaf_length = polyline_length_g(inside, dom);
  rep.oracle_length = graph_shortest_path(dom, eb, ea).length;
  rep.ok = rep.leaf_length <= rep.oracle_length + 3.0 * h;
  return rep;
}

double leaf_length_in_ball(const Leaf& leaf, const MetricDomain& dom, const Vec2& c,
                           double r) {
  double total = 0.0;
  const double sub = 0.5 * dom.h();
  for (std::size_t s = 1; s < leaf.poly.size(); ++s) {
    Vec2 a = leaf.poly[s - 1], b = leaf.poly[s];
    double L = dist(a, b);
    int steps = std::max(1, int(L / sub));
    for (int q = 0; q < steps; ++q) {
      Vec2 p0 = a + (b - a) * (double(q) / steps);
      Vec2 p1 = a + (b - a) * (double(q + 1) / steps);
      Vec2 mid = (p0 + p1) * 0.5;
      if (dist(mid, c) <= r) total += dom.rho_at(mid) * dist(p0, p1);
    }
  }
  return total;
}

}  // namespace lamina
