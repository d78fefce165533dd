#include "lamina/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "lamina/error.hpp"

namespace lamina {

namespace {

struct Workspace {
  int nx, ny;
  double h;
  std::vector<double> w;      // TV weight rho h^2 per node
  std::vector<double> b;      // boundary penalty weight per node (0 inside)
  std::vector<std::uint8_t> hedge, vedge, inmask;
};

Workspace make_workspace(const MetricDomain& dom) {
  Workspace ws;
  ws.nx = dom.nx();
  ws.ny = dom.ny();
  ws.h = dom.h();
  std::size_t nn = dom.nn();
  ws.w.assign(nn, 0.0);
  ws.b.assign(nn, 0.0);
  ws.hedge.assign(nn, 0);
  ws.vedge.assign(nn, 0);
  ws.inmask.assign(nn, 0);
  for (int j = 0; j < ws.ny; ++j)
    for (int i = 0; i < ws.nx; ++i) {
      int k = dom.idx(i, j);
      if (!dom.in_mask(i, j)) continue;
      ws.inmask[k] = 1;
      ws.w[k] = dom.rho(i, j) * ws.h * ws.h;
      ws.hedge[k] = dom.has_hedge(i, j);
      ws.vedge[k] = dom.has_vedge(i, j);
      int sides = dom.exposed_sides(i, j);
      if (sides > 0) ws.b[k] = dom.rho(i, j) * ws.h * sides;
    }
  return ws;
}

// objective value for given u
double energy_ws(const Workspace& ws, const std::vector<double>& u,
                 const std::vector<double>& hdat) {
  double e = 0.0;
  const int nx = ws.nx;
  for (int j = 0; j < ws.ny; ++j)
    for (int i = 0; i < nx; ++i) {
      std::size_t k = std::size_t(j) * nx + i;
      if (!ws.inmask[k]) continue;
      double gx = ws.hedge[k] ? (u[k + 1] - u[k]) / ws.h : 0.0;
      double gy = ws.vedge[k] ? (u[k + nx] - u[k]) / ws.h : 0.0;
      e += ws.w[k] * std::sqrt(gx * gx + gy * gy);
      if (ws.b[k] > 0.0) e += ws.b[k] * std::fabs(u[k] - hdat[k]);
    }
  return e;
}

// value of the concave dual at multipliers p: sum over nodes of the box
// minimum of x*q + boundary penalty, where q is the negative adjoint image
double dual_ws(const Workspace& ws, const std::vector<double>& phx,
               const std::vector<double>& pvy, const std::vector<double>& hdat, double lo,
               double hi) {
  const int nx = ws.nx;
  double d = 0.0;
  for (int j = 0; j < ws.ny; ++j)
    for (int i = 0; i < nx; ++i) {
      std::size_t k = std::size_t(j) * nx + i;
      if (!ws.inmask[k]) continue;
      double q = 0.0;
      if (ws.hedge[k]) q -= phx[k];
      if (i > 0 && ws.hedge[k - 1]) q += phx[k - 1];
      if (ws.vedge[k]) q -= pvy[k];
      if (j > 0 && ws.vedge[k - nx]) q += pvy[k - nx];
      q /= ws.h;
      if (ws.b[k] > 0.0) {
        double at_lo = lo * q + ws.b[k] * std::fabs(lo - hdat[k]);
        double at_h = hdat[k] * q;
        double at_hi = hi * q + ws.b[k] * std::fabs(hi - hdat[k]);
        d += std::min({at_lo, at_h, at_hi});
      } else {
        d += q > 0.0 ? lo * q : hi * q;
      }
    }
  return d;
}

}  // namespace

double relaxed_energy(const MetricDomain& dom, const Form0& u, const Form0& bdata) {
  if (u.a.size() != dom.nn() || bdata.a.size() != dom.nn())
    throw Error(Errc::ShapeMismatch, "field size != node count");
  Workspace ws = make_workspace(dom);
  return energy_ws(ws, u.a, bdata.a);
}

double total_variation_g(const MetricDomain& dom, const Form0& u) {
  return total_mass(grad(u, dom), dom);
}

SolveResult solve_least_gradient(const MetricDomain& dom, const Form0& bdata,
                                 const SolveOptions& opt) {
  if (bdata.a.size() != dom.nn()) throw Error(Errc::ShapeMismatch, "data size != node count");
  Workspace ws = make_workspace(dom);
  const int nx = ws.nx, ny = ws.ny;
  const std::size_t nn = dom.nn();
  const double h = ws.h;

  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (int k : dom.boundary_nodes()) {
    double v = bdata.a[k];
    if (!std::isfinite(v)) throw Error(Errc::InvalidBoundaryData, "boundary data not finite");
    if (first) { lo = hi = v; first = false; }
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (first) throw Error(Errc::InvalidBoundaryData, "no boundary nodes carry data");

  // iterate over a widened box so the bound constraints stay inactive at the
  // optimum; stationarity then forces the multiplier divergence to zero at
  // every interior node. The output is truncated back to the data range,
  // which cannot increase the objective.
  double margin = 0.5 * (hi - lo);
  double blo = lo - margin, bhi = hi + margin;

  std::vector<double> u(nn, 0.0), ubar(nn, 0.0), phx(nn, 0.0), pvy(nn, 0.0);
  double mid = 0.5 * (lo + hi);
  for (std::size_t k = 0; k < nn; ++k)
    if (ws.inmask[k]) u[k] = ws.b[k] > 0.0 ? bdata.a[k] : mid;
  ubar = u;

  // step sizes; the diagonal choice uses per-row and per-column sums of |K|
  double sigma_c = h / (2.0 * std::sqrt(2.0));
  double tau_c = sigma_c;
  std::vector<double> tau0(nn, tau_c);
  double sigma0 = opt.precondition ? h / 2.0 : sigma_c;
  if (opt.precondition) {
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        std::size_t k = std::size_t(j) * nx + i;
        if (!ws.inmask[k]) continue;
        int inc = 0;
        if (ws.hedge[k]) ++inc;
        if (ws.vedge[k]) ++inc;
        if (i > 0 && ws.hedge[k - 1]) ++inc;
        if (j > 0 && ws.vedge[k - nx]) ++inc;
        tau0[k] = inc > 0 ? h / inc : tau_c;
      }
  }
  SolveResult res;
  double e0 = energy_ws(ws, u, bdata.a);
  res.gap_tol = opt.gap_tol_rel * std::max(e0, 1e-12);

  struct State {
    std::vector<double> u, ubar, phx, pvy;
  };
  State init{u, ubar, phx, pvy};

  int total_it = 0;
  std::vector<double> tau(nn);
  // one primal-dual run at a fixed ratio on the given state; appends trace
  // rows with global iteration numbers and returns the smallest gap seen
  auto run_cp = [&](State& st, double ratio, int budget, bool& converged) -> double {
    double sigma = sigma0 * ratio;
    for (std::size_t k = 0; k < nn; ++k) tau[k] = tau0[k] / ratio;
    double min_gap = std::numeric_limits<double>::infinity();
    converged = false;
    for (int t = 0; t < budget; ++t) {
      // ascent on the multipliers with projection onto the local disk
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
          std::size_t k = std::size_t(j) * nx + i;
          if (!ws.inmask[k] || ws.w[k] <= 0.0) continue;
          double gx = ws.hedge[k] ? (st.ubar[k + 1] - st.ubar[k]) / h : 0.0;
          double gy = ws.vedge[k] ? (st.ubar[k + nx] - st.ubar[k]) / h : 0.0;
          double ax = st.phx[k] + sigma * gx;
          double ay = st.pvy[k] + sigma * gy;
          double n = std::sqrt(ax * ax + ay * ay);
          if (n > ws.w[k]) {
            double s = ws.w[k] / n;
            ax *= s;
            ay *= s;
          }
          st.phx[k] = ws.hedge[k] ? ax : 0.0;
          st.pvy[k] = ws.vedge[k] ? ay : 0.0;
        }
      // descent on u through the shrink-and-clamp proximal map
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
          std::size_t k = std::size_t(j) * nx + i;
          if (!ws.inmask[k]) continue;
          double q = 0.0;
          if (ws.hedge[k]) q -= st.phx[k];
          if (i > 0 && ws.hedge[k - 1]) q += st.phx[k - 1];
          if (ws.vedge[k]) q -= st.pvy[k];
          if (j > 0 && ws.vedge[k - nx]) q += st.pvy[k - nx];
          q /= h;
          double z = st.u[k] - tau[k] * q;
          double unew;
          if (ws.b[k] > 0.0) {
            double d = z - bdata.a[k];
            double tt = tau[k] * ws.b[k];
            d = d > tt ? d - tt : (d < -tt ? d + tt : 0.0);
            unew = bdata.a[k] + d;
          } else {
            unew = z;
          }
          unew = std::clamp(unew, blo, bhi);
          st.ubar[k] = 2.0 * unew - st.u[k];
          st.u[k] = unew;
        }
      ++total_it;
      if ((t + 1) % opt.check_every == 0 || t + 1 == budget) {
        double pe = energy_ws(ws, st.u, bdata.a);
        double de = dual_ws(ws, st.phx, st.pvy, bdata.a, blo, bhi);
        double gap = pe - de;
        res.trace.push_back({total_it, pe, de, gap});
        min_gap = std::min(min_gap, gap);
        if (gap <= res.gap_tol) {
          converged = true;
          break;
        }
      }
    }
    return min_gap;
  };

  const int pilot = opt.max_iter / 16;
  State st;
  bool conv = false;
  if (!opt.auto_ratio || pilot < 2 * opt.check_every) {
    st = std::move(init);
    res.step_ratio_used = opt.step_ratio;
    run_cp(st, opt.step_ratio, opt.max_iter, conv);
  } else {
    double best_gap = std::numeric_limits<double>::infinity();
    double best_ratio = opt.step_ratio;
    for (double m : {1.0, 10.0, 100.0}) {
      State ps = init;
      double g = run_cp(ps, opt.step_ratio * m, pilot, conv);
      if (conv) {
        st = std::move(ps);
        res.step_ratio_used = opt.step_ratio * m;
        break;
      }
      if (g < best_gap) {
        best_gap = g;
        best_ratio = opt.step_ratio * m;
      }
    }
    if (!conv) {
      st = std::move(init);
      res.step_ratio_used = best_ratio;
      run_cp(st, best_ratio, opt.max_iter - total_it, conv);
    }
  }
  res.converged = conv;

  res.iterations = total_it;
  for (std::size_t k = 0; k < nn; ++k)
    if (ws.inmask[k]) st.u[k] = std::clamp(st.u[k], lo, hi);
  res.u.a = std::move(st.u);
  res.dual.hx = std::move(st.phx);
  res.dual.vy = std::move(st.pvy);
  res.primal_energy = energy_ws(ws, res.u.a, bdata.a);
  res.dual_energy = dual_ws(ws, res.dual.hx, res.dual.vy, bdata.a, blo, bhi);
  res.gap = res.primal_energy - res.dual_energy;
  return res;
}

Form1 calibration_field(const MetricDomain& dom, const SolveResult& res) {
  Form1 X(dom.nn());
  double h2 = dom.h() * dom.h();
  for (std::size_t k = 0; k < dom.nn(); ++k) {
    X.hx[k] = res.dual.hx[k] / h2;
    X.vy[k] = res.dual.vy[k] / h2;
  }
  return X;
}

CalibrationReport check_calibration(const MetricDomain& dom, const Form1& X, const Form0& u) {
  if (X.hx.size() != dom.nn() || u.a.size() != dom.nn())
    throw Error(Errc::ShapeMismatch, "field size != node count");
  CalibrationReport rep;
  auto g = grad(u, dom);
  double paired = 0.0, mass = 0.0;
  double h2 = dom.h() * dom.h();
  for (int j = 0; j < dom.ny(); ++j)
    for (int i = 0; i < dom.nx(); ++i) {
      int k = dom.idx(i, j);
      if (!dom.in_mask(i, j)) continue;
      double nrm = std::sqrt(X.hx[k] * X.hx[k] + X.vy[k] * X.vy[k]) / dom.rho(i, j);
      rep.norm_excess = std::max(rep.norm_excess, nrm - 1.0);
      paired += h2 * (X.hx[k] * g.hx[k] + X.vy[k] * g.vy[k]);
      mass += dom.rho(i, j) * h2 * std::sqrt(g.hx[k] * g.hx[k] + g.vy[k] * g.vy[k]);
    }
  rep.norm_excess = std::max(rep.norm_excess, 0.0);
  auto dv = divergence(X, dom);
  for (int j = 0; j < dom.ny(); ++j)
    for (int i = 0; i < dom.nx(); ++i) {
      int k = dom.idx(i, j);
      if (!dom.in_mask(i, j) || dom.exposed_sides(i, j) > 0) continue;
      rep.interior_div_max = std::max(rep.interior_div_max, std::fabs(dv.a[k]));
    }
  rep.pairing_ratio = mass > 0.0 ? paired / mass : 1.0;
  return rep;
}

double competitor_gain(const MetricDomain& dom, const Form0& u, const Form0& bdata,
                       const Form0& v) {
  Form0 pert(dom.nn());
  for (std::size_t k = 0; k < dom.nn(); ++k) pert.a[k] = u.a[k] + v.a[k];
  return relaxed_energy(dom, pert, bdata) - relaxed_energy(dom, u, bdata);
}

namespace {

PerturbationReport run_perturbations(const MetricDomain& dom, const Form0& u,
                                     const Form0& bdata, const std::vector<Form0>& vs,
                                     double base_slack) {
  PerturbationReport rep;
  for (const Form0& v : vs) {
    ++rep.trials;
    double gain = competitor_gain(dom, u, bdata, v);
    double slack = base_slack + 2.0 * dom.h() * total_variation_g(dom, v);
    double adjusted = gain + slack;
    if (adjusted < 0.0) {
      ++rep.violations;
      rep.worst_drop = std::min(rep.worst_drop, adjusted);
    }
  }
  return rep;
}

}  // namespace

PerturbationReport perturbation_test(const MetricDomain& dom, const Form0& u,
                                     const Form0& bdata, const std::vector<Form0>& competitors,
                                     double base_slack) {
  for (const Form0& v : competitors)
    for (int k : dom.boundary_nodes())
      if (v.a[k] != 0.0)
        throw Error(Errc::InvalidBoundaryData, "competitor must vanish at the boundary");
  return run_perturbations(dom, u, bdata, competitors, base_slack);
}

PerturbationReport perturbation_test(const MetricDomain& dom, const Form0& u,
                                     const Form0& bdata, int trials, std::uint64_t seed,
                                     double base_slack) {
  std::mt19937_64 rng(seed);
  const auto& nodes = dom.mask_nodes();
  double span = 0.0;
  for (int k : dom.boundary_nodes()) span = std::max(span, std::fabs(bdata.a[k]));
  if (span == 0.0) span = 1.0;
  double ext = dom.h() * std::max(dom.nx(), dom.ny());
  std::uniform_int_distribution<std::size_t> pick(0, nodes.size() - 1);
  std::uniform_real_distribution<double> rad(3.0 * dom.h(), 0.15 * ext);
  std::uniform_real_distribution<double> amp(-span, span);
  std::vector<Form0> vs;
  vs.reserve(trials);
  while (static_cast<int>(vs.size()) < trials) {
    int c = nodes[pick(rng)];
    Vec2 cp = dom.node_pos(c % dom.nx(), c / dom.nx());
    double r = rad(rng);
    double a = amp(rng);
    Form0 v(dom.nn());
    bool touches_boundary = false;
    for (int k : nodes) {
      Vec2 p = dom.node_pos(k % dom.nx(), k / dom.nx());
      double t = dist(p, cp) / r;
      if (t >= 1.0) continue;
      double val = a * (1.0 - t * t) * (1.0 - t * t);
      v.a[k] = val;
      if (dom.exposed_sides(k % dom.nx(), k / dom.nx()) > 0) touches_boundary = true;
    }
    if (touches_boundary) continue;  // keep the support compact
    vs.push_back(std::move(v));
  }
  return run_perturbations(dom, u, bdata, vs, base_slack);
}

double coarea_mismatch(const MetricDomain& dom, const Form0& u, int nthresholds) {
  if (nthresholds < 2) throw Error(Errc::ConfigInvalid, "need at least two thresholds");
  double lhs = total_variation_g(dom, u);
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (int k : dom.mask_nodes()) {
    if (first) { lo = hi = u.a[k]; first = false; }
    lo = std::min(lo, u.a[k]);
    hi = std::max(hi, u.a[k]);
  }
  if (hi - lo <= 0.0) return 0.0;
  double dy = (hi - lo) / nthresholds;
  double rhs = 0.0;
  Form0 ind(dom.nn());
  for (int t = 0; t < nthresholds; ++t) {
    double y = lo + (t + 0.5) * dy;
    for (int k : dom.mask_nodes()) ind.a[k] = u.a[k] > y ? 1.0 : 0.0;
    rhs += dy * total_mass(grad(ind, dom), dom);
  }
  return std::fabs(lhs - rhs) / std::max(lhs, 1e-300);
}

Vec2 TestForm::at(const Vec2& p) const {
  double tx = (p.x - center.x) / scale;
  double ty = (p.y - center.y) / scale;
  double r2 = tx * tx + ty * ty;
  if (r2 >= 1.0) return {0.0, 0.0};
  double b = (1.0 - r2) * (1.0 - r2);
  return comp == 0 ? Vec2{b, 0.0} : Vec2{0.0, b};
}

std::vector<TestForm> make_test_forms(const MetricDomain& dom) {
  // bounding box of the mask
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (int k : dom.mask_nodes()) {
    Vec2 p = dom.node_pos(k % dom.nx(), k / dom.nx());
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  Vec2 c{0.5 * (x0 + x1), 0.5 * (y0 + y1)};
  double ext = std::min(x1 - x0, y1 - y0);
  std::vector<Vec2> centers = {c,
                               {c.x - 0.22 * ext, c.y - 0.16 * ext},
                               {c.x + 0.24 * ext, c.y - 0.21 * ext},
                               {c.x - 0.18 * ext, c.y + 0.23 * ext},
                               {c.x + 0.17 * ext, c.y + 0.19 * ext}};
  std::vector<double> scales = {0.16 * ext, 0.27 * ext, 0.45 * ext};
  std::vector<TestForm> bank;
  for (double s : scales)
    for (const Vec2& ctr : centers)
      for (int comp : {0, 1}) bank.push_back({ctr, s, comp});
  return bank;
}

double pair_gradient_form(const MetricDomain& dom, const Form0& u, const TestForm& phi) {
  auto g = grad(u, dom);
  double h2 = dom.h() * dom.h(), h = dom.h();
  double acc = 0.0;
  for (int j = 0; j < dom.ny(); ++j)
    for (int i = 0; i < dom.nx(); ++i) {
      int k = dom.idx(i, j);
      if (dom.has_hedge(i, j)) {
        Vec2 m = dom.node_pos(i, j) + Vec2{h / 2.0, 0.0};
        acc += h2 * g.hx[k] * phi.at(m).x;
      }
      if (dom.has_vedge(i, j)) {
        Vec2 m = dom.node_pos(i, j) + Vec2{0.0, h / 2.0};
        acc += h2 * g.vy[k] * phi.at(m).y;
      }
    }
  return acc;
}

StabilityReport l1_stability_test(const MetricDomain& dom, const std::vector<Form0>& us,
                                  const Form0& u_limit) {
  if (us.size() < 2) throw Error(Errc::TooFewItems, "need at least two fields");
  auto bank = make_test_forms(dom);
  StabilityReport rep;
  for (const Form0& un : us) {
    double worst = 0.0;
    for (const TestForm& phi : bank) {
      double d = pair_gradient_form(dom, un, phi) - pair_gradient_form(dom, u_limit, phi);
      worst = std::max(worst, std::fabs(d));
    }
    rep.deviations.push_back(worst);
  }
  std::size_t half = rep.deviations.size() / 2;
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < half; ++i) head = std::max(head, rep.deviations[i]);
  for (std::size_t i = half; i < rep.deviations.size(); ++i)
    tail = std::max(tail, rep.deviations[i]);
  // genuine decay, not just absence of growth: ties (oscillating sequences)
  // must not count as convergence toward the limit
  rep.decreasing = tail <= 0.6 * head + 1e-12;
  return rep;
}

}  // namespace lamina
