#pragma once

#include <cstdint>
#include <vector>

#include "lamina/domain.hpp"

namespace lamina {

// Minimizes total variation plus an L1 boundary penalty over the box spanned
// by the boundary data, with a primal-dual splitting. The dual multipliers
// certify optimality: rescaled they give a unit-norm field whose divergence
// vanishes where the objective is differentiable.

struct SolveOptions {
  double gap_tol_rel = 1e-6;  // stop when gap <= rel * initial energy
  int max_iter = 200000;
  int check_every = 50;
  bool precondition = true;
  // scales the dual step down and the primal step up; small values let the
  // level-set geometry of jump-type solutions settle quickly, larger values
  // suit smooth solutions
  double step_ratio = 5e-4;
  // try {1x, 10x, 100x} of step_ratio on short fresh pilot runs, then rerun
  // fresh at whichever closed the gap fastest; jump-type solutions favor
  // small ratios, smooth solutions large ones, and carrying iterates across
  // regimes is unstable, so every run starts clean
  bool auto_ratio = true;
};

struct TraceRow {
  int iter;
  double primal, dual, gap;
};

struct SolveResult {
  Form0 u;
  Form1 dual;  // per node pair, |(hx,vy)_n| <= rho_n h^2
  double primal_energy = 0.0, dual_energy = 0.0;
  double gap = 0.0, gap_tol = 0.0;
  int iterations = 0;  // total, pilot runs included
  double step_ratio_used = 0.0;
  bool converged = false;
  std::vector<TraceRow> trace;
};

SolveResult solve_least_gradient(const MetricDomain& dom, const Form0& bdata,
                                 const SolveOptions& opt = {});

// the minimized objective: integral of the gradient mass plus the weighted
// boundary disagreement
double relaxed_energy(const MetricDomain& dom, const Form0& u, const Form0& bdata);

double total_variation_g(const MetricDomain& dom, const Form0& u);

// unit-normalized dual field; by construction the pointwise bound holds with
// equality wherever the solver saturated the constraint
Form1 calibration_field(const MetricDomain& dom, const SolveResult& res);

struct CalibrationReport {
  double norm_excess = 0.0;       // max over nodes of (|X|_g - 1)+
  double interior_div_max = 0.0;  // sup norm of div X away from the boundary
  double pairing_ratio = 0.0;     // <X, du> relative to the gradient mass
};
CalibrationReport check_calibration(const MetricDomain& dom, const Form1& X, const Form0& u);

// energy(u + v) - energy(u) for a compactly supported competitor v
double competitor_gain(const MetricDomain& dom, const Form0& u, const Form0& bdata,
                       const Form0& v);

struct PerturbationReport {
  int trials = 0;
  int violations = 0;
  double worst_drop = 0.0;  // most negative slack-adjusted gain seen
};

// random interior bumps; a violation is a gain below -(base_slack + 2h |v|_BV)
PerturbationReport perturbation_test(const MetricDomain& dom, const Form0& u,
                                     const Form0& bdata, int trials, std::uint64_t seed,
                                     double base_slack = 1e-8);
PerturbationReport perturbation_test(const MetricDomain& dom, const Form0& u,
                                     const Form0& bdata, const std::vector<Form0>& competitors,
                                     double base_slack = 1e-8);

// relative mismatch between the gradient mass and the threshold integral of
// superlevel boundary masses; small only when level sets stack coherently
double coarea_mismatch(const MetricDomain& dom, const Form0& u, int nthresholds);

// smooth compactly supported test covectors used for weak-convergence probes
struct TestForm {
  Vec2 center;
  double scale;
  int comp;  // 0: dx component, 1: dy component
  Vec2 at(const Vec2& p) const;
};
std::vector<TestForm> make_test_forms(const MetricDomain& dom);

// integral of <du, phi> by edge-midpoint quadrature (conformally invariant)
double pair_gradient_form(const MetricDomain& dom, const Form0& u, const TestForm& phi);

struct StabilityReport {
  std::vector<double> deviations;  // per item, max over the form bank
  bool decreasing = false;         // tail no larger than the head
};
StabilityReport l1_stability_test(const MetricDomain& dom, const std::vector<Form0>& us,
                                  const Form0& u_limit);

}  // namespace lamina
