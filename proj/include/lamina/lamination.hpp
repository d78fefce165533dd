#pragma once

#include <cstdint>
#include <vector>

#include "lamina/domain.hpp"
#include "lamina/geometry.hpp"

namespace lamina {

enum class LeafKind { Superlevel, Sublevel };

// one connected level-set component; the polyline is simple and either closed
// (front == back) or runs from data margin to data margin
struct Leaf {
  Polyline poly;
  double label = 0.0;
  LeafKind kind = LeafKind::Superlevel;
  bool closed = false;
  // unit normals per vertex, pointing toward larger values of the field
  std::vector<Vec2> normal;
  // geodesic curvature per interior vertex (all vertices for closed leaves)
  std::vector<double> curvature;
  double sup_curvature = 0.0;
};

struct ExtractOptions {
  bool both_kinds = true;
  double simplify_tol_cells = 0.25;
  double min_len_cells = 3.0;  // contours shorter than this many h are dropped
};

struct ExtractReport {
  int dropped_degenerate = 0;
};

std::vector<Leaf> extract_leaves(const MetricDomain& dom, const Form0& u,
                                 const std::vector<double>& thresholds,
                                 const ExtractOptions& opts = {},
                                 ExtractReport* report = nullptr);

// quantile thresholds weighted toward where the gradient mass sits, so
// plateaus do not eat the budget; values with mass below
// mass_floor_rel * max are ignored
std::vector<double> select_thresholds(const MetricDomain& dom, const Form0& u, int count,
                                      double mass_floor_rel = 1e-6);

struct DisjointnessReport {
  double min_distance = 0.0;
  bool disjoint = true;
  std::vector<Vec2> crossings;
};

DisjointnessReport check_disjointness(const std::vector<Leaf>& leaves);

// geodesic curvature at interior vertices of the (stair-filtered) polyline;
// the euclidean turning rate is corrected by the conformal connection term
std::vector<double> leaf_curvature(const Leaf& leaf, const MetricDomain& dom);

struct TubeReport {
  int windows = 0;
  int graph_failures = 0;  // leaf turned too hard to be a graph in a window
  double worst_excess = 0.0;
  bool ok = true;
};

// writes the leaf near sampled points as a graph over its tangent line and
// checks the quadratic height bound A x^2 plus grid slack
TubeReport tube_check(const Leaf& leaf, const MetricDomain& dom);

struct FlowBoxOptions {
  double delta = 0.2;  // target slope bound; graphs must stay under 3*delta
  double half_width = -1.0;   // <0: 0.2 * shorter domain extent
  double half_height = -1.0;  // <0: same as half_width
  int max_halvings = 5;
  double lip_bound = 4.0;
  int lip_samples = 10000;
  std::uint64_t seed = 1234;
};

// chart around a base point on the nearest leaf: xi runs along the leaf,
// eta across it, and each nearby leaf appears as the graph of one label
struct FlowBox {
  Vec2 base;
  Vec2 tangent, normal;
  double half_w = 0.0, half_h = 0.0;
  std::vector<double> xi_grid;
  std::vector<double> labels;               // eta-intercepts, ascending
  std::vector<int> leaf_ids;                // source leaf per label
  std::vector<std::vector<double>> graphs;  // eta samples over xi_grid per label
  double lip_F = 0.0, lip_Finv = 0.0;

  double f(double xi, double eta) const;
  Vec2 map(double xi, double eta) const;
  // returns false when q falls outside the chart image
  bool invert(const Vec2& q, double& xi, double& eta) const;
};

struct Transition {
  int box_a = 0, box_b = 0;
  // label in box_a paired with the label of the same leaf in box_b
  std::vector<std::pair<double, double>> label_pairs;
  bool consistent = true;
};

struct Lamination {
  std::vector<Leaf> leaves;
  std::vector<std::uint8_t> support;  // per-node raster
  std::vector<FlowBox> atlas;
  std::vector<Transition> transitions;
  double curvature_bound = 0.0;
  int merged_duplicates = 0;
  int uncovered = 0;  // support nodes no box could be built around
};

FlowBox build_flow_box(const Lamination& lam, const Vec2& p, const MetricDomain& dom,
                       const FlowBoxOptions& opts = {});

struct AssembleOptions {
  FlowBoxOptions box;
  double dedup_tol_cells = 2.0;
  bool build_atlas = true;
};

Lamination assemble_lamination(const std::vector<Leaf>& leaves, const MetricDomain& dom,
                               const AssembleOptions& opts = {});

struct MinimalityReport {
  double leaf_length = 0.0;
  double oracle_length = 0.0;
  Vec2 exit_a, exit_b;
  bool ok = true;
};

// compares the leaf segment inside a euclidean window against the grid
// shortest path joining the same exit points
MinimalityReport local_minimality_test(const Leaf& leaf, const MetricDomain& dom,
                                       const Vec2& center, double radius);

// conformal length of the part of the leaf inside the euclidean ball B(c, r)
double leaf_length_in_ball(const Leaf& leaf, const MetricDomain& dom, const Vec2& c,
                           double r);

}  // namespace lamina
