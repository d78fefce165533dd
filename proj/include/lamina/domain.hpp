#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lamina/error.hpp"
#include "lamina/geometry.hpp"

namespace lamina {

// unit-ball volumes in dimensions 1 and 2
inline constexpr double kOmega1 = 2.0;
inline constexpr double kOmega2 = 3.14159265358979323846;

enum class MetricKind { Euclidean, PoincareDisk, Custom };

struct GridSpec {
  int nx = 64;
  int ny = 64;
  double h = 1.0 / 64.0;
};

struct DomainConfig {
  GridSpec grid;
  // "rect", "disk:<radius>", or "table" (mask_table supplied)
  std::string mask = "rect";
  // "euclidean", "poincare", or "table" (rho_table supplied)
  std::string metric = "euclidean";
  double riem_bound = -1.0;          // <0: derive from metric kind
  double injectivity_radius = -1.0;  // <0: derive
  std::vector<std::uint8_t> mask_table;
  std::vector<double> rho_table;
};

// Scalar samples live at cell centers ("nodes"). A 1-form lives on forward
// edges between adjacent in-mask nodes, a 2-form on dual squares of four nodes.
struct Form0 {
  std::vector<double> a;
  Form0() = default;
  explicit Form0(std::size_t n) : a(n, 0.0) {}
};

struct Form1 {
  std::vector<double> hx;  // hx[idx(i,j)]: edge node(i,j) -> node(i+1,j)
  std::vector<double> vy;  // vy[idx(i,j)]: edge node(i,j) -> node(i,j+1)
  Form1() = default;
  explicit Form1(std::size_t n) : hx(n, 0.0), vy(n, 0.0) {}
};

struct Form2 {
  std::vector<double> c;  // dual cell (i,j): nodes (i,j),(i+1,j),(i,j+1),(i+1,j+1)
  Form2() = default;
  explicit Form2(std::size_t n) : c(n, 0.0) {}
};

class MetricDomain {
 public:
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double h() const { return h_; }
  std::size_t nn() const { return std::size_t(nx_) * std::size_t(ny_); }
  MetricKind metric_kind() const { return kind_; }
  double riem_bound() const { return riem_bound_; }
  double injectivity_radius() const { return inj_radius_; }

  int idx(int i, int j) const { return j * nx_ + i; }
  bool valid(int i, int j) const { return i >= 0 && i < nx_ && j >= 0 && j < ny_; }
  bool in_mask(int i, int j) const { return valid(i, j) && mask_[idx(i, j)]; }
  bool in_mask_idx(int k) const { return mask_[k] != 0; }

  Vec2 node_pos(int i, int j) const {
    return {origin_.x + h_ * i, origin_.y + h_ * j};
  }
  Vec2 origin() const { return origin_; }

  double rho(int i, int j) const { return rho_[idx(i, j)]; }
  double rho_idx(int k) const { return rho_[k]; }
  // bilinear in the node lattice, clamped to the grid box
  double rho_at(const Vec2& p) const;

  bool has_hedge(int i, int j) const { return in_mask(i, j) && in_mask(i + 1, j); }
  bool has_vedge(int i, int j) const { return in_mask(i, j) && in_mask(i, j + 1); }

  bool is_boundary(int i, int j) const { return in_mask(i, j) && bdry_[idx(i, j)]; }
  // exposed sides of a boundary node (0 for interior nodes)
  int exposed_sides(int i, int j) const { return bdry_[idx(i, j)]; }
  const std::vector<int>& boundary_nodes() const { return boundary_nodes_; }
  const std::vector<int>& mask_nodes() const { return mask_nodes_; }
  std::size_t mask_count() const { return mask_nodes_.size(); }

  bool nearest_node(const Vec2& p, int& i, int& j) const;

  double cell_area_g(int i, int j) const { double r = rho(i, j); return r * r * h_ * h_; }
  double mask_area_g() const;

  friend MetricDomain build_domain(const DomainConfig& cfg);

 private:
  int nx_ = 0, ny_ = 0;
  double h_ = 0.0;
  Vec2 origin_;
  MetricKind kind_ = MetricKind::Euclidean;
  double riem_bound_ = 0.0, inj_radius_ = 0.0;
  std::vector<std::uint8_t> mask_;
  std::vector<std::uint8_t> bdry_;
  std::vector<double> rho_;
  std::vector<int> boundary_nodes_;  // row-major order, deterministic
  std::vector<int> mask_nodes_;
};

MetricDomain build_domain(const DomainConfig& cfg);

// forward differences, metric-free exterior derivative on 0-forms
Form1 grad(const Form0& u, const MetricDomain& dom);

// negative adjoint of grad under the weighted inner products below
Form0 divergence(const Form1& X, const MetricDomain& dom);

// exterior derivative of a 1-form: circulation density on dual cells
Form2 curl(const Form1& X, const MetricDomain& dom);

// <u,v> with weight rho^2 h^2 per node (metric cell area)
double inner0(const Form0& u, const Form0& v, const MetricDomain& dom);
// <X,Y> with weight h^2 per edge; the conformal factor cancels for 1-forms in 2d
double inner1(const Form1& X, const Form1& Y, const MetricDomain& dom);

// pointwise |X|_g by incident-edge averaging, divided by rho
Form0 metric_norm_1form(const Form1& X, const MetricDomain& dom);

// per-node contribution to the mass integral(*|du|): rho h^2 |forward pair|
Form0 mass_density(const Form1& X, const MetricDomain& dom);
double total_mass(const Form1& X, const MetricDomain& dom);

// exact geodesic between two points for the built-in metrics, sampled at
// euclidean spacing <= step (default: grid spacing)
Polyline geodesic_arc(const Vec2& p, const Vec2& q, const MetricDomain& dom,
                      double step = -1.0);

// ideal boundary endpoints (angles on the unit circle) of the complete
// hyperbolic geodesic through p with direction v; first < second in [0,2pi)
std::pair<double, double> poincare_ideal_endpoints(const Vec2& p, const Vec2& v);

// rho-weighted length of a polyline, midpoint quadrature at substep <= h/2
double polyline_length_g(const Polyline& poly, const MetricDomain& dom);

struct PathResult {
  double length = 0.0;
  Polyline points;
};

// Dijkstra on the 8-connected in-mask node graph, edge weight = euclidean step
// times the average rho of its ends; endpoints snap to nearest in-mask nodes
PathResult graph_shortest_path(const MetricDomain& dom, const Vec2& a, const Vec2& b);

// numerical Gauss curvature -lap(log rho)/rho^2 at an interior node
double gauss_curvature(const MetricDomain& dom, int i, int j);

}  // namespace lamina
