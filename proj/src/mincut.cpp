#include "lamina/mincut.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "lamina/error.hpp"

namespace lamina {

namespace {

constexpr double kResidualEps = 1e-13;

struct Dinic {
  struct Edge {
    int to;
    double cap;
    int rev;
  };
  std::vector<std::vector<Edge>> g;
  std::vector<int> level, iter;

  explicit Dinic(int n) : g(n), level(n), iter(n) {}

  void add_edge(int a, int b, double cab, double cba) {
    g[a].push_back({b, cab, static_cast<int>(g[b].size())});
    g[b].push_back({a, cba, static_cast<int>(g[a].size()) - 1});
  }

  bool bfs(int s, int t) {
    std::fill(level.begin(), level.end(), -1);
    std::deque<int> q{s};
    level[s] = 0;
    while (!q.empty()) {
      int v = q.front();
      q.pop_front();
      for (const Edge& e : g[v])
        if (e.cap > kResidualEps && level[e.to] < 0) {
          level[e.to] = level[v] + 1;
          q.push_back(e.to);
        }
    }
    return level[t] >= 0;
  }

  double dfs(int v, int t, double f) {
    if (v == t) return f;
    for (int& i = iter[v]; i < static_cast<int>(g[v].size()); ++i) {
      Edge& e = g[v][i];
      if (e.cap > kResidualEps && level[v] < level[e.to]) {
        double d = dfs(e.to, t, std::min(f, e.cap));
        if (d > 0.0) {
          e.cap -= d;
          g[e.to][e.rev].cap += d;
          return d;
        }
      }
    }
    return 0.0;
  }

  double maxflow(int s, int t) {
    double flow = 0.0;
    while (bfs(s, t)) {
      std::fill(iter.begin(), iter.end(), 0);
      for (;;) {
        double f = dfs(s, t, std::numeric_limits<double>::infinity());
        if (f <= 0.0) break;
        flow += f;
      }
    }
    return flow;
  }

  std::vector<std::uint8_t> source_side(int s) {
    std::vector<std::uint8_t> vis(g.size(), 0);
    std::deque<int> q{s};
    vis[s] = 1;
    while (!q.empty()) {
      int v = q.front();
      q.pop_front();
      for (const Edge& e : g[v])
        if (e.cap > kResidualEps && !vis[e.to]) {
          vis[e.to] = 1;
          q.push_back(e.to);
        }
    }
    return vis;
  }
};

double face_capacity(const MetricDomain& dom, int i, int j, bool horizontal) {
  double ra = dom.rho(i, j);
  double rb = horizontal ? dom.rho(i + 1, j) : dom.rho(i, j + 1);
  return dom.h() * 0.5 * (ra + rb);
}

}  // namespace

double face_perimeter(const MetricDomain& dom, const std::vector<std::uint8_t>& in_set) {
  if (in_set.size() != dom.nn()) throw Error(Errc::ShapeMismatch, "set size != node count");
  double per = 0.0;
  for (int j = 0; j < dom.ny(); ++j)
    for (int i = 0; i < dom.nx(); ++i) {
      int k = dom.idx(i, j);
      if (dom.has_hedge(i, j) && in_set[k] != in_set[dom.idx(i + 1, j)])
        per += face_capacity(dom, i, j, true);
      if (dom.has_vedge(i, j) && in_set[k] != in_set[dom.idx(i, j + 1)])
        per += face_capacity(dom, i, j, false);
    }
  return per;
}

double boundary_mismatch(const MetricDomain& dom, const Form0& bdata, double y,
                         const std::vector<std::uint8_t>& in_set) {
  if (in_set.size() != dom.nn() || bdata.a.size() != dom.nn())
    throw Error(Errc::ShapeMismatch, "field size != node count");
  double pen = 0.0;
  for (int k : dom.boundary_nodes()) {
    bool want = bdata.a[k] > y;
    if (static_cast<bool>(in_set[k]) != want)
      pen += dom.rho_idx(k) * dom.h() * dom.exposed_sides(k % dom.nx(), k / dom.nx());
  }
  return pen;
}

CutResult mincut_superlevel(const MetricDomain& dom, const Form0& bdata, double y) {
  if (bdata.a.size() != dom.nn()) throw Error(Errc::ShapeMismatch, "data size != node count");
  const auto& nodes = dom.mask_nodes();
  std::vector<int> local(dom.nn(), -1);
  for (std::size_t m = 0; m < nodes.size(); ++m) local[nodes[m]] = static_cast<int>(m);
  const int s = static_cast<int>(nodes.size());
  const int t = s + 1;
  Dinic net(t + 1);
  for (int j = 0; j < dom.ny(); ++j)
    for (int i = 0; i < dom.nx(); ++i) {
      if (dom.has_hedge(i, j)) {
        double c = face_capacity(dom, i, j, true);
        net.add_edge(local[dom.idx(i, j)], local[dom.idx(i + 1, j)], c, c);
      }
      if (dom.has_vedge(i, j)) {
        double c = face_capacity(dom, i, j, false);
        net.add_edge(local[dom.idx(i, j)], local[dom.idx(i, j + 1)], c, c);
      }
    }
  for (int k : dom.boundary_nodes()) {
    double c = dom.rho_idx(k) * dom.h() * dom.exposed_sides(k % dom.nx(), k / dom.nx());
    if (bdata.a[k] > y)
      net.add_edge(s, local[k], c, 0.0);
    else
      net.add_edge(local[k], t, c, 0.0);
  }
  net.maxflow(s, t);
  auto side = net.source_side(s);
  CutResult r;
  r.in_set.assign(dom.nn(), 0);
  for (std::size_t m = 0; m < nodes.size(); ++m) r.in_set[nodes[m]] = side[m];
  r.perimeter = face_perimeter(dom, r.in_set);
  r.mismatch = boundary_mismatch(dom, bdata, y, r.in_set);
  r.value = r.perimeter + r.mismatch;
  return r;
}

CutResult enumerate_superlevel(const MetricDomain& dom, const Form0& bdata, double y,
                               int max_cells) {
  const auto& nodes = dom.mask_nodes();
  const int m = static_cast<int>(nodes.size());
  if (m > max_cells || m > 24)
    throw Error(Errc::ConfigInvalid, "mask too large for exhaustive enumeration");
  CutResult best;
  best.value = std::numeric_limits<double>::infinity();
  std::vector<std::uint8_t> set(dom.nn(), 0);
  for (std::uint32_t bits = 0; bits < (1u << m); ++bits) {
    for (int b = 0; b < m; ++b) set[nodes[b]] = (bits >> b) & 1u;
    double per = face_perimeter(dom, set);
    double mis = boundary_mismatch(dom, bdata, y, set);
    if (per + mis < best.value - 1e-15) {
      best.value = per + mis;
      best.perimeter = per;
      best.mismatch = mis;
      best.in_set = set;
    }
  }
  return best;
}

}  // namespace lamina
