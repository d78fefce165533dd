#pragma once

#include <cstdint>
#include <vector>

#include "lamina/domain.hpp"

namespace lamina {

// minimum-boundary set exceeding a threshold of the boundary data. The cost of
// a candidate set is its interior face perimeter (metric weighted) plus the
// penalty for disagreeing with the data on exposed boundary cells.
struct CutResult {
  double value = 0.0;      // perimeter + mismatch
  double perimeter = 0.0;  // interior faces crossed
  double mismatch = 0.0;   // boundary disagreement penalty
  std::vector<std::uint8_t> in_set;  // one flag per grid node
};

// interior part: sum of h*(rho_a+rho_b)/2 over mask faces separating the set
// from its complement
double face_perimeter(const MetricDomain& dom, const std::vector<std::uint8_t>& in_set);

// boundary part: rho_n*h per exposed side wherever membership disagrees with
// the sign of (data - y)
double boundary_mismatch(const MetricDomain& dom, const Form0& bdata, double y,
                         const std::vector<std::uint8_t>& in_set);

// max-flow solution; the reported set is the source side of the residual
// graph, which is the canonical minimal cut
CutResult mincut_superlevel(const MetricDomain& dom, const Form0& bdata, double y);

// brute force over all subsets of the mask, for cross-checking on tiny masks
CutResult enumerate_superlevel(const MetricDomain& dom, const Form0& bdata, double y,
                               int max_cells = 20);

}  // namespace lamina
