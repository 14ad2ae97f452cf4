#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "rie/common.hpp"

namespace rie {

/// Rectangular cell-centered grid over a 1D or 2D state window.
///
/// Cell (i,j) has center lo + (i+1/2, j+1/2) * cell_size and the linear
/// index j*n[0] + i. All integrals over the grid are midpoint sums,
/// value * cell_area summed over cells.
struct GridGeometry {
  StateVec lo;
  StateVec hi;
  std::array<std::size_t, 2> n_cells{1, 1};
  int dim = 0;

  static GridGeometry make(StateVec lo, StateVec hi,
                           std::array<std::size_t, 2> n_cells) {
    if (lo.size() != hi.size() || (lo.size() != 1 && lo.size() != 2))
      throw Error("GridGeometry: state dimension must be 1 or 2");
    GridGeometry g;
    g.dim = static_cast<int>(lo.size());
    g.lo = lo;
    g.hi = hi;
    g.n_cells = n_cells;
    if (g.dim == 1) g.n_cells[1] = 1;
    for (int r = 0; r < g.dim; ++r) {
      if (!(lo[r] < hi[r])) throw Error("GridGeometry: lo must be below hi");
      if (g.n_cells[static_cast<std::size_t>(r)] < 2)
        throw Error("GridGeometry: need at least 2 cells per dimension");
    }
    return g;
  }

  double cell_size(int r) const {
    return (hi[static_cast<std::size_t>(r)] - lo[static_cast<std::size_t>(r)]) /
           static_cast<double>(n_cells[static_cast<std::size_t>(r)]);
  }

  double cell_area() const {
    double a = 1.0;
    for (int r = 0; r < dim; ++r) a *= cell_size(r);
    return a;
  }

  std::size_t total_cells() const { return n_cells[0] * n_cells[1]; }

  StateVec center(std::size_t linear) const {
    const std::size_t i = linear % n_cells[0];
    const std::size_t j = linear / n_cells[0];
    StateVec c;
    c.push_back(lo[0] + (static_cast<double>(i) + 0.5) * cell_size(0));
    if (dim == 2) c.push_back(lo[1] + (static_cast<double>(j) + 0.5) * cell_size(1));
    return c;
  }

  /// Linear index of the cell containing x; x must lie inside the window.
  std::size_t cell_of(const StateVec& x) const {
    std::size_t idx[2] = {0, 0};
    for (int r = 0; r < dim; ++r) {
      const auto ur = static_cast<std::size_t>(r);
      const double t = (x[ur] - lo[ur]) / cell_size(r);
      auto i = static_cast<std::ptrdiff_t>(t);
      i = std::clamp<std::ptrdiff_t>(i, 0,
                                     static_cast<std::ptrdiff_t>(n_cells[ur]) - 1);
      idx[ur] = static_cast<std::size_t>(i);
    }
    return idx[1] * n_cells[0] + idx[0];
  }

  bool contains(const StateVec& x) const {
    for (int r = 0; r < dim; ++r) {
      const auto ur = static_cast<std::size_t>(r);
      if (x[ur] < lo[ur] || x[ur] > hi[ur]) return false;
    }
    return true;
  }

  friend bool operator==(const GridGeometry& a, const GridGeometry& b) {
    return a.dim == b.dim && a.lo == b.lo && a.hi == b.hi && a.n_cells == b.n_cells;
  }
};

/// First and second moments of a gridded density.
struct MomentSummary {
  int dim = 0;
  StateVec mean;
  std::array<std::array<double, 2>, 2> covariance{{{0.0, 0.0}, {0.0, 0.0}}};

  double variance(int r) const {
    return covariance[static_cast<std::size_t>(r)][static_cast<std::size_t>(r)];
  }
};

/// Gridded density: one nonnegative value per cell, cell-center semantics.
/// Immutable after construction; every operation returns a new grid.
class DensityGrid {
 public:
  DensityGrid(GridGeometry geometry, std::vector<double> values)
      : geometry_(geometry), values_(std::move(values)) {
    if (values_.size() != geometry_.total_cells())
      throw Error("DensityGrid: value count does not match geometry");
    for (double v : values_)
      if (!(v >= 0.0) || !std::isfinite(v))
        throw Error("DensityGrid: values must be finite and nonnegative");
  }

  const GridGeometry& geometry() const { return geometry_; }
  std::span<const double> values() const { return values_; }
  double value(std::size_t linear) const { return values_[linear]; }
  std::size_t size() const { return values_.size(); }

  double max_value() const {
    return *std::max_element(values_.begin(), values_.end());
  }

  /// Midpoint-rule integral of the density over the window.
  double integral() const { return kahan_sum(values_) * geometry_.cell_area(); }

  bool is_normalized(double tol = 1e-6) const {
    return std::abs(integral() - 1.0) <= tol;
  }

 private:
  GridGeometry geometry_;
  std::vector<double> values_;
};

/// Uniform density on the cells whose centers lie in [support_lo, support_hi].
inline DensityGrid new_uniform(const GridGeometry& geometry, StateVec support_lo,
                               StateVec support_hi) {
  if (static_cast<int>(support_lo.size()) != geometry.dim ||
      static_cast<int>(support_hi.size()) != geometry.dim)
    throw Error("new_uniform: support dimension mismatch");
  std::vector<double> v(geometry.total_cells(), 0.0);
  std::size_t hits = 0;
  for (std::size_t c = 0; c < v.size(); ++c) {
    const StateVec x = geometry.center(c);
    bool inside = true;
    for (int r = 0; r < geometry.dim; ++r) {
      const auto ur = static_cast<std::size_t>(r);
      if (x[ur] < support_lo[ur] || x[ur] > support_hi[ur]) inside = false;
    }
    if (inside) {
      v[c] = 1.0;
      ++hits;
    }
  }
  if (hits == 0) throw Error("degenerate initial density: support box misses every cell center");
  const double mass = static_cast<double>(hits) * geometry.cell_area();
  for (double& x : v) x /= mass;
  return DensityGrid(geometry, std::move(v));
}

/// Density sampled from an independent Gaussian per component, normalized
/// on the grid.
inline DensityGrid new_gaussian(const GridGeometry& geometry, StateVec mean,
                                StateVec std) {
  if (static_cast<int>(mean.size()) != geometry.dim ||
      static_cast<int>(std.size()) != geometry.dim)
    throw Error("new_gaussian: parameter dimension mismatch");
  for (int r = 0; r < geometry.dim; ++r)
    if (!(std[static_cast<std::size_t>(r)] > 0.0))
      throw Error("new_gaussian: std must be positive");
  std::vector<double> v(geometry.total_cells(), 0.0);
  for (std::size_t c = 0; c < v.size(); ++c) {
    const StateVec x = geometry.center(c);
    double p = 1.0;
    for (int r = 0; r < geometry.dim; ++r) {
      const auto ur = static_cast<std::size_t>(r);
      const double z = (x[ur] - mean[ur]) / std[ur];
      p *= std::exp(-0.5 * z * z);
    }
    v[c] = p;
  }
  const double mass = kahan_sum(v) * geometry.cell_area();
  if (!(mass > 0.0)) throw Error("degenerate initial density: Gaussian mass vanishes on grid");
  for (double& x : v) x /= mass;
  return DensityGrid(geometry, std::move(v));
}

/// Rescales so the midpoint integral is exactly 1 (within 1e-12).
inline DensityGrid normalize(const DensityGrid& grid) {
  const double mass = grid.integral();
  if (!(mass > 0.0)) throw Error("vanishing posterior: grid integrates to zero");
  std::vector<double> v(grid.values().begin(), grid.values().end());
  for (double& x : v) x /= mass;
  return DensityGrid(grid.geometry(), std::move(v));
}

namespace detail {
inline void require_normalized(const DensityGrid& grid, const char* op) {
  if (!grid.is_normalized())
    throw Error(std::string(op) + ": grid is not normalized");
}
}  // namespace detail

/// Discrete mean and covariance, midpoint expectation over cell centers.
inline MomentSummary moments(const DensityGrid& grid) {
  detail::require_normalized(grid, "moments");
  const GridGeometry& g = grid.geometry();
  const double area = g.cell_area();
  MomentSummary m;
  m.dim = g.dim;
  double mean[2] = {0.0, 0.0};
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const StateVec x = g.center(c);
    const double w = grid.value(c) * area;
    for (int r = 0; r < g.dim; ++r) mean[r] += x[static_cast<std::size_t>(r)] * w;
  }
  for (int r = 0; r < g.dim; ++r) m.mean.push_back(mean[r]);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const StateVec x = g.center(c);
    const double w = grid.value(c) * area;
    for (int r = 0; r < g.dim; ++r)
      for (int s = 0; s < g.dim; ++s)
        m.covariance[static_cast<std::size_t>(r)][static_cast<std::size_t>(s)] +=
            (x[static_cast<std::size_t>(r)] - mean[r]) *
            (x[static_cast<std::size_t>(s)] - mean[s]) * w;
  }
  return m;
}

/// Center of the maximal cell; ties break to the lowest linear index.
inline StateVec mode(const DensityGrid& grid) {
  detail::require_normalized(grid, "mode");
  std::size_t best = 0;
  double best_v = grid.value(0);
  for (std::size_t c = 1; c < grid.size(); ++c) {
    if (grid.value(c) > best_v) {
      best_v = grid.value(c);
      best = c;
    }
  }
  return grid.geometry().center(best);
}

/// Integrated absolute difference, sum |a-b| * cell_area.
inline double l1_distance(const DensityGrid& a, const DensityGrid& b) {
  if (!(a.geometry() == b.geometry()))
    throw Error("l1_distance: geometry mismatch");
  std::vector<double> diff(a.size());
  for (std::size_t c = 0; c < a.size(); ++c)
    diff[c] = std::abs(a.value(c) - b.value(c));
  return kahan_sum(diff) * a.geometry().cell_area();
}

}  // namespace rie
