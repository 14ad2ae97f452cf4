#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "rie/common.hpp"
#include "rie/density.hpp"
#include "rie/models.hpp"
#include "rie/rng.hpp"

namespace rie {

/// Parameters of the 2D Ornstein-Uhlenbeck process dx_i = -x_i dt + sigma_i dW_i.
struct OuAnalyticParams {
  StateVec x0;
  StateVec sigma;
};

/// Closed-form transient moments of the OU process:
///   M(t)     = x0 * exp(-t)
///   Sigma(t) = (1 - exp(-2t))/2 * diag(sigma_1^2, sigma_2^2)
inline MomentSummary ou_analytic_moments(const OuAnalyticParams& p, double t) {
  if (!(t >= 0.0)) throw Error("ou_analytic_moments: t must be >= 0");
  for (double s : p.sigma)
    if (!(s > 0.0)) throw Error("ou_analytic_moments: sigma must be > 0");
  MomentSummary m;
  m.dim = static_cast<int>(p.x0.size());
  const double decay = std::exp(-t);
  const double var_factor = 0.5 * (1.0 - std::exp(-2.0 * t));
  for (std::size_t r = 0; r < p.x0.size(); ++r) {
    m.mean.push_back(p.x0[r] * decay);
    m.covariance[r][r] = var_factor * p.sigma[r] * p.sigma[r];
  }
  return m;
}

/// Histogram of pathwise Monte-Carlo endpoints on a grid. Paths ending
/// outside the window are dropped from the counts and tallied separately.
struct PathwiseHistogram {
  GridGeometry geometry;
  std::vector<double> counts;
  std::size_t n_paths = 0;
  std::size_t out_of_window = 0;

  double in_window() const {
    return static_cast<double>(n_paths - out_of_window);
  }
};

using InitSampler = std::function<StateVec(RngStream&)>;

inline InitSampler uniform_box_sampler(StateVec lo, StateVec hi) {
  return [lo, hi](RngStream& rng) {
    StateVec x;
    for (std::size_t r = 0; r < lo.size(); ++r)
      x.push_back(rng.uniform(lo[r], hi[r]));
    return x;
  };
}

inline InitSampler gaussian_sampler(StateVec mean, StateVec std) {
  return [mean, std](RngStream& rng) {
    StateVec x;
    for (std::size_t r = 0; r < mean.size(); ++r)
      x.push_back(rng.normal(mean[r], std[r]));
    return x;
  };
}

/// Repeated pathwise simulation of the iteration: every path draws its own
/// initial state and fresh parameter samples each iteration, and the final
/// states are binned. This is the statistical baseline used as an
/// independent oracle against the full-density propagation.
inline PathwiseHistogram pathwise_histogram(const TransferModel& model,
                                            const InitSampler& init_sampler,
                                            int n_iterations, std::size_t n_paths,
                                            const GridGeometry& geometry,
                                            const RngStream& rng, int n_workers = 1) {
  if (n_paths < 1) throw Error("pathwise_histogram: n_paths must be >= 1");
  if (model.state_dim != geometry.dim)
    throw Error("pathwise_histogram: model dimension does not match grid");

  std::vector<std::vector<double>> buffers(
      static_cast<std::size_t>(n_workers),
      std::vector<double>(geometry.total_cells(), 0.0));
  std::vector<std::size_t> dropped(static_cast<std::size_t>(n_workers), 0);

  run_workers(n_workers, [&](int w) {
    auto& buf = buffers[static_cast<std::size_t>(w)];
    const WorkerRange range = worker_range(n_paths, n_workers, w);
    RngStream local(rng.seed(),
                    derive_stream(StreamPurpose::PathwiseSim, rng.stream(),
                                  static_cast<std::uint64_t>(w)));
    const std::size_t k_dim = static_cast<std::size_t>(model.param_dim);
    for (std::size_t p = range.begin; p < range.end; ++p) {
      StateVec x = init_sampler(local);
      for (int n = 1; n <= n_iterations; ++n) {
        ParamVec c;
        for (std::size_t k = 0; k < k_dim; ++k)
          c.push_back(density_sample(model.param_densities[k], local));
        const double t_n = model.dt ? static_cast<double>(n - 1) * *model.dt
                                    : static_cast<double>(n - 1);
        x = model.transfer(x, c, t_n);
      }
      if (geometry.contains(x))
        buf[geometry.cell_of(x)] += 1.0;
      else
        ++dropped[static_cast<std::size_t>(w)];
    }
  });

  PathwiseHistogram h;
  h.geometry = geometry;
  h.counts = std::move(buffers[0]);
  for (int w = 1; w < n_workers; ++w)
    for (std::size_t i = 0; i < h.counts.size(); ++i)
      h.counts[i] += buffers[static_cast<std::size_t>(w)][i];
  h.n_paths = n_paths;
  for (std::size_t d : dropped) h.out_of_window += d;
  return h;
}

/// Overlap coefficient between a gridded density and a pathwise histogram
/// on the same geometry: sum of min(p_cell, q_cell) over normalized cell
/// masses. 1 for identical distributions, 0 for disjoint supports.
inline double overlap_coefficient(const DensityGrid& grid,
                                  const PathwiseHistogram& hist) {
  if (!(grid.geometry() == hist.geometry))
    throw Error("overlap_coefficient: geometry mismatch");
  const double total = kahan_sum(hist.counts);
  if (!(total > 0.0)) throw Error("overlap_coefficient: empty histogram");
  const double area = grid.geometry().cell_area();
  std::vector<double> mins(grid.size());
  for (std::size_t c = 0; c < grid.size(); ++c)
    mins[c] = std::min(grid.value(c) * area, hist.counts[c] / total);
  return kahan_sum(mins);
}

using TimedPath = std::vector<std::pair<double, StateVec>>;

/// Deterministic step-size reference for a discretized dynamics model at
/// zero noise: an Euler path at dt_euler against a classic fixed-step RK4
/// path at dt_euler/10. The right-hand side is recovered from the transfer,
/// rhs(x) = (T(x, c_mean) - x) / dt_model.
inline std::pair<TimedPath, TimedPath> deterministic_reference(
    const TransferModel& model, const StateVec& x0, double t_end, double dt_euler) {
  if (!model.dt)
    throw Error("deterministic_reference: model is not a discretized dynamics model");
  if (!(dt_euler > 0.0) || !(t_end > 0.0))
    throw Error("deterministic_reference: dt_euler and t_end must be > 0");

  const ParamVec c_mean = model.param_means();
  const double dt_model = *model.dt;
  auto rhs = [&](const StateVec& x, double t) {
    const StateVec tx = model.transfer(x, c_mean, t);
    StateVec out;
    for (std::size_t r = 0; r < x.size(); ++r)
      out.push_back((tx[r] - x[r]) / dt_model);
    return out;
  };

  TimedPath euler;
  const auto n_euler = static_cast<int>(std::llround(t_end / dt_euler));
  StateVec x = x0;
  euler.emplace_back(0.0, x);
  for (int n = 0; n < n_euler; ++n) {
    const double t = static_cast<double>(n) * dt_euler;
    const StateVec f = rhs(x, t);
    StateVec nx;
    for (std::size_t r = 0; r < x.size(); ++r) nx.push_back(x[r] + dt_euler * f[r]);
    x = nx;
    euler.emplace_back(static_cast<double>(n + 1) * dt_euler, x);
  }

  TimedPath rk4;
  const double h = dt_euler / 10.0;
  const int n_rk = n_euler * 10;
  x = x0;
  rk4.emplace_back(0.0, x);
  auto axpy = [](const StateVec& a, double s, const StateVec& b) {
    StateVec out;
    for (std::size_t r = 0; r < a.size(); ++r) out.push_back(a[r] + s * b[r]);
    return out;
  };
  for (int n = 0; n < n_rk; ++n) {
    const double t = static_cast<double>(n) * h;
    const StateVec k1 = rhs(x, t);
    const StateVec k2 = rhs(axpy(x, 0.5 * h, k1), t + 0.5 * h);
    const StateVec k3 = rhs(axpy(x, 0.5 * h, k2), t + 0.5 * h);
    const StateVec k4 = rhs(axpy(x, h, k3), t + h);
    StateVec nx;
    for (std::size_t r = 0; r < x.size(); ++r)
      nx.push_back(x[r] + h / 6.0 * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r]));
    x = nx;
    rk4.emplace_back(static_cast<double>(n + 1) * h, x);
  }

  return {std::move(euler), std::move(rk4)};
}

/// Largest componentwise deviation between the Euler path and the RK4 path
/// at the Euler time stamps.
inline double reference_max_deviation(const TimedPath& euler, const TimedPath& rk4) {
  double worst = 0.0;
  for (std::size_t n = 0; n < euler.size(); ++n) {
    const StateVec& a = euler[n].second;
    const StateVec& b = rk4[n * 10].second;
    for (std::size_t r = 0; r < a.size(); ++r)
      worst = std::max(worst, std::abs(a[r] - b[r]));
  }
  return worst;
}

}  // namespace rie
