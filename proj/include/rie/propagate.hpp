#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <sstream>
#include <vector>

#include "rie/common.hpp"
#include "rie/density.hpp"
#include "rie/models.hpp"
#include "rie/rng.hpp"
#include "rie/sampling.hpp"

namespace rie {

/// Zero-centered Gaussian regularizer, one std per state component. It
/// replaces the exact-equality constraint between the next state and the
/// transfer output, turning each sample into a smoothing kernel.
struct ZeroNoiseSpec {
  StateVec sigma;

  static ZeroNoiseSpec make(StateVec sigma) {
    for (double s : sigma)
      if (!(s > 0.0)) throw Error("ZeroNoiseSpec: all sigma_B entries must be > 0");
    return ZeroNoiseSpec{sigma};
  }

  static ZeroNoiseSpec uniform(int dim, double s) {
    return make(StateVec::filled(static_cast<std::size_t>(dim), s));
  }
};

/// Product of the per-component zero-noise Gaussian pdfs evaluated at x - t.
inline double gaussian_kernel_value(const StateVec& x, const StateVec& t,
                                    const ZeroNoiseSpec& sigma_b) {
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  double p = 1.0;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double z = (x[r] - t[r]) / sigma_b.sigma[r];
    p *= std::exp(-0.5 * z * z) * inv_sqrt_2pi / sigma_b.sigma[r];
  }
  return p;
}

/// Diagnostics from one Monte-Carlo accumulation.
struct StepStats {
  std::size_t sample_count = 0;
  /// Samples whose transfer output lies farther than the truncation radius
  /// (6 sigma_B per component) from the window; they contribute nothing.
  std::size_t out_of_range = 0;

  double out_of_range_fraction() const {
    return sample_count == 0
               ? 0.0
               : static_cast<double>(out_of_range) / static_cast<double>(sample_count);
  }
};

namespace detail {

// Index range of cell centers within 6 sigma of z along one axis.
struct SplatRange {
  std::ptrdiff_t first = 0;
  std::ptrdiff_t last = -1;  // inclusive; empty when last < first
};

inline SplatRange splat_range(double z, double radius, double lo, double csz,
                              std::size_t n) {
  SplatRange r;
  r.first = static_cast<std::ptrdiff_t>(std::ceil((z - radius - lo) / csz - 0.5));
  r.last = static_cast<std::ptrdiff_t>(std::floor((z + radius - lo) / csz - 0.5));
  r.first = std::max<std::ptrdiff_t>(r.first, 0);
  r.last = std::min<std::ptrdiff_t>(r.last, static_cast<std::ptrdiff_t>(n) - 1);
  return r;
}

}  // namespace detail

/// Monte-Carlo estimate of the one-step likelihood on the grid:
/// for every cell center x,
///   value(x) = (1/P) * sum_p prod_r f_{B_r}( x_r - T_r(s1_p, s2_p) ).
/// Returned unnormalized. Kernel accumulation is truncated at 6 sigma_B per
/// component (relative error below 1e-8), making each sample a local splat.
///
/// The estimator is linear in the prior: accumulating the concatenation of
/// two batches equals the sample-count-weighted mixture of the separate
/// accumulations, up to floating-point reassociation.
///
/// Work is partitioned over samples; each worker accumulates into a private
/// buffer and buffers are reduced in worker order, so results are
/// reproducible for a fixed worker count.
inline DensityGrid accumulate_step(const GridGeometry& geometry,
                                   const TransferModel& model,
                                   const SampleBatch& batch,
                                   const ZeroNoiseSpec& sigma_b, int n_workers = 1,
                                   double t_n = 0.0, StepStats* stats = nullptr) {
  if (model.state_dim != geometry.dim)
    throw Error("accumulate_step: model state dimension does not match grid");
  if (batch.state.cols != static_cast<std::size_t>(model.state_dim) ||
      batch.params.cols != static_cast<std::size_t>(model.param_dim))
    throw Error("accumulate_step: batch shape does not match model dims");
  if (static_cast<int>(sigma_b.sigma.size()) != geometry.dim)
    throw Error("accumulate_step: sigma_B dimension mismatch");

  const std::size_t p_count = batch.count;
  const bool two_d = geometry.dim == 2;
  const std::size_t nx = geometry.n_cells[0];
  const double csz0 = geometry.cell_size(0);
  const double csz1 = two_d ? geometry.cell_size(1) : 1.0;
  const double s0 = sigma_b.sigma[0];
  const double s1 = two_d ? sigma_b.sigma[1] : 1.0;
  constexpr double inv_sqrt_2pi = 0.3989422804014327;
  const double norm0 = inv_sqrt_2pi / s0;
  const double norm1 = inv_sqrt_2pi / s1;

  std::vector<std::vector<double>> buffers(
      static_cast<std::size_t>(n_workers),
      std::vector<double>(geometry.total_cells(), 0.0));
  std::vector<std::size_t> missed(static_cast<std::size_t>(n_workers), 0);

  run_workers(n_workers, [&](int w) {
    auto& buf = buffers[static_cast<std::size_t>(w)];
    const WorkerRange range = worker_range(p_count, n_workers, w);
    std::vector<double> wx(nx);
    std::vector<double> wy(two_d ? geometry.n_cells[1] : 1);
    StateVec x;
    ParamVec c;
    for (std::size_t p = range.begin; p < range.end; ++p) {
      x = StateVec{};
      for (std::size_t r = 0; r < batch.state.cols; ++r)
        x.push_back(batch.state(p, r));
      c = ParamVec{};
      for (std::size_t k = 0; k < batch.params.cols; ++k)
        c.push_back(batch.params(p, k));
      const StateVec z = model.transfer(x, c, t_n);

      const auto rx =
          detail::splat_range(z[0], 6.0 * s0, geometry.lo[0], csz0, nx);
      if (rx.last < rx.first) {
        ++missed[static_cast<std::size_t>(w)];
        continue;
      }
      for (std::ptrdiff_t i = rx.first; i <= rx.last; ++i) {
        const double cx = geometry.lo[0] + (static_cast<double>(i) + 0.5) * csz0;
        const double u = (cx - z[0]) / s0;
        wx[static_cast<std::size_t>(i - rx.first)] = std::exp(-0.5 * u * u) * norm0;
      }

      if (!two_d) {
        for (std::ptrdiff_t i = rx.first; i <= rx.last; ++i)
          buf[static_cast<std::size_t>(i)] +=
              wx[static_cast<std::size_t>(i - rx.first)];
        continue;
      }

      const auto ry = detail::splat_range(z[1], 6.0 * s1, geometry.lo[1], csz1,
                                          geometry.n_cells[1]);
      if (ry.last < ry.first) {
        ++missed[static_cast<std::size_t>(w)];
        continue;
      }
      for (std::ptrdiff_t j = ry.first; j <= ry.last; ++j) {
        const double cy = geometry.lo[1] + (static_cast<double>(j) + 0.5) * csz1;
        const double u = (cy - z[1]) / s1;
        wy[static_cast<std::size_t>(j - ry.first)] = std::exp(-0.5 * u * u) * norm1;
      }
      for (std::ptrdiff_t j = ry.first; j <= ry.last; ++j) {
        double* row = buf.data() + static_cast<std::size_t>(j) * nx;
        const double wj = wy[static_cast<std::size_t>(j - ry.first)];
        for (std::ptrdiff_t i = rx.first; i <= rx.last; ++i)
          row[static_cast<std::size_t>(i)] +=
              wj * wx[static_cast<std::size_t>(i - rx.first)];
      }
    }
  });

  std::vector<double>& acc = buffers[0];
  for (int w = 1; w < n_workers; ++w)
    for (std::size_t i = 0; i < acc.size(); ++i)
      acc[i] += buffers[static_cast<std::size_t>(w)][i];
  const double inv_p = 1.0 / static_cast<double>(p_count);
  for (double& v : acc) v *= inv_p;

  if (stats) {
    stats->sample_count = p_count;
    stats->out_of_range = 0;
    for (std::size_t m : missed) stats->out_of_range += m;
  }
  return DensityGrid(geometry, std::move(acc));
}

/// One full-density step: accumulate the Monte-Carlo likelihood on the
/// prior's grid, then normalize. Transfer outputs outside the window are not
/// clipped or relocated; only whatever kernel mass reaches in-window cells
/// contributes.
inline DensityGrid step(const DensityGrid& prior, const TransferModel& model,
                        const SampleBatch& batch, const ZeroNoiseSpec& sigma_b,
                        int n_workers = 1, double t_n = 0.0,
                        StepStats* stats = nullptr) {
  StepStats local;
  DensityGrid acc = accumulate_step(prior.geometry(), model, batch, sigma_b,
                                    n_workers, t_n, &local);
  if (stats) *stats = local;
  if (!(acc.integral() > 0.0)) {
    std::ostringstream os;
    os << "vanishing posterior: all kernel mass missed the window ("
       << local.out_of_range_fraction() * 100.0
       << "% of transfer outputs farther than 6 sigma_B from the window)";
    throw Error(os.str());
  }
  return normalize(acc);
}

struct PropagationConfig {
  std::size_t p_count = 0;        // samples per iteration
  int n_iterations = 0;
  ZeroNoiseSpec sigma_b;
  std::vector<int> snapshot_iterations;
  std::uint64_t seed = 1;
  std::optional<double> stop_tolerance;  // L1 between successive posteriors
  GridGeometry geometry;
  bool reuse_param_batch = false;
  int n_workers = 1;
  std::size_t ar_max_factor = 1000;
};

enum class StopReason { IterationBudget, ToleranceReached };

struct TrajectorySnapshot {
  int iteration;
  DensityGrid density;
  MomentSummary moments;
};

/// Result of an iteration run. Snapshot indices are strictly increasing;
/// moments, successive-L1 distances and normalization errors are recorded
/// for every completed iteration.
struct Trajectory {
  std::vector<TrajectorySnapshot> snapshots;
  std::vector<MomentSummary> moment_trace;
  std::vector<double> l1_trace;
  std::vector<double> normalization_error_trace;
  StopReason stop_reason = StopReason::IterationBudget;
  int iterations_run = 0;
  std::uint64_t seed = 0;
  int n_workers = 1;  // part of the reproducibility contract
};

/// Outer iteration loop: fresh acceptance-rejection state batches per
/// iteration, parameter batches per the reuse flag, snapshots and moments
/// recorded, stopping on the iteration budget or the optional L1 tolerance.
inline Trajectory run(const DensityGrid& initial, const TransferModel& model,
                      const PropagationConfig& cfg) {
  if (!(initial.geometry() == cfg.geometry))
    throw Error("run: initial density geometry differs from config geometry");
  detail::require_normalized(initial, "run");
  if (cfg.p_count < 1) throw Error("run: P must be >= 1");
  if (cfg.n_iterations < 1) throw Error("run: n_iterations must be >= 1");
  if (cfg.n_workers < 1) throw Error("run: n_workers must be >= 1");
  for (int s : cfg.snapshot_iterations)
    if (s < 1 || s > cfg.n_iterations)
      throw Error("run: snapshot iterations must lie in [1, n_iterations]");

  ParamBatchSource params(model.param_densities, cfg.p_count, cfg.seed,
                          cfg.reuse_param_batch);
  Trajectory out;
  out.seed = cfg.seed;
  out.n_workers = cfg.n_workers;

  DensityGrid current = initial;
  for (int n = 1; n <= cfg.n_iterations; ++n) {
    const auto it = static_cast<std::uint64_t>(n);
    try {
      RngStream state_rng(cfg.seed, derive_stream(StreamPurpose::StateSampling, it));
      SampleBatch batch;
      batch.count = cfg.p_count;
      batch.state = accept_reject(current, cfg.p_count, state_rng,
                                  cfg.ar_max_factor, cfg.n_workers);
      batch.params = params.draw(it);
      const double t_n =
          model.dt ? static_cast<double>(n - 1) * *model.dt : static_cast<double>(n - 1);
      DensityGrid next =
          step(current, model, batch, cfg.sigma_b, cfg.n_workers, t_n);

      out.l1_trace.push_back(l1_distance(current, next));
      out.normalization_error_trace.push_back(std::abs(next.integral() - 1.0));
      out.moment_trace.push_back(moments(next));
      for (int s : cfg.snapshot_iterations)
        if (s == n)
          out.snapshots.push_back(TrajectorySnapshot{n, next, out.moment_trace.back()});
      current = std::move(next);
      out.iterations_run = n;
    } catch (const Error& e) {
      std::ostringstream os;
      os << "iteration " << n << ": " << e.what();
      throw Error(os.str());
    }

    if (cfg.stop_tolerance && out.l1_trace.back() < *cfg.stop_tolerance) {
      out.stop_reason = StopReason::ToleranceReached;
      return out;
    }
  }
  out.stop_reason = StopReason::IterationBudget;
  return out;
}

}  // namespace rie
