#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "rie/common.hpp"
#include "rie/density.hpp"
#include "rie/rng.hpp"

namespace rie {

struct GaussianSpec {
  double mean = 0.0;
  double std = 1.0;
};

struct UniformSpec {
  double lo = 0.0;
  double hi = 1.0;
};

using ParamDensity = std::variant<GaussianSpec, UniformSpec>;

inline double density_mean(const ParamDensity& d) {
  if (const auto* g = std::get_if<GaussianSpec>(&d)) return g->mean;
  const auto& u = std::get<UniformSpec>(d);
  return 0.5 * (u.lo + u.hi);
}

inline double density_inv_cdf(const ParamDensity& d, double u) {
  if (const auto* g = std::get_if<GaussianSpec>(&d))
    return g->mean + g->std * normal_inv_cdf(u);
  const auto& un = std::get<UniformSpec>(d);
  return un.lo + u * (un.hi - un.lo);
}

inline double density_sample(const ParamDensity& d, RngStream& rng) {
  return density_inv_cdf(d, rng.uniform01_open());
}

/// Ordered set of K mutually independent component densities.
class ParamDensitySet {
 public:
  ParamDensitySet() = default;
  ParamDensitySet(std::initializer_list<ParamDensity> ds) : comps_(ds) { validate(); }

  void push_back(ParamDensity d) {
    comps_.push_back(d);
    validate();
  }

  std::size_t size() const { return comps_.size(); }
  const ParamDensity& operator[](std::size_t k) const { return comps_[k]; }

  ParamVec means() const {
    ParamVec m;
    for (const auto& d : comps_) m.push_back(density_mean(d));
    return m;
  }

 private:
  void validate() const {
    for (const auto& d : comps_) {
      if (const auto* g = std::get_if<GaussianSpec>(&d)) {
        if (!(g->std > 0.0)) throw Error("ParamDensitySet: Gaussian std must be > 0");
      } else {
        const auto& u = std::get<UniformSpec>(d);
        if (!(u.lo < u.hi)) throw Error("ParamDensitySet: Uniform needs lo < hi");
      }
    }
  }

  std::vector<ParamDensity> comps_;
};

/// Dense row-major sample matrix (rows = draws).
struct SampleMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  SampleMatrix() = default;
  SampleMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }
};

/// Joint draws consumed by one propagation step: P state samples and
/// P parameter samples.
struct SampleBatch {
  std::size_t count = 0;
  SampleMatrix state;   // P x R, rows drawn from the current posterior
  SampleMatrix params;  // P x K, rows drawn from the parameter densities
};

/// Latin hypercube draw: per component, exactly one sample in each
/// probability stratum [i/P,(i+1)/P), pushed through the component's
/// inverse CDF, in independently shuffled stratum order.
inline SampleMatrix latin_hypercube(const ParamDensitySet& dists, std::size_t p_count,
                                    RngStream& rng) {
  if (p_count < 1) throw Error("latin_hypercube: P must be >= 1");
  SampleMatrix out(p_count, dists.size());
  std::vector<std::size_t> order(p_count);
  const double inv_p = 1.0 / static_cast<double>(p_count);
  for (std::size_t k = 0; k < dists.size(); ++k) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = p_count - 1; i > 0; --i)
      std::swap(order[i], order[rng.next_below(i + 1)]);
    for (std::size_t i = 0; i < p_count; ++i) {
      const double u =
          (static_cast<double>(order[i]) + rng.uniform01_open()) * inv_p;
      out(i, k) = density_inv_cdf(dists[k], u);
    }
  }
  return out;
}

/// Acceptance-rejection sampling from a gridded posterior.
///
/// Proposals are uniform over the grid window with envelope equal to the
/// grid maximum; a proposal x with companion draw y in [0, max] is kept
/// when y <= value of the cell containing x. Work is partitioned over
/// n_workers derived streams and concatenated in worker order, so output
/// is reproducible for a fixed worker count.
inline SampleMatrix accept_reject(const DensityGrid& grid, std::size_t p_count,
                                  const RngStream& rng, std::size_t max_factor = 1000,
                                  int n_workers = 1) {
  detail::require_normalized(grid, "accept_reject");
  const double vmax = grid.max_value();
  if (!(vmax > 0.0)) throw Error("accept_reject: grid maximum must be positive");
  if (p_count < 1) throw Error("accept_reject: P must be >= 1");

  const GridGeometry& g = grid.geometry();
  const double* values = grid.values().data();
  const std::size_t nx = g.n_cells[0];
  const double lo0 = g.lo[0];
  const double span0 = g.hi[0] - lo0;
  const double inv_csz0 = static_cast<double>(nx) / span0;
  const bool two_d = g.dim == 2;
  const std::size_t ny = g.n_cells[1];
  const double lo1 = two_d ? g.lo[1] : 0.0;
  const double span1 = two_d ? g.hi[1] - lo1 : 0.0;
  const double inv_csz1 = two_d ? static_cast<double>(ny) / span1 : 0.0;

  SampleMatrix out(p_count, static_cast<std::size_t>(g.dim));
  std::vector<unsigned char> ok(static_cast<std::size_t>(n_workers), 1);

  run_workers(n_workers, [&](int w) {
    const WorkerRange range = worker_range(p_count, n_workers, w);
    if (range.count() == 0) return;
    RngStream local(rng.seed(),
                    derive_stream(StreamPurpose::General, rng.stream(),
                                  static_cast<std::uint64_t>(w)));
    const std::size_t budget = max_factor * range.count();
    std::size_t proposals = 0;
    std::size_t accepted = 0;
    double* row = out.data.data() + range.begin * out.cols;
    while (accepted < range.count()) {
      if (proposals >= budget) {
        ok[static_cast<std::size_t>(w)] = 0;
        return;
      }
      ++proposals;
      const double x0 = lo0 + local.uniform01() * span0;
      std::size_t idx =
          std::min(nx - 1, static_cast<std::size_t>((x0 - lo0) * inv_csz0));
      double x1 = 0.0;
      if (two_d) {
        x1 = lo1 + local.uniform01() * span1;
        const std::size_t j =
            std::min(ny - 1, static_cast<std::size_t>((x1 - lo1) * inv_csz1));
        idx += j * nx;
      }
      const double y = local.uniform01() * vmax;
      if (y <= values[idx]) {
        *row++ = x0;
        if (two_d) *row++ = x1;
        ++accepted;
      }
    }
  });

  for (unsigned char flag : ok)
    if (!flag)
      throw Error("acceptance rate too low: budget of max_factor*P proposals exhausted");
  return out;
}

/// Per-iteration source of parameter batches. With reuse on, one latin
/// hypercube batch is drawn up front and returned for every iteration;
/// otherwise each iteration gets a fresh batch from its own derived stream.
class ParamBatchSource {
 public:
  ParamBatchSource(ParamDensitySet dists, std::size_t p_count, std::uint64_t seed,
                   bool reuse)
      : dists_(std::move(dists)), p_count_(p_count), seed_(seed), reuse_(reuse) {
    if (reuse_) {
      RngStream rng(seed_, derive_stream(StreamPurpose::ParamBatch, 0));
      cached_ = latin_hypercube(dists_, p_count_, rng);
    }
  }

  const ParamDensitySet& densities() const { return dists_; }
  bool reuse() const { return reuse_; }

  SampleMatrix draw(std::uint64_t iteration) const {
    if (reuse_) return *cached_;
    RngStream rng(seed_, derive_stream(StreamPurpose::ParamBatch, iteration));
    return latin_hypercube(dists_, p_count_, rng);
  }

 private:
  ParamDensitySet dists_;
  std::size_t p_count_;
  std::uint64_t seed_;
  bool reuse_;
  std::optional<SampleMatrix> cached_;
};

}  // namespace rie
