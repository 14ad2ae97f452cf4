#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <numbers>

#include "rie/propagate.hpp"

using rie::DensityGrid;
using rie::GridGeometry;
using rie::ParamVec;
using rie::SampleBatch;
using rie::StateVec;
using rie::TransferModel;
using rie::ZeroNoiseSpec;

namespace {

TransferModel identity_model_2d() {
  TransferModel m;
  m.name = "identity";
  m.state_dim = 2;
  m.param_dim = 0;
  m.transfer = [](const StateVec& x, const ParamVec&, double) { return x; };
  return m;
}

SampleBatch draw_batch(const DensityGrid& prior, const TransferModel& model,
                       std::size_t p, std::uint64_t seed, std::uint64_t iter = 1,
                       std::size_t max_factor = 1000) {
  SampleBatch b;
  b.count = p;
  rie::RngStream rng(seed, rie::derive_stream(rie::StreamPurpose::StateSampling, iter));
  b.state = rie::accept_reject(prior, p, rng, max_factor);
  rie::RngStream prng(seed, rie::derive_stream(rie::StreamPurpose::ParamBatch, iter));
  b.params = rie::latin_hypercube(model.param_densities, p, prng);
  return b;
}

}  // namespace

TEST_CASE("gaussian kernel value matches the pdf product") {
  const auto sb = ZeroNoiseSpec::make({0.005, 0.005});
  // coincident point: (1/(sqrt(2 pi) 0.005))^2
  const double peak_1d = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * 0.005);
  REQUIRE(rie::gaussian_kernel_value({0.3, 0.7}, {0.3, 0.7}, sb) ==
          Catch::Approx(peak_1d * peak_1d).epsilon(1e-12));
  REQUIRE(peak_1d * peak_1d == Catch::Approx(6366.2).epsilon(1e-4));

  // ten sigma away in one component is numerically negligible vs the peak
  const double at_peak = rie::gaussian_kernel_value({0.3, 0.7}, {0.3, 0.7}, sb);
  const double at_10s = rie::gaussian_kernel_value({0.3 + 0.05, 0.7}, {0.3, 0.7}, sb);
  REQUIRE(at_10s / at_peak < 1e-21);

  // 1D at one sigma
  const auto sb1 = ZeroNoiseSpec::make({0.01});
  REQUIRE(rie::gaussian_kernel_value({0.01}, {0.0}, sb1) ==
          Catch::Approx(std::exp(-0.5) / (std::sqrt(2.0 * std::numbers::pi) * 0.01))
              .epsilon(1e-12));
}

TEST_CASE("identity transfer turns a delta prior into the sigma_B kernel") {
  const auto g = GridGeometry::make({0.0, 0.0}, {1.0, 1.0}, {128, 128});
  const auto prior = rie::new_uniform(g, {0.512, 0.512}, {0.526, 0.526});
  const StateVec x_star = rie::mode(prior);
  const auto model = identity_model_2d();
  const auto sb = ZeroNoiseSpec::uniform(2, 0.02);

  // a single-cell prior needs a bigger acceptance-rejection budget than the
  // default 1000 proposals per sample (acceptance is 1/total_cells here)
  const auto batch = draw_batch(prior, model, 4000, 7, 1, 50000);
  const auto post = rie::step(prior, model, batch, sb);

  const StateVec m = rie::mode(post);
  REQUIRE(std::abs(m[0] - x_star[0]) <= g.cell_size(0));
  REQUIRE(std::abs(m[1] - x_star[1]) <= g.cell_size(1));

  const auto mom = rie::moments(post);
  REQUIRE(mom.covariance[0][0] == Catch::Approx(0.02 * 0.02).epsilon(0.1));
  REQUIRE(mom.covariance[1][1] == Catch::Approx(0.02 * 0.02).epsilon(0.1));
}

TEST_CASE("additive diffusion step reproduces the Gaussian convolution law") {
  // prior N(0, s^2), C ~ N(0, c^2): posterior variance s^2 + c^2 + sigma_B^2
  const double s = 0.08, c = 0.1, sigma_b = 0.02;
  const auto g = GridGeometry::make({-1.0}, {1.0}, {512, 1});
  const auto prior = rie::new_gaussian(g, {0.0}, {s});
  const auto model = rie::additive_diffusion(c);
  const auto sb = ZeroNoiseSpec::make({sigma_b});

  const auto batch = draw_batch(prior, model, 48000, 3);
  const auto post = rie::step(prior, model, batch, sb);
  const auto mom = rie::moments(post);
  const double expect = s * s + c * c + sigma_b * sigma_b;
  REQUIRE(mom.covariance[0][0] == Catch::Approx(expect).epsilon(0.10));
}

TEST_CASE("posterior mass is conserved in-window without clipping") {
  // transfer pushes everything near the right edge; mass beyond the window
  // is simply lost and the rest renormalized
  TransferModel shift;
  shift.name = "shift";
  shift.state_dim = 1;
  shift.param_dim = 0;
  shift.transfer = [](const StateVec& x, const ParamVec&, double) {
    return StateVec{x[0] + 0.5};
  };
  const auto g = GridGeometry::make({0.0}, {1.0}, {256, 1});
  const auto prior = rie::new_gaussian(g, {0.4}, {0.05});
  const auto batch = draw_batch(prior, shift, 20000, 11);
  const auto post = rie::step(prior, shift, batch, ZeroNoiseSpec::make({0.02}));
  REQUIRE(post.integral() == Catch::Approx(1.0).margin(1e-12));
  // mode lands near 0.9
  REQUIRE(rie::mode(post)[0] == Catch::Approx(0.9).margin(0.02));
}

TEST_CASE("vanishing posterior reports the out-of-range fraction") {
  TransferModel far;
  far.name = "far";
  far.state_dim = 1;
  far.param_dim = 0;
  far.transfer = [](const StateVec& x, const ParamVec&, double) {
    return StateVec{x[0] + 100.0};
  };
  const auto g = GridGeometry::make({0.0}, {1.0}, {64, 1});
  const auto prior = rie::new_uniform(g, {0.0}, {1.0});
  const auto batch = draw_batch(prior, far, 100, 2);
  REQUIRE_THROWS_WITH(rie::step(prior, far, batch, ZeroNoiseSpec::make({0.01})),
                      Catch::Matchers::ContainsSubstring("vanishing posterior") &&
                          Catch::Matchers::ContainsSubstring("100"));
}

TEST_CASE("accumulation is linear in the prior with shared sample sets") {
  const auto g = GridGeometry::make({0.0, 0.0}, {1.0, 1.0}, {64, 64});
  const auto pi1 = rie::new_gaussian(g, {0.3, 0.3}, {0.08, 0.08});
  const auto pi2 = rie::new_gaussian(g, {0.7, 0.7}, {0.05, 0.05});
  const auto model = identity_model_2d();
  const auto sb = ZeroNoiseSpec::uniform(2, 0.02);

  const std::size_t p1 = 3000, p2 = 1000;  // alpha = 0.75
  const auto b1 = draw_batch(pi1, model, p1, 5, 1);
  const auto b2 = draw_batch(pi2, model, p2, 5, 2);

  SampleBatch joint;
  joint.count = p1 + p2;
  joint.state = rie::SampleMatrix(p1 + p2, 2);
  joint.params = rie::SampleMatrix(p1 + p2, 0);
  std::copy(b1.state.data.begin(), b1.state.data.end(), joint.state.data.begin());
  std::copy(b2.state.data.begin(), b2.state.data.end(),
            joint.state.data.begin() + static_cast<std::ptrdiff_t>(p1 * 2));

  const auto acc1 = rie::accumulate_step(g, model, b1, sb);
  const auto acc2 = rie::accumulate_step(g, model, b2, sb);
  const auto accj = rie::accumulate_step(g, model, joint, sb);

  const double alpha = static_cast<double>(p1) / static_cast<double>(p1 + p2);
  for (std::size_t c = 0; c < accj.size(); ++c) {
    const double mix = alpha * acc1.value(c) + (1.0 - alpha) * acc2.value(c);
    REQUIRE(accj.value(c) == Catch::Approx(mix).margin(1e-12).epsilon(1e-12));
  }
}

TEST_CASE("doubling sigma_B adds about 3 sigma_B^2 of variance on identity") {
  const double s0 = 0.1, sb = 0.05;
  const auto g = GridGeometry::make({-1.0}, {1.0}, {1024, 1});
  const auto prior = rie::new_gaussian(g, {0.0}, {s0});
  TransferModel ident;
  ident.name = "identity1d";
  ident.state_dim = 1;
  ident.param_dim = 0;
  ident.transfer = [](const StateVec& x, const ParamVec&, double) { return x; };

  const auto batch = draw_batch(prior, ident, 48000, 17);
  const auto post1 = rie::step(prior, ident, batch, ZeroNoiseSpec::make({sb}));
  const auto post2 = rie::step(prior, ident, batch, ZeroNoiseSpec::make({2.0 * sb}));
  const double v1 = rie::moments(post1).covariance[0][0];
  const double v2 = rie::moments(post2).covariance[0][0];
  REQUIRE(v2 - v1 == Catch::Approx(3.0 * sb * sb).epsilon(0.2));
}

TEST_CASE("run with a single iteration produces the requested snapshot") {
  const auto g = GridGeometry::make({-1.0}, {1.0}, {256, 1});
  const auto init = rie::new_gaussian(g, {0.0}, {0.05});
  rie::PropagationConfig cfg;
  cfg.p_count = 5000;
  cfg.n_iterations = 1;
  cfg.sigma_b = ZeroNoiseSpec::make({0.01});
  cfg.snapshot_iterations = {1};
  cfg.seed = 9;
  cfg.geometry = g;
  const auto traj = rie::run(init, rie::additive_diffusion(0.1), cfg);
  REQUIRE(traj.snapshots.size() == 1);
  REQUIRE(traj.snapshots[0].iteration == 1);
  REQUIRE(traj.iterations_run == 1);
  REQUIRE(traj.stop_reason == rie::StopReason::IterationBudget);
  REQUIRE(traj.moment_trace.size() == 1);
}

TEST_CASE("iterated additive diffusion variance grows by n*(c^2 + sigma_B^2)") {
  const double s = 0.05, c = 0.1, sb = 0.01;
  const int n = 10;
  const auto g = GridGeometry::make({-1.6}, {1.6}, {1024, 1});
  const auto init = rie::new_gaussian(g, {0.0}, {s});
  rie::PropagationConfig cfg;
  cfg.p_count = 48000;
  cfg.n_iterations = n;
  cfg.sigma_b = ZeroNoiseSpec::make({sb});
  cfg.snapshot_iterations = {n};
  cfg.seed = 4;
  cfg.geometry = g;
  const auto traj = rie::run(init, rie::additive_diffusion(c), cfg);
  const double expect = s * s + n * (c * c + sb * sb);
  REQUIRE(traj.moment_trace.back().covariance[0][0] ==
          Catch::Approx(expect).epsilon(0.10));
}

TEST_CASE("every posterior in a run is normalized to 1e-12") {
  const auto g = GridGeometry::make({0.0, 0.0}, {1.2, 1.6}, {96, 96});
  const auto init = rie::new_uniform(g, {0.1, 0.1}, {0.5, 0.5});
  rie::PropagationConfig cfg;
  cfg.p_count = 4000;
  cfg.n_iterations = 15;
  cfg.sigma_b = ZeroNoiseSpec::uniform(2, 0.005);
  cfg.seed = 12;
  cfg.geometry = g;
  cfg.snapshot_iterations = {15};
  const auto traj = rie::run(init, rie::rosenzweig_mcarthur_rde(), cfg);
  REQUIRE(traj.normalization_error_trace.size() == 15);
  for (double e : traj.normalization_error_trace) REQUIRE(e <= 1e-12);
}

TEST_CASE("trajectories are bit-identical for fixed config, seed and workers") {
  const auto g = GridGeometry::make({0.0, 0.0}, {1.2, 1.6}, {64, 64});
  const auto init = rie::new_uniform(g, {0.1, 0.1}, {0.5, 0.5});
  rie::PropagationConfig cfg;
  cfg.p_count = 3000;
  cfg.n_iterations = 6;
  cfg.sigma_b = ZeroNoiseSpec::uniform(2, 0.01);
  cfg.seed = 31;
  cfg.geometry = g;
  cfg.snapshot_iterations = {3, 6};
  cfg.n_workers = 2;
  const auto model = rie::rosenzweig_mcarthur_rde();
  const auto a = rie::run(init, model, cfg);
  const auto b = rie::run(init, model, cfg);
  REQUIRE(a.snapshots.size() == b.snapshots.size());
  for (std::size_t s = 0; s < a.snapshots.size(); ++s)
    for (std::size_t c = 0; c < a.snapshots[s].density.size(); ++c)
      REQUIRE(a.snapshots[s].density.value(c) == b.snapshots[s].density.value(c));
  for (std::size_t n = 0; n < a.moment_trace.size(); ++n) {
    REQUIRE(a.moment_trace[n].mean[0] == b.moment_trace[n].mean[0]);
    REQUIRE(a.moment_trace[n].mean[1] == b.moment_trace[n].mean[1]);
  }
}

TEST_CASE("a delta prior at the deterministic steady state stays put") {
  // near-deterministic parameters pin the fixed point (1/3, 8/9)
  const auto model = rie::rosenzweig_mcarthur_rde({{"c1_std", 1e-9},
                                                   {"c2_std", 1e-9},
                                                   {"c3_std", 1e-9}});
  const auto g = GridGeometry::make({0.0, 0.0}, {1.2, 1.6}, {192, 192});
  const double x1 = 1.0 / 3.0, x2 = 8.0 / 9.0;
  const auto init = rie::new_uniform(g, {x1 - 0.02, x2 - 0.02}, {x1 + 0.02, x2 + 0.02});
  rie::PropagationConfig cfg;
  cfg.p_count = 8000;
  cfg.n_iterations = 5;
  cfg.sigma_b = ZeroNoiseSpec::uniform(2, 0.005);
  cfg.seed = 77;
  cfg.geometry = g;
  cfg.snapshot_iterations = {5};
  cfg.ar_max_factor = 20000;  // the prior occupies a few dozen cells
  const auto traj = rie::run(init, model, cfg);
  const StateVec m = rie::mode(traj.snapshots[0].density);
  REQUIRE(std::abs(m[0] - x1) < 0.03);
  REQUIRE(std::abs(m[1] - x2) < 0.03);
}

TEST_CASE("run stops early when the L1 tolerance is met") {
  // identity transfer with a broad kernel converges fast to a fixed density
  TransferModel ident;
  ident.name = "identity1d";
  ident.state_dim = 1;
  ident.param_dim = 0;
  ident.transfer = [](const StateVec& x, const ParamVec&, double) { return x; };
  const auto g = GridGeometry::make({-6.0}, {6.0}, {128, 1});
  const auto init = rie::new_gaussian(g, {0.0}, {2.0});
  rie::PropagationConfig cfg;
  cfg.p_count = 200000;
  cfg.n_iterations = 50;
  cfg.sigma_b = ZeroNoiseSpec::make({0.5});
  cfg.seed = 8;
  cfg.geometry = g;
  cfg.snapshot_iterations = {};
  cfg.stop_tolerance = 0.05;
  const auto traj = rie::run(init, ident, cfg);
  REQUIRE(traj.stop_reason == rie::StopReason::ToleranceReached);
  REQUIRE(traj.iterations_run < 50);
}

TEST_CASE("run errors carry the iteration index") {
  TransferModel far;
  far.name = "far";
  far.state_dim = 1;
  far.param_dim = 0;
  far.transfer = [](const StateVec& x, const ParamVec&, double) {
    return StateVec{x[0] + 100.0};
  };
  const auto g = GridGeometry::make({0.0}, {1.0}, {64, 1});
  const auto init = rie::new_uniform(g, {0.0}, {1.0});
  rie::PropagationConfig cfg;
  cfg.p_count = 50;
  cfg.n_iterations = 3;
  cfg.sigma_b = ZeroNoiseSpec::make({0.01});
  cfg.seed = 1;
  cfg.geometry = g;
  cfg.snapshot_iterations = {3};
  REQUIRE_THROWS_WITH(rie::run(init, far, cfg),
                      Catch::Matchers::ContainsSubstring("iteration 1:"));
}
