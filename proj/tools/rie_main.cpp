// Command-line front end: config-driven full-density runs, verification
// subcommands and file emission.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rie/rie.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> outdir;
  std::optional<int> threads;
  std::optional<std::string> format;
};

void apply_globals(rie::RunConfig& cfg, const GlobalFlags& g) {
  if (g.seed) cfg.propagation.seed = *g.seed;
  if (g.outdir) cfg.output.directory = *g.outdir;
  if (g.threads) cfg.propagation.n_workers = *g.threads;
  if (g.format) {
    cfg.output.write_csv = false;
    cfg.output.write_pgm = false;
    for (const auto& part : rie::detail::split_list(*g.format)) {
      if (part == "csv")
        cfg.output.write_csv = true;
      else if (part == "pgm")
        cfg.output.write_pgm = true;
      else
        throw rie::Error("unknown format '" + part + "' (valid: csv, pgm)");
    }
  }
}

rie::RunConfig load_or_die(const std::string& path, const GlobalFlags& g) {
  auto result = rie::load_config_file(path);
  if (!result.ok()) {
    std::string joined;
    for (const auto& e : result.errors) {
      if (!joined.empty()) joined += " | ";
      joined += e;
    }
    throw rie::Error("config " + path + ": " + joined);
  }
  rie::RunConfig cfg = std::move(*result.config);
  apply_globals(cfg, g);
  return cfg;
}

std::string snapshot_name(int iteration, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "snap_%06d.%s", iteration, ext);
  return buf;
}

rie::InitSampler sampler_from(const rie::InitSpec& init) {
  if (init.kind == rie::InitSpec::Kind::UniformBox)
    return rie::uniform_box_sampler(init.a, init.b);
  return rie::gaussian_sampler(init.a, init.b);
}

int cmd_run(const std::string& config_path, const GlobalFlags& g) {
  rie::RunConfig cfg = load_or_die(config_path, g);
  const auto init = rie::make_initial_density(cfg.propagation.geometry, cfg.init);

  rie::DirectoryLock lock(cfg.output.directory);
  const fs::path outdir(cfg.output.directory);

  std::cout << "model: " << cfg.model_name << "\n"
            << "samples: " << cfg.propagation.p_count
            << "  iterations: " << cfg.propagation.n_iterations
            << "  seed: " << cfg.propagation.seed
            << "  workers: " << cfg.propagation.n_workers << "\n";

  const rie::Trajectory traj = rie::run(init, cfg.model, cfg.propagation);

  rie::write_moments_csv(traj, cfg.model.dt, (outdir / "moments.csv").string(),
                         cfg.model_name, cfg.propagation.p_count);
  for (const auto& snap : traj.snapshots) {
    const rie::SnapshotMeta meta{snap.iteration, cfg.propagation.seed, cfg.model_name};
    if (cfg.output.write_csv)
      rie::write_snapshot(snap.density, (outdir / snapshot_name(snap.iteration, "csv")).string(),
                          meta);
    if (cfg.output.write_pgm)
      rie::write_heatmap(snap.density, (outdir / snapshot_name(snap.iteration, "pgm")).string(),
                         cfg.output.scale);
  }

  const auto& last = traj.moment_trace.back();
  std::cout << "stopped after " << traj.iterations_run << " iterations ("
            << (traj.stop_reason == rie::StopReason::ToleranceReached
                    ? "tolerance reached"
                    : "iteration budget")
            << ")\n";
  std::cout << "final mean: " << rie::format_double(last.mean[0]);
  if (last.dim == 2) std::cout << ", " << rie::format_double(last.mean[1]);
  std::cout << "\nwrote " << traj.snapshots.size() << " snapshot(s) and moments.csv to "
            << cfg.output.directory << "\n";
  return 0;
}

int cmd_list_models() {
  for (const auto& name : rie::model_names()) std::cout << name << "\n";
  return 0;
}

int cmd_verify_ou(std::size_t samples, int iterations, std::size_t grid_n,
                  const GlobalFlags& g) {
  const auto model = rie::ornstein_uhlenbeck_2d();
  const rie::StateVec x0{1.0, 0.8};
  const rie::OuAnalyticParams analytic{x0, {0.4, 0.6}};
  const double half = 0.045 / 2.0;

  rie::PropagationConfig cfg;
  cfg.p_count = samples;
  cfg.n_iterations = iterations;
  cfg.sigma_b = rie::ZeroNoiseSpec::uniform(2, 0.0025);
  cfg.seed = g.seed.value_or(1);
  cfg.n_workers = g.threads.value_or(1);
  cfg.geometry = rie::GridGeometry::make({-1.0, -1.0}, {1.5, 1.5}, {grid_n, grid_n});
  cfg.snapshot_iterations = {iterations};
  // the near-point initial square occupies a handful of cells, so the
  // first iterations accept well below the default 1/1000 budget
  cfg.ar_max_factor = 100000;
  const auto init = rie::new_uniform(cfg.geometry, {x0[0] - half, x0[1] - half},
                                     {x0[0] + half, x0[1] + half});

  const auto traj = rie::run(init, model, cfg);

  std::optional<std::ofstream> file;
  if (g.outdir) {
    fs::create_directories(*g.outdir);
    file.emplace((fs::path(*g.outdir) / "verify_ou.csv").string());
  }
  auto emit = [&](const std::string& line) {
    std::cout << line << "\n";
    if (file) *file << line << "\n";
  };

  emit("t,mean_sim1,mean_sim2,mean_ana1,mean_ana2,var_sim1,var_sim2,var_ana1,var_ana2");
  double worst_mean = 0.0, worst_var_rel = 0.0;
  for (int n = 1; n <= traj.iterations_run; ++n) {
    if (n % 10 != 0 && n != traj.iterations_run) continue;
    const double t = static_cast<double>(n) * *model.dt;
    const auto& sim = traj.moment_trace[static_cast<std::size_t>(n - 1)];
    const auto ana = rie::ou_analytic_moments(analytic, t);
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.4f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", t,
                  sim.mean[0], sim.mean[1], ana.mean[0], ana.mean[1], sim.variance(0),
                  sim.variance(1), ana.variance(0), ana.variance(1));
    emit(buf);
    for (int r = 0; r < 2; ++r) {
      worst_mean = std::max(worst_mean, std::abs(sim.mean[static_cast<std::size_t>(r)] -
                                                 ana.mean[static_cast<std::size_t>(r)]));
      worst_var_rel = std::max(worst_var_rel, std::abs(sim.variance(r) - ana.variance(r)) /
                                                  ana.variance(r));
    }
  }
  std::cout << "max |mean_sim - mean_ana| = " << rie::format_double(worst_mean)
            << "\nmax relative variance deviation = " << rie::format_double(worst_var_rel)
            << "\n";
  return 0;
}

int cmd_refcheck(const std::string& model_name, const std::string& x0_str, double t_end,
                 std::optional<double> dt, const GlobalFlags& g) {
  const auto model = rie::make_model(model_name);
  rie::StateVec x0;
  for (const auto& part : rie::detail::split_list(x0_str)) {
    double v;
    if (!rie::detail::parse_double(part, v))
      throw rie::Error("refcheck: malformed --x0 component '" + part + "'");
    x0.push_back(v);
  }
  if (static_cast<int>(x0.size()) != model.state_dim)
    throw rie::Error("refcheck: --x0 needs " + std::to_string(model.state_dim) +
                     " components for " + model_name);
  const double dt_euler = dt.value_or(model.dt.value_or(0.0));

  const auto [euler, rk4] = rie::deterministic_reference(model, x0, t_end, dt_euler);
  const double dev = rie::reference_max_deviation(euler, rk4);

  if (g.outdir) {
    fs::create_directories(*g.outdir);
    for (const auto& [name, path] :
         {std::pair<std::string, const rie::TimedPath*>{"euler.csv", &euler},
          std::pair<std::string, const rie::TimedPath*>{"rk4.csv", &rk4}}) {
      std::ofstream out((fs::path(*g.outdir) / name).string());
      out << "t";
      for (int r = 0; r < model.state_dim; ++r) out << ",x" << (r + 1);
      out << "\n";
      for (const auto& [t, x] : *path) {
        out << rie::format_double(t);
        for (double v : x) out << ',' << rie::format_double(v);
        out << "\n";
      }
    }
  }

  std::cout << "model: " << model_name << "  x0: " << x0_str << "  t_end: " << t_end
            << "  dt_euler: " << dt_euler << "\n"
            << "euler steps: " << euler.size() - 1 << "  rk4 steps: " << rk4.size() - 1
            << " (dt/10)\n"
            << "max |euler - rk4| over the shared time stamps: " << rie::format_double(dev)
            << "\n";
  return 0;
}

int cmd_overlap(const std::string& config_path, std::size_t n_paths, const GlobalFlags& g) {
  rie::RunConfig cfg = load_or_die(config_path, g);
  const auto init = rie::make_initial_density(cfg.propagation.geometry, cfg.init);

  const auto traj = rie::run(init, cfg.model, cfg.propagation);
  const auto hist = rie::pathwise_histogram(
      cfg.model, sampler_from(cfg.init), traj.iterations_run, n_paths,
      cfg.propagation.geometry, rie::RngStream(cfg.propagation.seed + 1, 0),
      cfg.propagation.n_workers);

  const auto& final_grid = traj.snapshots.empty()
                               ? throw rie::Error("overlap: config must request at "
                                                  "least one snapshot")
                               : traj.snapshots.back().density;
  const double ovl = rie::overlap_coefficient(final_grid, hist);
  std::cout << "model: " << cfg.model_name << "  iterations: " << traj.iterations_run
            << "  P: " << cfg.propagation.p_count << "  paths: " << n_paths << "\n"
            << "pathwise out-of-window paths: " << hist.out_of_window << "\n"
            << "overlap coefficient: " << rie::format_double(ovl) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"full-density propagation of random iteration equations"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags globals;
  std::optional<std::uint64_t> seed_flag;
  std::optional<std::string> outdir_flag;
  std::optional<int> threads_flag;
  std::optional<std::string> format_flag;
  app.add_option("--seed", seed_flag, "override the config seed");
  app.add_option("--outdir", outdir_flag, "override the output directory");
  app.add_option("--threads", threads_flag, "worker count (part of reproducibility)");
  app.add_option("--format", format_flag, "output formats, comma list of csv,pgm");

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "run a configured experiment");
  run_cmd->add_option("config", config_path, "config file")->required();

  auto* list_cmd = app.add_subcommand("list-models", "print registered model names");

  std::size_t ou_samples = 48000;
  int ou_iterations = 109;
  std::size_t ou_grid = 192;
  auto* ou_cmd = app.add_subcommand("verify-ou",
                                    "compare the 2D Ornstein-Uhlenbeck run against "
                                    "its analytic moments");
  ou_cmd->add_option("--samples", ou_samples, "Monte-Carlo samples per iteration");
  ou_cmd->add_option("--iterations", ou_iterations, "iteration count");
  ou_cmd->add_option("--grid", ou_grid, "cells per grid axis");

  std::string ref_model;
  std::string ref_x0 = "0.1,0.1";
  double ref_tend = 50.0;
  std::optional<double> ref_dt;
  auto* ref_cmd = app.add_subcommand("refcheck",
                                     "deterministic Euler vs RK4 step-size check");
  ref_cmd->add_option("model", ref_model, "registered model name")->required();
  ref_cmd->add_option("--x0", ref_x0, "initial state, comma separated");
  ref_cmd->add_option("--t-end", ref_tend, "end time");
  ref_cmd->add_option("--dt", ref_dt, "Euler step (default: model preset)");

  std::string overlap_config;
  std::size_t overlap_paths = 1000000;
  auto* overlap_cmd = app.add_subcommand("overlap",
                                         "full-density posterior vs pathwise "
                                         "histogram overlap");
  overlap_cmd->add_option("config", overlap_config, "config file")->required();
  overlap_cmd->add_option("--paths", overlap_paths, "pathwise sample paths");

  CLI11_PARSE(app, argc, argv);

  globals.seed = seed_flag;
  globals.outdir = outdir_flag;
  globals.threads = threads_flag;
  globals.format = format_flag;

  try {
    if (run_cmd->parsed()) return cmd_run(config_path, globals);
    if (list_cmd->parsed()) return cmd_list_models();
    if (ou_cmd->parsed())
      return cmd_verify_ou(ou_samples, ou_iterations, ou_grid, globals);
    if (ref_cmd->parsed())
      return cmd_refcheck(ref_model, ref_x0, ref_tend, ref_dt, globals);
    if (overlap_cmd->parsed()) return cmd_overlap(overlap_config, overlap_paths, globals);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    std::cerr << "error: " << msg << std::endl;
    return 1;
  }
  return 0;
}
