#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rie/common.hpp"
#include "rie/config.hpp"
#include "rie/density.hpp"
#include "rie/propagate.hpp"

namespace rie {

/// Shortest decimal form that round-trips a double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct SnapshotMeta {
  int iteration = 0;
  std::uint64_t seed = 0;
  std::string model;
};

struct SnapshotData {
  DensityGrid grid;
  SnapshotMeta meta;
};

namespace detail {

inline std::string join_csv(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += format_double(xs[i]);
  }
  return out;
}

}  // namespace detail

/// Writes a grid as text: header comment lines, then one grid row per line
/// of comma-separated cell values (17 significant digits, so a read-back
/// reproduces the values bit-exactly).
inline void write_snapshot(const DensityGrid& grid, const std::string& path,
                           const SnapshotMeta& meta) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write snapshot: " + path);
  const GridGeometry& g = grid.geometry();
  out << "# geometry: lo=";
  for (int r = 0; r < g.dim; ++r)
    out << (r ? "," : "") << format_double(g.lo[static_cast<std::size_t>(r)]);
  out << " hi=";
  for (int r = 0; r < g.dim; ++r)
    out << (r ? "," : "") << format_double(g.hi[static_cast<std::size_t>(r)]);
  out << " n_cells=";
  for (int r = 0; r < g.dim; ++r)
    out << (r ? "," : "") << g.n_cells[static_cast<std::size_t>(r)];
  out << "\n";
  out << "# iteration: " << meta.iteration << "\n";
  out << "# seed: " << meta.seed << "\n";
  out << "# model: " << meta.model << "\n";

  const std::size_t nx = g.n_cells[0];
  const std::size_t ny = g.dim == 2 ? g.n_cells[1] : 1;
  std::vector<double> row(nx);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) row[i] = grid.value(j * nx + i);
    out << detail::join_csv(row) << "\n";
  }
  if (!out) throw Error("write failed: " + path);
}

inline SnapshotData read_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read snapshot: " + path);

  SnapshotMeta meta;
  std::optional<GridGeometry> geometry;
  std::string line;
  std::vector<double> values;
  std::size_t rows_seen = 0;

  auto parse_vec = [](const std::string& s) {
    std::vector<double> out;
    for (const auto& part : rie::detail::split_list(s)) {
      double v;
      if (!rie::detail::parse_double(part, v))
        throw Error("snapshot header: malformed number '" + part + "'");
      out.push_back(v);
    }
    return out;
  };

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::istringstream hs(line.substr(1));
      std::string tag;
      hs >> tag;
      if (tag == "geometry:") {
        std::string rest;
        std::getline(hs, rest);
        std::string lo_s, hi_s, nc_s;
        for (const std::string field : {"lo=", "hi=", "n_cells="}) {
          const auto pos = rest.find(field);
          if (pos == std::string::npos)
            throw Error("snapshot header: missing " + field);
          auto end = rest.find(' ', pos);
          if (end == std::string::npos) end = rest.size();
          const std::string payload = rest.substr(pos + field.size(), end - pos - field.size());
          if (field == "lo=")
            lo_s = payload;
          else if (field == "hi=")
            hi_s = payload;
          else
            nc_s = payload;
        }
        const auto lo = parse_vec(lo_s);
        const auto hi = parse_vec(hi_s);
        const auto nc = parse_vec(nc_s);
        if (lo.size() != hi.size() || lo.size() != nc.size())
          throw Error("snapshot header: inconsistent geometry dimensions");
        StateVec lo_v, hi_v;
        std::array<std::size_t, 2> n_cells{1, 1};
        for (std::size_t r = 0; r < lo.size(); ++r) {
          lo_v.push_back(lo[r]);
          hi_v.push_back(hi[r]);
          n_cells[r] = static_cast<std::size_t>(nc[r]);
        }
        geometry = GridGeometry::make(lo_v, hi_v, n_cells);
      } else if (tag == "iteration:") {
        hs >> meta.iteration;
      } else if (tag == "seed:") {
        hs >> meta.seed;
      } else if (tag == "model:") {
        hs >> meta.model;
      }
      continue;
    }

    if (!geometry) throw Error("snapshot: data before geometry header");
    const auto parts = rie::detail::split_list(line);
    if (parts.size() != geometry->n_cells[0])
      throw Error("snapshot: row " + std::to_string(rows_seen + 1) + " has " +
                  std::to_string(parts.size()) + " values, expected " +
                  std::to_string(geometry->n_cells[0]));
    for (const auto& part : parts) {
      double v;
      if (!rie::detail::parse_double(part, v))
        throw Error("snapshot: malformed value '" + part + "'");
      values.push_back(v);
    }
    ++rows_seen;
  }

  if (!geometry) throw Error("snapshot: missing geometry header");
  const std::size_t expect_rows = geometry->dim == 2 ? geometry->n_cells[1] : 1;
  if (rows_seen != expect_rows)
    throw Error("snapshot: expected " + std::to_string(expect_rows) + " rows, got " +
                std::to_string(rows_seen));
  return SnapshotData{DensityGrid(*geometry, std::move(values)), meta};
}

/// 8-bit grayscale PGM (P5): the maximum cell maps to 255, zero to 0.
/// Log scale applies v -> log(1 + 255*v/vmax)/log(256) before quantizing.
/// Image rows run top-down in decreasing x2 so plots read like the usual
/// x1-x2 axes.
inline void write_heatmap(const DensityGrid& grid, const std::string& path,
                          HeatmapScale scale = HeatmapScale::Linear) {
  rie::detail::require_normalized(grid, "write_heatmap");
  const GridGeometry& g = grid.geometry();
  const std::size_t w = g.n_cells[0];
  const std::size_t h = g.dim == 2 ? g.n_cells[1] : 1;
  const double vmax = grid.max_value();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write heatmap: " + path);
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(w);
  const double log_denom = std::log(256.0);
  for (std::size_t jr = 0; jr < h; ++jr) {
    const std::size_t j = h - 1 - jr;
    for (std::size_t i = 0; i < w; ++i) {
      const double v = grid.value(j * w + i);
      double t = vmax > 0.0 ? v / vmax : 0.0;
      if (scale == HeatmapScale::Log) t = std::log(1.0 + 255.0 * t) / log_denom;
      row[i] = static_cast<unsigned char>(std::lround(255.0 * t));
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(w));
  }
  if (!out) throw Error("write failed: " + path);
}

/// Per-iteration moment table. Column layout is fixed at two state
/// components; 1D runs write zeros for the absent component.
inline void write_moments_csv(const Trajectory& traj, std::optional<double> dt,
                              const std::string& path, const std::string& model_name,
                              std::size_t p_count) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write moments csv: " + path);
  out << "# model: " << model_name << "\n";
  out << "# seed: " << traj.seed << "\n";
  out << "# samples: " << p_count << "\n";
  out << "# workers: " << traj.n_workers << "\n";
  out << "iteration,t,mean1,mean2,var1,var2,cov12\n";
  for (std::size_t n = 0; n < traj.moment_trace.size(); ++n) {
    const MomentSummary& m = traj.moment_trace[n];
    const double iteration = static_cast<double>(n + 1);
    const double t = dt ? iteration * *dt : iteration;
    const bool two_d = m.dim == 2;
    out << (n + 1) << ',' << format_double(t) << ',' << format_double(m.mean[0])
        << ',' << format_double(two_d ? m.mean[1] : 0.0) << ','
        << format_double(m.covariance[0][0]) << ','
        << format_double(two_d ? m.covariance[1][1] : 0.0) << ','
        << format_double(two_d ? m.covariance[0][1] : 0.0) << "\n";
  }
  if (!out) throw Error("write failed: " + path);
}

/// Exclusive lock on an output directory, held via a ".rie-lock" file
/// created with O_EXCL and removed on destruction. A second lock attempt
/// on the same directory fails.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::string& directory) {
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    path_ = (fs::path(directory) / ".rie-lock").string();
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw Error("output directory locked (remove stale " + path_ +
                  " if no run is active)");
  }

  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

  ~DirectoryLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }

 private:
  std::string path_;
  int fd_ = -1;
};

}  // namespace rie
