#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rie/io.hpp"
#include "rie/rng.hpp"

namespace fs = std::filesystem;
using rie::DensityGrid;
using rie::GridGeometry;

namespace {

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("rie_io_test_" + name)).string();
}

DensityGrid random_grid(const GridGeometry& g, std::uint64_t seed) {
  rie::RngStream rng(seed, 0);
  std::vector<double> v(g.total_cells());
  for (double& x : v) x = rng.uniform01() + 1e-6;
  return rie::normalize(DensityGrid(g, std::move(v)));
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

TEST_CASE("snapshot write/read round-trips bit-exactly") {
  const auto g = GridGeometry::make({-0.31, 0.12}, {2.7, 3.9}, {37, 23});
  const auto d = random_grid(g, 71);
  const std::string path = temp_path("roundtrip.csv");
  rie::write_snapshot(d, path, {12, 99, "lozi"});
  const auto back = rie::read_snapshot(path);
  REQUIRE(back.meta.iteration == 12);
  REQUIRE(back.meta.seed == 99);
  REQUIRE(back.meta.model == "lozi");
  REQUIRE(back.grid.geometry() == g);
  for (std::size_t c = 0; c < d.size(); ++c)
    REQUIRE(back.grid.value(c) == d.value(c));
  fs::remove(path);
}

TEST_CASE("snapshot file has one data line per grid row") {
  const auto g = GridGeometry::make({0.0, 0.0}, {1.0, 1.0}, {256, 256});
  const auto d = rie::new_uniform(g, {0.0, 0.0}, {1.0, 1.0});
  const std::string path = temp_path("shape.csv");
  rie::write_snapshot(d, path, {1, 1, "uniform"});
  std::ifstream in(path);
  std::string line;
  std::size_t header = 0, rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') {
      ++header;
      continue;
    }
    ++rows;
    const auto cells = rie::detail::split_list(line);
    REQUIRE(cells.size() == 256);
  }
  REQUIRE(header == 4);
  REQUIRE(rows == 256);
  fs::remove(path);
}

TEST_CASE("tampered snapshot rows are rejected") {
  const auto g = GridGeometry::make({0.0, 0.0}, {1.0, 1.0}, {8, 8});
  const auto d = random_grid(g, 5);
  const std::string path = temp_path("tampered.csv");
  rie::write_snapshot(d, path, {1, 1, "x"});
  std::string contents = slurp(path);
  contents.insert(contents.rfind('\n', contents.size() - 2), ",0.5");
  {
    std::ofstream out(path, std::ios::binary);
    out << contents;
  }
  REQUIRE_THROWS_WITH(rie::read_snapshot(path),
                      Catch::Matchers::ContainsSubstring("values, expected"));
  fs::remove(path);
}

TEST_CASE("1D snapshots round-trip too") {
  const auto g = GridGeometry::make({-2.0}, {2.0}, {64, 1});
  const auto d = random_grid(g, 6);
  const std::string path = temp_path("oned.csv");
  rie::write_snapshot(d, path, {4, 7, "additive_diffusion"});
  const auto back = rie::read_snapshot(path);
  REQUIRE(back.grid.geometry() == g);
  for (std::size_t c = 0; c < d.size(); ++c)
    REQUIRE(back.grid.value(c) == d.value(c));
  fs::remove(path);
}

TEST_CASE("heatmap is a valid P5 with the right extremes") {
  const auto g = GridGeometry::make({0.0, 0.0}, {1.0, 1.0}, {16, 12});
  std::vector<double> v(16 * 12, 0.0);
  v[5 * 16 + 3] = 4.0;  // single bright cell
  const auto d = rie::normalize(DensityGrid(g, std::move(v)));
  const std::string path = temp_path("delta.pgm");
  rie::write_heatmap(d, path);
  const std::string bytes = slurp(path);
  REQUIRE(bytes.rfind("P5\n16 12\n255\n", 0) == 0);
  const std::string pixels = bytes.substr(std::string("P5\n16 12\n255\n").size());
  REQUIRE(pixels.size() == 16 * 12);
  int bright = 0;
  for (unsigned char c : pixels) {
    if (c == 255) ++bright;
  }
  REQUIRE(bright == 1);
  // rows are flipped: grid row j=5 lands at image row 12-1-5=6
  REQUIRE(static_cast<unsigned char>(pixels[6 * 16 + 3]) == 255);
  fs::remove(path);
}

TEST_CASE("uniform grids produce constant heatmaps, log scale keeps them") {
  const auto g = GridGeometry::make({0.0, 0.0}, {1.0, 1.0}, {8, 8});
  const auto d = rie::new_uniform(g, {0.0, 0.0}, {1.0, 1.0});
  for (auto scale : {rie::HeatmapScale::Linear, rie::HeatmapScale::Log}) {
    const std::string path = temp_path("uniform.pgm");
    rie::write_heatmap(d, path, scale);
    const std::string bytes = slurp(path);
    const std::string pixels = bytes.substr(bytes.find("255\n") + 4);
    for (unsigned char c : pixels) REQUIRE(c == 255);
    fs::remove(path);
  }
}

TEST_CASE("moments csv has the documented columns and deterministic bytes") {
  const auto g = GridGeometry::make({-1.0}, {1.0}, {128, 1});
  const auto init = rie::new_gaussian(g, {0.0}, {0.1});
  rie::PropagationConfig cfg;
  cfg.p_count = 2000;
  cfg.n_iterations = 4;
  cfg.sigma_b = rie::ZeroNoiseSpec::make({0.01});
  cfg.seed = 3;
  cfg.geometry = g;
  cfg.snapshot_iterations = {4};
  const auto traj = rie::run(init, rie::additive_diffusion(0.1), cfg);

  const std::string p1 = temp_path("m1.csv");
  const std::string p2 = temp_path("m2.csv");
  rie::write_moments_csv(traj, std::nullopt, p1, "additive_diffusion", cfg.p_count);
  rie::write_moments_csv(traj, std::nullopt, p2, "additive_diffusion", cfg.p_count);
  const std::string a = slurp(p1);
  REQUIRE(a == slurp(p2));
  REQUIRE(a.find("iteration,t,mean1,mean2,var1,var2,cov12") != std::string::npos);
  REQUIRE(a.find("# workers: 1") != std::string::npos);
  std::size_t data_lines = 0;
  std::istringstream in(a);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#' && line[0] != 'i') ++data_lines;
  REQUIRE(data_lines == 4);
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("directory lock is exclusive and releases on destruction") {
  const std::string dir = temp_path("lockdir");
  fs::remove_all(dir);
  {
    rie::DirectoryLock lock(dir);
    REQUIRE_THROWS_WITH(rie::DirectoryLock(dir),
                        Catch::Matchers::ContainsSubstring("locked"));
  }
  // released: can lock again
  rie::DirectoryLock lock2(dir);
  fs::remove_all(dir);
}
