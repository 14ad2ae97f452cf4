#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rie/common.hpp"
#include "rie/density.hpp"
#include "rie/models.hpp"
#include "rie/propagate.hpp"

namespace rie {

struct InitSpec {
  enum class Kind { UniformBox, Gaussian };
  Kind kind = Kind::UniformBox;
  StateVec a;  // uniform: lower corner / gaussian: mean
  StateVec b;  // uniform: upper corner / gaussian: std
};

enum class HeatmapScale { Linear, Log };

struct OutputSpec {
  std::string directory = "out";
  bool write_csv = true;
  bool write_pgm = true;
  HeatmapScale scale = HeatmapScale::Linear;
};

/// Fully validated run description assembled from a sectioned config file.
struct RunConfig {
  std::string model_name;
  ModelOverrides model_overrides;
  TransferModel model;
  InitSpec init;
  PropagationConfig propagation;
  OutputSpec output;
};

/// Either a validated config or the full list of problems found.
struct ConfigResult {
  std::optional<RunConfig> config;
  std::vector<std::string> errors;
  bool ok() const { return errors.empty() && config.has_value(); }
};

inline DensityGrid make_initial_density(const GridGeometry& geometry,
                                        const InitSpec& init) {
  if (init.kind == InitSpec::Kind::UniformBox)
    return new_uniform(geometry, init.a, init.b);
  return new_gaussian(geometry, init.a, init.b);
}

namespace detail {

struct RawEntry {
  std::string value;
  int line = 0;
};

using RawSection = std::map<std::string, RawEntry>;

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size();
}

inline bool parse_bool(const std::string& s, bool& out) {
  const std::string t = trim(s);
  if (t == "true" || t == "on" || t == "1") {
    out = true;
    return true;
  }
  if (t == "false" || t == "off" || t == "0") {
    out = false;
    return true;
  }
  return false;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  const std::string last = trim(cur);
  if (!last.empty() || !parts.empty()) parts.push_back(last);
  return parts;
}

class SectionReader {
 public:
  SectionReader(const std::string& name, const RawSection* raw,
                std::vector<std::string>& errors)
      : name_(name), raw_(raw), errors_(errors) {}

  bool has(const std::string& key) const {
    return raw_ && raw_->count(key) > 0;
  }

  std::optional<std::string> get_string(const std::string& key) {
    used_.push_back(key);
    if (!raw_) return std::nullopt;
    auto it = raw_->find(key);
    if (it == raw_->end()) return std::nullopt;
    return it->second.value;
  }

  std::optional<double> get_double(const std::string& key) {
    auto s = get_string(key);
    if (!s) return std::nullopt;
    double v;
    if (!parse_double(*s, v)) {
      fail(key, "malformed number '" + *s + "'");
      return std::nullopt;
    }
    return v;
  }

  std::optional<bool> get_bool(const std::string& key) {
    auto s = get_string(key);
    if (!s) return std::nullopt;
    bool v;
    if (!parse_bool(*s, v)) {
      fail(key, "expected true/false, got '" + *s + "'");
      return std::nullopt;
    }
    return v;
  }

  std::optional<std::vector<double>> get_doubles(const std::string& key) {
    auto s = get_string(key);
    if (!s) return std::nullopt;
    std::vector<double> out;
    for (const auto& part : split_list(*s)) {
      double v;
      if (!parse_double(part, v)) {
        fail(key, "malformed number '" + part + "'");
        return std::nullopt;
      }
      out.push_back(v);
    }
    if (out.empty()) {
      fail(key, "empty list");
      return std::nullopt;
    }
    return out;
  }

  void fail(const std::string& key, const std::string& msg) {
    int line = 0;
    if (raw_) {
      auto it = raw_->find(key);
      if (it != raw_->end()) line = it->second.line;
    }
    std::ostringstream os;
    os << "[" << name_ << "] " << key;
    if (line > 0) os << " (line " << line << ")";
    os << ": " << msg;
    errors_.push_back(os.str());
  }

  void require(const std::string& key) {
    if (!has(key)) fail(key, "required key missing");
  }

  /// Flags keys nobody consumed. skip_unused lets [model] pass overrides.
  void check_unused() {
    if (!raw_) return;
    for (const auto& [key, entry] : *raw_) {
      bool found = false;
      for (const auto& u : used_)
        if (u == key) found = true;
      if (!found) {
        std::ostringstream os;
        os << "[" << name_ << "] " << key << " (line " << entry.line
           << "): unknown key";
        errors_.push_back(os.str());
      }
    }
  }

 private:
  std::string name_;
  const RawSection* raw_;
  std::vector<std::string>& errors_;
  std::vector<std::string> used_;
};

inline std::optional<StateVec> as_state_vec(const std::vector<double>& xs, int dim) {
  if (static_cast<int>(xs.size()) != dim) return std::nullopt;
  StateVec v;
  for (double x : xs) v.push_back(x);
  return v;
}

}  // namespace detail

/// Parses and validates a sectioned key-value config. All detected problems
/// are reported together, not just the first one.
inline ConfigResult parse_config(const std::string& text) {
  ConfigResult result;
  auto& errors = result.errors;

  // Raw pass: sections of key = value lines, # and ; comments.
  std::map<std::string, detail::RawSection> sections;
  static const std::vector<std::string> known_sections = {"model", "grid", "init",
                                                          "propagation", "output"};
  std::string section;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        errors.push_back("line " + std::to_string(line_no) + ": malformed section header");
        continue;
      }
      section = detail::trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& s : known_sections)
        if (s == section) known = true;
      if (!known) {
        errors.push_back("line " + std::to_string(line_no) + ": unknown section [" +
                         section + "]");
        section.clear();
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back("line " + std::to_string(line_no) + ": expected key = value");
      continue;
    }
    if (section.empty()) {
      errors.push_back("line " + std::to_string(line_no) + ": key outside any section");
      continue;
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) {
      errors.push_back("line " + std::to_string(line_no) + ": empty key");
      continue;
    }
    auto& sec = sections[section];
    if (sec.count(key)) {
      errors.push_back("line " + std::to_string(line_no) + ": duplicate key '" + key +
                       "' in [" + section + "]");
      continue;
    }
    sec[key] = detail::RawEntry{value, line_no};
  }

  auto section_of = [&](const std::string& name) -> const detail::RawSection* {
    auto it = sections.find(name);
    return it == sections.end() ? nullptr : &it->second;
  };

  RunConfig cfg;

  // [model]
  detail::SectionReader model_sec("model", section_of("model"), errors);
  bool model_ok = false;
  if (!section_of("model")) {
    errors.push_back("[model] section missing");
  } else if (auto name = model_sec.get_string("name")) {
    cfg.model_name = detail::trim(*name);
    const detail::RawSection* raw = section_of("model");
    for (const auto& [key, entry] : *raw) {
      if (key == "name") continue;
      double v;
      if (!detail::parse_double(entry.value, v)) {
        model_sec.fail(key, "malformed number '" + entry.value + "'");
        continue;
      }
      cfg.model_overrides[key] = v;
    }
    try {
      cfg.model = make_model(cfg.model_name, cfg.model_overrides);
      model_ok = true;
    } catch (const Error& e) {
      errors.push_back(std::string("[model] ") + e.what());
    }
  } else {
    model_sec.require("name");
  }
  const int dim = model_ok ? cfg.model.state_dim : 2;

  // [grid]
  detail::SectionReader grid_sec("grid", section_of("grid"), errors);
  bool grid_ok = false;
  {
    grid_sec.require("lo");
    grid_sec.require("hi");
    auto lo = grid_sec.get_doubles("lo");
    auto hi = grid_sec.get_doubles("hi");
    auto nc = grid_sec.get_doubles("n_cells");
    grid_sec.check_unused();
    std::array<std::size_t, 2> n_cells = {dim == 1 ? std::size_t{1024} : 256, 256};
    bool nc_ok = true;
    if (nc) {
      if (static_cast<int>(nc->size()) != dim) {
        grid_sec.fail("n_cells", "expected " + std::to_string(dim) + " entries");
        nc_ok = false;
      } else {
        for (int r = 0; r < dim; ++r) {
          const double v = (*nc)[static_cast<std::size_t>(r)];
          if (v < 2 || v != std::floor(v)) {
            grid_sec.fail("n_cells", "entries must be integers >= 2");
            nc_ok = false;
          } else {
            n_cells[static_cast<std::size_t>(r)] = static_cast<std::size_t>(v);
          }
        }
      }
    }
    if (lo && hi && nc_ok) {
      auto lo_v = detail::as_state_vec(*lo, dim);
      auto hi_v = detail::as_state_vec(*hi, dim);
      if (!lo_v || !hi_v) {
        if (!lo_v) grid_sec.fail("lo", "expected " + std::to_string(dim) + " entries");
        if (!hi_v) grid_sec.fail("hi", "expected " + std::to_string(dim) + " entries");
      } else {
        try {
          cfg.propagation.geometry = GridGeometry::make(*lo_v, *hi_v, n_cells);
          grid_ok = true;
        } catch (const Error& e) {
          errors.push_back(std::string("[grid] ") + e.what());
        }
      }
    }
  }

  if (model_ok && grid_ok && cfg.model.min_x1 &&
      cfg.propagation.geometry.lo[0] <= *cfg.model.min_x1) {
    std::ostringstream os;
    os << "[grid] window lower bound x1=" << cfg.propagation.geometry.lo[0]
       << " violates model '" << cfg.model_name << "' precondition x1 > "
       << *cfg.model.min_x1 << " (transfer function pole at x1 = -1)";
    errors.push_back(os.str());
  }

  // [init]
  detail::SectionReader init_sec("init", section_of("init"), errors);
  {
    std::string kind = "uniform";
    if (auto k = init_sec.get_string("kind")) kind = detail::trim(*k);
    if (kind == "uniform") {
      cfg.init.kind = InitSpec::Kind::UniformBox;
      init_sec.require("lo");
      init_sec.require("hi");
      auto lo = init_sec.get_doubles("lo");
      auto hi = init_sec.get_doubles("hi");
      if (lo && hi) {
        auto lo_v = detail::as_state_vec(*lo, dim);
        auto hi_v = detail::as_state_vec(*hi, dim);
        if (!lo_v || !hi_v)
          init_sec.fail("lo", "expected " + std::to_string(dim) + " entries");
        else {
          cfg.init.a = *lo_v;
          cfg.init.b = *hi_v;
        }
      }
    } else if (kind == "gaussian") {
      cfg.init.kind = InitSpec::Kind::Gaussian;
      init_sec.require("mean");
      init_sec.require("std");
      auto mean = init_sec.get_doubles("mean");
      auto std_v = init_sec.get_doubles("std");
      if (mean && std_v) {
        auto m = detail::as_state_vec(*mean, dim);
        auto s = detail::as_state_vec(*std_v, dim);
        if (!m || !s)
          init_sec.fail("mean", "expected " + std::to_string(dim) + " entries");
        else {
          cfg.init.a = *m;
          cfg.init.b = *s;
        }
      }
    } else {
      init_sec.fail("kind", "expected 'uniform' or 'gaussian'");
    }
    init_sec.check_unused();
  }

  // [propagation]
  detail::SectionReader prop_sec("propagation", section_of("propagation"), errors);
  {
    prop_sec.require("samples");
    prop_sec.require("iterations");
    prop_sec.require("sigma_b");
    if (auto v = prop_sec.get_double("samples")) {
      if (*v < 1 || *v != std::floor(*v))
        prop_sec.fail("samples", "must be a positive integer");
      else
        cfg.propagation.p_count = static_cast<std::size_t>(*v);
    }
    if (auto v = prop_sec.get_double("iterations")) {
      if (*v < 1 || *v != std::floor(*v))
        prop_sec.fail("iterations", "must be a positive integer");
      else
        cfg.propagation.n_iterations = static_cast<int>(*v);
    }
    if (auto xs = prop_sec.get_doubles("sigma_b")) {
      StateVec s;
      if (xs->size() == 1)
        s = StateVec::filled(static_cast<std::size_t>(dim), (*xs)[0]);
      else if (static_cast<int>(xs->size()) == dim)
        for (double x : *xs) s.push_back(x);
      else
        prop_sec.fail("sigma_b", "expected 1 or " + std::to_string(dim) + " entries");
      if (static_cast<int>(s.size()) == dim) {
        try {
          cfg.propagation.sigma_b = ZeroNoiseSpec::make(s);
        } catch (const Error& e) {
          prop_sec.fail("sigma_b", e.what());
        }
      }
    }
    if (auto v = prop_sec.get_double("seed"))
      cfg.propagation.seed = static_cast<std::uint64_t>(*v);
    if (auto xs = prop_sec.get_doubles("snapshots")) {
      for (double x : *xs) {
        if (x < 1 || x != std::floor(x)) {
          prop_sec.fail("snapshots", "entries must be positive integers");
          break;
        }
        cfg.propagation.snapshot_iterations.push_back(static_cast<int>(x));
      }
    }
    if (auto v = prop_sec.get_double("stop_tolerance")) {
      if (!(*v > 0.0))
        prop_sec.fail("stop_tolerance", "must be > 0");
      else
        cfg.propagation.stop_tolerance = *v;
    }
    if (auto v = prop_sec.get_bool("reuse_param_batch"))
      cfg.propagation.reuse_param_batch = *v;
    if (auto v = prop_sec.get_double("threads")) {
      if (*v < 1 || *v != std::floor(*v))
        prop_sec.fail("threads", "must be a positive integer");
      else
        cfg.propagation.n_workers = static_cast<int>(*v);
    }
    if (auto v = prop_sec.get_double("max_factor")) {
      if (*v < 1 || *v != std::floor(*v))
        prop_sec.fail("max_factor", "must be a positive integer");
      else
        cfg.propagation.ar_max_factor = static_cast<std::size_t>(*v);
    }
    prop_sec.check_unused();

    if (cfg.propagation.snapshot_iterations.empty() &&
        cfg.propagation.n_iterations > 0)
      cfg.propagation.snapshot_iterations = {cfg.propagation.n_iterations};
    for (int s : cfg.propagation.snapshot_iterations)
      if (cfg.propagation.n_iterations > 0 &&
          (s < 1 || s > cfg.propagation.n_iterations)) {
        prop_sec.fail("snapshots", "iteration " + std::to_string(s) +
                                       " outside [1, iterations]");
        break;
      }
  }

  // [output]
  detail::SectionReader out_sec("output", section_of("output"), errors);
  {
    if (auto d = out_sec.get_string("directory")) cfg.output.directory = detail::trim(*d);
    if (auto f = out_sec.get_string("formats")) {
      cfg.output.write_csv = false;
      cfg.output.write_pgm = false;
      for (const auto& part : detail::split_list(*f)) {
        if (part == "csv")
          cfg.output.write_csv = true;
        else if (part == "pgm")
          cfg.output.write_pgm = true;
        else
          out_sec.fail("formats", "unknown format '" + part + "' (valid: csv, pgm)");
      }
    }
    if (auto s = out_sec.get_string("heatmap_scale")) {
      const std::string v = detail::trim(*s);
      if (v == "linear")
        cfg.output.scale = HeatmapScale::Linear;
      else if (v == "log")
        cfg.output.scale = HeatmapScale::Log;
      else
        out_sec.fail("heatmap_scale", "expected 'linear' or 'log'");
    }
    out_sec.check_unused();
  }

  // The initial density must actually put mass on the grid.
  if (errors.empty()) {
    try {
      (void)make_initial_density(cfg.propagation.geometry, cfg.init);
    } catch (const Error& e) {
      errors.push_back(std::string("[init] ") + e.what());
    }
  }

  if (errors.empty()) result.config = std::move(cfg);
  return result;
}

inline ConfigResult load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    ConfigResult r;
    r.errors.push_back("cannot open config file: " + path);
    return r;
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace rie
