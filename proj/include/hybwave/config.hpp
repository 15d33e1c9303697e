#pragma once

// Experiment configuration: `[section]` headers and `key = value` lines,
// '#' starts a comment. Every field defaults to the reference 3D run.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hybwave/core.hpp"
#include "hybwave/synthesis.hpp"

namespace hybwave {

struct InclusionConfig {
  bool ball = true;
  std::vector<double> numbers;  // ball: centre..., radius; box: lo..., hi...
};

struct ExperimentConfig {
  // [geometry]
  int dim = 3;
  std::vector<double> fdm_lo{-3.4, -0.8, -0.8}, fdm_hi{3.4, 0.8, 0.8};
  std::vector<double> fem_lo{-3.2, -0.6, -0.6}, fem_hi{3.2, 0.6, 0.6};
  double h = 0.1;
  // [time]
  double tau = 0.006;
  double T = 3.0;
  // [source]
  double omega = 40.0;
  ModelProblem model = ModelProblem::mp2;
  bool literal_cube = false;
  // [inversion]
  double gamma = 0.01;
  double theta = 1e-6;
  double a0 = 1.0;
  double lower = 1.0;
  double upper = 5.0;
  double cutoff_delta = -1.0;  // negative: 0.1 T
  int max_iterations = 20;
  double armijo_c1 = 1e-4;
  double initial_step = 0.05;
  double invert_sigma = 10.0;
  // [data]
  std::vector<double> sigmas{3.0, 10.0};
  std::uint64_t seed = 1;
  int refinement = 2;
  double a_in = 4.0;
  std::string scatterers = "default";  // default | none | list
  std::vector<InclusionConfig> inclusions;
  // [output]
  std::string out = "out";
  int snapshot_stride = 10;

  double delta() const { return cutoff_delta < 0.0 ? 0.1 * T : cutoff_delta; }

  template <int D>
  Box<D> box(const std::vector<double>& lo, const std::vector<double>& hi) const {
    Box<D> b;
    for (int d = 0; d < D; ++d) {
      b.lo[d] = lo[static_cast<std::size_t>(d)];
      b.hi[d] = hi[static_cast<std::size_t>(d)];
    }
    return b;
  }

  template <int D>
  Box<D> fdm_box() const {
    return box<D>(fdm_lo, fdm_hi);
  }
  template <int D>
  Box<D> fem_box() const {
    return box<D>(fem_lo, fem_hi);
  }

  template <int D>
  ScattererSpec<D> scatterer_spec() const {
    if (scatterers == "default") return default_scatterers<D>(fem_box<D>(), a_in);
    ScattererSpec<D> s;
    s.a_in = a_in;
    if (scatterers == "none") return s;
    for (const auto& inc : inclusions) {
      if (inc.ball) {
        Point<D> c{};
        for (int d = 0; d < D; ++d) c[d] = inc.numbers[static_cast<std::size_t>(d)];
        s.inclusions.push_back(Inclusion<D>::ball(c, inc.numbers[static_cast<std::size_t>(D)]));
      } else {
        Box<D> b;
        for (int d = 0; d < D; ++d) {
          b.lo[d] = inc.numbers[static_cast<std::size_t>(d)];
          b.hi[d] = inc.numbers[static_cast<std::size_t>(D + d)];
        }
        s.inclusions.push_back(Inclusion<D>::make_box(b));
      }
    }
    return s;
  }

  /// Structural checks that do not need a layout.
  void validate() const {
    if (dim < 1 || dim > 3) throw ConfigError("geometry.dim must be 1, 2 or 3");
    for (const auto* v : {&fdm_lo, &fdm_hi, &fem_lo, &fem_hi})
      if (static_cast<int>(v->size()) != dim)
        throw ConfigError("box corners need exactly " + std::to_string(dim) + " components");
    if (!(h > 0.0) || !(tau > 0.0) || !(T > 0.0)) throw ConfigError("h, tau and T must be positive");
    if (!(omega > 0.0)) throw ConfigError("source.omega must be positive");
    if (gamma < 0.0) throw ConfigError("inversion.gamma must be non-negative");
    if (!(theta > 0.0)) throw ConfigError("inversion.theta must be positive");
    if (!(lower >= 1.0) || !(upper >= lower)) throw ConfigError("admissible bounds need 1 <= lower <= upper");
    if (max_iterations < 0) throw ConfigError("inversion.max_iterations must be non-negative");
    if (refinement < 1) throw ConfigError("data.refinement must be at least 1");
    if (snapshot_stride < 1) throw ConfigError("output.snapshot_stride must be at least 1");
    for (double s : sigmas)
      if (s < 0.0) throw ConfigError("data.sigma entries must be non-negative");
    if (scatterers != "default" && scatterers != "none" && scatterers != "list")
      throw ConfigError("data.scatterers must be default, none or list");
    for (const auto& inc : inclusions)
      if (static_cast<int>(inc.numbers.size()) != (inc.ball ? dim + 1 : 2 * dim))
        throw ConfigError(std::string(inc.ball ? "ball" : "box") + " entry has the wrong number of values");
  }

  /// Deterministic text form; its FNV-1a hash goes into every manifest.
  std::string canonical() const {
    std::ostringstream os;
    os.precision(17);
    auto list = [&](const std::vector<double>& v) {
      for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << v[i];
      os << '\n';
    };
    os << "dim=" << dim << "\nfdm_lo=";
    list(fdm_lo);
    os << "fdm_hi=";
    list(fdm_hi);
    os << "fem_lo=";
    list(fem_lo);
    os << "fem_hi=";
    list(fem_hi);
    os << "h=" << h << "\ntau=" << tau << "\nT=" << T << "\nomega=" << omega << "\nmodel=" << to_string(model)
       << "\nliteral_cube=" << literal_cube << "\ngamma=" << gamma << "\ntheta=" << theta << "\na0=" << a0
       << "\nlower=" << lower << "\nupper=" << upper << "\ndelta=" << delta() << "\nmax_iterations=" << max_iterations
       << "\nc1=" << armijo_c1 << "\ninitial_step=" << initial_step << "\ninvert_sigma=" << invert_sigma
       << "\nsigmas=";
    list(sigmas);
    os << "seed=" << seed << "\nrefinement=" << refinement << "\na_in=" << a_in << "\nscatterers=" << scatterers
       << '\n';
    for (const auto& inc : inclusions) {
      os << (inc.ball ? "ball=" : "box=");
      list(inc.numbers);
    }
    os << "snapshot_stride=" << snapshot_stride << '\n';
    return os.str();
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

struct ConfigLine {
  long line;
  std::string key;
  std::string value;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("line " + std::to_string(line) + ": key '" + key + "': " + what);
  }

  double number() const {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      fail("expected a number, got '" + value + "'");
    }
    if (trim(value.substr(used)) != "") fail("expected a number, got '" + value + "'");
    return v;
  }

  long integer() const {
    const double v = number();
    if (v != static_cast<double>(static_cast<long>(v))) fail("expected an integer, got '" + value + "'");
    return static_cast<long>(v);
  }

  bool boolean() const {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    fail("expected true or false, got '" + value + "'");
  }

  std::vector<double> numbers() const {
    std::vector<double> out;
    std::string v = value;
    for (char& c : v)
      if (c == ',') c = ' ';
    std::istringstream is(v);
    std::string tok;
    while (is >> tok) {
      ConfigLine t{line, key, tok};
      out.push_back(t.number());
    }
    if (out.empty()) fail("expected a list of numbers");
    return out;
  }
};

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig c;
  std::string raw, section;
  long lineno = 0;
  bool boxes_set = false;
  while (std::getline(is, raw)) {
    ++lineno;
    std::string s = detail::trim(raw.substr(0, raw.find('#')));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      section = detail::trim(s.substr(1, s.size() - 2));
      if (section != "geometry" && section != "time" && section != "source" && section != "inversion" &&
          section != "data" && section != "output")
        throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value, got '" + s + "'");
    detail::ConfigLine L{lineno, detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1))};
    if (L.value.empty()) L.fail("missing value");
    const std::string& k = L.key;
    if (section.empty()) L.fail("key outside of any section");
    if (section == "geometry") {
      if (k == "dim") c.dim = static_cast<int>(L.integer());
      else if (k == "fdm_lo") c.fdm_lo = L.numbers(), boxes_set = true;
      else if (k == "fdm_hi") c.fdm_hi = L.numbers(), boxes_set = true;
      else if (k == "fem_lo") c.fem_lo = L.numbers(), boxes_set = true;
      else if (k == "fem_hi") c.fem_hi = L.numbers(), boxes_set = true;
      else if (k == "h") c.h = L.number();
      else L.fail("unknown key in [geometry]");
    } else if (section == "time") {
      if (k == "tau") c.tau = L.number();
      else if (k == "T") c.T = L.number();
      else L.fail("unknown key in [time]");
    } else if (section == "source") {
      if (k == "omega") c.omega = L.number();
      else if (k == "model") {
        try {
          c.model = parse_model(L.value);
        } catch (const ConfigError& e) {
          L.fail(e.what());
        }
      } else if (k == "literal_cube") c.literal_cube = L.boolean();
      else L.fail("unknown key in [source]");
    } else if (section == "inversion") {
      if (k == "gamma") c.gamma = L.number();
      else if (k == "theta") c.theta = L.number();
      else if (k == "a0") c.a0 = L.number();
      else if (k == "lower") c.lower = L.number();
      else if (k == "upper") c.upper = L.number();
      else if (k == "cutoff_delta") c.cutoff_delta = L.number();
      else if (k == "max_iterations") c.max_iterations = static_cast<int>(L.integer());
      else if (k == "armijo_c1") c.armijo_c1 = L.number();
      else if (k == "initial_step") c.initial_step = L.number();
      else if (k == "sigma") c.invert_sigma = L.number();
      else L.fail("unknown key in [inversion]");
    } else if (section == "data") {
      if (k == "sigma") c.sigmas = L.numbers();
      else if (k == "seed") {
        const long v = L.integer();
        if (v < 0) L.fail("seed must be non-negative");
        c.seed = static_cast<std::uint64_t>(v);
      } else if (k == "refinement") c.refinement = static_cast<int>(L.integer());
      else if (k == "a_in") c.a_in = L.number();
      else if (k == "scatterers") c.scatterers = L.value;
      else if (k == "ball" || k == "box") {
        c.inclusions.push_back(InclusionConfig{k == "ball", L.numbers()});
        c.scatterers = "list";
      } else L.fail("unknown key in [data]");
    } else {
      if (k == "out") c.out = L.value;
      else if (k == "snapshot_stride") c.snapshot_stride = static_cast<int>(L.integer());
      else L.fail("unknown key in [output]");
    }
  }
  // Reduced modes keep the leading components of the default boxes.
  if (!boxes_set && c.dim < 3)
    for (auto* v : {&c.fdm_lo, &c.fdm_hi, &c.fem_lo, &c.fem_hi}) v->resize(static_cast<std::size_t>(c.dim));
  c.validate();
  return c;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  return parse_config(is);
}

}  // namespace hybwave
