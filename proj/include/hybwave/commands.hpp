#pragma once

// The batch commands behind the `hybwave` tool. Each returns a process exit
// code: 0 success, 1 validation failure; instabilities propagate as
// InstabilityError and are mapped to 2 by the caller.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hybwave/config.hpp"
#include "hybwave/coupling.hpp"
#include "hybwave/diagnostics.hpp"
#include "hybwave/fem.hpp"
#include "hybwave/geometry.hpp"
#include "hybwave/inversion.hpp"
#include "hybwave/io.hpp"
#include "hybwave/pulse.hpp"
#include "hybwave/synthesis.hpp"

namespace hybwave {

/// Command-line overrides on top of the config file.
struct CommandOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<ModelProblem> model;
  std::optional<std::vector<double>> sigmas;
  std::optional<double> omega;
  std::optional<std::string> coefficient_file;
  std::optional<std::string> data_file;
  bool quiet = false;
};

inline ExperimentConfig apply_overrides(ExperimentConfig c, const CommandOptions& o) {
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.model) c.model = *o.model;
  if (o.sigmas) {
    c.sigmas = *o.sigmas;
    if (c.sigmas.size() == 1) c.invert_sigma = c.sigmas.front();
  }
  if (o.omega) c.omega = *o.omega;
  c.validate();
  return c;
}

inline std::string sigma_label(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", s);
  return buf;
}

inline std::string data_file_name(double sigma) {
  return sigma == 0.0 ? "data_clean.csv" : "data_sigma" + sigma_label(sigma) + ".csv";
}

/// Per-level seed so that every noise level has its own stream.
inline std::uint64_t noise_seed(std::uint64_t seed, double sigma) {
  return seed * 1000003ull + static_cast<std::uint64_t>(std::llround(sigma * 1000.0));
}

inline Manifest base_manifest(const ExperimentConfig& c, const std::string& command) {
  return {{"command", command}, {"config_hash", hex64(fnv1a(c.canonical()))}, {"dim", std::to_string(c.dim)},
          {"h", fmt17(c.h)},          {"tau", fmt17(c.tau)},
          {"T", fmt17(c.T)},          {"omega", fmt17(c.omega)},
          {"model", to_string(c.model)}, {"seed", std::to_string(c.seed)}};
}

inline void write_coefficient_csv(std::ostream& os, const CoefficientField& a) {
  os << "cell,a\n";
  for (std::size_t c = 0; c < a.size(); ++c) os << c << ',' << fmt17(a[c]) << '\n';
}

inline CoefficientField read_coefficient_csv(const std::filesystem::path& path, std::size_t ncells, double lower,
                                             double upper) {
  std::istringstream is(read_file(path));
  std::string line;
  std::getline(is, line);
  if (line.rfind("cell,a", 0) != 0) throw ConfigError(path.string() + ": expected a 'cell,a' header");
  CoefficientField a(ncells, 1.0, lower, upper);
  std::vector<bool> seen(ncells, false);
  long lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    std::size_t c = 0;
    double v = 0.0;
    try {
      c = std::stoul(line.substr(0, comma));
      v = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw ConfigError(path.string() + ": line " + std::to_string(lineno) + " is not 'cell,value'");
    }
    if (comma == std::string::npos || c >= ncells)
      throw ConfigError(path.string() + ": line " + std::to_string(lineno) + " names a cell outside the mesh");
    a[c] = v;
    seen[c] = true;
  }
  for (std::size_t c = 0; c < ncells; ++c)
    if (!seen[c]) throw ConfigError(path.string() + ": no value for cell " + std::to_string(c));
  return a;
}

template <int Dim>
DomainLayout<Dim> layout_of(const ExperimentConfig& c) {
  return build_layout<Dim>(c.fdm_box<Dim>(), c.fem_box<Dim>(), c.h);
}

template <int Dim>
int cmd_check(const ExperimentConfig& c, std::ostream& os) {
  const auto L = layout_of<Dim>(c);
  check_mesh_quality(L.mesh, 0.1);
  os << "layout\n";
  write_layout_summary(os, L);
  const double tmax = cfl_max_timestep<Dim>(L.grid.spacing(), c.upper);
  const long N = step_count(c.T, c.tau);
  const double mb = static_cast<double>(N + 1) * static_cast<double>(L.mesh.num_vertices()) * 8.0 / (1 << 20);
  os << "cfl\n";
  os << "  tau_max(a=" << sigma_label(c.upper) << ")  " << fmt17(tmax) << "\n";
  os << "  tau               " << fmt17(c.tau) << "\n";
  os << "  steps             " << N << "\n";
  os << "  trajectory_MiB    " << fmt17(mb) << "\n";
  if (c.tau > tmax * (1.0 + 1e-12)) {
    os << "CFL violated: tau = " << c.tau << " exceeds tau_max = " << tmax << " for a_max = " << c.upper << "\n";
    return 1;
  }
  os << "OK\n";
  return 0;
}

template <int Dim>
int cmd_make_data(const ExperimentConfig& c, std::ostream& os) {
  const auto L = layout_of<Dim>(c);
  const auto spec = c.scatterer_spec<Dim>();
  SynthesisOptions so;
  so.refinement = c.refinement;
  so.model = c.model;
  so.literal_cube = c.literal_cube;
  const auto clean = make_data(L, spec, SourcePulse(c.omega), c.tau, c.T, so);
  const std::filesystem::path out(c.out);
  Manifest m = base_manifest(c, "make-data");
  m.emplace_back("refinement", std::to_string(c.refinement));
  m.emplace_back("fine_h", fmt17(c.h / c.refinement));
  m.emplace_back("fine_tau", fmt17(c.tau / c.refinement));
  m.emplace_back("observation_nodes", std::to_string(clean.nodes.size()));
  m.emplace_back("levels", std::to_string(clean.times.size()));
  m.emplace_back("max_abs_clean", fmt17(clean.values.cwiseAbs().maxCoeff()));
  write_file(out / data_file_name(0.0), [&](std::ostream& f) { write_observations_csv(f, clean); });
  m.emplace_back("file", data_file_name(0.0) + " sigma=0");
  for (double s : c.sigmas) {
    if (s == 0.0) continue;
    const auto noisy = add_noise(clean, s, noise_seed(c.seed, s));
    write_file(out / data_file_name(s), [&](std::ostream& f) { write_observations_csv(f, noisy); });
    m.emplace_back("file", data_file_name(s) + " sigma=" + sigma_label(s) + " seed=" +
                               std::to_string(noise_seed(c.seed, s)));
  }
  const auto a = paint_coefficient(L, spec, c.lower, c.upper);
  write_file(out / "a_true.csv", [&](std::ostream& f) { write_coefficient_csv(f, a); });
  write_file(out / "a_true.vtk", [&](std::ostream& f) { write_vtk_mesh(f, L.mesh, &a.values, "a"); });
  write_file(out / "data_manifest.txt", [&](std::ostream& f) { write_manifest(f, m); });
  os << "wrote " << 1 + c.sigmas.size() - std::count(c.sigmas.begin(), c.sigmas.end(), 0.0)
     << " observation files to " << out.string() << "\n";
  return 0;
}

template <int Dim>
int cmd_forward(const ExperimentConfig& c, const CommandOptions& o, std::ostream& os) {
  const auto L = layout_of<Dim>(c);
  const CoefficientField a = o.coefficient_file
                                 ? read_coefficient_csv(*o.coefficient_file, L.mesh.num_cells(), c.lower, c.upper)
                                 : paint_coefficient(L, c.scatterer_spec<Dim>(), c.lower, c.upper);
  const std::filesystem::path out(c.out);
  std::vector<EnergySample> energy;
  Manifest index;
  ForwardOptions<Dim> fo;
  fo.store_mesh_levels = false;
  fo.on_level = [&](const HybridSolver<Dim>& s, long k, double t) {
    energy.push_back(hybrid_energy(L, s.operators().geometry, a, s.grid_curr(), s.grid_prev(), c.tau, t));
    if (k % c.snapshot_stride == 0) {
      char name[40];
      std::snprintf(name, sizeof name, "u_%06ld.vtk", k);
      write_file(out / "snapshots" / name, [&](std::ostream& f) { write_vtk_grid(f, L.grid, s.grid_curr(), "u"); });
      index.emplace_back(std::to_string(k), fmt17(t) + " snapshots/" + name);
    }
  };
  const auto tr = solve_forward(L, a, SourcePulse(c.omega), c.tau, c.T,
                                model_initial_data<Dim>(c.model, c.literal_cube), fo);
  auto obs = observation_frame(L, c.tau, tr.steps);
  obs.values = tr.observations;
  write_file(out / "observations.csv", [&](std::ostream& f) { write_observations_csv(f, obs); });
  write_file(out / "energy.csv", [&](std::ostream& f) { write_energy_csv(f, energy); });
  write_file(out / "snapshots.txt", [&](std::ostream& f) { write_manifest(f, index); });
  Manifest m = base_manifest(c, "forward");
  m.emplace_back("coefficient", o.coefficient_file ? *o.coefficient_file : std::string("painted"));
  m.emplace_back("steps", std::to_string(tr.steps));
  m.emplace_back("snapshots", std::to_string(index.size()));
  m.emplace_back("max_abs_observation", fmt17(tr.observations.cwiseAbs().maxCoeff()));
  write_file(out / "forward_manifest.txt", [&](std::ostream& f) { write_manifest(f, m); });
  os << "forward: " << tr.steps << " steps, " << index.size() << " snapshots, energy at T "
     << fmt17(energy.back().total()) << "\n";
  return 0;
}

/// Data traces must sit on this layout's observation nodes and levels.
template <int Dim>
Eigen::MatrixXd aligned_data(const DomainLayout<Dim>& L, const ObservationSet<Dim>& d, long N) {
  if (d.nodes.size() != L.observation_nodes.size() || static_cast<long>(d.times.size()) != N + 1)
    throw TraceMismatchError("data has " + std::to_string(d.nodes.size()) + " nodes x " +
                             std::to_string(d.times.size()) + " levels, the configuration needs " +
                             std::to_string(L.observation_nodes.size()) + " x " + std::to_string(N + 1));
  for (std::size_t j = 0; j < d.nodes.size(); ++j)
    if (distance<Dim>(d.nodes[j], L.grid.coord(L.observation_nodes[j])) > 1e-9 * L.h)
      throw TraceMismatchError("data node " + std::to_string(j) + " does not match the observation lattice");
  return d.values;
}

template <int Dim>
int cmd_invert(const ExperimentConfig& c, const CommandOptions& o, std::ostream& os) {
  const auto L = layout_of<Dim>(c);
  const std::filesystem::path out(c.out);
  const std::filesystem::path data_path =
      o.data_file ? std::filesystem::path(*o.data_file) : out / data_file_name(c.invert_sigma);
  std::istringstream ds(read_file(data_path));
  const auto data = read_observations_csv<Dim>(ds);

  InverseProblem<Dim> P;
  P.layout = &L;
  P.pulse = SourcePulse(c.omega);
  P.initial = model_initial_data<Dim>(c.model, c.literal_cube);
  P.tau = c.tau;
  P.T = c.T;
  P.data = aligned_data(L, data, step_count(c.T, c.tau));
  P.cutoff = CutoffWeight(c.T, c.delta());
  P.gamma = c.gamma;
  P.a0 = c.a0;
  P.lower = c.lower;
  P.upper = c.upper;

  ReconstructOptions ro;
  ro.theta = c.theta;
  ro.max_iterations = c.max_iterations;
  ro.line_search.c1 = c.armijo_c1;
  ro.line_search.initial_step = c.initial_step;
  CoefficientField a0(L.mesh.num_cells(), c.a0, c.lower, c.upper);
  const auto rep = reconstruct(P, a0, ro, [&](const InverseState& s) {
    if (!o.quiet)
      os << "m=" << s.m << " J=" << s.objective << " |g|=" << s.grad_norm << " max_a=" << s.a.max() << "\n";
  });

  write_file(out / "iterations.csv", [&](std::ostream& f) { write_iteration_log(f, rep.history); });
  write_file(out / "a_final.csv", [&](std::ostream& f) { write_coefficient_csv(f, rep.final_a); });
  write_file(out / "a_post.csv", [&](std::ostream& f) { write_coefficient_csv(f, rep.postprocessed); });
  write_file(out / "a_final.vtk", [&](std::ostream& f) { write_vtk_mesh(f, L.mesh, &rep.final_a.values, "a"); });
  write_file(out / "a_post.vtk", [&](std::ostream& f) { write_vtk_mesh(f, L.mesh, &rep.postprocessed.values, "a"); });

  const double amax = rep.final_a.max();
  const double err = std::abs(amax - c.a_in) / c.a_in * 100.0;
  Manifest m = base_manifest(c, "invert");
  m.emplace_back("data", data_path.string());
  m.emplace_back("iterations", std::to_string(rep.iterations));
  m.emplace_back("stop_reason", to_string(rep.reason));
  m.emplace_back("max_a", fmt17(amax));
  m.emplace_back("error_percent", fmt17(err));
  m.emplace_back("at_upper_bound", amax >= c.upper ? "yes" : "no");
  m.emplace_back("final_objective", fmt17(rep.history.back().objective));
  if (!rep.message.empty()) m.emplace_back("message", rep.message);
  write_file(out / "summary.txt", [&](std::ostream& f) { write_manifest(f, m); });
  os << "omega=" << sigma_label(c.omega) << " | max a " << amax << " | error " << err << " % | iterations "
     << rep.iterations << " | " << to_string(rep.reason) << "\n";
  return 0;
}

/// Dispatch on the configured dimension.
template <template <int> class F, typename... Args>
int with_dim(int dim, Args&&... args) {
  switch (dim) {
    case 1: return F<1>::run(std::forward<Args>(args)...);
    case 2: return F<2>::run(std::forward<Args>(args)...);
    case 3: return F<3>::run(std::forward<Args>(args)...);
  }
  throw ConfigError("geometry.dim must be 1, 2 or 3");
}

template <int Dim>
struct CheckCommand {
  static int run(const ExperimentConfig& c, const CommandOptions&, std::ostream& os) { return cmd_check<Dim>(c, os); }
};
template <int Dim>
struct MakeDataCommand {
  static int run(const ExperimentConfig& c, const CommandOptions&, std::ostream& os) {
    return cmd_make_data<Dim>(c, os);
  }
};
template <int Dim>
struct ForwardCommand {
  static int run(const ExperimentConfig& c, const CommandOptions& o, std::ostream& os) {
    return cmd_forward<Dim>(c, o, os);
  }
};
template <int Dim>
struct InvertCommand {
  static int run(const ExperimentConfig& c, const CommandOptions& o, std::ostream& os) {
    return cmd_invert<Dim>(c, o, os);
  }
};

/// Runs one subcommand by name; validation errors are reported and give 1,
/// instabilities are left to the caller.
inline int run_command(const std::string& name, const ExperimentConfig& cfg, const CommandOptions& o,
                       std::ostream& os, std::ostream& err) {
  try {
    const auto c = apply_overrides(cfg, o);
    if (name == "check") return with_dim<CheckCommand>(c.dim, c, o, os);
    if (name == "make-data") return with_dim<MakeDataCommand>(c.dim, c, o, os);
    if (name == "forward") return with_dim<ForwardCommand>(c.dim, c, o, os);
    if (name == "invert") return with_dim<InvertCommand>(c.dim, c, o, os);
    err << "unknown command '" << name << "'\n";
    return 1;
  } catch (const InstabilityError&) {
    throw;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace hybwave
