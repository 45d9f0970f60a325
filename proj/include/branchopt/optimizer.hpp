#ifndef BRANCHOPT_OPTIMIZER_HPP
#define BRANCHOPT_OPTIMIZER_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "branchopt/energy.hpp"
#include "branchopt/geometry.hpp"

namespace branchopt {

struct OptimizerConfig {
  enum class NMode { Fixed, Free };
  NMode n_mode = NMode::Fixed;
  double N_fixed = 2.0;
  int K_start = 4;
  int K_max = 14;
  double g_tol = 1e-9;    // relative to the initial gradient norm
  double x_tol = 1e-13;   // relative energy-progress floor
  int max_iters = 5000;   // per level
  double delta_geom = 1e-9;
  double theta_margin = 1e-4;  // keep theta this far inside the admissible interval
  int lbfgs_memory = 8;
  int stall_limit = 50;   // iterations a gap may sit at its bound before degeneracy
  std::uint64_t seed = 0; // recorded for provenance; the pipeline is deterministic
  bool free_facet_tips = true;

  void check() const;
};

enum class LevelStatus { Converged, Degenerate, IterationLimit };

struct LevelResult {
  LevelStatus status = LevelStatus::Converged;
  GeometrySpec spec;  // optimized theta, l, N
  DofVector Y;
  EnergyBreakdown energy;
  int iters = 0;
  std::optional<DegeneracyReport> degeneracy;
};

struct LevelRecord {
  int K = 0;
  EnergyBreakdown energy;
  double theta = 0, l = 0, N = 0;
  int iters = 0;
  bool degenerate = false;
  double seconds = 0;
  std::string status;
};

struct OptimizationTrace {
  SchemeName scheme = SchemeName::NEW;
  double epsilon = 0;
  double L = 0;
  OptimizerConfig cfg;
  std::vector<LevelRecord> levels;
  GeometrySpec final_spec;  // deepest feasible solution
  DofVector final_Y;
  bool degenerate = false;
  bool converged = true;
};

// Minimizes the total energy over (theta, l, N, Y) at fixed K, keeping every
// ordinate gap >= delta_geom via step truncation. Declares degeneracy when a
// gap sits at its bound for cfg.stall_limit iterations while the gradient
// pushes inward.
LevelResult optimize_level(const Topology& top, const GeometrySpec& spec, const DofVector& Y0,
                           const OptimizerConfig& cfg);

// Level continuation from K_start to K_max: optimize, extend by one level,
// re-optimize. Stops early on degeneracy (recorded in the trace).
OptimizationTrace continuation(SchemeName scheme, const OptimizerConfig& cfg, double epsilon,
                               double L);

// Largest t in [0, 1] such that state + t * dstate keeps all ordering gaps
// >= delta. Exposed for tests.
double max_feasible_step(const Layout& lay, const std::vector<double>& state,
                         const std::vector<double>& dstate, double delta);

// Applies a DOF-space step truncated to maintain margin delta; returns the
// new materialized state.
std::vector<double> constrained_step(const Layout& lay, const std::vector<double>& state,
                                     const std::vector<double>& dof_step, double delta);

// Trace serialization. Columns: K, F_total, F_elast, F_surf, F_bdry, theta,
// l, N, iters, degenerate, seconds. With include_timings == false the seconds
// column is written as 0 so that repeated runs are byte-identical.
std::string trace_to_csv(const OptimizationTrace& trace, bool include_timings);
std::string trace_to_json(const OptimizationTrace& trace, bool include_timings);

}  // namespace branchopt

#endif
