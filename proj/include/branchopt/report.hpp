#ifndef BRANCHOPT_REPORT_HPP
#define BRANCHOPT_REPORT_HPP

#include <string>
#include <vector>

#include "branchopt/optimizer.hpp"

namespace branchopt {

// Scaling constant C = min(F) L^(-1/3) eps^(-2/3).
double constant_C(double minF, double L, double eps);

// Diamond fitted to a needle: tip, extrapolated closing point of the
// stripe-(b+1) segments of its bounding interfaces, and maximal y-extent.
struct NeedleShape {
  int birth_level = 0;
  bool central = false;
  double x_tip = 0;
  double x_close = 0;    // 0 when the bounding interfaces never converge
  double y_extent = 0;   // unit-cell units (before 1/N rescaling)
  double aspect(double N) const { return N * (x_tip - x_close) / y_extent; }
};

// All needles closed before the last level, sorted by y-extent (descending).
std::vector<NeedleShape> needle_shapes(const Topology& top, const GeometrySpec& spec,
                                       const DofVector& y);

// Width-to-height ratio of the rank-th largest needle (rank 1 = largest).
double needle_aspect(const Topology& top, const GeometrySpec& spec, const DofVector& y, int rank);

struct Window {
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
};

// Two-color vector image of the reflected cell: region polygons filled by
// the sign of u_y, interfaces drawn as black segments. Deterministic output.
std::string render_svg(const Topology& top, const GeometrySpec& spec, const DofVector& y,
                       const Window& window);

// Number of region polygons that render_svg would emit for this window.
int render_polygon_count(const Topology& top, const GeometrySpec& spec, const DofVector& y,
                         const Window& window);

struct SweepPoint {
  double epsilon = 0;
  double minF = 0;
  double N_star = 0;
  double theta = 0;
  double l = 0;
  double C = 0;
  bool converged = false;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  double p_F = 0;  // d log minF / d log eps
  double p_N = 0;  // d log N* / d log eps
  bool valid = false;
};

// Runs a continuation per epsilon and fits log-log slopes.
SweepResult scaling_sweep(SchemeName scheme, const OptimizerConfig& cfg,
                          const std::vector<double>& eps_list, double L);

// Least-squares slope of y against x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y);

struct SchemeResult {
  SchemeName scheme = SchemeName::NEW;
  bool ok = false;
  std::string error;
  int best_K = 0;
  EnergyBreakdown energy;
  double theta = 0, l = 0, N = 0;
  double C = 0;
  bool degenerate = false;
  int degenerate_K = 0;  // 0 if the run never degenerated
  std::vector<double> aspects;  // rank 1, 2
  OptimizationTrace trace;
  GeometrySpec spec;
  DofVector Y;
};

struct ComparisonReport {
  double epsilon = 0;
  double L = 0;
  std::string n_mode;
  double reference_C = 6.86;  // classical branching construction
  std::vector<SchemeResult> rows;

  // Relative energy gap (F_a - F_b) / F_b between two finished schemes.
  double relative_gap(SchemeName a, SchemeName b) const;
};

ComparisonReport compare(const std::vector<SchemeName>& schemes, const OptimizerConfig& cfg,
                         double epsilon, double L);

std::string comparison_to_csv(const ComparisonReport& rep);
std::string comparison_to_json(const ComparisonReport& rep, bool include_timings);
std::string sweep_to_csv(const SweepResult& sweep);

}  // namespace branchopt

#endif
