#ifndef BRANCHOPT_GEOMETRY_HPP
#define BRANCHOPT_GEOMETRY_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "branchopt/automaton.hpp"

namespace branchopt {

// Parameters of the computational domain [theta^K l, l] x [1/4, 1/2].
// Ordinates are stored in unit-cell coordinates; the 1/N rescaling is applied
// analytically inside the energy formulas, never to stored data.
struct GeometrySpec {
  SchemeName scheme = SchemeName::NEW;
  int K = 4;
  double theta = 0.27;
  double l = 0.25;
  double L = 0.5;
  double N = 2.0;
  double epsilon = 0.013;
  bool free_facet_tips = true;
  double delta_geom = 1e-9;  // strict-ordering margin for validation

  double x(int k) const;  // level line x_k = theta^k * l
  double stripe_width(int k) const { return x(k - 1) - x(k); }
  void check() const;  // throws std::invalid_argument on bad parameters
};

// Interface ordinates per level line k = 0..K, ordered from the midline
// downward (strictly decreasing). Includes spike tip ordinates; excludes the
// fixed midline (1/2) and the straight boundary interface (1/4).
struct DofVector {
  std::vector<std::vector<double>> lines;
  bool operator==(const DofVector&) const = default;
};

struct DegeneracyReport {
  int level = 0;   // level line k
  int index = 0;   // node position on that line (0 = just below the midline)
  double gap = 0;  // offending gap value
  std::string what;
};

// One constant-slope trapezoid between two level lines.
struct Region {
  int level = 0;  // stripe k
  int index = 0;  // 0 = adjacent to the midline
  int uy_sign = 0;
  double ux = 0;
  double area = 0;
  double upper_edge_right = 0;  // ordinate on line x_{k-1}
  double upper_edge_left = 0;   // ordinate on line x_k
};

enum class NodeKind : std::uint8_t {
  AnchorMid,  // the midline, fixed at 1/2
  AnchorBot,  // the straight boundary interface, fixed at 1/4
  Cross,      // interface crossing a level line (free)
  TipFree,    // facet-born spike tip (free unless free_facet_tips == false)
  TipMid,     // central-chain spike tip, fixed at 1/2
  TipPin,     // nested spike tip, equal to its chain origin's tip
};

// Static node graph tying a topology to the ordinate storage: one node per
// interface crossing or spike tip per level line, plus the two anchors.
// Shared by validation, energy assembly and the optimizer.
struct Layout {
  const Topology* top = nullptr;
  int K = 0;
  bool free_facet_tips = true;

  std::vector<std::int32_t> line_begin;  // size K+2
  std::vector<NodeKind> kind;
  std::vector<std::int32_t> dof_of_node;    // -1 if fixed; pinned share the anchor dof
  std::vector<std::int32_t> anchor_of_node; // TipPin: node id of the chain origin
  std::vector<std::int32_t> dof_nodes;      // dof -> defining node
  std::int32_t n_dofs = 0;

  // Stripe k = 1..K: pseudo-interfaces i = 0..m_k+1 (0 = midline pair,
  // m_k+1 = boundary pair); ifL on line k, ifR on line k-1.
  std::vector<std::int32_t> stripe_begin;  // size K+2
  std::vector<std::int32_t> ifL, ifR;
  std::vector<std::int8_t> sigma0;  // sign of the region touching the midline, per stripe

  std::vector<std::int32_t> tip_node_of_needle;  // -1 where the tip is not a stored node

  int n_nodes() const { return static_cast<int>(kind.size()); }
  int line_size(int k) const { return line_begin[k + 1] - line_begin[k]; }
  int m(int k) const { return stripe_begin[k + 1] - stripe_begin[k] - 2; }
  int sigma(int k, int region_index) const {
    return (region_index % 2 == 0) ? sigma0[k] : -sigma0[k];
  }

  // Writes fixed values and resolves pinned tips from their anchors.
  void materialize(std::vector<double>& values) const;
  std::vector<double> state_from(const DofVector& y) const;
  DofVector dofvector_from(const std::vector<double>& values) const;
};

Layout build_layout(const Topology& top, bool free_facet_tips);

// Feasible starting geometry: genealogical subdivision with centered tips;
// on level 1 this splits [1/4, 1/2] evenly.
DofVector initial_geometry(const Topology& top, const GeometrySpec& spec);

// Checks strict ordering (margin spec.delta_geom), the [1/4, 1/2] range and
// tip pinning. Empty result means the geometry is feasible.
std::optional<DegeneracyReport> validate(const Topology& top, const GeometrySpec& spec,
                                         const DofVector& y);

// Constant-slope regions per stripe with u_x filled by the midline recursion.
std::vector<std::vector<Region>> regions(const Topology& top, const GeometrySpec& spec,
                                         const DofVector& y);

// Warm start for level K+1 from a level-K solution: old ordinates are kept,
// continuing interfaces extrapolate their last offset scaled by theta, and
// new spikes are placed self-similarly using the contraction observed on the
// finest level. `top` must already contain level K+1.
DofVector extend_level(const Topology& top, const GeometrySpec& spec, const DofVector& y_K);

// Piecewise-linear trace u(x, .) on the unit periodic cell [0, 1].
struct TraceProfile {
  std::vector<double> breakpoints;  // ascending, first 0, last 1
  std::vector<double> values;       // unit-cell u at the breakpoints
  double N = 1;

  double eval(double y) const;     // 1/N-rescaled periodized profile
  double norm_sq() const;          // L2(0,1)^2 of the rescaled profile
};

TraceProfile trace_profile(const Topology& top, const GeometrySpec& spec, const DofVector& y,
                           double x);

// Plain JSON serialization of level lines, interface polylines and region
// signs (consumed by the renderer and the CLI).
std::string geometry_to_json(const Topology& top, const GeometrySpec& spec, const DofVector& y);
void geometry_from_json(const std::string& text, GeometrySpec& spec, DofVector& y);

}  // namespace branchopt

#endif
