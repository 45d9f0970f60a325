#ifndef BRANCHOPT_ENERGY_HPP
#define BRANCHOPT_ENERGY_HPP

#include <cstdint>
#include <vector>

#include "branchopt/automaton.hpp"
#include "branchopt/geometry.hpp"

namespace branchopt {

struct EnergyBreakdown {
  double elastic = 0;
  double surface = 0;
  double boundary = 0;
  double total = 0;
  double c_elast = 0;  // elastic * l * N^2
  double c_surf = 0;   // (surface - 4 eps N (L - l)) / (eps l N)
  // Boundary components: remaining elastic energy of the continued pattern,
  // trace fade-out term, and the surface tail beyond level K.
  double boundary_rem = 0;
  double boundary_trace = 0;
  double boundary_tail = 0;
  double c_rem_effective = 0;  // boundary_rem * theta^K * l * N^2
};

struct EnergyGradient {
  DofVector dY;  // pinned entries report 0; their effect is folded into anchors
  double dtheta = 0;
  double dl = 0;
  double dN = 0;
};

// Fills u_x across one stripe ordered from the midline outward. Region 0
// carries u_x = 0; crossing the upper edge of region i+1 adds
// 2 sign(u_y|i) (edge drop) / width.
void ux_fill(std::vector<Region>& stripe, double width);

// 4 N^-2 sum over regions of u_x^2 |R| (zero above x = l).
double elastic_energy(const Topology& top, const GeometrySpec& spec, const DofVector& y);

// 2 eps N (1-theta) l sum_{k<=K} theta^(k-1) I_k + 4 eps N (L-l).
double surface_energy(const GeometrySpec& spec);

// Closed-form limit of 2 eps N (1-theta) l sum_{k>K} theta^(k-1) I_k.
// Throws if theta >= 1/growth_base (divergent series).
double surface_tail(const GeometrySpec& spec);

// Boundary-layer estimate: continued-pattern elastic energy (geometric
// closure), trace fade-out |u(x_K,.)|^2 / (theta^K l), and the surface tail.
double boundary_energy(const Topology& top, const GeometrySpec& spec, const DofVector& y);

EnergyBreakdown total_energy(const Topology& top, const GeometrySpec& spec, const DofVector& y);

// Analytic gradient of the total energy over (theta, l, N, Y).
EnergyGradient gradient(const Topology& top, const GeometrySpec& spec, const DofVector& y);

// Minimizer of the two-term model c_elast l^-1 N^-2 + c_surf eps l N.
double optimal_N(double c_elast, double c_surf, double epsilon, double l);

// Interfacial-energy conversion from the diffuse model: (2 sqrt(2 sigma)/3) eps_tilde.
double epsilon_from_diffuse(double eps_tilde, double sigma);

// ---------------------------------------------------------------------------
// Fast evaluator used by the optimizer: persistent buffers, one layout, and
// the virtual continuation for the boundary term built once per level.
class EnergyModel {
 public:
  // Continuation defaults: up to 8 extra levels, capped so no continued
  // level exceeds 1e7 interfaces per periodic cell.
  static constexpr int kMaxExtraLevels = 8;
  static constexpr std::int64_t kInterfaceCap = 10'000'000;

  EnergyModel(const Topology& top, const Layout& lay, const GeometrySpec& base);

  const Layout& layout() const { return *lay_; }
  int extra_levels() const { return M_; }

  // state: materialized node values (layout().n_nodes()).
  EnergyBreakdown value(const std::vector<double>& state, double theta, double l, double N);
  // Also accumulates d/d(node) into node_adj (resized and zeroed inside; the
  // effect of pinned tips is folded into their anchor entries).
  EnergyBreakdown value_and_grad(const std::vector<double>& state, double theta, double l,
                                 double N, std::vector<double>& node_adj, double& dtheta,
                                 double& dl, double& dN);

 private:
  struct VNode {
    std::uint8_t kind;  // VKind
    std::int32_t a = 0, b = 0;
  };
  struct RhoSample {
    std::int32_t tip, u_lo, u_hi;  // u_hi = -1 for central spikes
    std::int32_t lo, hi;            // parent slot bounds (ref-encoded)
  };

  const Topology* top_;
  const Layout* lay_;
  GeometrySpec base_;
  Topology ext_;  // topology continued by M_ extra levels
  int M_ = 0;

  std::vector<VNode> vnodes_;
  std::vector<std::int32_t> vstripe_begin_;  // per extra level m = 1..M: ranges
  std::vector<std::int32_t> vifL_, vifR_;
  std::vector<std::int8_t> vsigma0_;
  std::vector<RhoSample> rho_samples_;

  // scratch
  std::vector<double> vvals_, vadj_;
  std::vector<double> term_scratch_;
  std::vector<double> tb_, tU_, tbbar_, tUbar_;  // trace-term sweeps
  std::vector<double> stripe_e_;   // real stripes
  std::vector<double> ve_;         // virtual stripes
  std::vector<std::vector<double>> u_saved_;   // per real stripe
  std::vector<std::vector<double>> vu_saved_;  // per virtual stripe

  void build_continuation();
  double resolve(std::int32_t ref, const std::vector<double>& state) const;
  double rho(const std::vector<double>& state) const;

  EnergyBreakdown eval(const std::vector<double>& state, double theta, double l, double N,
                       bool with_grad, std::vector<double>* node_adj, double* dtheta, double* dl,
                       double* dN);
};

}  // namespace branchopt

#endif
