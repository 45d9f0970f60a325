#include "branchopt/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <stdexcept>

#include <json.hpp>

namespace branchopt {

void OptimizerConfig::check() const {
  if (K_start < 1) throw std::invalid_argument("OptimizerConfig: K_start must be >= 1");
  if (K_max < K_start) throw std::invalid_argument("OptimizerConfig: K_max must be >= K_start");
  if (!(g_tol > 0) || !(x_tol > 0) || !(delta_geom > 0))
    throw std::invalid_argument("OptimizerConfig: tolerances must be positive");
  if (max_iters < 1) throw std::invalid_argument("OptimizerConfig: max_iters must be >= 1");
  if (n_mode == NMode::Fixed && !(N_fixed >= 1))
    throw std::invalid_argument("OptimizerConfig: fixed N must be >= 1");
}

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }
double logit(double s) { return std::log(s / (1.0 - s)); }

// Smooth box reparameterizations keeping theta and l strictly inside their
// admissible ranges; N is log-parameterized.
struct ParamMap {
  double th_lo, th_hi;
  double l_lo, l_hi;
  bool free_N;

  double theta(double z) const { return th_lo + (th_hi - th_lo) * logistic(z); }
  double dtheta(double z) const {
    const double s = logistic(z);
    return (th_hi - th_lo) * s * (1.0 - s);
  }
  double z_theta(double th) const { return logit((th - th_lo) / (th_hi - th_lo)); }

  double l(double z) const { return l_lo + (l_hi - l_lo) * logistic(z); }
  double dl(double z) const {
    const double s = logistic(z);
    return (l_hi - l_lo) * s * (1.0 - s);
  }
  double z_l(double lv) const { return logit((lv - l_lo) / (l_hi - l_lo)); }

  double N(double z) const { return std::exp(z); }
  double dN(double z) const { return std::exp(z); }
  double z_N(double Nv) const { return std::log(Nv); }
};

struct Problem {
  const Topology* top;
  const Layout* lay;
  EnergyModel* model;
  ParamMap map;
  double N_fixed;
  int n_dofs;
  int dim;  // n_dofs + 2 (+1 if free N)

  std::vector<double> state;     // materialized node values
  std::vector<double> node_adj;  // scratch

  void unpack(const std::vector<double>& z, double& th, double& lv, double& Nv) {
    for (int d = 0; d < n_dofs; ++d) state[lay->dof_nodes[d]] = z[d];
    lay->materialize(state);
    th = map.theta(z[n_dofs]);
    lv = map.l(z[n_dofs + 1]);
    Nv = map.free_N ? map.N(z[n_dofs + 2]) : N_fixed;
  }

  EnergyBreakdown eval(const std::vector<double>& z) {
    double th, lv, Nv;
    unpack(z, th, lv, Nv);
    return model->value(state, th, lv, Nv);
  }

  EnergyBreakdown eval_grad(const std::vector<double>& z, std::vector<double>& g) {
    double th, lv, Nv;
    unpack(z, th, lv, Nv);
    double dth = 0, dl = 0, dN = 0;
    const EnergyBreakdown br = model->value_and_grad(state, th, lv, Nv, node_adj, dth, dl, dN);
    g.assign(dim, 0.0);
    for (int d = 0; d < n_dofs; ++d) g[d] = node_adj[lay->dof_nodes[d]];
    g[n_dofs] = dth * map.dtheta(z[n_dofs]);
    g[n_dofs + 1] = dl * map.dl(z[n_dofs + 1]);
    if (map.free_N) g[n_dofs + 2] = dN * map.dN(z[n_dofs + 2]);
    return br;
  }
};

// Node-value deltas induced by a DOF-space direction (pinned tips follow
// their anchors; fixed nodes stay put).
void node_deltas(const Layout& lay, const std::vector<double>& dz, std::vector<double>& dstate) {
  dstate.assign(lay.n_nodes(), 0.0);
  for (int d = 0; d < lay.n_dofs; ++d) dstate[lay.dof_nodes[d]] = dz[d];
  for (int i = 0; i < lay.n_nodes(); ++i) {
    if (lay.kind[i] == NodeKind::TipPin) {
      const std::int32_t a = lay.anchor_of_node[i];
      dstate[i] = lay.dof_of_node[a] >= 0 ? dstate[a] : 0.0;
    }
  }
}

struct GapLimit {
  double t_max = 1.0;
  int level = -1, index = -1;  // tightest constraint
};

GapLimit feasible_step_limit(const Layout& lay, const std::vector<double>& state,
                             const std::vector<double>& dstate, double delta) {
  GapLimit lim;
  for (int k = 0; k <= lay.K; ++k) {
    for (int i = lay.line_begin[k] + 1; i < lay.line_begin[k + 1]; ++i) {
      if (lay.kind[i - 1] == NodeKind::AnchorMid && lay.kind[i] == NodeKind::TipMid) continue;
      const double gap = state[i - 1] - state[i];
      const double dgap = dstate[i - 1] - dstate[i];
      if (dgap < 0) {
        const double t = (gap - delta) / (-dgap);
        if (t < lim.t_max) {
          lim.t_max = t < 0 ? 0 : t;
          lim.level = k;
          lim.index = i - lay.line_begin[k] - 1;
        }
      }
    }
  }
  return lim;
}

// Tracks gaps that sit at their bound while the gradient pushes inward.
struct DegeneracyMonitor {
  int streak = 0;
  int level = -1, index = -1;
  double gap = 0;

  bool update(const Layout& lay, const std::vector<double>& state,
              const std::vector<double>& desc, double delta) {
    // desc: node deltas of the pure descent direction.
    bool active = false;
    for (int k = 0; k <= lay.K && !active; ++k) {
      for (int i = lay.line_begin[k] + 1; i < lay.line_begin[k + 1]; ++i) {
        if (lay.kind[i - 1] == NodeKind::AnchorMid && lay.kind[i] == NodeKind::TipMid) continue;
        const double g = state[i - 1] - state[i];
        const double dg = desc[i - 1] - desc[i];
        if (g <= 4.0 * delta && dg < 0) {
          active = true;
          level = k;
          index = i - lay.line_begin[k] - 1;
          gap = g;
          break;
        }
      }
    }
    streak = active ? streak + 1 : 0;
    return active;
  }
};

}  // namespace

double max_feasible_step(const Layout& lay, const std::vector<double>& state,
                         const std::vector<double>& dstate, double delta) {
  return feasible_step_limit(lay, state, dstate, delta).t_max;
}

std::vector<double> constrained_step(const Layout& lay, const std::vector<double>& state,
                                     const std::vector<double>& dof_step, double delta) {
  if (static_cast<int>(dof_step.size()) != lay.n_dofs)
    throw std::invalid_argument("constrained_step: wrong step dimension");
  std::vector<double> dstate;
  node_deltas(lay, dof_step, dstate);
  const double t = feasible_step_limit(lay, state, dstate, delta).t_max;
  std::vector<double> out = state;
  for (int i = 0; i < lay.n_nodes(); ++i) out[i] += t * dstate[i];
  lay.materialize(out);
  return out;
}

// ---------------------------------------------------------------------------
// L-BFGS with feasibility truncation

LevelResult optimize_level(const Topology& top, const GeometrySpec& spec0, const DofVector& Y0,
                           const OptimizerConfig& cfg) {
  cfg.check();
  GeometrySpec spec = spec0;
  spec.delta_geom = cfg.delta_geom;
  spec.free_facet_tips = cfg.free_facet_tips;
  if (auto bad = validate(top, spec, Y0))
    throw std::invalid_argument("optimize_level: infeasible start (" + bad->what + ")");

  const Scheme& sch = scheme(spec.scheme);
  const Layout lay = build_layout(top, cfg.free_facet_tips);
  EnergyModel model(top, lay, spec);

  Problem prob;
  prob.top = &top;
  prob.lay = &lay;
  prob.model = &model;
  prob.map.th_lo = sch.theta_min + cfg.theta_margin;
  prob.map.th_hi = sch.theta_max - cfg.theta_margin;
  prob.map.l_lo = 1e-3 * spec.L;
  prob.map.l_hi = (1.0 - 1e-6) * spec.L;
  prob.map.free_N = cfg.n_mode == OptimizerConfig::NMode::Free;
  prob.N_fixed = cfg.N_fixed;
  prob.n_dofs = lay.n_dofs;
  prob.dim = lay.n_dofs + 2 + (prob.map.free_N ? 1 : 0);
  prob.state = lay.state_from(Y0);

  std::vector<double> z(prob.dim, 0.0);
  for (int d = 0; d < lay.n_dofs; ++d) z[d] = prob.state[lay.dof_nodes[d]];
  z[lay.n_dofs] = prob.map.z_theta(std::clamp(spec.theta, prob.map.th_lo + 1e-12,
                                              prob.map.th_hi - 1e-12));
  z[lay.n_dofs + 1] = prob.map.z_l(std::clamp(spec.l, prob.map.l_lo + 1e-15, prob.map.l_hi - 1e-15));
  if (prob.map.free_N) z[lay.n_dofs + 2] = prob.map.z_N(spec.N);

  std::vector<double> g;
  EnergyBreakdown br = prob.eval_grad(z, g);
  double f = br.total;
  double g0_norm = 0;
  for (double v : g) g0_norm += v * v;
  g0_norm = std::sqrt(g0_norm);
  const double g_stop = cfg.g_tol * std::max(g0_norm, 1.0);

  const int mem = cfg.lbfgs_memory;
  std::deque<std::vector<double>> S, Yv;
  std::deque<double> rho_lb;
  std::vector<double> d(prob.dim), dstate, desc_state;
  std::vector<double> z_new(prob.dim), g_new;
  DegeneracyMonitor monitor;
  int no_progress = 0;

  LevelResult res;
  res.status = LevelStatus::IterationLimit;

  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    double gnorm = 0;
    for (double v : g) gnorm += v * v;
    gnorm = std::sqrt(gnorm);
    if (gnorm <= g_stop) {
      res.status = LevelStatus::Converged;
      break;
    }

    // Degeneracy check on the pure descent direction.
    {
      std::vector<double> neg(lay.n_dofs);
      for (int i = 0; i < lay.n_dofs; ++i) neg[i] = -g[i];
      node_deltas(lay, neg, desc_state);
      monitor.update(lay, prob.state, desc_state, cfg.delta_geom);
      if (monitor.streak >= cfg.stall_limit) {
        res.status = LevelStatus::Degenerate;
        res.degeneracy = DegeneracyReport{monitor.level, monitor.index, monitor.gap,
                                          "ordinate gap pinned at its bound"};
        break;
      }
    }

    // Two-loop recursion.
    d.assign(g.begin(), g.end());
    std::vector<double> alpha(S.size());
    for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
      double sd = 0;
      for (int j = 0; j < prob.dim; ++j) sd += S[i][j] * d[j];
      alpha[i] = rho_lb[i] * sd;
      for (int j = 0; j < prob.dim; ++j) d[j] -= alpha[i] * Yv[i][j];
    }
    if (!S.empty()) {
      double sy = 0, yy = 0;
      const auto& s_last = S.back();
      const auto& y_last = Yv.back();
      for (int j = 0; j < prob.dim; ++j) {
        sy += s_last[j] * y_last[j];
        yy += y_last[j] * y_last[j];
      }
      const double gamma = sy / yy;
      for (int j = 0; j < prob.dim; ++j) d[j] *= gamma;
    }
    for (int i = 0; i < static_cast<int>(S.size()); ++i) {
      double yd = 0;
      for (int j = 0; j < prob.dim; ++j) yd += Yv[i][j] * d[j];
      const double beta = rho_lb[i] * yd;
      for (int j = 0; j < prob.dim; ++j) d[j] += (alpha[i] - beta) * S[i][j];
    }
    for (int j = 0; j < prob.dim; ++j) d[j] = -d[j];

    double gd = 0;
    for (int j = 0; j < prob.dim; ++j) gd += g[j] * d[j];
    if (!(gd < 0)) {  // not a descent direction: restart with steepest descent
      for (int j = 0; j < prob.dim; ++j) d[j] = -g[j];
      gd = -gnorm * gnorm;
      S.clear();
      Yv.clear();
      rho_lb.clear();
    }

    // Feasibility truncation on the ordinate chain.
    node_deltas(lay, std::vector<double>(d.begin(), d.begin() + lay.n_dofs), dstate);
    const GapLimit lim = feasible_step_limit(lay, prob.state, dstate, cfg.delta_geom);
    double t = std::min(1.0, lim.t_max);
    if (t <= 0) {
      // Blocked at the boundary; steepest descent may slide along it.
      bool moved = false;
      for (int j = 0; j < prob.dim; ++j) d[j] = -g[j];
      node_deltas(lay, std::vector<double>(d.begin(), d.begin() + lay.n_dofs), dstate);
      const GapLimit lim2 = feasible_step_limit(lay, prob.state, dstate, cfg.delta_geom);
      t = std::min(1.0, lim2.t_max);
      gd = -gnorm * gnorm;
      if (t > 0) moved = true;
      if (!moved) {
        ++no_progress;
        if (no_progress > cfg.stall_limit) {
          res.status = LevelStatus::Converged;  // stationary at the boundary
          break;
        }
        continue;
      }
    }

    // Armijo backtracking.
    const double c1 = 1e-4;
    double f_new = f;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      for (int j = 0; j < prob.dim; ++j) z_new[j] = z[j] + t * d[j];
      f_new = prob.eval(z_new).total;
      if (f_new <= f + c1 * t * gd) {
        accepted = true;
        break;
      }
      t *= 0.5;
      if (t < 1e-20) break;
    }
    if (!accepted) {
      ++no_progress;
      if (no_progress > 30) {
        res.status = LevelStatus::Converged;  // no further progress possible
        break;
      }
      continue;
    }

    const EnergyBreakdown br_new = prob.eval_grad(z_new, g_new);
    // L-BFGS update.
    std::vector<double> s(prob.dim), yv(prob.dim);
    double sy = 0;
    for (int j = 0; j < prob.dim; ++j) {
      s[j] = z_new[j] - z[j];
      yv[j] = g_new[j] - g[j];
      sy += s[j] * yv[j];
    }
    if (sy > 1e-18) {
      S.push_back(std::move(s));
      Yv.push_back(std::move(yv));
      rho_lb.push_back(1.0 / sy);
      if (static_cast<int>(S.size()) > mem) {
        S.pop_front();
        Yv.pop_front();
        rho_lb.pop_front();
      }
    }

    const double decrease = f - f_new;
    z.swap(z_new);
    g.swap(g_new);
    br = br_new;
    if (decrease <= cfg.x_tol * (std::abs(f) + 1e-30)) {
      if (++no_progress > 30) {
        f = f_new;
        res.status = LevelStatus::Converged;
        ++iter;
        break;
      }
    } else {
      no_progress = 0;
    }
    f = f_new;
  }
  if (iter >= cfg.max_iters) res.status = LevelStatus::IterationLimit;

  double th, lv, Nv;
  prob.unpack(z, th, lv, Nv);
  res.spec = spec;
  res.spec.theta = th;
  res.spec.l = lv;
  res.spec.N = Nv;
  res.Y = lay.dofvector_from(prob.state);
  res.energy = br;
  res.iters = iter;
  return res;
}

// ---------------------------------------------------------------------------
// Level continuation

OptimizationTrace continuation(SchemeName scheme_name, const OptimizerConfig& cfg, double epsilon,
                               double L) {
  cfg.check();
  const Scheme& sch = scheme(scheme_name);

  OptimizationTrace trace;
  trace.scheme = scheme_name;
  trace.epsilon = epsilon;
  trace.L = L;
  trace.cfg = cfg;

  GeometrySpec spec;
  spec.scheme = scheme_name;
  spec.K = cfg.K_start;
  spec.theta = std::sqrt(sch.theta_min * sch.theta_max);
  spec.l = 0.5 * L;
  spec.L = L;
  spec.N = cfg.n_mode == OptimizerConfig::NMode::Fixed ? cfg.N_fixed : 2.0;
  spec.epsilon = epsilon;
  spec.delta_geom = cfg.delta_geom;
  spec.free_facet_tips = cfg.free_facet_tips;

  Topology top = build_topology(sch, cfg.K_start);
  DofVector Y = initial_geometry(top, spec);

  if (cfg.n_mode == OptimizerConfig::NMode::Free) {
    // Two-term warm start for N.
    const EnergyBreakdown br = total_energy(top, spec, Y);
    if (br.c_elast > 0 && br.c_surf > 0)
      spec.N = std::max(1.0, optimal_N(br.c_elast, br.c_surf, spec.epsilon, spec.l));
  }

  for (int K = cfg.K_start; K <= cfg.K_max; ++K) {
    const auto t0 = std::chrono::steady_clock::now();
    LevelResult res;
    try {
      res = optimize_level(top, spec, Y, cfg);
    } catch (const std::exception& e) {
      LevelRecord rec;
      rec.K = K;
      rec.status = std::string("error: ") + e.what();
      rec.degenerate = true;
      trace.levels.push_back(rec);
      trace.degenerate = true;
      trace.converged = false;
      break;
    }
    const auto t1 = std::chrono::steady_clock::now();

    LevelRecord rec;
    rec.K = K;
    rec.energy = res.energy;
    rec.theta = res.spec.theta;
    rec.l = res.spec.l;
    rec.N = res.spec.N;
    rec.iters = res.iters;
    rec.seconds = std::chrono::duration<double>(t1 - t0).count();
    rec.degenerate = res.status == LevelStatus::Degenerate;
    rec.status = res.status == LevelStatus::Converged
                     ? "ok"
                     : (res.status == LevelStatus::Degenerate ? "degenerate" : "iteration-limit");
    trace.levels.push_back(rec);

    if (res.status == LevelStatus::Degenerate) {
      trace.degenerate = true;
      break;
    }
    if (res.status == LevelStatus::IterationLimit) trace.converged = false;

    spec = res.spec;
    Y = res.Y;
    trace.final_spec = spec;
    trace.final_Y = Y;

    if (K == cfg.K_max) break;
    try {
      grow_topology(top, sch);
      Y = extend_level(top, spec, Y);
      spec.K = K + 1;
    } catch (const std::exception& e) {
      LevelRecord rec2;
      rec2.K = K + 1;
      rec2.status = std::string("degenerate extension: ") + e.what();
      rec2.degenerate = true;
      trace.levels.push_back(rec2);
      trace.degenerate = true;
      break;
    }
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Trace serialization

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

std::string trace_to_csv(const OptimizationTrace& trace, bool include_timings) {
  std::string out = "K,F_total,F_elast,F_surf,F_bdry,theta,l,N,iters,degenerate,seconds\n";
  for (const LevelRecord& r : trace.levels) {
    out += std::to_string(r.K) + ',' + fmt(r.energy.total) + ',' + fmt(r.energy.elastic) + ',' +
           fmt(r.energy.surface) + ',' + fmt(r.energy.boundary) + ',' + fmt(r.theta) + ',' +
           fmt(r.l) + ',' + fmt(r.N) + ',' + std::to_string(r.iters) + ',' +
           (r.degenerate ? "1" : "0") + ',' + fmt(include_timings ? r.seconds : 0.0) + '\n';
  }
  return out;
}

std::string trace_to_json(const OptimizationTrace& trace, bool include_timings) {
  nlohmann::ordered_json j;
  j["schema"] = "branchopt-trace-1";
  j["scheme"] = scheme_string(trace.scheme);
  j["epsilon"] = trace.epsilon;
  j["L"] = trace.L;
  j["N_mode"] = trace.cfg.n_mode == OptimizerConfig::NMode::Fixed
                    ? "fixed:" + fmt(trace.cfg.N_fixed)
                    : std::string("free");
  j["K_start"] = trace.cfg.K_start;
  j["K_max"] = trace.cfg.K_max;
  j["seed"] = trace.cfg.seed;
  j["degenerate"] = trace.degenerate;
  j["converged"] = trace.converged;
  nlohmann::ordered_json levels = nlohmann::ordered_json::array();
  for (const LevelRecord& r : trace.levels) {
    nlohmann::ordered_json rec;
    rec["K"] = r.K;
    rec["F_total"] = r.energy.total;
    rec["F_elast"] = r.energy.elastic;
    rec["F_surf"] = r.energy.surface;
    rec["F_bdry"] = r.energy.boundary;
    rec["F_bdry_rem"] = r.energy.boundary_rem;
    rec["F_bdry_trace"] = r.energy.boundary_trace;
    rec["F_bdry_tail"] = r.energy.boundary_tail;
    rec["c_elast"] = r.energy.c_elast;
    rec["c_surf"] = r.energy.c_surf;
    rec["c_rem_effective"] = r.energy.c_rem_effective;
    rec["theta"] = r.theta;
    rec["l"] = r.l;
    rec["N"] = r.N;
    rec["iters"] = r.iters;
    rec["degenerate"] = r.degenerate;
    rec["status"] = r.status;
    rec["seconds"] = include_timings ? r.seconds : 0.0;
    levels.push_back(std::move(rec));
  }
  j["levels"] = std::move(levels);
  return j.dump(2);
}

}  // namespace branchopt
