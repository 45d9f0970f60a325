#include "branchopt/energy.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

#include "branchopt/util.hpp"

namespace branchopt {

namespace {

constexpr double kMid = 0.5;
constexpr double kBot = 0.25;

enum VKind : std::uint8_t {
  kVTipMid = 0,
  kVTipPin = 1,
  kVTipFree = 2,
  kVCrossCont = 3,
  kVCrossNewUp = 4,
  kVCrossNewLo = 5,
};

// Ref encoding: >= 0 virtual node id; -1 midline; -2 boundary; <= -3 real
// node id r encoded as -3 - r.
inline std::int32_t enc_real(std::int32_t node) { return -3 - node; }

struct ChildRanges {
  std::vector<std::int32_t> first, last;
};

ChildRanges child_ranges(const Topology& top, int k) {
  ChildRanges r;
  const auto& par = top.parent[k];
  const int np = top.central(k - 1) + 1;
  r.first.assign(np, -1);
  r.last.assign(np, -1);
  for (std::int32_t j = 0; j < static_cast<std::int32_t>(par.size()); ++j) {
    if (r.first[par[j]] < 0) r.first[par[j]] = j;
    r.last[par[j]] = j;
  }
  return r;
}

double stripe_width(double theta, double l, int k) {
  return (std::pow(theta, k - 1) - std::pow(theta, k)) * l;
}

double dwidth_dtheta(double theta, double l, int k) {
  const double a = k >= 2 ? (k - 1) * std::pow(theta, k - 2) : (k == 1 ? 0.0 : 0.0);
  return l * (a - k * std::pow(theta, k - 1));
}

// One term A (c theta)^K / (1 - c theta) of a geometric tail, with its
// theta-derivative.
struct TailTerm {
  double v, dth;
};

TailTerm tail_term(double A, double c, double theta, int K) {
  const double ct = c * theta;
  const double p = std::pow(ct, K);
  const double den = 1.0 - ct;
  TailTerm t;
  t.v = A * p / den;
  t.dth = A * c * std::pow(ct, K - 1) * (K * den + ct) / (den * den);
  return t;
}

struct ClosedForm {
  double v = 0, dth = 0, dl = 0, dN = 0;
};

ClosedForm surface_branching_form(const Scheme& sch, int K, double eps, double theta, double l,
                                  double N) {
  double s0 = 0, s1 = 0;
  double pk = 1.0;  // theta^(k-1)
  for (int k = 1; k <= K; ++k) {
    const double ik = static_cast<double>(closed_interface_count(sch, k));
    s0 += pk * ik;
    if (k >= 2) s1 += (k - 1) * (pk / theta) * ik;
    pk *= theta;
  }
  ClosedForm f;
  f.v = 2 * eps * N * (1 - theta) * l * s0;
  f.dth = 2 * eps * N * l * (-s0 + (1 - theta) * s1);
  f.dl = 2 * eps * N * (1 - theta) * s0;
  f.dN = f.v / N;
  return f;
}

ClosedForm surface_tail_form(const Scheme& sch, int K, double eps, double theta, double l,
                             double N) {
  if (!(theta * sch.growth_base < 1.0))
    throw std::domain_error("surface_tail: series diverges (theta >= 1/growth_base)");
  TailTerm g{0, 0};
  switch (sch.name) {
    case SchemeName::NEW: {
      const double alpha = sch.growth_base;
      const double beta = 1.0 - (alpha - 1.0);  // 1 - sqrt(2)
      const TailTerm a = tail_term(alpha * alpha, alpha, theta, K);
      const TailTerm b = tail_term(beta * beta, beta, theta, K);
      g.v = a.v + b.v;
      g.dth = a.dth + b.dth;
      break;
    }
    case SchemeName::KM: {
      const TailTerm a = tail_term(8.0, 2.0, theta, K);
      const TailTerm b = tail_term(-2.0, 1.0, theta, K);
      g.v = a.v + b.v;
      g.dth = a.dth + b.dth;
      break;
    }
    case SchemeName::L: {
      const TailTerm a = tail_term(6.0, 3.0, theta, K);
      g.v = a.v;
      g.dth = a.dth;
      break;
    }
  }
  ClosedForm f;
  const double pre = 2 * eps * N * l;
  f.v = pre * (1 - theta) * g.v;
  f.dth = pre * (-g.v + (1 - theta) * g.dth);
  f.dl = f.v / l;
  f.dN = f.v / N;
  return f;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public helpers

void ux_fill(std::vector<Region>& stripe, double width) {
  if (!(width > 0)) throw std::invalid_argument("ux_fill: zero stripe width");
  double ux = 0;
  for (std::size_t i = 0; i < stripe.size(); ++i) {
    if (i > 0) {
      const double drop = stripe[i].upper_edge_right - stripe[i].upper_edge_left;
      ux += 2.0 * stripe[i - 1].uy_sign * drop / width;
    }
    stripe[i].ux = ux;
  }
}

double epsilon_from_diffuse(double eps_tilde, double sigma) {
  if (!(eps_tilde > 0) || !(sigma > 0))
    throw std::invalid_argument("epsilon_from_diffuse: inputs must be positive");
  return 2.0 * std::sqrt(2.0 * sigma) / 3.0 * eps_tilde;
}

double optimal_N(double c_elast, double c_surf, double epsilon, double l) {
  if (!(c_elast > 0) || !(c_surf > 0) || !(epsilon > 0) || !(l > 0))
    throw std::invalid_argument("optimal_N: inputs must be positive");
  return std::cbrt(2.0 * c_elast / (c_surf * epsilon * l * l));
}

double surface_energy(const GeometrySpec& spec) {
  const Scheme& sch = scheme(spec.scheme);
  const ClosedForm f =
      surface_branching_form(sch, spec.K, spec.epsilon, spec.theta, spec.l, spec.N);
  return f.v + 4.0 * spec.epsilon * spec.N * (spec.L - spec.l);
}

double surface_tail(const GeometrySpec& spec) {
  const Scheme& sch = scheme(spec.scheme);
  return surface_tail_form(sch, spec.K, spec.epsilon, spec.theta, spec.l, spec.N).v;
}

// ---------------------------------------------------------------------------
// EnergyModel

EnergyModel::EnergyModel(const Topology& top, const Layout& lay, const GeometrySpec& base)
    : top_(&top), lay_(&lay), base_(base) {
  base_.check();
  if (top.K != base_.K || top.scheme_name != base_.scheme)
    throw std::invalid_argument("EnergyModel: topology/spec mismatch");
  build_continuation();
  u_saved_.resize(base_.K + 1);
  stripe_e_.assign(base_.K + 1, 0.0);
}

double EnergyModel::resolve(std::int32_t ref, const std::vector<double>& state) const {
  if (ref >= 0) return vvals_[ref];
  if (ref == -1) return kMid;
  if (ref == -2) return kBot;
  return state[-3 - ref];
}

void EnergyModel::build_continuation() {
  const Scheme& sch = scheme(base_.scheme);
  const int K = base_.K;
  ext_ = *top_;
  M_ = 0;
  for (int m = 1; m <= kMaxExtraLevels; ++m) {
    if (K + m > 40) break;
    if (closed_interface_count(sch, K + m) > kInterfaceCap) break;
    grow_topology(ext_, sch);
    M_ = m;
  }
  vu_saved_.resize(M_);
  ve_.assign(M_, 0.0);

  // Contraction samples on the last real stripe.
  {
    const auto& tags = top_->tags[K];
    const auto& par = top_->parent[K];
    const int c = top_->central(K);
    const ChildRanges cr = child_ranges(*top_, K);
    const std::int32_t base = lay_->stripe_begin[K];
    auto cross_ref = [&](int j) -> std::int32_t {
      if (j <= 0) return -2;
      if (j > c) return -1;
      return enc_real(lay_->ifL[base + (c + 1 - j)]);
    };
    for (std::int32_t s = 0; s <= c; ++s) {
      if (tags[s] != Tag::Spike) continue;
      RhoSample r;
      r.tip = enc_real(lay_->tip_node_of_needle[top_->needle_of[K][s]]);
      r.u_lo = cross_ref(s);
      r.u_hi = s < c ? cross_ref(s + 1) : -1000000;
      r.lo = cross_ref(cr.first[par[s]]);
      r.hi = cross_ref(cr.last[par[s]] + 1);
      rho_samples_.push_back(r);
    }
  }

  if (M_ == 0) return;

  // Rolling build of the virtual levels.
  const int cK = top_->central(K);
  std::vector<std::int32_t> crossL(cK + 1), vertR(cK + 1);
  {
    const std::int32_t base = lay_->stripe_begin[K];
    for (int i = 1; i <= cK; ++i) {
      crossL[i] = enc_real(lay_->ifL[base + (cK + 1 - i)]);
      vertR[i] = enc_real(lay_->ifR[base + (cK + 1 - i)]);
    }
  }
  std::vector<std::int32_t> tip_ref(ext_.needles.size(), INT32_MIN);
  for (std::size_t n = 0; n < top_->needles.size(); ++n)
    if (lay_->tip_node_of_needle[n] >= 0)
      tip_ref[n] = enc_real(lay_->tip_node_of_needle[n]);

  vstripe_begin_.assign(M_ + 1, 0);
  auto add_vnode = [&](std::uint8_t kind, std::int32_t a, std::int32_t b) -> std::int32_t {
    vnodes_.push_back(VNode{kind, a, b});
    return static_cast<std::int32_t>(vnodes_.size()) - 1;
  };

  int cprev = cK;
  for (int m = 1; m <= M_; ++m) {
    const int j = K + m;
    const auto& tags = ext_.tags[j];
    const auto& par = ext_.parent[j];
    const int c = ext_.central(j);
    const ChildRanges cr = child_ranges(ext_, j);
    auto prev_ref = [&](int i) -> std::int32_t {
      if (i <= 0) return -2;
      if (i > cprev) return -1;
      return crossL[i];
    };

    // Tips on line j-1.
    std::vector<std::int32_t> tip_of_spike(tags.size(), INT32_MIN);
    for (std::int32_t s = 0; s <= c; ++s) {
      if (tags[s] != Tag::Spike) continue;
      const std::int32_t needle = ext_.needle_of[j][s];
      const Needle& n = ext_.needles[needle];
      std::int32_t ref;
      if (n.root == -1) {
        ref = add_vnode(kVTipMid, 0, 0);
      } else if (n.root == -2) {
        ref = add_vnode(kVTipFree, prev_ref(par[s]), prev_ref(par[s] + 1));
      } else {
        ref = add_vnode(kVTipPin, tip_ref[n.root], 0);
      }
      tip_ref[needle] = ref;
      tip_of_spike[s] = ref;
    }

    // Crossings on line j.
    std::vector<std::int32_t> newCrossL(c + 1, INT32_MIN), newVertR(c + 1, INT32_MIN);
    for (int i = 1; i <= c; ++i) {
      if (par[i - 1] == par[i]) continue;
      const std::int32_t a = prev_ref(par[i]);
      const std::int32_t b = vertR[par[i]];
      newCrossL[i] = add_vnode(kVCrossCont, a, b);
      newVertR[i] = a;
    }
    auto new_ref = [&](int i) -> std::int32_t {
      if (i <= 0) return -2;
      if (i > c) return -1;
      return newCrossL[i];
    };
    for (int i = 1; i <= c; ++i) {
      if (par[i - 1] != par[i]) continue;
      const std::int32_t P = par[i];
      const bool spike_above = tags[i] == Tag::Spike;
      const std::int32_t sp = spike_above ? i : i - 1;
      const std::int32_t tip = tip_of_spike[sp];
      std::int32_t ref;
      if (spike_above) {
        ref = add_vnode(kVCrossNewLo, tip, new_ref(cr.first[P]));
      } else {
        ref = add_vnode(kVCrossNewUp, tip, new_ref(cr.last[P] + 1));
      }
      newCrossL[i] = ref;
      newVertR[i] = tip;
    }

    // Stripe arrays for this virtual level (pseudo-interfaces included).
    vifL_.push_back(-1);
    vifR_.push_back(-1);
    for (int i = 1; i <= c; ++i) {
      vifL_.push_back(newCrossL[c + 1 - i]);
      vifR_.push_back(newVertR[c + 1 - i]);
    }
    vifL_.push_back(-2);
    vifR_.push_back(-2);
    vstripe_begin_[m] = static_cast<std::int32_t>(vifL_.size());
    vsigma0_.push_back((c % 2 == 0) ? -1 : +1);

    crossL = std::move(newCrossL);
    vertR = std::move(newVertR);
    cprev = c;
  }
}

double EnergyModel::rho(const std::vector<double>& state) const {
  double sum = 0;
  int count = 0;
  for (const RhoSample& r : rho_samples_) {
    const double tau = resolve(r.tip, state);
    const double lo = resolve(r.lo, state);
    const double u_lo = resolve(r.u_lo, state);
    sum += (tau - u_lo) / (tau - lo);
    ++count;
    if (r.u_hi != -1000000) {
      const double hi = resolve(r.hi, state);
      const double u_hi = resolve(r.u_hi, state);
      sum += (u_hi - tau) / (hi - tau);
      ++count;
    }
  }
  if (count == 0) return 0.5;
  const double mean = sum / count;
  return mean < 0.05 ? 0.05 : (mean > 0.95 ? 0.95 : mean);
}

EnergyBreakdown EnergyModel::value(const std::vector<double>& state, double theta, double l,
                                   double N) {
  return eval(state, theta, l, N, false, nullptr, nullptr, nullptr, nullptr);
}

EnergyBreakdown EnergyModel::value_and_grad(const std::vector<double>& state, double theta,
                                            double l, double N, std::vector<double>& node_adj,
                                            double& dtheta, double& dl, double& dN) {
  return eval(state, theta, l, N, true, &node_adj, &dtheta, &dl, &dN);
}

EnergyBreakdown EnergyModel::eval(const std::vector<double>& state, double theta, double l,
                                  double N, bool with_grad, std::vector<double>* node_adj,
                                  double* dtheta, double* dl, double* dN) {
  const Scheme& sch = scheme(base_.scheme);
  if (!(theta > sch.theta_min && theta < sch.theta_max))
    throw std::domain_error("EnergyModel: theta outside the admissible interval");
  const int K = base_.K;
  const double eps = base_.epsilon;
  const double Ldom = base_.L;
  const Layout& lay = *lay_;

  // --- real stripes ---
  for (int k = 1; k <= K; ++k) {
    const int m = lay.m(k);
    const double w = stripe_width(theta, l, k);
    auto& u = u_saved_[k];
    u.assign(m + 1, 0.0);
    term_scratch_.resize(m);
    const std::int32_t base = lay.stripe_begin[k];
    double uacc = 0;
    for (int i = 1; i <= m; ++i) {
      const double d = state[lay.ifR[base + i]] - state[lay.ifL[base + i]];
      uacc += 2.0 * lay.sigma(k, i - 1) * d / w;
      u[i] = uacc;
      const double gapL = state[lay.ifL[base + i]] - state[lay.ifL[base + i + 1]];
      const double gapR = state[lay.ifR[base + i]] - state[lay.ifR[base + i + 1]];
      term_scratch_[i - 1] = uacc * uacc * 0.5 * w * (gapL + gapR);
    }
    stripe_e_[k] = pairwise_sum(term_scratch_.data(), m);
  }
  const double E_real = pairwise_sum(stripe_e_.data() + 1, K);
  const double F_el = 4.0 / (N * N) * E_real;

  // --- surface (levels <= K plus the unbranched stripe) ---
  const ClosedForm sb = surface_branching_form(sch, K, eps, theta, l, N);
  const double S = sb.v + 4.0 * eps * N * (Ldom - l);

  // --- surface tail beyond K ---
  const ClosedForm st = surface_tail_form(sch, K, eps, theta, l, N);

  // --- trace fade-out term ---
  const int mK = lay.m(K);
  const std::int32_t baseK = lay.stripe_begin[K];
  double q_int = 0;
  {
    double b_prev = kMid, U_prev = 0;
    for (int i = 1; i <= mK + 1; ++i) {
      const double b = i <= mK ? state[lay.ifL[baseK + i]] : kBot;
      const double U = U_prev + lay.sigma(K, i - 1) * (b - b_prev);
      const double h = b_prev - b;
      q_int += h / 3.0 * (U_prev * U_prev + U_prev * U + U * U);
      b_prev = b;
      U_prev = U;
    }
  }
  const double thK = std::pow(theta, K);
  const double F_tr = 4.0 * q_int / (N * N * thK * l);

  // --- continued-pattern elastic term ---
  const double rho_v = rho(state);
  if (M_ > 0) {
    vvals_.resize(vnodes_.size());
    for (std::size_t id = 0; id < vnodes_.size(); ++id) {
      const VNode& n = vnodes_[id];
      switch (n.kind) {
        case kVTipMid: vvals_[id] = kMid; break;
        case kVTipPin: vvals_[id] = resolve(n.a, state); break;
        case kVTipFree: vvals_[id] = 0.5 * (resolve(n.a, state) + resolve(n.b, state)); break;
        case kVCrossCont: {
          const double p = resolve(n.a, state);
          const double q = resolve(n.b, state);
          vvals_[id] = p + theta * (p - q);
          break;
        }
        case kVCrossNewUp: {
          const double t = resolve(n.a, state);
          vvals_[id] = t + rho_v * (resolve(n.b, state) - t);
          break;
        }
        case kVCrossNewLo: {
          const double t = resolve(n.a, state);
          vvals_[id] = t - rho_v * (t - resolve(n.b, state));
          break;
        }
      }
    }
    for (int m = 1; m <= M_; ++m) {
      const std::int32_t b0 = vstripe_begin_[m - 1];
      const int mm = vstripe_begin_[m] - b0 - 2;
      const double w = stripe_width(theta, l, K + m);
      auto& u = vu_saved_[m - 1];
      u.assign(mm + 1, 0.0);
      term_scratch_.resize(mm);
      double uacc = 0;
      for (int i = 1; i <= mm; ++i) {
        const double d = resolve(vifR_[b0 + i], state) - resolve(vifL_[b0 + i], state);
        const int sg = (i - 1) % 2 == 0 ? vsigma0_[m - 1] : -vsigma0_[m - 1];
        uacc += 2.0 * sg * d / w;
        u[i] = uacc;
        const double gapL = resolve(vifL_[b0 + i], state) - resolve(vifL_[b0 + i + 1], state);
        const double gapR = resolve(vifR_[b0 + i], state) - resolve(vifR_[b0 + i + 1], state);
        term_scratch_[i - 1] = uacc * uacc * 0.5 * w * (gapL + gapR);
      }
      ve_[m - 1] = pairwise_sum(term_scratch_.data(), mm);
    }
  }

  const double r_theory = 1.0 / (sch.growth_base * sch.growth_base * theta);
  double F_core = 0;
  double dFcore_dtheta_direct = 0;  // from the theoretical-ratio fallbacks
  double dFcore_deK = 0;            // M == 0 fallback feeds on the last real stripe
  if (M_ >= 2) {
    const double eM = ve_[M_ - 1];
    const double eM1 = ve_[M_ - 2];
    double tail = 0;
    if (eM > 0) {
      const double delta = eM1 - eM;
      if (!(delta > 0))
        throw std::domain_error("EnergyModel: boundary continuation does not contract");
      tail = eM * eM / delta;
    }
    F_core = pairwise_sum(ve_.data(), M_) + tail;
  } else if (M_ == 1) {
    F_core = ve_[0] / (1.0 - r_theory);
    dFcore_dtheta_direct = ve_[0] / ((1.0 - r_theory) * (1.0 - r_theory)) *
                           (-1.0 / (sch.growth_base * sch.growth_base * theta * theta));
  } else {
    const double eK = stripe_e_[K];
    F_core = eK * r_theory / (1.0 - r_theory);
    dFcore_deK = r_theory / (1.0 - r_theory);
    dFcore_dtheta_direct = eK / ((1.0 - r_theory) * (1.0 - r_theory)) *
                           (-1.0 / (sch.growth_base * sch.growth_base * theta * theta));
  }
  const double F_rem = 4.0 / (N * N) * F_core;

  EnergyBreakdown br;
  br.elastic = F_el;
  br.surface = S;
  br.boundary_rem = F_rem;
  br.boundary_trace = F_tr;
  br.boundary_tail = st.v;
  br.boundary = F_rem + F_tr + st.v;
  br.total = br.elastic + br.surface + br.boundary;
  br.c_elast = F_el * l * N * N;
  br.c_surf = (S - 4.0 * eps * N * (Ldom - l)) / (eps * l * N);
  br.c_rem_effective = F_rem * thK * l * N * N;

  if (!with_grad) return br;

  // ------------------------------------------------------------------ adjoint
  node_adj->assign(lay.n_nodes(), 0.0);
  double th_bar = 0, l_bar = 0, N_bar = 0;
  auto& adj = *node_adj;

  // Surface parts.
  th_bar += sb.dth + st.dth;
  l_bar += sb.dl - 4.0 * eps * N + st.dl;
  N_bar += sb.dN + 4.0 * eps * (Ldom - l) + st.dN;

  // Trace term: F_tr = 4 q / (N^2 theta^K l).
  {
    const double qbar = 4.0 / (N * N * thK * l);
    th_bar += -K * F_tr / theta;
    l_bar += -F_tr / l;
    N_bar += -2.0 * F_tr / N;
    tb_.resize(mK + 2);
    tU_.resize(mK + 2);
    tb_[0] = kMid;
    tU_[0] = 0;
    for (int i = 1; i <= mK + 1; ++i) {
      tb_[i] = i <= mK ? state[lay.ifL[baseK + i]] : kBot;
      tU_[i] = tU_[i - 1] + lay.sigma(K, i - 1) * (tb_[i] - tb_[i - 1]);
    }
    tbbar_.assign(mK + 2, 0.0);
    tUbar_.assign(mK + 2, 0.0);
    for (int i = mK + 1; i >= 1; --i) {
      const double h = tb_[i - 1] - tb_[i];
      tUbar_[i - 1] += qbar * h / 3.0 * (2 * tU_[i - 1] + tU_[i]);
      tUbar_[i] += qbar * h / 3.0 * (tU_[i - 1] + 2 * tU_[i]);
      const double hbar =
          qbar / 3.0 * (tU_[i - 1] * tU_[i - 1] + tU_[i - 1] * tU_[i] + tU_[i] * tU_[i]);
      tbbar_[i - 1] += hbar;
      tbbar_[i] -= hbar;
    }
    for (int i = mK + 1; i >= 1; --i) {
      const int sg = lay.sigma(K, i - 1);
      tUbar_[i - 1] += tUbar_[i];
      tbbar_[i] += sg * tUbar_[i];
      tbbar_[i - 1] -= sg * tUbar_[i];
    }
    for (int i = 1; i <= mK; ++i) adj[lay.ifL[baseK + i]] += tbbar_[i];
  }

  // Continued-pattern term.
  double rho_bar = 0;
  if (M_ > 0) {
    std::vector<double> ebar(M_, 4.0 / (N * N));
    if (M_ >= 2) {
      const double eM = ve_[M_ - 1];
      const double eM1 = ve_[M_ - 2];
      if (eM > 0) {
        const double delta = eM1 - eM;
        ebar[M_ - 1] += 4.0 / (N * N) * eM * (2.0 * eM1 - eM) / (delta * delta);
        ebar[M_ - 2] += 4.0 / (N * N) * (-eM * eM / (delta * delta));
      }
    } else {  // M_ == 1
      ebar[0] = 4.0 / (N * N) / (1.0 - r_theory);
      th_bar += 4.0 / (N * N) * dFcore_dtheta_direct;
    }
    N_bar += -2.0 * F_rem / N;

    vadj_.assign(vnodes_.size(), 0.0);
    auto scatter = [&](std::int32_t ref, double val) {
      if (ref >= 0)
        vadj_[ref] += val;
      else if (ref <= -3)
        adj[-3 - ref] += val;
    };
    for (int m = M_; m >= 1; --m) {
      const std::int32_t b0 = vstripe_begin_[m - 1];
      const int mm = vstripe_begin_[m] - b0 - 2;
      const double w = stripe_width(theta, l, K + m);
      const double ew = ebar[m - 1];
      const auto& u = vu_saved_[m - 1];
      const double wbar = -ew * ve_[m - 1] / w;
      th_bar += wbar * dwidth_dtheta(theta, l, K + m);
      l_bar += wbar * w / l;
      double suffix = 0;
      for (int i = mm; i >= 1; --i) {
        const double gapL = resolve(vifL_[b0 + i], state) - resolve(vifL_[b0 + i + 1], state);
        const double gapR = resolve(vifR_[b0 + i], state) - resolve(vifR_[b0 + i + 1], state);
        const double A = 0.5 * w * (gapL + gapR);
        const double abar = ew * u[i] * u[i];
        scatter(vifL_[b0 + i], abar * 0.5 * w);
        scatter(vifL_[b0 + i + 1], -abar * 0.5 * w);
        scatter(vifR_[b0 + i], abar * 0.5 * w);
        scatter(vifR_[b0 + i + 1], -abar * 0.5 * w);
        suffix += 2.0 * u[i] * A;
        const int sg = (i - 1) % 2 == 0 ? vsigma0_[m - 1] : -vsigma0_[m - 1];
        const double dbar = ew * 2.0 * sg / w * suffix;
        scatter(vifR_[b0 + i], dbar);
        scatter(vifL_[b0 + i], -dbar);
      }
    }
    // Reverse through the construction.
    for (std::size_t id = vnodes_.size(); id-- > 0;) {
      const double vb = vadj_[id];
      if (vb == 0) continue;
      const VNode& n = vnodes_[id];
      switch (n.kind) {
        case kVTipMid: break;
        case kVTipPin: scatter(n.a, vb); break;
        case kVTipFree:
          scatter(n.a, 0.5 * vb);
          scatter(n.b, 0.5 * vb);
          break;
        case kVCrossCont: {
          const double p = resolve(n.a, state);
          const double q = resolve(n.b, state);
          scatter(n.a, (1.0 + theta) * vb);
          scatter(n.b, -theta * vb);
          th_bar += (p - q) * vb;
          break;
        }
        case kVCrossNewUp: {
          const double t = resolve(n.a, state);
          const double h = resolve(n.b, state);
          scatter(n.a, (1.0 - rho_v) * vb);
          scatter(n.b, rho_v * vb);
          rho_bar += (h - t) * vb;
          break;
        }
        case kVCrossNewLo: {
          const double t = resolve(n.a, state);
          const double lo = resolve(n.b, state);
          scatter(n.a, (1.0 - rho_v) * vb);
          scatter(n.b, rho_v * vb);
          rho_bar += (lo - t) * vb;
          break;
        }
      }
    }
  } else {
    // M == 0 fallback: the tail feeds on the last real stripe's energy.
    N_bar += -2.0 * F_rem / N;
    th_bar += 4.0 / (N * N) * dFcore_dtheta_direct;
  }

  // Contraction measurement (only propagates while the clamp is inactive).
  if (rho_bar != 0) {
    int count = 0;
    double mean_sum = 0;
    for (const RhoSample& r : rho_samples_) {
      const double tau = resolve(r.tip, state);
      const double lo = resolve(r.lo, state);
      const double u_lo = resolve(r.u_lo, state);
      mean_sum += (tau - u_lo) / (tau - lo);
      ++count;
      if (r.u_hi != -1000000) {
        const double hi = resolve(r.hi, state);
        const double u_hi = resolve(r.u_hi, state);
        mean_sum += (u_hi - tau) / (hi - tau);
        ++count;
      }
    }
    const double mean = count > 0 ? mean_sum / count : 0.5;
    if (count > 0 && mean > 0.05 && mean < 0.95) {
      const double per = rho_bar / count;
      auto scatter_real = [&](std::int32_t ref, double val) {
        if (ref <= -3) adj[-3 - ref] += val;
      };
      for (const RhoSample& r : rho_samples_) {
        const double tau = resolve(r.tip, state);
        const double lo = resolve(r.lo, state);
        const double u_lo = resolve(r.u_lo, state);
        const double den1 = tau - lo;
        scatter_real(r.tip, per * (u_lo - lo) / (den1 * den1));
        scatter_real(r.u_lo, per * (-1.0 / den1));
        scatter_real(r.lo, per * (tau - u_lo) / (den1 * den1));
        if (r.u_hi != -1000000) {
          const double hi = resolve(r.hi, state);
          const double u_hi = resolve(r.u_hi, state);
          const double den2 = hi - tau;
          scatter_real(r.u_hi, per * (1.0 / den2));
          scatter_real(r.tip, per * (u_hi - hi) / (den2 * den2));
          scatter_real(r.hi, per * (-(u_hi - tau) / (den2 * den2)));
        }
      }
    }
  }

  // Real stripes (note: when M == 0 the boundary fallback also reads e_K).
  for (int k = K; k >= 1; --k) {
    const int m = lay.m(k);
    const double w = stripe_width(theta, l, k);
    double ew = 4.0 / (N * N);
    if (M_ == 0 && k == K) ew += 4.0 / (N * N) * dFcore_deK;
    const auto& u = u_saved_[k];
    const std::int32_t base = lay.stripe_begin[k];
    const double wbar = -ew * stripe_e_[k] / w;
    th_bar += wbar * dwidth_dtheta(theta, l, k);
    l_bar += wbar * w / l;
    double suffix = 0;
    for (int i = m; i >= 1; --i) {
      const double gapL = state[lay.ifL[base + i]] - state[lay.ifL[base + i + 1]];
      const double gapR = state[lay.ifR[base + i]] - state[lay.ifR[base + i + 1]];
      const double A = 0.5 * w * (gapL + gapR);
      const double abar = ew * u[i] * u[i];
      adj[lay.ifL[base + i]] += abar * 0.5 * w;
      adj[lay.ifL[base + i + 1]] -= abar * 0.5 * w;
      adj[lay.ifR[base + i]] += abar * 0.5 * w;
      adj[lay.ifR[base + i + 1]] -= abar * 0.5 * w;
      suffix += 2.0 * u[i] * A;
      const double dbar = ew * 2.0 * lay.sigma(k, i - 1) / w * suffix;
      adj[lay.ifR[base + i]] += dbar;
      adj[lay.ifL[base + i]] -= dbar;
    }
  }
  N_bar += -2.0 * F_el / N;

  // Fold pinned tips into their anchors; clear fixed slots.
  for (int i = lay.n_nodes(); i-- > 0;) {
    if (lay.kind[i] == NodeKind::TipPin) {
      adj[lay.anchor_of_node[i]] += adj[i];
      adj[i] = 0;
    }
  }
  for (int i = 0; i < lay.n_nodes(); ++i) {
    const NodeKind kd = lay.kind[i];
    if (kd == NodeKind::AnchorMid || kd == NodeKind::AnchorBot || kd == NodeKind::TipMid)
      adj[i] = 0;
    if (kd == NodeKind::TipFree && !lay.free_facet_tips) adj[i] = 0;
  }

  *dtheta = th_bar;
  *dl = l_bar;
  *dN = N_bar;
  return br;
}

// ---------------------------------------------------------------------------
// Public wrappers

double elastic_energy(const Topology& top, const GeometrySpec& spec, const DofVector& y) {
  if (auto bad = validate(top, spec, y))
    throw std::invalid_argument("elastic_energy: degenerate geometry (" + bad->what + ")");
  const Layout lay = build_layout(top, spec.free_facet_tips);
  const std::vector<double> v = lay.state_from(y);
  std::vector<double> terms;
  std::vector<double> stripe_e(spec.K + 1, 0.0);
  for (int k = 1; k <= spec.K; ++k) {
    const int m = lay.m(k);
    const double w = spec.stripe_width(k);
    const std::int32_t base = lay.stripe_begin[k];
    terms.resize(m);
    double uacc = 0;
    for (int i = 1; i <= m; ++i) {
      const double d = v[lay.ifR[base + i]] - v[lay.ifL[base + i]];
      uacc += 2.0 * lay.sigma(k, i - 1) * d / w;
      const double gapL = v[lay.ifL[base + i]] - v[lay.ifL[base + i + 1]];
      const double gapR = v[lay.ifR[base + i]] - v[lay.ifR[base + i + 1]];
      terms[i - 1] = uacc * uacc * 0.5 * w * (gapL + gapR);
    }
    stripe_e[k] = pairwise_sum(terms.data(), m);
  }
  return 4.0 / (spec.N * spec.N) * pairwise_sum(stripe_e.data() + 1, spec.K);
}

double boundary_energy(const Topology& top, const GeometrySpec& spec, const DofVector& y) {
  const Layout lay = build_layout(top, spec.free_facet_tips);
  EnergyModel model(top, lay, spec);
  const std::vector<double> v = lay.state_from(y);
  return model.value(v, spec.theta, spec.l, spec.N).boundary;
}

EnergyBreakdown total_energy(const Topology& top, const GeometrySpec& spec, const DofVector& y) {
  const Layout lay = build_layout(top, spec.free_facet_tips);
  EnergyModel model(top, lay, spec);
  const std::vector<double> v = lay.state_from(y);
  return model.value(v, spec.theta, spec.l, spec.N);
}

EnergyGradient gradient(const Topology& top, const GeometrySpec& spec, const DofVector& y) {
  const Layout lay = build_layout(top, spec.free_facet_tips);
  EnergyModel model(top, lay, spec);
  const std::vector<double> v = lay.state_from(y);
  std::vector<double> adj;
  EnergyGradient g;
  model.value_and_grad(v, spec.theta, spec.l, spec.N, adj, g.dtheta, g.dl, g.dN);
  g.dY.lines.resize(spec.K + 1);
  for (int k = 0; k <= spec.K; ++k) {
    const int n = lay.line_size(k) - 2;
    g.dY.lines[k].assign(adj.begin() + lay.line_begin[k] + 1,
                         adj.begin() + lay.line_begin[k] + 1 + n);
  }
  return g;
}

}  // namespace branchopt
