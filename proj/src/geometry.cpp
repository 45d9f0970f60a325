#include "branchopt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace branchopt {

namespace {
constexpr double kMid = 0.5;
constexpr double kBot = 0.25;
// Subdivision fraction used by the initial construction: a newborn spike
// takes half the room between its tip and each bounding interface.
constexpr double kInitFraction = 0.5;
}  // namespace

double GeometrySpec::x(int k) const { return std::pow(theta, k) * l; }

void GeometrySpec::check() const {
  const Scheme& sch = branchopt::scheme(this->scheme);
  if (K < 1) throw std::invalid_argument("GeometrySpec: K must be >= 1");
  if (!(theta > sch.theta_min && theta < sch.theta_max))
    throw std::invalid_argument("GeometrySpec: theta outside the admissible interval");
  if (!(l > 0 && l < L)) throw std::invalid_argument("GeometrySpec: need 0 < l < L");
  if (!(N >= 1)) throw std::invalid_argument("GeometrySpec: N must be >= 1");
  if (!(epsilon > 0)) throw std::invalid_argument("GeometrySpec: epsilon must be positive");
  if (!(delta_geom > 0)) throw std::invalid_argument("GeometrySpec: delta_geom must be positive");
}

namespace {

// Children of letter p at level k-1 occupy [first[p], last[p]] at level k.
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

int line_of_node(const Layout& lay, std::int32_t node) {
  int k = 0;
  while (lay.line_begin[k + 1] <= node) ++k;
  return k;
}

}  // namespace

// ---------------------------------------------------------------------------
// Layout construction

namespace {

struct LayoutBuilder {
  const Topology& top;
  bool free_tips;
  Layout lay;
  // crossing node of bottom-up interface j at line k (j = 1..c_k)
  std::vector<std::vector<std::int32_t>> cross_node;
  // tip node (on line k-1) of the spike letter s at level k
  std::vector<std::vector<std::int32_t>> tip_node;

  LayoutBuilder(const Topology& t, bool ft) : top(t), free_tips(ft) {}

  std::int32_t add_node(NodeKind kind, std::int32_t anchor = -1) {
    lay.kind.push_back(kind);
    lay.anchor_of_node.push_back(anchor);
    std::int32_t dof = -1;
    if (kind == NodeKind::Cross || (kind == NodeKind::TipFree && free_tips)) {
      dof = lay.n_dofs++;
      lay.dof_nodes.push_back(static_cast<std::int32_t>(lay.kind.size()) - 1);
    } else if (kind == NodeKind::TipPin && anchor >= 0) {
      dof = lay.dof_of_node[anchor];
    }
    lay.dof_of_node.push_back(dof);
    return static_cast<std::int32_t>(lay.kind.size()) - 1;
  }

  void build_line(int k) {
    const int K = top.K;
    lay.line_begin[k] = static_cast<std::int32_t>(lay.kind.size());
    add_node(NodeKind::AnchorMid);

    const int c = top.central(k);
    cross_node[k].assign(c + 1, -1);

    std::vector<std::int32_t> spike_child;  // per letter of level k
    if (k < K) {
      spike_child.assign(c + 1, -1);
      const auto& ctags = top.tags[k + 1];
      const auto& cpar = top.parent[k + 1];
      tip_node[k + 1].assign(ctags.size(), -1);
      for (std::int32_t j = 0; j < static_cast<std::int32_t>(ctags.size()); ++j)
        if (ctags[j] == Tag::Spike) spike_child[cpar[j]] = j;
    }

    for (int j = c; j >= 0; --j) {
      if (k < K && spike_child[j] >= 0) {
        const std::int32_t sp = spike_child[j];
        const std::int32_t needle = top.needle_of[k + 1][sp];
        const Needle& n = top.needles[needle];
        std::int32_t node;
        if (n.root == -1) {
          node = add_node(NodeKind::TipMid);
        } else if (n.root == -2) {
          node = add_node(NodeKind::TipFree);
        } else {
          node = add_node(NodeKind::TipPin, lay.tip_node_of_needle[n.root]);
        }
        lay.tip_node_of_needle[needle] = node;
        tip_node[k + 1][sp] = node;
      }
      if (j > 0) cross_node[k][j] = add_node(NodeKind::Cross);
    }
    add_node(NodeKind::AnchorBot);
  }

  void build_stripes() {
    const int K = top.K;
    lay.stripe_begin.assign(K + 2, 0);
    lay.sigma0.assign(K + 1, 0);
    for (int k = 1; k <= K; ++k) {
      const int c = top.central(k);
      lay.sigma0[k] = (c % 2 == 0) ? -1 : +1;
      const auto& par = top.parent[k];
      const auto& tags = top.tags[k];
      lay.ifL.push_back(lay.line_begin[k]);      // midline pair
      lay.ifR.push_back(lay.line_begin[k - 1]);
      for (int j = c; j >= 1; --j) {
        lay.ifL.push_back(cross_node[k][j]);
        std::int32_t right;
        if (par[j - 1] == par[j]) {
          const std::int32_t sp = tags[j] == Tag::Spike ? j : j - 1;
          right = tip_node[k][sp];
        } else {
          right = cross_node[k - 1][par[j]];
        }
        lay.ifR.push_back(right);
      }
      lay.ifL.push_back(lay.line_begin[k + 1] - 1);  // boundary pair
      lay.ifR.push_back(lay.line_begin[k] - 1);
      lay.stripe_begin[k + 1] = static_cast<std::int32_t>(lay.ifL.size());
    }
  }

  void build() {
    const int K = top.K;
    lay.top = &top;
    lay.K = K;
    lay.free_facet_tips = free_tips;
    lay.tip_node_of_needle.assign(top.needles.size(), -1);
    cross_node.resize(K + 1);
    tip_node.resize(K + 2);
    lay.line_begin.assign(K + 2, 0);
    for (int k = 0; k <= K; ++k) build_line(k);
    lay.line_begin[K + 1] = static_cast<std::int32_t>(lay.kind.size());
    build_stripes();
  }
};

// Value of the bottom-up interface j at line k, with 0 and c+1 denoting the
// boundary and midline anchors.
double cross_val(const Layout& lay, const std::vector<double>& v, int k, int j) {
  const int c = lay.top->central(k);
  if (j <= 0) return kBot;
  if (j > c) return kMid;
  return v[lay.ifL[lay.stripe_begin[k] + (c + 1 - j)]];
}

}  // namespace

Layout build_layout(const Topology& top, bool free_facet_tips) {
  LayoutBuilder b(top, free_facet_tips);
  b.build();
  return std::move(b.lay);
}

void Layout::materialize(std::vector<double>& v) const {
  for (int i = 0; i < n_nodes(); ++i) {
    switch (kind[i]) {
      case NodeKind::AnchorMid:
      case NodeKind::TipMid: v[i] = kMid; break;
      case NodeKind::AnchorBot: v[i] = kBot; break;
      case NodeKind::TipPin: v[i] = v[anchor_of_node[i]]; break;
      default: break;
    }
  }
}

std::vector<double> Layout::state_from(const DofVector& y) const {
  if (static_cast<int>(y.lines.size()) != K + 1)
    throw std::invalid_argument("DofVector: wrong number of level lines");
  std::vector<double> v(n_nodes(), 0.0);
  for (int k = 0; k <= K; ++k) {
    const int n = line_size(k) - 2;
    if (static_cast<int>(y.lines[k].size()) != n)
      throw std::invalid_argument("DofVector: wrong node count on level line " + std::to_string(k));
    for (int i = 0; i < n; ++i) v[line_begin[k] + 1 + i] = y.lines[k][i];
  }
  materialize(v);
  return v;
}

DofVector Layout::dofvector_from(const std::vector<double>& v) const {
  DofVector y;
  y.lines.resize(K + 1);
  for (int k = 0; k <= K; ++k) {
    const int n = line_size(k) - 2;
    y.lines[k].assign(v.begin() + line_begin[k] + 1, v.begin() + line_begin[k] + 1 + n);
  }
  return y;
}

// ---------------------------------------------------------------------------
// Initial geometry

DofVector initial_geometry(const Topology& top, const GeometrySpec& spec) {
  spec.check();
  if (top.K != spec.K || top.scheme_name != spec.scheme)
    throw std::invalid_argument("initial_geometry: topology/spec mismatch");
  const Layout lay = build_layout(top, spec.free_facet_tips);
  std::vector<double> v(lay.n_nodes(), 0.0);
  lay.materialize(v);

  for (int k = 1; k <= top.K; ++k) {
    const auto& par = top.parent[k];
    const auto& tags = top.tags[k];
    const int c = top.central(k);
    const ChildRanges cr = child_ranges(top, k);
    const std::int32_t base = lay.stripe_begin[k];
    // Continuing interfaces: vertical continuation of the parent interface.
    for (int j = 1; j <= c; ++j) {
      if (par[j - 1] != par[j])
        v[lay.ifL[base + (c + 1 - j)]] = cross_val(lay, v, k - 1, par[j]);
    }
    // Newborn interfaces: centered around the tip on line k-1.
    for (int j = 1; j <= c; ++j) {
      if (par[j - 1] != par[j]) continue;
      const std::int32_t p = par[j];
      const bool spike_above = tags[j] == Tag::Spike;  // interface is the spike's lower edge
      const double tau = v[lay.ifR[base + (c + 1 - j)]];
      const double lo = cross_val(lay, v, k, cr.first[p]);
      const double hi = cross_val(lay, v, k, cr.last[p] + 1);
      v[lay.ifL[base + (c + 1 - j)]] =
          spike_above ? tau - kInitFraction * (tau - lo) : tau + kInitFraction * (hi - tau);
    }
    // Free tips of spikes born at level k+1: centered in the parent slot.
    if (k < top.K) {
      const auto& ctags = top.tags[k + 1];
      const auto& cpar = top.parent[k + 1];
      for (std::int32_t s = 0; s < static_cast<std::int32_t>(ctags.size()); ++s) {
        if (ctags[s] != Tag::Spike) continue;
        const std::int32_t node = lay.tip_node_of_needle[top.needle_of[k + 1][s]];
        if (lay.kind[node] != NodeKind::TipFree) continue;
        const std::int32_t p = cpar[s];
        v[node] = 0.5 * (cross_val(lay, v, k, p) + cross_val(lay, v, k, p + 1));
      }
    }
    lay.materialize(v);  // resolve pinned tips as their anchors get placed
  }
  return lay.dofvector_from(v);
}

// ---------------------------------------------------------------------------
// Validation

std::optional<DegeneracyReport> validate(const Topology& top, const GeometrySpec& spec,
                                         const DofVector& y) {
  spec.check();
  const Layout lay = build_layout(top, spec.free_facet_tips);
  if (static_cast<int>(y.lines.size()) != lay.K + 1)
    return DegeneracyReport{0, 0, 0.0, "wrong number of level lines"};
  std::vector<double> v(lay.n_nodes(), 0.0);
  for (int k = 0; k <= lay.K; ++k) {
    const int n = lay.line_size(k) - 2;
    if (static_cast<int>(y.lines[k].size()) != n)
      return DegeneracyReport{k, 0, 0.0, "wrong node count on level line"};
    for (int i = 0; i < n; ++i) v[lay.line_begin[k] + 1 + i] = y.lines[k][i];
  }
  for (int i = 0; i < lay.n_nodes(); ++i) {
    switch (lay.kind[i]) {
      case NodeKind::AnchorMid: v[i] = kMid; break;
      case NodeKind::AnchorBot: v[i] = kBot; break;
      case NodeKind::TipMid:
        if (v[i] != kMid) {
          const int k = line_of_node(lay, i);
          return DegeneracyReport{k, i - lay.line_begin[k] - 1, v[i] - kMid,
                                  "central tip off the midline"};
        }
        break;
      case NodeKind::TipPin:
        if (v[i] != v[lay.anchor_of_node[i]]) {
          const int k = line_of_node(lay, i);
          return DegeneracyReport{k, i - lay.line_begin[k] - 1, v[i] - v[lay.anchor_of_node[i]],
                                  "nested tip off its chain tip line"};
        }
        break;
      default: break;
    }
  }
  for (int k = 0; k <= lay.K; ++k) {
    for (int i = lay.line_begin[k] + 1; i < lay.line_begin[k + 1]; ++i) {
      const double gap = v[i - 1] - v[i];
      const bool zero_ok =
          lay.kind[i - 1] == NodeKind::AnchorMid && lay.kind[i] == NodeKind::TipMid;
      if (zero_ok ? gap != 0.0 : gap < spec.delta_geom)
        return DegeneracyReport{k, i - lay.line_begin[k] - 1, gap, "ordinate ordering collapsed"};
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Regions

std::vector<std::vector<Region>> regions(const Topology& top, const GeometrySpec& spec,
                                         const DofVector& y) {
  if (auto bad = validate(top, spec, y))
    throw std::invalid_argument("regions: degenerate geometry at level " +
                                std::to_string(bad->level) + ": " + bad->what);
  const Layout lay = build_layout(top, spec.free_facet_tips);
  const std::vector<double> v = lay.state_from(y);

  std::vector<std::vector<Region>> out(lay.K + 1);
  for (int k = 1; k <= lay.K; ++k) {
    const int m = lay.m(k);
    const double w = spec.stripe_width(k);
    auto& stripe = out[k];
    stripe.reserve(m + 1);
    double ux = 0.0;
    const std::int32_t base = lay.stripe_begin[k];
    for (int i = 0; i <= m; ++i) {
      if (i > 0) {
        const double drop = v[lay.ifR[base + i]] - v[lay.ifL[base + i]];
        ux += 2.0 * lay.sigma(k, i - 1) * drop / w;
      }
      Region r;
      r.level = k;
      r.index = i;
      r.uy_sign = lay.sigma(k, i);
      r.ux = ux;
      const double gapL = v[lay.ifL[base + i]] - v[lay.ifL[base + i + 1]];
      const double gapR = v[lay.ifR[base + i]] - v[lay.ifR[base + i + 1]];
      r.area = 0.5 * w * (gapL + gapR);
      r.upper_edge_right = v[lay.ifR[base + i]];
      r.upper_edge_left = v[lay.ifL[base + i]];
      stripe.push_back(r);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Level extension

namespace detail {

double measure_contraction(const Topology& top, const Layout& lay, const std::vector<double>& v,
                           int k) {
  const auto& tags = top.tags[k];
  const auto& par = top.parent[k];
  const int c = top.central(k);
  const ChildRanges cr = child_ranges(top, k);
  double sum = 0.0;
  int count = 0;
  for (std::int32_t s = 0; s <= c; ++s) {
    if (tags[s] != Tag::Spike) continue;
    const double tau = v[lay.tip_node_of_needle[top.needle_of[k][s]]];
    const std::int32_t p = par[s];
    const double lo = cross_val(lay, v, k, cr.first[p]);
    const double hi = cross_val(lay, v, k, cr.last[p] + 1);
    const double u_lo = cross_val(lay, v, k, s);  // interface below the spike
    if (tau - lo > 0) {
      sum += (tau - u_lo) / (tau - lo);
      ++count;
    }
    if (s < c && hi - tau > 0) {
      const double u_hi = cross_val(lay, v, k, s + 1);
      sum += (u_hi - tau) / (hi - tau);
      ++count;
    }
  }
  if (count == 0) return kInitFraction;
  return std::clamp(sum / count, 0.05, 0.95);
}

}  // namespace detail

DofVector extend_level(const Topology& top, const GeometrySpec& spec, const DofVector& y_K) {
  const int K = spec.K;
  if (top.K != K + 1)
    throw std::invalid_argument("extend_level: topology must contain level K+1");
  const Topology old_top = build_topology(scheme(spec.scheme), K);
  const Layout old_lay = build_layout(old_top, spec.free_facet_tips);
  const std::vector<double> old_v = old_lay.state_from(y_K);
  const double rho = detail::measure_contraction(old_top, old_lay, old_v, K);

  const Layout lay = build_layout(top, spec.free_facet_tips);
  std::vector<double> v(lay.n_nodes(), 0.0);

  for (int k = 0; k + 1 <= K; ++k)
    for (int i = 0; i < lay.line_size(k); ++i)
      v[lay.line_begin[k] + i] = old_v[old_lay.line_begin[k] + i];
  // Line K gains tip nodes; crossings and anchors keep their values.
  {
    std::int32_t src = old_lay.line_begin[K];
    for (std::int32_t i = lay.line_begin[K]; i < lay.line_begin[K + 1]; ++i) {
      const NodeKind kd = lay.kind[i];
      if (kd == NodeKind::Cross || kd == NodeKind::AnchorMid || kd == NodeKind::AnchorBot)
        v[i] = old_v[src++];
    }
  }
  lay.materialize(v);
  // Free tips on line K.
  {
    const auto& ctags = top.tags[K + 1];
    const auto& cpar = top.parent[K + 1];
    for (std::int32_t s = 0; s < static_cast<std::int32_t>(ctags.size()); ++s) {
      if (ctags[s] != Tag::Spike) continue;
      const std::int32_t node = lay.tip_node_of_needle[top.needle_of[K + 1][s]];
      if (lay.kind[node] != NodeKind::TipFree) continue;
      const std::int32_t p = cpar[s];
      v[node] = 0.5 * (cross_val(lay, v, K, p) + cross_val(lay, v, K, p + 1));
    }
  }
  lay.materialize(v);

  // Line K+1: continuing interfaces extrapolate their last offset scaled by
  // theta; the offset scale is halved until the new line is feasible (a zero
  // scale copies line K, which is feasible whenever the tips are).
  GeometrySpec next = spec;
  next.K = K + 1;
  const int k = K + 1;
  const auto& par = top.parent[k];
  const auto& tags = top.tags[k];
  const int c = top.central(k);
  const int c_prev = top.central(K);
  const ChildRanges cr = child_ranges(top, k);
  const std::int32_t base = lay.stripe_begin[k];
  const std::int32_t prev_base = lay.stripe_begin[K];

  auto build_last_line = [&](double scale) {
    for (int j = 1; j <= c; ++j) {
      if (par[j - 1] == par[j]) continue;
      const double p = v[lay.ifR[base + (c + 1 - j)]];
      const double q = v[lay.ifR[prev_base + (c_prev + 1 - par[j])]];
      v[lay.ifL[base + (c + 1 - j)]] = p + scale * (p - q);
    }
    for (int j = 1; j <= c; ++j) {
      if (par[j - 1] != par[j]) continue;
      const std::int32_t p = par[j];
      const bool spike_above = tags[j] == Tag::Spike;
      const double tau = v[lay.ifR[base + (c + 1 - j)]];
      const double lo = cross_val(lay, v, k, cr.first[p]);
      const double hi = cross_val(lay, v, k, cr.last[p] + 1);
      v[lay.ifL[base + (c + 1 - j)]] =
          spike_above ? tau - rho * (tau - lo) : tau + rho * (hi - tau);
    }
    lay.materialize(v);
  };

  double scale = spec.theta;
  for (int attempt = 0; attempt <= 24; ++attempt) {
    build_last_line(scale);
    DofVector out = lay.dofvector_from(v);
    if (!validate(top, next, out)) return out;
    scale = attempt >= 23 ? 0.0 : 0.5 * scale;
  }
  const auto bad = validate(top, next, lay.dofvector_from(v));
  throw std::runtime_error("extend_level: infeasible extension at level " +
                           std::to_string(bad->level) + " index " + std::to_string(bad->index) +
                           " (" + bad->what + ")");
}

// ---------------------------------------------------------------------------
// Trace profile

TraceProfile trace_profile(const Topology& top, const GeometrySpec& spec, const DofVector& y,
                           double x) {
  spec.check();
  const double xK = spec.x(spec.K);
  if (x < xK - 1e-15 || x > spec.L + 1e-15)
    throw std::invalid_argument("trace_profile: x outside [x_K, L]");

  // Quarter cell: breakpoints descending from the midline plus region signs.
  std::vector<double> bp;
  std::vector<int> sign;
  if (x >= spec.x(0) - 1e-15) {
    sign = {-1};  // unbranched facet below the midline
  } else {
    const Layout lay = build_layout(top, spec.free_facet_tips);
    const std::vector<double> v = lay.state_from(y);
    int k = 1;
    while (k < spec.K && x < spec.x(k)) ++k;
    const double t = (x - spec.x(k)) / spec.stripe_width(k);
    const int m = lay.m(k);
    const std::int32_t base = lay.stripe_begin[k];
    for (int i = 1; i <= m; ++i) {
      const double vl = v[lay.ifL[base + i]];
      const double vr = v[lay.ifR[base + i]];
      bp.push_back(vl + (vr - vl) * t);
    }
    for (int i = 0; i <= m; ++i) sign.push_back(lay.sigma(k, i));
  }

  std::vector<double> qb = {kMid};
  std::vector<double> qv = {0.0};
  for (std::size_t i = 0; i < bp.size(); ++i) {
    qv.push_back(qv.back() + sign[i] * (bp[i] - qb.back()));
    qb.push_back(bp[i]);
  }
  qv.push_back(qv.back() + sign.back() * (kBot - qb.back()));
  qb.push_back(kBot);

  TraceProfile prof;
  prof.N = spec.N;
  auto push = [&](double b, double val) {
    if (!prof.breakpoints.empty() && b <= prof.breakpoints.back() + 1e-15) return;
    prof.breakpoints.push_back(b);
    prof.values.push_back(val);
  };
  prof.breakpoints.push_back(0.0);
  prof.values.push_back(qv.front());  // u(0) = u(1/2) = 0
  // [0, 1/4]: u(y) = u(1/2 - y); qb descends 1/2 -> 1/4 as y ascends 0 -> 1/4.
  for (std::size_t i = 1; i < qb.size(); ++i) push(kMid - qb[i], qv[i]);
  // [1/4, 1/2]: the quarter itself, ascending.
  for (std::size_t i = qb.size(); i-- > 0;) push(qb[i], qv[i]);
  // [1/2, 3/4]: u(y) = -u(1 - y) with 1 - y in the quarter.
  for (std::size_t i = 1; i < qb.size(); ++i) push(1.0 - qb[i], -qv[i]);
  // [3/4, 1]: u(y) = -u(1 - y) with 1 - y in [0, 1/4].
  for (std::size_t i = qb.size(); i-- > 0;) push(0.5 + qb[i], -qv[i]);
  return prof;
}

double TraceProfile::eval(double y) const {
  double t = y * N;
  t -= std::floor(t);
  auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
  std::size_t i = it == breakpoints.begin() ? 0 : static_cast<std::size_t>(it - breakpoints.begin()) - 1;
  if (i + 1 >= breakpoints.size()) i = breakpoints.size() - 2;
  const double h = breakpoints[i + 1] - breakpoints[i];
  const double w = h > 0 ? (t - breakpoints[i]) / h : 0.0;
  return (values[i] * (1.0 - w) + values[i + 1] * w) / N;
}

double TraceProfile::norm_sq() const {
  double q = 0.0;
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
    const double h = breakpoints[i + 1] - breakpoints[i];
    const double a = values[i], b = values[i + 1];
    q += h / 3.0 * (a * a + a * b + b * b);
  }
  return q / (N * N);
}

// ---------------------------------------------------------------------------
// JSON serialization

std::string geometry_to_json(const Topology& top, const GeometrySpec& spec, const DofVector& y) {
  (void)top;
  nlohmann::ordered_json j;
  j["schema"] = "branchopt-geometry-1";
  j["scheme"] = scheme_string(spec.scheme);
  j["K"] = spec.K;
  j["theta"] = spec.theta;
  j["l"] = spec.l;
  j["L"] = spec.L;
  j["N"] = spec.N;
  j["epsilon"] = spec.epsilon;
  j["free_facet_tips"] = spec.free_facet_tips;
  nlohmann::ordered_json xs = nlohmann::ordered_json::array();
  for (int k = 0; k <= spec.K; ++k) xs.push_back(spec.x(k));
  j["level_lines"] = std::move(xs);
  nlohmann::ordered_json lines = nlohmann::ordered_json::array();
  for (const auto& ln : y.lines) lines.push_back(ln);
  j["lines"] = std::move(lines);
  return j.dump(2);
}

void geometry_from_json(const std::string& text, GeometrySpec& spec, DofVector& y) {
  const auto j = nlohmann::json::parse(text);
  spec.scheme = scheme_from_string(j.at("scheme").get<std::string>());
  spec.K = j.at("K").get<int>();
  spec.theta = j.at("theta").get<double>();
  spec.l = j.at("l").get<double>();
  spec.L = j.at("L").get<double>();
  spec.N = j.at("N").get<double>();
  spec.epsilon = j.at("epsilon").get<double>();
  if (j.contains("free_facet_tips")) spec.free_facet_tips = j.at("free_facet_tips").get<bool>();
  y.lines.clear();
  for (const auto& ln : j.at("lines")) y.lines.push_back(ln.get<std::vector<double>>());
}

}  // namespace branchopt
