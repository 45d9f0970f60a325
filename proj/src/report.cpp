#include "branchopt/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <json.hpp>

namespace branchopt {

double constant_C(double minF, double L, double eps) {
  if (!(minF > 0) || !(L > 0) || !(eps > 0))
    throw std::invalid_argument("constant_C: inputs must be positive");
  return minF * std::pow(L, -1.0 / 3.0) * std::pow(eps, -2.0 / 3.0);
}

// ---------------------------------------------------------------------------
// Needle extraction

namespace {

// Bottom-up interface value at line k, anchors included.
double iface_val(const Layout& lay, const std::vector<double>& v, int k, int j) {
  const int c = lay.top->central(k);
  if (j <= 0) return 0.25;
  if (j > c) return 0.5;
  return v[lay.ifL[lay.stripe_begin[k] + (c + 1 - j)]];
}

}  // namespace

std::vector<NeedleShape> needle_shapes(const Topology& top, const GeometrySpec& spec,
                                       const DofVector& y) {
  const Layout lay = build_layout(top, spec.free_facet_tips);
  const std::vector<double> v = lay.state_from(y);

  // Follow each needle's bounding interfaces through the levels: at birth the
  // spike sits at letter index s; at later levels the bounds are the edges of
  // the chain letter's subtree span.
  std::vector<NeedleShape> shapes;
  for (std::size_t n = 0; n < top.needles.size(); ++n) {
    const Needle& nd = top.needles[n];
    const int b = nd.birth_level;
    if (b + 1 > top.K) continue;  // no closing segment yet
    NeedleShape sh;
    sh.birth_level = b;
    sh.central = nd.central;
    const std::int32_t tip_node = lay.tip_node_of_needle[n];
    sh.x_tip = spec.x(b - 1);
    const double tip_y = v[tip_node];
    (void)tip_y;

    // Track the subtree spanned by the birth letter through levels b..K.
    int lo_letter = nd.birth_letter, hi_letter = nd.birth_letter;
    double best_ext = 0;
    double lo_prev = 0, up_prev = 0, lo_cur = 0, up_cur = 0;
    for (int k = b; k <= top.K; ++k) {
      if (k > b) {
        // Advance to the children range.
        const auto& par = top.parent[k];
        int new_lo = -1, new_hi = -1;
        for (std::int32_t j = 0; j < static_cast<std::int32_t>(par.size()); ++j) {
          if (par[j] >= lo_letter && par[j] <= hi_letter) {
            if (new_lo < 0) new_lo = j;
            new_hi = j;
          }
        }
        lo_letter = new_lo;
        hi_letter = new_hi;
      }
      const double lo_v = iface_val(lay, v, k, lo_letter);
      const bool central_span = hi_letter >= top.central(k);
      const double up_v = central_span ? 1.0 - lo_v : iface_val(lay, v, k, hi_letter + 1);
      const double ext = up_v - lo_v;
      if (ext > best_ext) best_ext = ext;
      if (k == b) {
        lo_prev = lo_v;
        up_prev = up_v;
      } else if (k == b + 1) {
        lo_cur = lo_v;
        up_cur = up_v;
      }
    }
    sh.y_extent = best_ext;

    const double h_b = up_prev - lo_prev;
    const double h_n = up_cur - lo_cur;
    if (h_b > h_n) {
      const double xb = spec.x(b), xn = spec.x(b + 1);
      sh.x_close = xb - (xb - xn) * h_b / (h_b - h_n);
      if (sh.x_close < 0) sh.x_close = 0;
    } else {
      sh.x_close = 0;  // bounding interfaces do not converge
    }
    shapes.push_back(sh);
  }
  std::sort(shapes.begin(), shapes.end(), [](const NeedleShape& a, const NeedleShape& b) {
    if (a.y_extent != b.y_extent) return a.y_extent > b.y_extent;
    return a.birth_level < b.birth_level;
  });
  return shapes;
}

double needle_aspect(const Topology& top, const GeometrySpec& spec, const DofVector& y, int rank) {
  if (rank < 1) throw std::invalid_argument("needle_aspect: rank must be >= 1");
  const auto shapes = needle_shapes(top, spec, y);
  if (rank > static_cast<int>(shapes.size()))
    throw std::invalid_argument("needle_aspect: rank exceeds needle count");
  return shapes[rank - 1].aspect(spec.N);
}

// ---------------------------------------------------------------------------
// SVG rendering

namespace {

struct Pt {
  double x, y;
};

using Poly = std::vector<Pt>;

Poly clip_halfplane(const Poly& poly, int axis, double bound, int keep_sign) {
  // keep points with keep_sign * (coord - bound) >= 0
  Poly out;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Pt& a = poly[i];
    const Pt& b = poly[(i + 1) % n];
    const double da = keep_sign * ((axis == 0 ? a.x : a.y) - bound);
    const double db = keep_sign * ((axis == 0 ? b.x : b.y) - bound);
    if (da >= 0) out.push_back(a);
    if ((da < 0) != (db < 0)) {
      const double t = da / (da - db);
      out.push_back(Pt{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
    }
  }
  return out;
}

Poly clip_rect(Poly poly, const Window& w) {
  poly = clip_halfplane(poly, 0, w.x0, +1);
  if (poly.empty()) return poly;
  poly = clip_halfplane(poly, 0, w.x1, -1);
  if (poly.empty()) return poly;
  poly = clip_halfplane(poly, 1, w.y0, +1);
  if (poly.empty()) return poly;
  poly = clip_halfplane(poly, 1, w.y1, -1);
  return poly;
}

double poly_area(const Poly& p) {
  double a = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Pt& u = p[i];
    const Pt& v = p[(i + 1) % p.size()];
    a += u.x * v.y - v.x * u.y;
  }
  return 0.5 * std::abs(a);
}

std::string fnum(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// The four images tiling the periodic cell from the quarter [1/4, 1/2]:
// identity, reflection about the midline, reflection about 1/4, and the
// half-period translation. sign_flip tells whether u_y changes sign.
struct Mirror {
  double a, b;   // y -> a + b*y
  bool sign_flip;
};

constexpr Mirror kMirrors[4] = {
    {0.0, 1.0, false},   // identity
    {1.0, -1.0, false},  // about the midline
    {0.5, -1.0, true},   // about 1/4
    {0.5, 1.0, true},    // translation into [3/4, 1]
};

template <typename PolyFn, typename SegFn>
void enumerate_cell(const Topology& top, const GeometrySpec& spec, const DofVector& y,
                    const Window& win, PolyFn&& emit_poly, SegFn&& emit_seg) {
  const Layout lay = build_layout(top, spec.free_facet_tips);
  const std::vector<double> v = lay.state_from(y);

  for (const Mirror& mir : kMirrors) {
    auto map_y = [&](double yy) { return mir.a + mir.b * yy; };
    // Branched stripes.
    for (int k = 1; k <= spec.K; ++k) {
      const int m = lay.m(k);
      const double xl = spec.x(k), xr = spec.x(k - 1);
      const std::int32_t base = lay.stripe_begin[k];
      for (int i = 0; i <= m; ++i) {
        const double lhi = v[lay.ifL[base + i]], llo = v[lay.ifL[base + i + 1]];
        const double rhi = v[lay.ifR[base + i]], rlo = v[lay.ifR[base + i + 1]];
        Poly poly = {Pt{xl, map_y(llo)}, Pt{xl, map_y(lhi)}, Pt{xr, map_y(rhi)},
                     Pt{xr, map_y(rlo)}};
        int sign = lay.sigma(k, i);
        if (mir.sign_flip) sign = -sign;
        Poly clipped = clip_rect(poly, win);
        if (clipped.size() >= 3 && poly_area(clipped) > 1e-18) emit_poly(clipped, sign);
      }
      for (int i = 1; i <= m; ++i) {
        Poly seg = {Pt{xl, map_y(v[lay.ifL[base + i]])}, Pt{xr, map_y(v[lay.ifR[base + i]])}};
        emit_seg(seg);
      }
    }
    // Unbranched stripe (l, L): one facet region per mirror.
    {
      const double xl = spec.x(0), xr = spec.L;
      if (xr > xl) {
        Poly poly = {Pt{xl, map_y(0.25)}, Pt{xl, map_y(0.5)}, Pt{xr, map_y(0.5)},
                     Pt{xr, map_y(0.25)}};
        int sign = mir.sign_flip ? +1 : -1;
        Poly clipped = clip_rect(poly, win);
        if (clipped.size() >= 3 && poly_area(clipped) > 1e-18) emit_poly(clipped, sign);
      }
    }
  }
  // Straight interfaces at y = 1/4 and y = 3/4 across the whole domain.
  for (double yy : {0.25, 0.75}) {
    Poly seg = {Pt{spec.x(spec.K), yy}, Pt{spec.L, yy}};
    emit_seg(seg);
  }
}

}  // namespace

std::string render_svg(const Topology& top, const GeometrySpec& spec, const DofVector& y,
                       const Window& win) {
  if (!(win.x1 > win.x0) || !(win.y1 > win.y0))
    throw std::invalid_argument("render_svg: empty window");
  const double width = 900.0;
  const double height = width * (win.y1 - win.y0) / (win.x1 - win.x0);
  const double sx = width / (win.x1 - win.x0);
  const double sy = height / (win.y1 - win.y0);
  auto X = [&](double x) { return (x - win.x0) * sx; };
  auto Y = [&](double yy) { return (win.y1 - yy) * sy; };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fnum(width) + "\" height=\"" +
         fnum(height) + "\" viewBox=\"0 0 " + fnum(width) + " " + fnum(height) + "\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + fnum(width) + "\" height=\"" + fnum(height) +
         "\" fill=\"#ffffff\"/>\n";

  std::string polys, segs;
  enumerate_cell(
      top, spec, y, win,
      [&](const Poly& p, int sign) {
        polys += "<polygon points=\"";
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (i) polys += ' ';
          polys += fnum(X(p[i].x)) + "," + fnum(Y(p[i].y));
        }
        polys += std::string("\" fill=\"") + (sign > 0 ? "#c23b22" : "#3b6fb5") + "\"/>\n";
      },
      [&](const Poly& s) {
        // Clip the segment against the window.
        Pt a = s[0], b = s[1];
        auto clip_seg = [&](Pt& u, Pt& w) -> bool {
          double t0 = 0, t1 = 1;
          const double dx = w.x - u.x, dy = w.y - u.y;
          auto upd = [&](double p, double q) -> bool {
            if (p == 0) return q >= 0;
            const double r = q / p;
            if (p < 0) {
              if (r > t1) return false;
              if (r > t0) t0 = r;
            } else {
              if (r < t0) return false;
              if (r < t1) t1 = r;
            }
            return true;
          };
          if (!upd(-dx, u.x - win.x0)) return false;
          if (!upd(dx, win.x1 - u.x)) return false;
          if (!upd(-dy, u.y - win.y0)) return false;
          if (!upd(dy, win.y1 - u.y)) return false;
          const Pt nu{u.x + t0 * dx, u.y + t0 * dy};
          const Pt nw{u.x + t1 * dx, u.y + t1 * dy};
          u = nu;
          w = nw;
          return t1 > t0;
        };
        if (clip_seg(a, b))
          segs += "<line x1=\"" + fnum(X(a.x)) + "\" y1=\"" + fnum(Y(a.y)) + "\" x2=\"" +
                  fnum(X(b.x)) + "\" y2=\"" + fnum(Y(b.y)) +
                  "\" stroke=\"#000000\" stroke-width=\"0.6\"/>\n";
      });
  svg += polys;
  svg += segs;
  svg += "</svg>\n";
  return svg;
}

int render_polygon_count(const Topology& top, const GeometrySpec& spec, const DofVector& y,
                         const Window& win) {
  int count = 0;
  enumerate_cell(
      top, spec, y, win, [&](const Poly&, int) { ++count; }, [&](const Poly&) {});
  return count;
}

// ---------------------------------------------------------------------------
// Scaling sweep

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("fit_slope: need at least two points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return sxy / sxx;
}

SweepResult scaling_sweep(SchemeName scheme, const OptimizerConfig& cfg,
                          const std::vector<double>& eps_list, double L) {
  if (eps_list.size() < 2) throw std::invalid_argument("scaling_sweep: need >= 2 epsilon values");
  SweepResult sweep;
  bool all_ok = true;
  for (double eps : eps_list) {
    const OptimizationTrace tr = continuation(scheme, cfg, eps, L);
    SweepPoint p;
    p.epsilon = eps;
    p.converged = !tr.levels.empty() && !tr.degenerate && tr.converged &&
                  tr.levels.back().K == cfg.K_max;
    if (!tr.levels.empty()) {
      const LevelRecord& last = tr.levels.back();
      p.minF = last.energy.total;
      p.N_star = last.N;
      p.theta = last.theta;
      p.l = last.l;
      p.C = constant_C(p.minF, L, eps);
    }
    all_ok = all_ok && p.converged;
    sweep.points.push_back(p);
  }
  if (all_ok) {
    std::vector<double> lx, lf, ln;
    for (const SweepPoint& p : sweep.points) {
      lx.push_back(std::log(p.epsilon));
      lf.push_back(std::log(p.minF));
      ln.push_back(std::log(p.N_star));
    }
    sweep.p_F = fit_slope(lx, lf);
    sweep.p_N = fit_slope(lx, ln);
    sweep.valid = true;
  }
  return sweep;
}

// ---------------------------------------------------------------------------
// Scheme comparison

double ComparisonReport::relative_gap(SchemeName a, SchemeName b) const {
  const SchemeResult* ra = nullptr;
  const SchemeResult* rb = nullptr;
  for (const auto& r : rows) {
    if (r.scheme == a) ra = &r;
    if (r.scheme == b) rb = &r;
  }
  if (!ra || !rb || !ra->ok || !rb->ok)
    throw std::invalid_argument("relative_gap: scheme results unavailable");
  return (ra->energy.total - rb->energy.total) / rb->energy.total;
}

ComparisonReport compare(const std::vector<SchemeName>& schemes, const OptimizerConfig& cfg,
                         double epsilon, double L) {
  ComparisonReport rep;
  rep.epsilon = epsilon;
  rep.L = L;
  rep.n_mode = cfg.n_mode == OptimizerConfig::NMode::Fixed
                   ? "fixed:" + std::to_string(cfg.N_fixed)
                   : std::string("free");
  for (SchemeName s : schemes) {
    SchemeResult row;
    row.scheme = s;
    try {
      row.trace = continuation(s, cfg, epsilon, L);
      // Last non-degenerate level.
      for (const LevelRecord& r : row.trace.levels) {
        if (r.degenerate) {
          row.degenerate = true;
          row.degenerate_K = r.K;
          break;
        }
        row.best_K = r.K;
        row.energy = r.energy;
        row.theta = r.theta;
        row.l = r.l;
        row.N = r.N;
      }
      if (row.best_K > 0) {
        row.C = constant_C(row.energy.total, L, epsilon);
        row.ok = true;
        row.spec = row.trace.final_spec;
        row.Y = row.trace.final_Y;
        const Topology top = build_topology(scheme(s), row.spec.K);
        const auto shapes = needle_shapes(top, row.spec, row.Y);
        for (int rank = 1; rank <= 2 && rank <= static_cast<int>(shapes.size()); ++rank)
          row.aspects.push_back(shapes[rank - 1].aspect(row.spec.N));
      } else {
        row.error = "no completed level";
      }
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

std::string comparison_to_csv(const ComparisonReport& rep) {
  std::string out =
      "scheme,ok,best_K,F_total,F_elast,F_surf,F_bdry,theta,l,N,C,aspect1,aspect2,degenerate,"
      "degenerate_K\n";
  for (const SchemeResult& r : rep.rows) {
    out += scheme_string(r.scheme) + ',' + (r.ok ? "1" : "0") + ',' + std::to_string(r.best_K) +
           ',' + fmt(r.energy.total) + ',' + fmt(r.energy.elastic) + ',' + fmt(r.energy.surface) +
           ',' + fmt(r.energy.boundary) + ',' + fmt(r.theta) + ',' + fmt(r.l) + ',' + fmt(r.N) +
           ',' + fmt(r.C) + ',' + (r.aspects.size() > 0 ? fmt(r.aspects[0]) : "") + ',' +
           (r.aspects.size() > 1 ? fmt(r.aspects[1]) : "") + ',' + (r.degenerate ? "1" : "0") +
           ',' + std::to_string(r.degenerate_K) + '\n';
  }
  out += "reference,1,0," + fmt(rep.reference_C * std::pow(rep.L, 1.0 / 3.0) *
                                std::pow(rep.epsilon, 2.0 / 3.0)) +
         ",,,,,,," + fmt(rep.reference_C) + ",,,0,0\n";
  return out;
}

std::string comparison_to_json(const ComparisonReport& rep, bool include_timings) {
  nlohmann::ordered_json j;
  j["schema"] = "branchopt-comparison-1";
  j["epsilon"] = rep.epsilon;
  j["L"] = rep.L;
  j["N_mode"] = rep.n_mode;
  j["reference_C"] = rep.reference_C;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const SchemeResult& r : rep.rows) {
    nlohmann::ordered_json row;
    row["scheme"] = scheme_string(r.scheme);
    row["ok"] = r.ok;
    if (!r.error.empty()) row["error"] = r.error;
    row["best_K"] = r.best_K;
    row["F_total"] = r.energy.total;
    row["F_elast"] = r.energy.elastic;
    row["F_surf"] = r.energy.surface;
    row["F_bdry"] = r.energy.boundary;
    row["c_rem_effective"] = r.energy.c_rem_effective;
    row["theta"] = r.theta;
    row["l"] = r.l;
    row["N"] = r.N;
    row["C"] = r.C;
    row["aspects"] = r.aspects;
    row["degenerate"] = r.degenerate;
    row["degenerate_K"] = r.degenerate_K;
    row["trace"] = nlohmann::ordered_json::parse(trace_to_json(r.trace, include_timings));
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j.dump(2);
}

std::string sweep_to_csv(const SweepResult& sweep) {
  std::string out = "epsilon,minF,N_star,theta,l,C,converged\n";
  for (const SweepPoint& p : sweep.points) {
    out += fmt(p.epsilon) + ',' + fmt(p.minF) + ',' + fmt(p.N_star) + ',' + fmt(p.theta) + ',' +
           fmt(p.l) + ',' + fmt(p.C) + ',' + (p.converged ? "1" : "0") + '\n';
  }
  out += "# p_F=" + fmt(sweep.p_F) + " p_N=" + fmt(sweep.p_N) +
         " valid=" + (sweep.valid ? std::string("1") : std::string("0")) + "\n";
  return out;
}

}  // namespace branchopt
