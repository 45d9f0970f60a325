#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "branchopt/energy.hpp"
#include "branchopt/geometry.hpp"

using namespace branchopt;

namespace {

GeometrySpec make_spec(SchemeName sn, int K, double theta = 0) {
  const Scheme& sch = scheme(sn);
  GeometrySpec spec;
  spec.scheme = sn;
  spec.K = K;
  spec.theta = theta > 0 ? theta : std::sqrt(sch.theta_min * sch.theta_max);
  spec.l = 0.25;
  spec.L = 0.5;
  spec.N = 2.0;
  spec.epsilon = 0.013;
  return spec;
}

// Independent full-cell elastic energy: mirrors the quarter-cell interfaces
// into the whole period [0,1], rebuilds regions between consecutive
// interfaces, anchors u_x = 0 on the region containing the midline and sweeps
// outwards in both directions. Only the interface ordinates are shared with
// the implementation under test.
double full_cell_elastic(const Topology& top, const GeometrySpec& spec, const DofVector& y) {
  const Layout lay = build_layout(top, spec.free_facet_tips);
  const std::vector<double> v = lay.state_from(y);
  double total = 0;
  for (int k = 1; k <= spec.K; ++k) {
    const int m = lay.m(k);
    const double w = spec.stripe_width(k);
    const std::int32_t base = lay.stripe_begin[k];

    // Quarter interfaces (left ordinate, right ordinate), midline-down.
    std::vector<std::pair<double, double>> quarter;
    for (int i = 1; i <= m; ++i)
      quarter.push_back({v[lay.ifL[base + i]], v[lay.ifR[base + i]]});

    // Full-cell interfaces, descending in y. The period consists of the
    // quarter, its reflection about 1/2, its reflection about 1/4, and its
    // half-period translation y + 1/2 (which lands in [3/4, 1]), plus the two
    // straight interfaces at 3/4 and 1/4.
    std::vector<std::pair<double, double>> ifs;
    ifs.push_back({0.75, 0.75});
    ifs.push_back({0.25, 0.25});
    for (const auto& [a, b] : quarter) {
      ifs.push_back({a, b});
      ifs.push_back({1.0 - a, 1.0 - b});
      ifs.push_back({0.5 - a, 0.5 - b});
      ifs.push_back({0.5 + a, 0.5 + b});
    }
    std::sort(ifs.begin(), ifs.end(),
              [](const auto& p, const auto& q) { return p.first > q.first; });

    // Region r lies between ifs[r-1] (above) and ifs[r] (below); region 0
    // touches y = 1. Locate the region containing y = 1/2.
    const int n_if = static_cast<int>(ifs.size());
    int mid_region = 0;
    while (mid_region < n_if && ifs[mid_region].first > 0.5) ++mid_region;

    // The quarter's region touching the midline from below has sign
    // sigma(k, 0); regions alternate.
    std::vector<int> sign(n_if + 1);
    sign[mid_region] = lay.sigma(k, 0);
    for (int r = mid_region + 1; r <= n_if; ++r) sign[r] = -sign[r - 1];
    for (int r = mid_region - 1; r >= 0; --r) sign[r] = -sign[r + 1];

    // Crossing an interface in either direction adds 2 sign(region left
    // behind) * slope of that interface.
    std::vector<double> ux(n_if + 1, 0.0);
    for (int r = mid_region + 1; r <= n_if; ++r) {
      const double slope = (ifs[r - 1].second - ifs[r - 1].first) / w;
      ux[r] = ux[r - 1] + 2.0 * sign[r - 1] * slope;
    }
    for (int r = mid_region - 1; r >= 0; --r) {
      const double slope = (ifs[r].second - ifs[r].first) / w;
      ux[r] = ux[r + 1] + 2.0 * sign[r + 1] * slope;
    }

    for (int r = 0; r <= n_if; ++r) {
      const double top_l = r == 0 ? 1.0 : ifs[r - 1].first;
      const double top_r = r == 0 ? 1.0 : ifs[r - 1].second;
      const double bot_l = r == n_if ? 0.0 : ifs[r].first;
      const double bot_r = r == n_if ? 0.0 : ifs[r].second;
      const double area = 0.5 * w * ((top_l - bot_l) + (top_r - bot_r));
      total += ux[r] * ux[r] * area;
    }
  }
  return 4.0 / (spec.N * spec.N) * total / 4.0;  // full cell covers 4 quarters
}

}  // namespace

TEST_CASE("initial geometry is feasible across schemes, levels and theta") {
  for (SchemeName sn : {SchemeName::NEW, SchemeName::KM, SchemeName::L}) {
    const Scheme& sch = scheme(sn);
    for (int K : {1, 2, 3, 5, 8}) {
      const Topology top = build_topology(sch, K);
      for (double f : {0.1, 0.5, 0.9}) {
        GeometrySpec spec = make_spec(sn, K, sch.theta_min + f * (sch.theta_max - sch.theta_min));
        CAPTURE(scheme_string(sn));
        CAPTURE(K);
        CAPTURE(spec.theta);
        const DofVector y = initial_geometry(top, spec);
        CHECK_FALSE(validate(top, spec, y).has_value());
      }
    }
  }
}

TEST_CASE("initial geometry feasible at depth") {
  for (SchemeName sn : {SchemeName::NEW, SchemeName::KM, SchemeName::L}) {
    const int K = sn == SchemeName::L ? 12 : 14;  // L at 14 is exercised by the acceptance run
    const Topology top = build_topology(scheme(sn), K);
    const GeometrySpec spec = make_spec(sn, K);
    const DofVector y = initial_geometry(top, spec);
    CHECK_FALSE(validate(top, spec, y).has_value());
  }
}

TEST_CASE("K = 1 splits the quarter cell evenly") {
  const Topology top = build_topology(scheme(SchemeName::NEW), 1);
  const GeometrySpec spec = make_spec(SchemeName::NEW, 1);
  const DofVector y = initial_geometry(top, spec);
  REQUIRE(y.lines.size() == 2);
  // Line 0 carries the central tip at the midline; line 1 one crossing at 3/8.
  REQUIRE(y.lines[0].size() == 1);
  CHECK(y.lines[0][0] == doctest::Approx(0.5));
  REQUIRE(y.lines[1].size() == 1);
  CHECK(y.lines[1][0] == doctest::Approx(0.375));
}

TEST_CASE("validate flags a swapped pair and reports its position") {
  const Topology top = build_topology(scheme(SchemeName::NEW), 3);
  const GeometrySpec spec = make_spec(SchemeName::NEW, 3);
  DofVector y = initial_geometry(top, spec);
  REQUIRE(y.lines[3].size() >= 2);
  std::swap(y.lines[3][0], y.lines[3][1]);
  const auto bad = validate(top, spec, y);
  REQUIRE(bad.has_value());
  CHECK(bad->level == 3);
  CHECK(bad->gap < 0);
}

TEST_CASE("validate is monotone in the margin") {
  const Topology top = build_topology(scheme(SchemeName::KM), 4);
  GeometrySpec spec = make_spec(SchemeName::KM, 4);
  DofVector y = initial_geometry(top, spec);
  spec.delta_geom = 1e-12;
  CHECK_FALSE(validate(top, spec, y).has_value());
  spec.delta_geom = 1e-9;
  CHECK_FALSE(validate(top, spec, y).has_value());
  spec.delta_geom = 0.2;  // larger than any real gap
  CHECK(validate(top, spec, y).has_value());
}

TEST_CASE("pinned tips off their anchor are rejected") {
  const Topology top = build_topology(scheme(SchemeName::NEW), 3);
  const GeometrySpec spec = make_spec(SchemeName::NEW, 3);
  DofVector y = initial_geometry(top, spec);
  const Layout lay = build_layout(top, spec.free_facet_tips);
  bool found = false;
  for (int i = 0; i < lay.n_nodes() && !found; ++i) {
    if (lay.kind[i] == NodeKind::TipPin) {
      int k = 0;
      while (lay.line_begin[k + 1] <= i) ++k;
      y.lines[k][i - lay.line_begin[k] - 1] += 1e-6;
      found = true;
    }
  }
  REQUIRE(found);
  CHECK(validate(top, spec, y).has_value());
}

TEST_CASE("regions: counts, partition of stripe area, signs") {
  const Topology top = build_topology(scheme(SchemeName::NEW), 2);
  const GeometrySpec spec = make_spec(SchemeName::NEW, 2);
  const DofVector y = initial_geometry(top, spec);
  const auto regs = regions(top, spec, y);

  // Region count per stripe = interfaces inside the quarter cell + 1.
  CHECK(regs[1].size() == 2);  // f|s -> one interior interface
  CHECK(regs[2].size() == 4);  // f|s|f|t -> three

  for (int k = 1; k <= 2; ++k) {
    double area = 0;
    for (const Region& r : regs[k]) area += r.area;
    const double stripe = spec.stripe_width(k) * 0.25;
    CHECK(area == doctest::Approx(stripe).epsilon(1e-12));
    CHECK(regs[k][0].ux == 0.0);
    for (std::size_t i = 1; i < regs[k].size(); ++i)
      CHECK(regs[k][i].uy_sign == -regs[k][i - 1].uy_sign);
  }
}

TEST_CASE("areas sum to the stripe area for deep patterns") {
  for (SchemeName sn : {SchemeName::NEW, SchemeName::KM, SchemeName::L}) {
    const int K = 7;
    const Topology top = build_topology(scheme(sn), K);
    const GeometrySpec spec = make_spec(sn, K);
    const DofVector y = initial_geometry(top, spec);
    const auto regs = regions(top, spec, y);
    for (int k = 1; k <= K; ++k) {
      double area = 0;
      for (const Region& r : regs[k]) area += r.area;
      CHECK(area == doctest::Approx(spec.stripe_width(k) * 0.25).epsilon(1e-12));
    }
  }
}

TEST_CASE("quarter-cell elastic energy x4 equals the reflected full cell") {
  for (SchemeName sn : {SchemeName::NEW, SchemeName::KM, SchemeName::L}) {
    for (int K : {1, 2, 3, 4}) {
      const Topology top = build_topology(scheme(sn), K);
      const GeometrySpec spec = make_spec(sn, K);
      const DofVector y = initial_geometry(top, spec);
      const double quarter = elastic_energy(top, spec, y);
      const double full = full_cell_elastic(top, spec, y);
      CAPTURE(scheme_string(sn));
      CAPTURE(K);
      CHECK(quarter == doctest::Approx(full).epsilon(1e-12));
    }
  }
}

TEST_CASE("extension preserves old ordinates and stays feasible") {
  const Scheme& sch = scheme(SchemeName::NEW);
  Topology top = build_topology(sch, 4);
  GeometrySpec spec = make_spec(SchemeName::NEW, 4);
  DofVector y = initial_geometry(top, spec);
  for (int K = 4; K < 10; ++K) {
    grow_topology(top, sch);
    const DofVector y2 = extend_level(top, spec, y);
    for (int k = 0; k + 1 <= spec.K; ++k) CHECK(y2.lines[k] == y.lines[k]);
    // Line K keeps its crossing values as a subsequence.
    {
      std::size_t pos = 0;
      for (double v : y.lines[spec.K]) {
        while (pos < y2.lines[spec.K].size() && y2.lines[spec.K][pos] != v) ++pos;
        CAPTURE(spec.K);
        REQUIRE(pos < y2.lines[spec.K].size());
      }
    }
    spec.K = K + 1;
    CHECK_FALSE(validate(top, spec, y2).has_value());
    y = y2;
  }
}

TEST_CASE("trace profile: uniform sawtooth in the unbranched region") {
  const Topology top = build_topology(scheme(SchemeName::NEW), 2);
  const GeometrySpec spec = make_spec(SchemeName::NEW, 2);
  const DofVector y = initial_geometry(top, spec);

  const TraceProfile prof = trace_profile(top, spec, y, 0.3);  // x in (l, L)
  CHECK(prof.eval(0.0) == doctest::Approx(0.0));
  CHECK(prof.eval(0.5) == doctest::Approx(0.0));
  CHECK(prof.eval(1.0) == doctest::Approx(0.0));
  CHECK(prof.norm_sq() == doctest::Approx(1.0 / (48.0 * spec.N * spec.N)).epsilon(1e-12));

  // Numerical quadrature of eval() agrees with norm_sq.
  const int n = 20000;
  double q = 0;
  for (int i = 0; i < n; ++i) {
    const double yy = (i + 0.5) / n;
    const double u = prof.eval(yy);
    q += u * u / n;
  }
  CHECK(q == doctest::Approx(prof.norm_sq()).epsilon(1e-4));

  CHECK_THROWS(trace_profile(top, spec, y, spec.L + 0.1));
  CHECK_THROWS(trace_profile(top, spec, y, 0.5 * spec.x(spec.K)));
}

TEST_CASE("trace profile at the finest line integrates consistently") {
  const Topology top = build_topology(scheme(SchemeName::NEW), 4);
  const GeometrySpec spec = make_spec(SchemeName::NEW, 4);
  const DofVector y = initial_geometry(top, spec);
  const TraceProfile prof = trace_profile(top, spec, y, spec.x(4));
  const int n = 40000;
  double q = 0;
  for (int i = 0; i < n; ++i) {
    const double yy = (i + 0.5) / n;
    const double u = prof.eval(yy);
    q += u * u / n;
  }
  CHECK(q == doctest::Approx(prof.norm_sq()).epsilon(1e-3));
  CHECK(prof.eval(0.5) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("geometry JSON round trip") {
  const Topology top = build_topology(scheme(SchemeName::L), 3);
  const GeometrySpec spec = make_spec(SchemeName::L, 3);
  const DofVector y = initial_geometry(top, spec);
  const std::string text = geometry_to_json(top, spec, y);
  GeometrySpec spec2;
  DofVector y2;
  geometry_from_json(text, spec2, y2);
  CHECK(spec2.scheme == spec.scheme);
  CHECK(spec2.K == spec.K);
  CHECK(spec2.theta == doctest::Approx(spec.theta));
  REQUIRE(y2.lines.size() == y.lines.size());
  for (std::size_t k = 0; k < y.lines.size(); ++k) CHECK(y2.lines[k] == y.lines[k]);
}
