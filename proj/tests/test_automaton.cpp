#include <doctest.h>
#include <algorithm>
#include <cmath>

#include "branchopt/automaton.hpp"

using namespace branchopt;

TEST_CASE("rewrite rules") {
  const Scheme& nw = scheme(SchemeName::NEW);
  const Scheme& km = scheme(SchemeName::KM);
  const Scheme& li = scheme(SchemeName::L);

  CHECK(rewrite(nw, Word::parse("f")).str() == "f|s|f");
  CHECK(rewrite(nw, Word::parse("s")).str() == "t");
  CHECK(rewrite(nw, Word::parse("t")).str() == "f|s|f");
  CHECK(rewrite(km, Word::parse("f|s|f")).str() == "f|s|f|t|f|s|f");
  CHECK(rewrite(km, Word::parse("t")).str() == "t");
  CHECK(rewrite(li, Word::parse("s")).str() == "f|s|f");
}

TEST_CASE("rewrite preserves word validity on reachable words") {
  for (SchemeName sn : {SchemeName::NEW, SchemeName::KM, SchemeName::L}) {
    const Scheme& sch = scheme(sn);
    Word w = Word::parse("f");
    for (int k = 0; k < 12; ++k) {
      w = rewrite(sch, w);
      CAPTURE(scheme_string(sn));
      CAPTURE(k);
      REQUIRE(w.valid());
    }
  }
}

TEST_CASE("scheme constants") {
  const Scheme& nw = scheme(SchemeName::NEW);
  CHECK(nw.growth_base == doctest::Approx(1.0 + std::sqrt(2.0)));
  CHECK(nw.theta_min == doctest::Approx(1.0 / (3.0 + 2.0 * std::sqrt(2.0))));
  CHECK(nw.theta_max == doctest::Approx(std::sqrt(2.0) - 1.0));
  CHECK(scheme(SchemeName::KM).theta_min == doctest::Approx(0.25));
  CHECK(scheme(SchemeName::KM).theta_max == doctest::Approx(0.5));
  CHECK(scheme(SchemeName::L).theta_min == doctest::Approx(1.0 / 9.0));
  CHECK(scheme(SchemeName::L).theta_max == doctest::Approx(1.0 / 3.0));
  for (SchemeName sn : {SchemeName::NEW, SchemeName::KM, SchemeName::L})
    CHECK(rewrite(scheme(sn), Word::parse("f|f")).str() == "f|s|f|f|s|f");
}

TEST_CASE("build_topology basics") {
  CHECK_THROWS(build_topology(scheme(SchemeName::NEW), 0));

  const Topology t1 = build_topology(scheme(SchemeName::NEW), 1);
  CHECK(t1.word(0).str() == "f");
  CHECK(t1.word(1).str() == "f|s|f");
  REQUIRE(t1.needles.size() == 1);
  CHECK(t1.needles[0].central);
  CHECK(t1.needles[0].root == -1);

  // One rewrite step gives exactly one spike, born inside a facet.
  const Topology t3 = build_topology(scheme(SchemeName::NEW), 3);
  int s_count = 0;
  const Word w3 = t3.word(3);
  for (Tag t : w3.letters)
    if (t == Tag::Spike) ++s_count;
  CHECK(s_count == 5);  // s_3 for the half pattern

  const Topology l2 = build_topology(scheme(SchemeName::L), 2);
  for (Tag t : l2.word(2).letters) CHECK(t != Tag::Trunk);
}

TEST_CASE("genealogy: NEW spike parents are trunks or facets, trunk parents are spikes") {
  const Topology top = build_topology(scheme(SchemeName::NEW), 6);
  for (int k = 1; k <= 6; ++k) {
    for (std::size_t j = 0; j < top.tags[k].size(); ++j) {
      const Tag t = top.tags[k][j];
      const Tag p = top.tags[k - 1][top.parent[k][j]];
      if (t == Tag::Spike) CHECK((p == Tag::Trunk || p == Tag::Facet));
      if (t == Tag::Trunk) CHECK(p == Tag::Spike);
    }
  }
}

TEST_CASE("periodic cell") {
  const Topology top = build_topology(scheme(SchemeName::NEW), 3);

  // I_1 = 6 interfaces in stripe 1 of the periodic cell.
  CHECK(cell_interface_count_literal(top, 1) == 6);

  // Mirroring twice restores the letter sequence.
  const Word w = top.word(3);
  Word rev = w;
  std::reverse(rev.letters.begin(), rev.letters.end());
  Word rev2 = rev;
  std::reverse(rev2.letters.begin(), rev2.letters.end());
  CHECK(rev2 == w);

  // The cell midline (the join of the two halves) is an interface.
  const Word cell = periodic_cell_word(top, 2);
  CHECK(cell.letters[cell.letters.size() / 2] == Tag::Interface);
  CHECK(cell.valid());
}

TEST_CASE("spike counts") {
  const Scheme& nw = scheme(SchemeName::NEW);
  CHECK_THROWS(spike_count(nw, 0));
  CHECK(spike_count(nw, 1) == 1);
  CHECK(spike_count(nw, 2) == 2);
  CHECK(spike_count(nw, 3) == 5);
  CHECK(spike_count(nw, 4) == 12);
  CHECK(spike_count(nw, 5) == 29);
  CHECK(spike_count(scheme(SchemeName::KM), 5) == 16);
  CHECK(spike_count(scheme(SchemeName::L), 3) == 9);

  // Pell recursion, exact integers.
  for (int i = 3; i <= 20; ++i)
    CHECK(spike_count(nw, i) == 2 * spike_count(nw, i - 1) + spike_count(nw, i - 2));
}

TEST_CASE("interface counts: closed form, direct sum, and literal cell count") {
  CHECK(closed_interface_count(scheme(SchemeName::NEW), 2) == 14);
  CHECK(closed_interface_count(scheme(SchemeName::KM), 2) == 14);
  CHECK(closed_interface_count(scheme(SchemeName::L), 1) == 6);
  CHECK_THROWS(closed_interface_count(scheme(SchemeName::NEW), 0));

  for (SchemeName sn : {SchemeName::NEW, SchemeName::KM, SchemeName::L}) {
    const Scheme& sch = scheme(sn);
    const Topology top = build_topology(sch, 12);
    for (int k = 1; k <= 12; ++k) {
      CAPTURE(scheme_string(sn));
      CAPTURE(k);
      const std::int64_t closed = closed_interface_count(sch, k);
      CHECK(closed == direct_interface_count(sch, k));
      CHECK(closed == cell_interface_count_literal(top, k));
    }
  }
}

TEST_CASE("interface count growth rate approaches the growth base") {
  for (SchemeName sn : {SchemeName::NEW, SchemeName::KM, SchemeName::L}) {
    const Scheme& sch = scheme(sn);
    const double ratio = static_cast<double>(closed_interface_count(sch, 16)) /
                         static_cast<double>(closed_interface_count(sch, 15));
    CHECK(std::abs(ratio / sch.growth_base - 1.0) < 0.01);
  }
}

TEST_CASE("counters reject the overflow range") {
  CHECK_THROWS(spike_count(scheme(SchemeName::L), 41));
  CHECK_THROWS(closed_interface_count(scheme(SchemeName::NEW), 41));
}

TEST_CASE("needle roots: chains inherit the origin tip") {
  // NEW: the spike born from a trunk is the chain interior; facet-born spikes
  // are free. Chains collapse to their origin (midline or a free needle).
  const Topology top = build_topology(scheme(SchemeName::NEW), 6);
  for (const Needle& n : top.needles) {
    if (n.root >= 0) {
      const Needle& origin = top.needles[n.root];
      CHECK(origin.root == -2);
    }
  }
  // KM never nests needles.
  const Topology km = build_topology(scheme(SchemeName::KM), 6);
  for (const Needle& n : km.needles) CHECK((n.root == -2 || n.root == -1));
}
