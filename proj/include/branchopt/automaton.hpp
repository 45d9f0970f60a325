#ifndef BRANCHOPT_AUTOMATON_HPP
#define BRANCHOPT_AUTOMATON_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace branchopt {

// Letters of the branching alphabet. A needle consists of a spike (tip piece)
// and, in schemes that have them, a trunk below it; facet is the material
// outside needles. Interface separates regions of opposite shear sign.
enum class Tag : std::uint8_t { Facet, Spike, Trunk, Interface };

char tag_char(Tag t);
Tag tag_from_char(char c);

enum class SchemeName : std::uint8_t { NEW, KM, L };

std::string scheme_string(SchemeName s);
SchemeName scheme_from_string(const std::string& s);

// A word over {f, s, t, |}. In every word reachable from the initial facet,
// consecutive non-interface letters are separated by exactly one interface.
struct Word {
  std::vector<Tag> letters;

  bool valid() const;                   // no adjacent '|', ends not '|'
  std::string str() const;             // e.g. "f|s|f"
  static Word parse(const std::string& s);
  bool operator==(const Word&) const = default;
};

// Rewrite rules of one scheme plus its derived constants.
struct Scheme {
  SchemeName name;
  std::array<Word, 3> rules;  // indexed by Tag (Facet, Spike, Trunk)
  double growth_base;         // 1+sqrt(2) for NEW, 2 for KM, 3 for L
  double theta_min;           // 1/growth_base^2
  double theta_max;           // 1/growth_base

  const Word& rule(Tag t) const { return rules[static_cast<int>(t)]; }
  bool theta_admissible(double theta) const {
    return theta > theta_min && theta < theta_max;
  }
};

const Scheme& scheme(SchemeName name);

// Applies the automaton letter by letter; interfaces map to themselves.
Word rewrite(const Scheme& sch, const Word& w);

// Needle: a spike letter plus its trunk continuation (if any). Identified by
// birth level and position. anchor describes the tip rule of the needle's
// own spike: nested needles share the tip ordinate of their root chain.
struct Needle {
  int birth_level = 0;
  int birth_letter = 0;  // quarter-cell letter index at birth level
  // -1: tip pinned to the cell midline (central chain)
  // -2: free tip (facet-born needle, starts its own chain)
  // >=0: id of the needle whose tip ordinate this one inherits
  int root = -2;
  bool central = false;
};

// Branching topology of the lower quarter cell: letters are stored
// bottom-to-top up to and including the central letter of each level word.
// The full half-pattern word is the palindrome closure around that letter.
struct Topology {
  SchemeName scheme_name = SchemeName::NEW;
  int K = 0;

  // Per level k = 0..K. tags[k][j]: letter j (0 = bottom, against the
  // straight interface at y=1/4; last = central letter astride y=1/2).
  std::vector<std::vector<Tag>> tags;
  // parent[k][j]: index into level k-1 (parent[0] empty).
  std::vector<std::vector<std::int32_t>> parent;
  // needle_of[k][j]: needle id if letter j is that needle's spike or trunk,
  // else -1 for facets.
  std::vector<std::vector<std::int32_t>> needle_of;
  std::vector<Needle> needles;

  int central(int k) const { return static_cast<int>(tags[k].size()) - 1; }
  // Interfaces within the quarter cell at level k (excluding the straight
  // boundary at y=1/4 and the midline).
  int quarter_interfaces(int k) const { return central(k); }
  // Letters of the full half-pattern word at level k.
  std::int64_t half_letters(int k) const { return 2 * static_cast<std::int64_t>(central(k)) + 1; }

  // Full half-pattern word (palindrome closure), with interfaces.
  Word word(int k) const;
};

// Builds levels 0..K of the given scheme. K = 0 is rejected.
Topology build_topology(const Scheme& sch, int K);

// Extends an existing topology by one level (used by level continuation).
void grow_topology(Topology& top, const Scheme& sch);

// Linear word of the y-periodic cell at level k: half pattern, one straight
// interface, mirrored half pattern; the second straight interface closes the
// period between the last and first letter.
Word periodic_cell_word(const Topology& top, int k);

// Literal number of interfaces in stripe k of the periodic cell (counting
// the wrap-around interface).
std::int64_t cell_interface_count_literal(const Topology& top, int k);

// Number of spikes s_i in stripe i of the half pattern. Pell numbers for
// NEW (1, 2, 5, 12, ...), 2^(i-1) for KM, 3^(i-1) for L. i <= 0 rejected;
// overflow past i = 40 rejected.
std::int64_t spike_count(const Scheme& sch, int i);

// Closed-form interface count I_k of stripe k of the periodic cell:
// alpha^(k+1) + beta^(k+1) for NEW, 2(2^(k+1)-1) for KM, 2*3^k for L.
std::int64_t closed_interface_count(const Scheme& sch, int k);

// Direct count 2(1 + 2 sum_{i<=k} s_i); equals the closed form.
std::int64_t direct_interface_count(const Scheme& sch, int k);

}  // namespace branchopt

#endif
