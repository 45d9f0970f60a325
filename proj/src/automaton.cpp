#include "branchopt/automaton.hpp"

#include <limits>
#include <stdexcept>

namespace branchopt {

char tag_char(Tag t) {
  switch (t) {
    case Tag::Facet: return 'f';
    case Tag::Spike: return 's';
    case Tag::Trunk: return 't';
    case Tag::Interface: return '|';
  }
  return '?';
}

Tag tag_from_char(char c) {
  switch (c) {
    case 'f': return Tag::Facet;
    case 's': return Tag::Spike;
    case 't': return Tag::Trunk;
    case '|': return Tag::Interface;
  }
  throw std::invalid_argument(std::string("unknown letter: ") + c);
}

std::string scheme_string(SchemeName s) {
  switch (s) {
    case SchemeName::NEW: return "new";
    case SchemeName::KM: return "km";
    case SchemeName::L: return "l";
  }
  return "?";
}

SchemeName scheme_from_string(const std::string& s) {
  if (s == "new" || s == "NEW") return SchemeName::NEW;
  if (s == "km" || s == "KM") return SchemeName::KM;
  if (s == "l" || s == "L") return SchemeName::L;
  throw std::invalid_argument("unknown scheme: " + s);
}

bool Word::valid() const {
  if (letters.empty()) return false;
  if (letters.front() == Tag::Interface || letters.back() == Tag::Interface) return false;
  for (std::size_t i = 1; i < letters.size(); ++i) {
    if (letters[i] == Tag::Interface && letters[i - 1] == Tag::Interface) return false;
  }
  return true;
}

std::string Word::str() const {
  std::string s;
  s.reserve(letters.size());
  for (Tag t : letters) s.push_back(tag_char(t));
  return s;
}

Word Word::parse(const std::string& s) {
  Word w;
  w.letters.reserve(s.size());
  for (char c : s) w.letters.push_back(tag_from_char(c));
  return w;
}

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;

Scheme make_scheme(SchemeName name) {
  Scheme sch;
  sch.name = name;
  const Word fsf = Word::parse("f|s|f");
  switch (name) {
    case SchemeName::NEW:
      sch.rules = {fsf, Word::parse("t"), fsf};
      sch.growth_base = 1.0 + kSqrt2;
      break;
    case SchemeName::KM:
      sch.rules = {fsf, Word::parse("t"), Word::parse("t")};
      sch.growth_base = 2.0;
      break;
    case SchemeName::L:
      // No trunks occur in this scheme; the trunk rule is never applied.
      sch.rules = {fsf, fsf, Word::parse("t")};
      sch.growth_base = 3.0;
      break;
  }
  sch.theta_min = 1.0 / (sch.growth_base * sch.growth_base);
  sch.theta_max = 1.0 / sch.growth_base;
  return sch;
}

}  // namespace

const Scheme& scheme(SchemeName name) {
  static const Scheme schemes[3] = {make_scheme(SchemeName::NEW),
                                    make_scheme(SchemeName::KM),
                                    make_scheme(SchemeName::L)};
  return schemes[static_cast<int>(name)];
}

Word rewrite(const Scheme& sch, const Word& w) {
  if (!w.valid()) throw std::invalid_argument("rewrite: invalid word");
  Word out;
  out.letters.reserve(w.letters.size() * 3);
  for (Tag t : w.letters) {
    if (t == Tag::Interface) {
      out.letters.push_back(Tag::Interface);
    } else {
      const Word& r = sch.rule(t);
      out.letters.insert(out.letters.end(), r.letters.begin(), r.letters.end());
    }
  }
  return out;
}

namespace {

// Expands one quarter-cell level into the next. The central (last) letter
// keeps only the lower half of its expansion, ending at the new central
// letter. New spikes register needles; trunks inherit their needle.
void expand_level(Topology& top, const Scheme& sch) {
  const int k = static_cast<int>(top.tags.size()) - 1;
  const auto& cur = top.tags[k];
  const auto& cur_needle = top.needle_of[k];
  const int c = static_cast<int>(cur.size()) - 1;

  std::vector<Tag> next;
  std::vector<std::int32_t> par;
  std::vector<std::int32_t> ndl;
  next.reserve(cur.size() * 3);
  par.reserve(cur.size() * 3);
  ndl.reserve(cur.size() * 3);

  auto emit = [&](Tag t, int parent_ix) {
    next.push_back(t);
    par.push_back(parent_ix);
    std::int32_t needle_id = -1;
    if (t == Tag::Spike) {
      Needle n;
      n.birth_level = k + 1;
      n.birth_letter = static_cast<int>(next.size()) - 1;
      const Tag ptag = cur[parent_ix];
      if (ptag == Tag::Trunk || ptag == Tag::Spike) {
        // Interior needle of a chain: its tip lies on the chain origin's tip
        // line. Collapse to the origin (a free facet-born needle or the
        // midline) so the anchor resolves in one hop.
        const std::int32_t pn = cur_needle[parent_ix];
        n.root = top.needles[pn].root == -2 ? pn : top.needles[pn].root;
      } else {
        n.root = -2;  // facet-born: free tip, starts a new chain
      }
      needle_id = static_cast<std::int32_t>(top.needles.size());
      top.needles.push_back(n);
    } else if (t == Tag::Trunk) {
      needle_id = cur_needle[parent_ix];  // trunk continues its needle
    }
    ndl.push_back(needle_id);
  };

  for (int j = 0; j <= c; ++j) {
    const Word& r = sch.rule(cur[j]);
    if (j < c) {
      for (Tag t : r.letters)
        if (t != Tag::Interface) emit(t, j);
    } else {
      // Central letter: emit the lower half of the (palindromic) expansion,
      // up to and including its central letter.
      std::vector<Tag> plain;
      for (Tag t : r.letters)
        if (t != Tag::Interface) plain.push_back(t);
      const int cc = static_cast<int>(plain.size()) / 2;
      for (int i = 0; i <= cc; ++i) emit(plain[i], j);
      // The new central letter, if a spike, is the central chain: midline tip.
      if (plain[cc] == Tag::Spike) {
        Needle& n = top.needles[ndl.back()];
        n.root = -1;
        n.central = true;
      }
    }
  }

  top.tags.push_back(std::move(next));
  top.parent.push_back(std::move(par));
  top.needle_of.push_back(std::move(ndl));
  top.K = static_cast<int>(top.tags.size()) - 1;
}

}  // namespace

Topology build_topology(const Scheme& sch, int K) {
  if (K < 1) throw std::invalid_argument("build_topology: K must be >= 1");
  Topology top;
  top.scheme_name = sch.name;
  top.tags.push_back({Tag::Facet});
  top.parent.push_back({});
  top.needle_of.push_back({-1});
  top.K = 0;
  for (int k = 0; k < K; ++k) expand_level(top, sch);
  return top;
}

void grow_topology(Topology& top, const Scheme& sch) {
  if (sch.name != top.scheme_name) throw std::invalid_argument("grow_topology: scheme mismatch");
  expand_level(top, sch);
}

Word Topology::word(int k) const {
  const auto& q = tags[k];
  const int c = static_cast<int>(q.size()) - 1;
  Word w;
  w.letters.reserve(2 * q.size());
  for (int j = 0; j <= c; ++j) {
    if (j > 0) w.letters.push_back(Tag::Interface);
    w.letters.push_back(q[j]);
  }
  for (int j = c - 1; j >= 0; --j) {
    w.letters.push_back(Tag::Interface);
    w.letters.push_back(q[j]);
  }
  return w;
}

Word periodic_cell_word(const Topology& top, int k) {
  Word half = top.word(k);
  Word cell = half;
  cell.letters.push_back(Tag::Interface);  // straight interface at the join
  cell.letters.insert(cell.letters.end(), half.letters.rbegin(), half.letters.rend());
  return cell;
}

std::int64_t cell_interface_count_literal(const Topology& top, int k) {
  const Word cell = periodic_cell_word(top, k);
  std::int64_t n = 1;  // wrap-around straight interface
  for (Tag t : cell.letters)
    if (t == Tag::Interface) ++n;
  return n;
}

namespace {

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("interface count overflow");
  return r;
}

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("interface count overflow");
  return r;
}

std::int64_t ipow(std::int64_t base, int e) {
  std::int64_t r = 1;
  for (int i = 0; i < e; ++i) r = checked_mul(r, base);
  return r;
}

}  // namespace

std::int64_t spike_count(const Scheme& sch, int i) {
  if (i < 1) throw std::invalid_argument("spike_count: i must be >= 1");
  if (i > 40) throw std::overflow_error("spike_count: i > 40 exceeds exact 64-bit range");
  switch (sch.name) {
    case SchemeName::KM: return ipow(2, i - 1);
    case SchemeName::L: return ipow(3, i - 1);
    case SchemeName::NEW: {
      // Pell numbers: s_1 = 1, s_2 = 2, s_i = 2 s_{i-1} + s_{i-2}.
      std::int64_t a = 1, b = 2;
      if (i == 1) return a;
      for (int n = 3; n <= i; ++n) {
        std::int64_t next = checked_add(checked_mul(2, b), a);
        a = b;
        b = next;
      }
      return b;
    }
  }
  throw std::logic_error("unreachable");
}

std::int64_t closed_interface_count(const Scheme& sch, int k) {
  if (k < 1) throw std::invalid_argument("closed_interface_count: k must be >= 1");
  if (k > 40) throw std::overflow_error("closed_interface_count: k > 40 exceeds exact 64-bit range");
  switch (sch.name) {
    case SchemeName::KM: return checked_mul(2, ipow(2, k + 1) - 1);
    case SchemeName::L: return checked_mul(2, ipow(3, k));
    case SchemeName::NEW: {
      // H_n = alpha^n + beta^n with alpha/beta = 1 +- sqrt(2) satisfies
      // H_n = 2 H_{n-1} + H_{n-2}, H_0 = 2, H_1 = 2; I_k = H_{k+1}.
      std::int64_t a = 2, b = 2;
      for (int n = 2; n <= k + 1; ++n) {
        std::int64_t next = checked_add(checked_mul(2, b), a);
        a = b;
        b = next;
      }
      return b;
    }
  }
  throw std::logic_error("unreachable");
}

std::int64_t direct_interface_count(const Scheme& sch, int k) {
  if (k < 1) throw std::invalid_argument("direct_interface_count: k must be >= 1");
  std::int64_t sum = 0;
  for (int i = 1; i <= k; ++i) sum = checked_add(sum, spike_count(sch, i));
  return checked_add(2, checked_mul(4, sum));
}

}  // namespace branchopt
