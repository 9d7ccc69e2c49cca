// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "molgen/chem/vocabulary.hpp"
#include "molgen/error.hpp"

namespace molgen {

enum class Element : std::uint8_t { C, N, O, S, F, Cl, Br, H };

inline const char* symbol(Element e) {
  switch (e) {
    case Element::C: return "C";
    case Element::N: return "N";
    case Element::O: return "O";
    case Element::S: return "S";
    case Element::F: return "F";
    case Element::Cl: return "Cl";
    case Element::Br: return "Br";
    case Element::H: return "H";
  }
  return "?";
}

enum class BondOrder : std::uint8_t { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

struct Atom {
  Element element = Element::C;
  bool aromatic = false;
  int explicit_h = 0;  // from bracket notation ([nH])
  int implicit_h = 0;  // filled to standard valence during parsing
};

struct Bond {
  int a = 0;
  int b = 0;
  BondOrder order = BondOrder::Single;
};

struct MolGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::vector<std::pair<int, int>> ring_bond_pairs;  // bonds created by ring-closure digits

  int atom_count() const { return static_cast<int>(atoms.size()); }
  int bond_count() const { return static_cast<int>(bonds.size()); }

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(atoms.size());
    for (int i = 0; i < bond_count(); ++i) {
      adj[bonds[i].a].push_back(i);
      adj[bonds[i].b].push_back(i);
    }
    return adj;
  }

  int other_end(int bond_index, int atom_index) const {
    const Bond& bond = bonds[bond_index];
    return bond.a == atom_index ? bond.b : bond.a;
  }
};

namespace detail {

// Bridge detection (iterative DFS); edge_alive masks the subgraph considered.
inline std::vector<bool> find_bridges(const MolGraph& g, const std::vector<bool>& edge_alive) {
  const int n = g.atom_count();
  const auto adj = g.adjacency();
  std::vector<bool> is_bridge(g.bond_count(), false);
  std::vector<int> discovery(n, -1), low(n, 0);
  int clock = 0;

  struct Frame {
    int atom;
    int parent_edge;
    std::size_t next;
  };
  for (int root = 0; root < n; ++root) {
    if (discovery[root] >= 0) continue;
    std::vector<Frame> stack{{root, -1, 0}};
    discovery[root] = low[root] = clock++;
    while (!stack.empty()) {
      Frame& frame = stack.back();
      if (frame.next < adj[frame.atom].size()) {
        const int edge = adj[frame.atom][frame.next++];
        if (edge == frame.parent_edge || !edge_alive[edge]) continue;
        const int next_atom = g.other_end(edge, frame.atom);
        if (discovery[next_atom] < 0) {
          discovery[next_atom] = low[next_atom] = clock++;
          stack.push_back({next_atom, edge, 0});
        } else {
          low[frame.atom] = std::min(low[frame.atom], discovery[next_atom]);
        }
      } else {
        const Frame done = frame;
        stack.pop_back();
        if (!stack.empty()) {
          Frame& up = stack.back();
          low[up.atom] = std::min(low[up.atom], low[done.atom]);
          if (low[done.atom] > discovery[up.atom]) is_bridge[done.parent_edge] = true;
        }
      }
    }
  }
  return is_bridge;
}

}  // namespace detail

// True for each atom lying on at least one cycle.
inline std::vector<bool> atoms_in_rings(const MolGraph& g) {
  std::vector<bool> alive(g.bond_count(), true);
  const auto is_bridge = detail::find_bridges(g, alive);
  std::vector<bool> in_ring(g.atom_count(), false);
  for (int i = 0; i < g.bond_count(); ++i) {
    if (!is_bridge[i]) {
      in_ring[g.bonds[i].a] = true;
      in_ring[g.bonds[i].b] = true;
    }
  }
  return in_ring;
}

// Cyclomatic ring count: bonds - atoms + connected components.
inline int ring_count(const MolGraph& g) {
  const int n = g.atom_count();
  if (n == 0) return 0;
  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  int components = n;
  for (const Bond& bond : g.bonds) {
    const int ra = find(bond.a), rb = find(bond.b);
    if (ra != rb) {
      parent[ra] = rb;
      --components;
    }
  }
  return g.bond_count() - n + components;
}

namespace detail {

struct ParseAtomInfo {
  Element element;
  bool aromatic;
  int explicit_h;
  bool bracket;  // bracket atoms keep their written hydrogen count
};

inline std::optional<ParseAtomInfo> atom_token_info(std::string_view tok) {
  if (tok == "C") return ParseAtomInfo{Element::C, false, 0, false};
  if (tok == "c") return ParseAtomInfo{Element::C, true, 0, false};
  if (tok == "O") return ParseAtomInfo{Element::O, false, 0, false};
  if (tok == "o") return ParseAtomInfo{Element::O, true, 0, false};
  if (tok == "N") return ParseAtomInfo{Element::N, false, 0, false};
  if (tok == "n") return ParseAtomInfo{Element::N, true, 0, false};
  if (tok == "F") return ParseAtomInfo{Element::F, false, 0, false};
  if (tok == "S") return ParseAtomInfo{Element::S, false, 0, false};
  if (tok == "s") return ParseAtomInfo{Element::S, true, 0, false};
  if (tok == "Cl") return ParseAtomInfo{Element::Cl, false, 0, false};
  if (tok == "Br") return ParseAtomInfo{Element::Br, false, 0, false};
  if (tok == "[nH]") return ParseAtomInfo{Element::N, true, 1, true};
  if (tok == "[H]") return ParseAtomInfo{Element::H, false, 0, true};
  return std::nullopt;
}

inline int max_valence(Element e) {
  switch (e) {
    case Element::C: return 4;
    case Element::N: return 3;
    case Element::O: return 2;
    case Element::S: return 6;  // {2,4,6}; the fill step picks the smallest fit
    case Element::F:
    case Element::Cl:
    case Element::Br:
    case Element::H: return 1;
  }
  return 0;
}

inline int fill_target(Element e, int total) {
  if (e == Element::S) {
    for (int v : {2, 4, 6}) {
      if (total <= v) return v;
    }
    return 6;
  }
  return max_valence(e);
}

}  // namespace detail

// Parses a tokenized SMILES string into a molecular graph: branch stack,
// ring-digit pairing, aromatic bond inference, implicit hydrogen fill, and
// the valence check. Throws Error on any violation.
inline MolGraph parse_tokens(const std::vector<std::string>& tokens) {
  MolGraph g;
  std::vector<int> branch_stack;
  int last_atom = -1;
  std::optional<BondOrder> pending_bond;
  bool bracket_mode_aromatic = false;  // tracks whether [nH] participates as aromatic

  struct RingOpen {
    int atom;
    std::optional<BondOrder> order;
  };
  std::array<std::optional<RingOpen>, 10> rings;

  auto add_bond = [&](int a, int b, BondOrder order, bool from_ring) {
    if (a == b) throw Error(ErrorCode::DuplicateBond, "self bond on atom " + std::to_string(a));
    for (const Bond& bond : g.bonds) {
      if ((bond.a == a && bond.b == b) || (bond.a == b && bond.b == a)) {
        throw Error(ErrorCode::DuplicateBond,
                    "duplicate bond " + std::to_string(a) + "-" + std::to_string(b));
      }
    }
    g.bonds.push_back({a, b, order});
    if (from_ring) g.ring_bond_pairs.emplace_back(a, b);
  };

  bool prev_was_branch_open = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& tok = tokens[i];

    if (auto info = detail::atom_token_info(tok)) {
      g.atoms.push_back({info->element, info->aromatic, info->explicit_h, 0});
      const int atom = g.atom_count() - 1;
      if (last_atom >= 0) {
        BondOrder order = BondOrder::Single;
        if (pending_bond) {
          order = *pending_bond;
        } else if (g.atoms[last_atom].aromatic && info->aromatic) {
          order = BondOrder::Aromatic;
        }
        add_bond(last_atom, atom, order, false);
      }
      pending_bond.reset();
      last_atom = atom;
      prev_was_branch_open = false;
      (void)bracket_mode_aromatic;
      continue;
    }

    if (tok == "-" || tok == "=" || tok == "#") {
      if (last_atom < 0 || pending_bond) {
        throw Error(ErrorCode::BondWithoutAtom, "bond symbol at token " + std::to_string(i));
      }
      pending_bond = tok == "-"   ? BondOrder::Single
                     : tok == "=" ? BondOrder::Double
                                  : BondOrder::Triple;
      prev_was_branch_open = false;
      continue;
    }

    if (tok == "(") {
      if (last_atom < 0 || pending_bond || prev_was_branch_open) {
        throw Error(pending_bond ? ErrorCode::BondWithoutAtom : ErrorCode::UnmatchedParenthesis,
                    "branch open at token " + std::to_string(i));
      }
      branch_stack.push_back(last_atom);
      prev_was_branch_open = true;
      continue;
    }

    if (tok == ")") {
      if (branch_stack.empty()) {
        throw Error(ErrorCode::UnmatchedParenthesis, "branch close at token " + std::to_string(i));
      }
      if (pending_bond) {
        throw Error(ErrorCode::BondWithoutAtom, "dangling bond before ')' at token " + std::to_string(i));
      }
      if (prev_was_branch_open) {
        throw Error(ErrorCode::UnmatchedParenthesis, "empty branch at token " + std::to_string(i));
      }
      last_atom = branch_stack.back();
      branch_stack.pop_back();
      prev_was_branch_open = false;
      continue;
    }

    if (tok.size() == 1 && tok[0] >= '1' && tok[0] <= '6') {
      const int digit = tok[0] - '0';
      if (last_atom < 0 || prev_was_branch_open) {
        throw Error(ErrorCode::BondWithoutAtom, "ring digit with no atom at token " + std::to_string(i));
      }
      // Ring digits bind to the atom written immediately before them; a digit
      // after ')' has no such atom.
      if (i > 0 && tokens[i - 1] == ")") {
        throw Error(ErrorCode::BondWithoutAtom, "ring digit after branch close at token " + std::to_string(i));
      }
      auto& slot = rings[digit];
      if (!slot) {
        slot = detail::RingOpen{last_atom, pending_bond};
        pending_bond.reset();
      } else {
        const detail::RingOpen open = *slot;
        slot.reset();
        BondOrder order;
        if (open.order && pending_bond) {
          if (*open.order != *pending_bond) {
            throw Error(ErrorCode::DuplicateBond, "conflicting ring bond orders on digit " + tok);
          }
          order = *open.order;
        } else if (open.order) {
          order = *open.order;
        } else if (pending_bond) {
          order = *pending_bond;
        } else if (g.atoms[open.atom].aromatic && g.atoms[last_atom].aromatic) {
          order = BondOrder::Aromatic;
        } else {
          order = BondOrder::Single;
        }
        pending_bond.reset();
        add_bond(open.atom, last_atom, order, true);
      }
      prev_was_branch_open = false;
      continue;
    }

    throw Error(ErrorCode::UnknownToken, "unexpected token '" + tok + "'");
  }

  if (pending_bond) throw Error(ErrorCode::BondWithoutAtom, "dangling bond at end of string");
  if (!branch_stack.empty()) throw Error(ErrorCode::UnmatchedParenthesis, "unclosed branch");
  for (int d = 1; d <= 9; ++d) {
    if (rings[d]) throw Error(ErrorCode::UnclosedRing, "ring digit " + std::to_string(d) + " never closed");
  }
  if (g.atoms.empty()) throw Error(ErrorCode::BondWithoutAtom, "no atoms");

  // Aromatic atoms must sit on a cycle made of aromatic bonds. An aromatic
  // bond lies on such a cycle exactly when it is not a bridge of the
  // aromatic-bond subgraph.
  std::vector<bool> aromatic_edge(g.bond_count());
  for (int i = 0; i < g.bond_count(); ++i) aromatic_edge[i] = g.bonds[i].order == BondOrder::Aromatic;
  const auto is_bridge = detail::find_bridges(g, aromatic_edge);
  std::vector<bool> on_aromatic_cycle(g.atom_count(), false);
  for (int i = 0; i < g.bond_count(); ++i) {
    if (aromatic_edge[i] && !is_bridge[i]) {
      on_aromatic_cycle[g.bonds[i].a] = true;
      on_aromatic_cycle[g.bonds[i].b] = true;
    }
  }
  for (int i = 0; i < g.atom_count(); ++i) {
    if (g.atoms[i].aromatic && !on_aromatic_cycle[i]) {
      throw Error(ErrorCode::AromaticOutsideRing, "aromatic atom " + std::to_string(i) + " not in an aromatic ring");
    }
  }

  // Valence accounting. Aromatic bonds contribute one sigma unit each; c and
  // bare n additionally claim one pi unit when the atom has capacity left and
  // no exocyclic multiple bond already uses it (so O=c1... stays legal while
  // c carrying two plain substituents does not). Lone-pair donors o, s, [nH]
  // never claim the pi unit.
  const auto adj = g.adjacency();
  for (int i = 0; i < g.atom_count(); ++i) {
    Atom& atom = g.atoms[i];
    int total = atom.explicit_h;
    int aromatic_bonds = 0;
    bool exocyclic_multiple = false;
    for (int edge : adj[i]) {
      const BondOrder order = g.bonds[edge].order;
      if (order == BondOrder::Aromatic) {
        total += 1;
        ++aromatic_bonds;
      } else {
        total += static_cast<int>(order);
        if (order != BondOrder::Single) exocyclic_multiple = true;
      }
    }
    if (atom.aromatic && aromatic_bonds > 0 && atom.explicit_h == 0 && !exocyclic_multiple &&
        (atom.element == Element::C || atom.element == Element::N)) {
      const int cap = detail::max_valence(atom.element);
      if (total + 1 <= cap) total += 1;
    }
    const int cap = detail::max_valence(atom.element);
    if (total > cap) {
      throw Error(ErrorCode::ValenceExceeded,
                  std::string("atom ") + std::to_string(i) + " (" + symbol(atom.element) + ") order " +
                      std::to_string(total) + " exceeds " + std::to_string(cap));
    }
    const bool bracket = (atom.element == Element::H) || atom.explicit_h > 0;
    atom.implicit_h = bracket ? 0 : detail::fill_target(atom.element, total) - total;
  }
  return g;
}

inline MolGraph parse(std::string_view text) { return parse_tokens(tokenize_text(text)); }

struct Verdict {
  bool valid = false;
  std::string reason;  // empty when valid

  explicit operator bool() const { return valid; }
};

// Valid iff the string tokenizes, parses, and passes the valence check.
inline Verdict validate(std::string_view text) {
  try {
    const auto tokens = tokenize_text(text);
    if (tokens.size() > kMaxSequenceLength) {
      return {false, std::string(to_string(ErrorCode::SequenceTooLong))};
    }
    parse_tokens(tokens);
    return {true, ""};
  } catch (const Error& e) {
    return {false, e.what()};
  }
}

}  // namespace molgen
