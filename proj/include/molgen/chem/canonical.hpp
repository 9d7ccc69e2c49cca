// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "molgen/chem/mol_graph.hpp"

namespace molgen {

namespace detail {

// One round of neighborhood refinement: atoms are re-ranked by
// (current rank, sorted multiset of (bond order, neighbor rank)).
inline std::vector<int> refine_ranks(const MolGraph& g, std::vector<int> ranks,
                                     const std::vector<std::vector<int>>& adj) {
  const int n = g.atom_count();
  for (;;) {
    std::vector<std::pair<std::vector<int>, int>> signatures(n);
    for (int i = 0; i < n; ++i) {
      std::vector<int> sig;
      sig.push_back(ranks[i]);
      std::vector<std::pair<int, int>> neigh;
      for (int edge : adj[i]) {
        neigh.emplace_back(static_cast<int>(g.bonds[edge].order), ranks[g.other_end(edge, i)]);
      }
      std::sort(neigh.begin(), neigh.end());
      for (auto& [order, rank] : neigh) {
        sig.push_back(order);
        sig.push_back(rank);
      }
      signatures[i] = {std::move(sig), i};
    }
    std::map<std::vector<int>, int> rank_of;
    for (const auto& [sig, idx] : signatures) rank_of.emplace(sig, 0);
    int next = 0;
    for (auto& [sig, rank] : rank_of) rank = next++;
    std::vector<int> updated(n);
    for (const auto& [sig, idx] : signatures) updated[idx] = rank_of[sig];
    if (updated == ranks) return ranks;
    ranks = std::move(updated);
  }
}

inline std::string serialize_in_order(const MolGraph& g, const std::vector<int>& ranks) {
  const int n = g.atom_count();
  std::vector<int> position(n);
  for (int i = 0; i < n; ++i) position[ranks[i]] = i;
  std::string out;
  out += std::to_string(n);
  out += ';';
  for (int r = 0; r < n; ++r) {
    const Atom& atom = g.atoms[position[r]];
    out += symbol(atom.element);
    if (atom.aromatic) out += '\'';
    out += 'h';
    out += std::to_string(atom.explicit_h + atom.implicit_h);
    out += ',';
  }
  out += '|';
  std::vector<std::tuple<int, int, int>> edges;
  for (const Bond& bond : g.bonds) {
    int a = ranks[bond.a], b = ranks[bond.b];
    if (a > b) std::swap(a, b);
    edges.emplace_back(a, b, static_cast<int>(bond.order));
  }
  std::sort(edges.begin(), edges.end());
  for (const auto& [a, b, order] : edges) {
    out += std::to_string(a);
    out += '-';
    out += std::to_string(b);
    out += ':';
    out += std::to_string(order);
    out += ',';
  }
  return out;
}

inline bool ranks_discrete(const std::vector<int>& ranks) {
  std::vector<bool> seen(ranks.size(), false);
  for (int r : ranks) {
    if (seen[r]) return false;
    seen[r] = true;
  }
  return true;
}

// Individualization-refinement search for the lexicographically smallest
// serialization. Ties after refinement are broken by individualizing each
// member of the first tied cell in turn.
inline void canonical_search(const MolGraph& g, const std::vector<std::vector<int>>& adj,
                             std::vector<int> ranks, std::string& best) {
  ranks = refine_ranks(g, std::move(ranks), adj);
  if (ranks_discrete(ranks)) {
    std::string candidate = serialize_in_order(g, ranks);
    if (best.empty() || candidate < best) best = std::move(candidate);
    return;
  }
  const int n = g.atom_count();
  int target_rank = -1;
  for (int r = 0; r < n && target_rank < 0; ++r) {
    int count = 0;
    for (int i = 0; i < n; ++i) count += ranks[i] == r;
    if (count > 1) target_rank = r;
  }
  for (int i = 0; i < n; ++i) {
    if (ranks[i] != target_rank) continue;
    std::vector<int> branched(ranks);
    for (int j = 0; j < n; ++j) {
      if (branched[j] > target_rank || (branched[j] == target_rank && j != i)) ++branched[j];
    }
    canonical_search(g, adj, std::move(branched), best);
  }
}

}  // namespace detail

// Opaque string equal exactly for isomorphic molecular graphs. Initial ranks
// come from (element, aromatic flag, total hydrogens, degree); refinement and
// individualization make the ordering canonical.
inline std::string canonical_key(const MolGraph& g) {
  const int n = g.atom_count();
  if (n == 0) return "0;|";
  const auto adj = g.adjacency();
  std::vector<std::tuple<int, int, int, int>> invariant(n);
  for (int i = 0; i < n; ++i) {
    invariant[i] = {static_cast<int>(g.atoms[i].element), g.atoms[i].aromatic ? 1 : 0,
                    g.atoms[i].explicit_h + g.atoms[i].implicit_h, static_cast<int>(adj[i].size())};
  }
  std::map<std::tuple<int, int, int, int>, int> rank_of;
  for (const auto& inv : invariant) rank_of.emplace(inv, 0);
  int next = 0;
  for (auto& [inv, rank] : rank_of) rank = next++;
  std::vector<int> ranks(n);
  for (int i = 0; i < n; ++i) ranks[i] = rank_of[invariant[i]];

  std::string best;
  detail::canonical_search(g, adj, std::move(ranks), best);
  return best;
}

}  // namespace molgen
