// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "molgen/chem/mol_graph.hpp"

namespace molgen {

namespace detail {

// Rebuilds a graph restricted to the kept atoms, then refills implicit
// hydrogens on the now-freed valences of non-bracket atoms.
inline MolGraph induced_subgraph(const MolGraph& g, const std::vector<bool>& keep) {
  MolGraph out;
  std::vector<int> remap(g.atom_count(), -1);
  for (int i = 0; i < g.atom_count(); ++i) {
    if (!keep[i]) continue;
    remap[i] = out.atom_count();
    out.atoms.push_back(g.atoms[i]);
  }
  for (const Bond& bond : g.bonds) {
    if (remap[bond.a] >= 0 && remap[bond.b] >= 0) {
      out.bonds.push_back({remap[bond.a], remap[bond.b], bond.order});
    }
  }
  for (const auto& [a, b] : g.ring_bond_pairs) {
    if (remap[a] >= 0 && remap[b] >= 0) out.ring_bond_pairs.emplace_back(remap[a], remap[b]);
  }
  const auto adj = out.adjacency();
  for (int i = 0; i < out.atom_count(); ++i) {
    Atom& atom = out.atoms[i];
    const bool bracket = (atom.element == Element::H) || atom.explicit_h > 0;
    if (bracket) {
      atom.implicit_h = 0;
      continue;
    }
    int total = atom.explicit_h;
    int aromatic_bonds = 0;
    bool exocyclic_multiple = false;
    for (int edge : adj[i]) {
      const BondOrder order = out.bonds[edge].order;
      if (order == BondOrder::Aromatic) {
        total += 1;
        ++aromatic_bonds;
      } else {
        total += static_cast<int>(order);
        if (order != BondOrder::Single) exocyclic_multiple = true;
      }
    }
    if (atom.aromatic && aromatic_bonds > 0 && !exocyclic_multiple &&
        (atom.element == Element::C || atom.element == Element::N)) {
      if (total + 1 <= max_valence(atom.element)) total += 1;
    }
    atom.implicit_h = fill_target(atom.element, total) - total;
  }
  return out;
}

}  // namespace detail

// Bemis-Murcko framework: repeatedly delete degree-1 atoms that are not in
// any ring, until nothing changes. Acyclic inputs reduce to the empty graph.
inline MolGraph scaffold(const MolGraph& g) {
  std::vector<bool> keep(g.atom_count(), true);
  const auto in_ring = atoms_in_rings(g);
  for (;;) {
    std::vector<int> degree(g.atom_count(), 0);
    for (const Bond& bond : g.bonds) {
      if (keep[bond.a] && keep[bond.b]) {
        ++degree[bond.a];
        ++degree[bond.b];
      }
    }
    bool changed = false;
    for (int i = 0; i < g.atom_count(); ++i) {
      if (keep[i] && degree[i] <= 1 && !in_ring[i]) {
        keep[i] = false;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return detail::induced_subgraph(g, keep);
}

}  // namespace molgen
