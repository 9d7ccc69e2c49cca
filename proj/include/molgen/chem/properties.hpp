// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "molgen/chem/mol_graph.hpp"

namespace molgen {

// Graph-derived stand-ins for the three conditioning properties, so the full
// train -> generate -> score loop runs without external chemistry software:
//   [0] carbon fraction balance, lipophilicity-like, in [-1, 1]
//   [1] 20 * (N + O count), surface-area-like
//   [2] ring count / (1 + heavy atoms), bounded composite
inline std::array<double, 3> proxy_properties(const MolGraph& g) {
  int heavy = 0, carbons = 0, nitrogens = 0, oxygens = 0;
  for (const Atom& atom : g.atoms) {
    if (atom.element == Element::H) continue;
    ++heavy;
    if (atom.element == Element::C) ++carbons;
    if (atom.element == Element::N) ++nitrogens;
    if (atom.element == Element::O) ++oxygens;
  }
  const int hetero = heavy - carbons;
  std::array<double, 3> props{};
  props[0] = heavy == 0 ? 0.0 : static_cast<double>(carbons - hetero) / heavy;
  props[1] = 20.0 * (nitrogens + oxygens);
  props[2] = static_cast<double>(ring_count(g)) / (1.0 + heavy);
  return props;
}

}  // namespace molgen
