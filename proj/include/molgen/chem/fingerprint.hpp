// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "molgen/chem/mol_graph.hpp"
#include "molgen/error.hpp"

namespace molgen {

struct Fingerprint {
  std::vector<std::uint64_t> bits;
  int nbits = 0;
  int radius = 0;

  bool test(int i) const { return (bits[i >> 6] >> (i & 63)) & 1; }
  void set(int i) { bits[i >> 6] |= std::uint64_t{1} << (i & 63); }

  int popcount() const {
    int count = 0;
    for (auto word : bits) count += __builtin_popcountll(word);
    return count;
  }
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  return mix64(seed ^ (value + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

}  // namespace detail

// Circular-substructure fingerprint: each atom starts from a hash of its
// local invariant, then folds in sorted (bond order, neighbor hash) pairs one
// shell at a time; every environment up to the radius sets one bit.
inline Fingerprint fingerprint(const MolGraph& g, int radius = 2, int nbits = 1024) {
  Fingerprint fp;
  fp.nbits = nbits;
  fp.radius = radius;
  fp.bits.assign((nbits + 63) / 64, 0);
  const int n = g.atom_count();
  if (n == 0) return fp;

  const auto adj = g.adjacency();
  std::vector<std::uint64_t> env(n);
  for (int i = 0; i < n; ++i) {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    h = detail::hash_combine(h, static_cast<std::uint64_t>(g.atoms[i].element));
    h = detail::hash_combine(h, g.atoms[i].aromatic ? 1 : 0);
    h = detail::hash_combine(h, static_cast<std::uint64_t>(g.atoms[i].explicit_h + g.atoms[i].implicit_h));
    h = detail::hash_combine(h, adj[i].size());
    env[i] = h;
  }

  for (int round = 0; round <= radius; ++round) {
    for (int i = 0; i < n; ++i) fp.set(static_cast<int>(env[i] % nbits));
    if (round == radius) break;
    std::vector<std::uint64_t> next(n);
    for (int i = 0; i < n; ++i) {
      std::vector<std::pair<int, std::uint64_t>> shell;
      for (int edge : adj[i]) {
        shell.emplace_back(static_cast<int>(g.bonds[edge].order), env[g.other_end(edge, i)]);
      }
      std::sort(shell.begin(), shell.end());
      std::uint64_t h = detail::hash_combine(0x452821e638d01377ULL, env[i]);
      for (const auto& [order, neighbor] : shell) {
        h = detail::hash_combine(h, static_cast<std::uint64_t>(order));
        h = detail::hash_combine(h, neighbor);
      }
      next[i] = h;
    }
    env = std::move(next);
  }
  return fp;
}

// |a AND b| / |a OR b|; 0 when both sets are empty.
inline double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  if (a.nbits != b.nbits) {
    throw Error(ErrorCode::WidthMismatch,
                std::to_string(a.nbits) + " vs " + std::to_string(b.nbits) + " bits");
  }
  int both = 0, either = 0;
  for (std::size_t w = 0; w < a.bits.size(); ++w) {
    both += __builtin_popcountll(a.bits[w] & b.bits[w]);
    either += __builtin_popcountll(a.bits[w] | b.bits[w]);
  }
  return either == 0 ? 0.0 : static_cast<double>(both) / either;
}

}  // namespace molgen
