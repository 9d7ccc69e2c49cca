// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "molgen/chem/vocabulary.hpp"
#include "molgen/error.hpp"
#include "molgen/model/cvae.hpp"
#include "molgen/rng.hpp"
#include "molgen/tensor/tensor.hpp"

namespace molgen {

// Three-axis histogram of the training-set properties: 1000 equal bins per
// axis between the observed min and max, occupied cells stored sparsely.
class PropertyHistogram {
 public:
  static constexpr int kBins = 1000;

  struct Cell {
    std::array<int, 3> index{};
  };

  PropertyHistogram() = default;

  static PropertyHistogram build(const std::vector<std::array<double, 3>>& rows) {
    if (rows.empty()) throw Error(ErrorCode::EmptyDataset, "histogram needs at least one row");
    PropertyHistogram h;
    for (int axis = 0; axis < 3; ++axis) {
      h.min_[axis] = h.max_[axis] = rows[0][axis];
    }
    for (const auto& row : rows) {
      for (int axis = 0; axis < 3; ++axis) {
        if (!std::isfinite(row[axis])) throw Error(ErrorCode::NonFinite, "property value");
        h.min_[axis] = std::min(h.min_[axis], row[axis]);
        h.max_[axis] = std::max(h.max_[axis], row[axis]);
      }
    }
    for (const auto& row : rows) {
      ++h.cells_[h.cell_key(h.locate(row))];
    }
    h.total_ = rows.size();
    return h;
  }

  Cell locate(const std::array<double, 3>& point) const {
    Cell cell;
    for (int axis = 0; axis < 3; ++axis) {
      const double width = bin_width(axis);
      int idx = width == 0.0
                    ? 0
                    : static_cast<int>(std::floor((point[axis] - min_[axis]) / width));
      cell.index[axis] = std::clamp(idx, 0, kBins - 1);
    }
    return cell;
  }

  // Draws an occupied cell with probability count / total.
  Cell sample_cell(Rng& rng) const {
    const std::uint64_t target = rng.below(total_);
    std::uint64_t seen = 0;
    for (const auto& [key, count] : cells_) {
      seen += count;
      if (target < seen) return cell_from_key(key);
    }
    return cell_from_key(cells_.rbegin()->first);
  }

  // Cell center plus per-axis uniform noise within half a cell width, so the
  // point stays inside the cell.
  std::array<double, 3> sample_point(const Cell& cell, Rng& rng) const {
    std::array<double, 3> point{};
    for (int axis = 0; axis < 3; ++axis) {
      const double width = bin_width(axis);
      const double center = min_[axis] + (cell.index[axis] + 0.5) * width;
      point[axis] = center + rng.uniform(-0.5, 0.5) * width;
    }
    return point;
  }

  std::uint64_t count_of(const Cell& cell) const {
    auto it = cells_.find(cell_key(cell));
    return it == cells_.end() ? 0 : it->second;
  }

  std::uint64_t total() const { return total_; }
  std::size_t occupied_cells() const { return cells_.size(); }
  double axis_min(int axis) const { return min_[axis]; }
  double axis_max(int axis) const { return max_[axis]; }
  double bin_width(int axis) const { return (max_[axis] - min_[axis]) / kBins; }
  const std::map<std::uint64_t, std::uint64_t>& cells() const { return cells_; }

  // Direct construction for deserialization.
  static PropertyHistogram restore(std::array<double, 3> min, std::array<double, 3> max,
                                   std::map<std::uint64_t, std::uint64_t> cells,
                                   std::uint64_t total) {
    PropertyHistogram h;
    h.min_ = min;
    h.max_ = max;
    h.cells_ = std::move(cells);
    h.total_ = total;
    return h;
  }

  static std::uint64_t cell_key(const Cell& cell) {
    return (static_cast<std::uint64_t>(cell.index[0]) * kBins + cell.index[1]) * kBins +
           cell.index[2];
  }

  static Cell cell_from_key(std::uint64_t key) {
    Cell cell;
    cell.index[2] = static_cast<int>(key % kBins);
    key /= kBins;
    cell.index[1] = static_cast<int>(key % kBins);
    cell.index[0] = static_cast<int>(key / kBins);
    return cell;
  }

 private:
  std::array<double, 3> min_{}, max_{};
  std::map<std::uint64_t, std::uint64_t> cells_;
  std::uint64_t total_ = 0;
};

inline PropertyHistogram build_histogram(const std::vector<std::array<double, 3>>& rows) {
  return PropertyHistogram::build(rows);
}

inline std::vector<ConditionSet> sample_conditions(const PropertyHistogram& h, int n, Rng& rng) {
  std::vector<ConditionSet> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const auto cell = h.sample_cell(rng);
    out.push_back(ConditionSet{h.sample_point(cell, rng)});
  }
  return out;
}

struct LengthStats {
  double mean = 0.0;
  double stddev = 0.0;

  static LengthStats from_lengths(const std::vector<int>& lengths) {
    if (lengths.empty()) throw Error(ErrorCode::EmptyDataset, "length stats need data");
    LengthStats s;
    for (int len : lengths) s.mean += len;
    s.mean /= lengths.size();
    for (int len : lengths) s.stddev += (len - s.mean) * (len - s.mean);
    s.stddev = std::sqrt(s.stddev / lengths.size());
    return s;
  }
};

// round(N(mean, std)) clamped to [1, max sequence length].
inline int sample_length(const LengthStats& stats, Rng& rng) {
  const int raw = static_cast<int>(std::lround(rng.normal(stats.mean, stats.stddev)));
  return std::clamp(raw, 1, kMaxSequenceLength);
}

// (len, latent_dim) of i.i.d. standard normal entries.
inline Tensor sample_latent(int len, int latent_dim, Rng& rng) {
  if (len < 1 || len > kMaxSequenceLength) {
    throw Error(ErrorCode::ShapeMismatch, "latent length out of range");
  }
  Tensor z = Tensor::zeros({len, latent_dim});
  for (double& v : z.values_mut()) v = rng.normal();
  return z;
}

}  // namespace molgen
