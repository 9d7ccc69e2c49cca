// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "molgen/tensor/tensor.hpp"

namespace molgen {

struct AttentionWeights {
  // (.., heads, query-len, key-len); rows sum to 1, masked entries exactly 0.
  Tensor scores;
};

// Additive attention masks: 0 keeps a position, -inf removes it.
inline constexpr double kMaskOff = -std::numeric_limits<double>::infinity();

inline Tensor causal_mask(int len) {
  std::vector<double> m(static_cast<std::size_t>(len) * len, 0.0);
  for (int i = 0; i < len; ++i) {
    for (int j = i + 1; j < len; ++j) m[i * len + j] = kMaskOff;
  }
  return Tensor::from(std::move(m), {len, len});
}

// Per-batch additive mask over keys, optionally causal, shaped for direct
// addition to (batch, heads, query_len, key_len) logits.
inline Tensor build_mask(const std::vector<std::vector<bool>>& key_valid, int heads, int query_len,
                         bool causal) {
  const int batch = static_cast<int>(key_valid.size());
  const int key_len = static_cast<int>(key_valid[0].size());
  std::vector<double> m(static_cast<std::size_t>(batch) * heads * query_len * key_len, 0.0);
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      for (int q = 0; q < query_len; ++q) {
        double* row = m.data() + ((static_cast<std::size_t>(b) * heads + h) * query_len + q) * key_len;
        for (int k = 0; k < key_len; ++k) {
          if (!key_valid[b][k] || (causal && k > q)) row[k] = kMaskOff;
        }
      }
    }
  }
  return Tensor::from(std::move(m), {batch, heads, query_len, key_len});
}

// Softmax(Q K^T / sqrt(d_k) + mask) V.
inline std::pair<Tensor, AttentionWeights> scaled_dot_attention(
    const Tensor& q, const Tensor& k, const Tensor& v, const std::optional<Tensor>& mask = std::nullopt) {
  const int d_q = q.dim(-1), d_k = k.dim(-1);
  if (d_q != d_k) {
    throw Error(ErrorCode::ShapeMismatch,
                "query dim " + std::to_string(d_q) + " vs key dim " + std::to_string(d_k));
  }
  std::vector<int> perm(q.rank());
  for (int i = 0; i < q.rank(); ++i) perm[i] = i;
  std::swap(perm[q.rank() - 1], perm[q.rank() - 2]);
  Tensor logits = scale(matmul(q, permute(k, perm)), 1.0 / std::sqrt(static_cast<double>(d_k)));
  if (mask) logits = add(logits, *mask);
  Tensor weights = softmax_last(logits);
  return {matmul(weights, v), AttentionWeights{weights}};
}

struct MultiHeadParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  int heads = 1;
};

// Per-head projected attention, concatenated and output-projected. Inputs are
// (batch, seq, d_model); the optional mask is (batch, heads, q_len, kv_len).
inline std::pair<Tensor, AttentionWeights> multi_head_attention(
    const Tensor& x_q, const Tensor& x_kv, const MultiHeadParams& p,
    const std::optional<Tensor>& mask = std::nullopt) {
  const int batch = x_q.dim(0), q_len = x_q.dim(1), kv_len = x_kv.dim(1);
  const int d_model = x_q.dim(-1);
  if (d_model % p.heads != 0) {
    throw Error(ErrorCode::ShapeMismatch, "d_model not divisible by head count");
  }
  const int d_head = d_model / p.heads;

  auto project = [&](const Tensor& x, const Tensor& w, const Tensor& b, int len) {
    Tensor flat = add(matmul(reshape(x, {batch * len, d_model}), w), b);
    // (batch, len, heads, d_head) -> (batch, heads, len, d_head)
    return permute(reshape(flat, {batch, len, p.heads, d_head}), {0, 2, 1, 3});
  };
  Tensor q = project(x_q, p.wq, p.bq, q_len);
  Tensor k = project(x_kv, p.wk, p.bk, kv_len);
  Tensor v = project(x_kv, p.wv, p.bv, kv_len);

  auto [attended, weights] = scaled_dot_attention(q, k, v, mask);
  Tensor merged = reshape(permute(attended, {0, 2, 1, 3}), {batch * q_len, d_model});
  Tensor out = reshape(add(matmul(merged, p.wo), p.bo), {batch, q_len, d_model});
  return {out, weights};
}

// Sinusoidal positional encoding: sin on even columns, cos on odd ones,
// geometric wavelengths up to 10000.
inline Tensor positional_encoding(int len, int d_model) {
  if (len < 1 || d_model % 2 != 0) {
    throw Error(ErrorCode::ShapeMismatch, "positional encoding needs len >= 1 and even d_model");
  }
  std::vector<double> pe(static_cast<std::size_t>(len) * d_model);
  for (int pos = 0; pos < len; ++pos) {
    for (int i = 0; i < d_model / 2; ++i) {
      const double rate = std::pow(10000.0, -2.0 * i / d_model);
      pe[pos * d_model + 2 * i] = std::sin(pos * rate);
      pe[pos * d_model + 2 * i + 1] = std::cos(pos * rate);
    }
  }
  return Tensor::from(std::move(pe), {len, d_model});
}

}  // namespace molgen
