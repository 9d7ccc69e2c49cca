// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "molgen/nn/attention.hpp"
#include "molgen/tensor/tensor.hpp"

namespace molgen {

struct LayerNormParams {
  Tensor gamma, beta;
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;  // d_model -> d_ff -> d_model
};

struct EncoderBlockParams {
  MultiHeadParams attn;
  FeedForwardParams ff;
  LayerNormParams ln_attn, ln_ff;
};

struct DecoderBlockParams {
  MultiHeadParams self_attn, cross_attn;
  FeedForwardParams ff;
  LayerNormParams ln_self, ln_cross, ln_ff;
};

namespace detail {

// Pre-LN residual branches: normalization sits inside the branch, so zeroed
// projection weights make the whole block an exact identity.
inline Tensor attn_sublayer(const Tensor& x, const Tensor& kv, const MultiHeadParams& p,
                            const LayerNormParams& ln, const std::optional<Tensor>& mask,
                            double dropout_rate, Rng* rng, bool training,
                            std::vector<AttentionWeights>* trace) {
  Tensor normed = layer_norm(x, ln.gamma, ln.beta);
  const bool self_attention = kv.impl() == x.impl();
  const Tensor& kv_in = self_attention ? normed : kv;
  auto [attended, weights] = multi_head_attention(normed, kv_in, p, mask);
  if (trace) trace->push_back(weights);
  if (rng) attended = dropout(attended, dropout_rate, *rng, training);
  return add(x, attended);
}

inline Tensor ff_sublayer(const Tensor& x, const FeedForwardParams& p, const LayerNormParams& ln,
                          double dropout_rate, Rng* rng, bool training) {
  const int batch = x.dim(0), len = x.dim(1), d_model = x.dim(2);
  Tensor normed = reshape(layer_norm(x, ln.gamma, ln.beta), {batch * len, d_model});
  Tensor hidden = relu(add(matmul(normed, p.w1), p.b1));
  Tensor out = reshape(add(matmul(hidden, p.w2), p.b2), {batch, len, d_model});
  if (rng) out = dropout(out, dropout_rate, *rng, training);
  return add(x, out);
}

}  // namespace detail

inline Tensor encoder_block(const Tensor& x, const EncoderBlockParams& p,
                            const std::optional<Tensor>& mask, double dropout_rate = 0.0,
                            Rng* rng = nullptr, bool training = false,
                            std::vector<AttentionWeights>* trace = nullptr) {
  Tensor y = detail::attn_sublayer(x, x, p.attn, p.ln_attn, mask, dropout_rate, rng, training, trace);
  return detail::ff_sublayer(y, p.ff, p.ln_ff, dropout_rate, rng, training);
}

inline Tensor decoder_block(const Tensor& x, const Tensor& memory, const DecoderBlockParams& p,
                            const std::optional<Tensor>& self_mask,
                            const std::optional<Tensor>& memory_mask, double dropout_rate = 0.0,
                            Rng* rng = nullptr, bool training = false) {
  Tensor y = detail::attn_sublayer(x, x, p.self_attn, p.ln_self, self_mask, dropout_rate, rng,
                                   training, nullptr);
  y = detail::attn_sublayer(y, memory, p.cross_attn, p.ln_cross, memory_mask, dropout_rate, rng,
                            training, nullptr);
  return detail::ff_sublayer(y, p.ff, p.ln_ff, dropout_rate, rng, training);
}

enum class BlockMode { EncoderSelf, DecoderSelfCausal, DecoderCross };

// Single attention + feed-forward Pre-LN block in one of three wirings:
// plain self-attention, causally masked self-attention, or cross-attention
// against a memory sequence.
inline Tensor pre_ln_block(const Tensor& x, const EncoderBlockParams& p, BlockMode mode,
                           const std::optional<Tensor>& memory = std::nullopt) {
  std::optional<Tensor> mask;
  if (mode == BlockMode::DecoderSelfCausal) {
    mask = causal_mask(x.dim(1));
  }
  if (mode == BlockMode::DecoderCross && !memory) {
    throw Error(ErrorCode::ShapeMismatch, "cross mode needs a memory sequence");
  }
  const Tensor& kv = (mode == BlockMode::DecoderCross) ? *memory : x;
  Tensor y = detail::attn_sublayer(x, kv, p.attn, p.ln_attn, mask, 0.0, nullptr, false, nullptr);
  return detail::ff_sublayer(y, p.ff, p.ln_ff, 0.0, nullptr, false);
}

}  // namespace molgen
