// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "molgen/chem/vocabulary.hpp"
#include "molgen/nn/blocks.hpp"
#include "molgen/tensor/tensor.hpp"

namespace molgen {

struct ConditionSet {
  std::array<double, 3> values{};
};

// Zero-mean unit-variance standardization of the three condition scalars,
// fitted on the training set and persisted in the checkpoint.
struct ConditionStats {
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};

  static ConditionStats fit(const std::vector<std::array<double, 3>>& rows) {
    ConditionStats s;
    if (rows.empty()) return s;
    for (int p = 0; p < 3; ++p) {
      double m = 0.0;
      for (const auto& row : rows) m += row[p];
      m /= rows.size();
      double var = 0.0;
      for (const auto& row : rows) var += (row[p] - m) * (row[p] - m);
      var /= rows.size();
      s.mean[p] = m;
      s.stddev[p] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

  ConditionSet standardize(const ConditionSet& c) const {
    ConditionSet out;
    for (int p = 0; p < 3; ++p) out.values[p] = (c.values[p] - mean[p]) / stddev[p];
    return out;
  }
};

struct ModelConfig {
  int d_model = 512;
  int heads = 8;
  int blocks = 6;
  int d_ff = 2048;
  int latent_dim = 128;
  int max_len = kMaxSequenceLength;
  double dropout = 0.3;
};

struct LatentPacket {
  Tensor mu, logvar, z;  // (batch, seq, latent)
};

// Closed-form KL against the standard normal prior, summed over positions and
// latent dims, averaged over the leading batch dim (1 for rank < 3). The
// optional mask zeroes contributions of padded positions.
inline Tensor kl_term(const Tensor& mu, const Tensor& logvar, const Tensor& mask = Tensor()) {
  if (mu.shape() != logvar.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "kl_term shapes " + shape_str(mu.shape()));
  }
  for (double v : mu.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "kl_term mu");
  }
  for (double v : logvar.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "kl_term logvar");
  }
  Tensor per_dim = sub(add_scalar(add(mul(mu, mu), exp(logvar)), -1.0), logvar);
  if (mask.defined()) per_dim = mul(per_dim, mask);
  const int batch = mu.rank() >= 3 ? mu.dim(0) : 1;
  return scale(sum(per_dim), 0.5 / batch);
}

// z = mu + exp(logvar / 2) * noise; gradients flow to mu and logvar only.
inline Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& noise) {
  if (mu.shape() != logvar.shape() || mu.shape() != noise.shape()) {
    throw Error(ErrorCode::ShapeMismatch, "reparameterize shapes");
  }
  return add(mu, mul(exp(scale(logvar, 0.5)), noise));
}

// The conditional variational transformer: a Pre-LN encoder/decoder pair with
// a per-position Gaussian bottleneck in between. Conditions ride along the
// sequence axis: three embedded rows are prepended both to the encoder input
// and to the expanded latent memory the decoder cross-attends to.
class CvaeModel {
 public:
  CvaeModel() = default;

  CvaeModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    const int d = cfg.d_model;
    enc_embed_ = named(xavier_init(Vocabulary::encoder().size(), d, rng), "enc_embed");
    dec_embed_ = named(xavier_init(Vocabulary::decoder().size(), d, rng), "dec_embed");
    cond_w_ = named(uniform_init({3, d}, std::sqrt(6.0 / (1 + d)), rng), "cond_w");
    cond_b_ = named(Tensor::zeros({3, d}), "cond_b");
    for (int i = 0; i < cfg.blocks; ++i) {
      enc_blocks_.push_back(make_encoder_block(i, rng));
    }
    enc_final_ln_ = make_ln("enc_final", rng);
    w_mu_ = named(xavier_init(d, cfg.latent_dim, rng), "w_mu");
    b_mu_ = named(Tensor::zeros({cfg.latent_dim}), "b_mu");
    w_logvar_ = named(xavier_init(d, cfg.latent_dim, rng), "w_logvar");
    b_logvar_ = named(Tensor::zeros({cfg.latent_dim}), "b_logvar");
    w_expand_ = named(xavier_init(cfg.latent_dim, d, rng), "w_expand");
    b_expand_ = named(Tensor::zeros({d}), "b_expand");
    for (int i = 0; i < cfg.blocks; ++i) {
      dec_blocks_.push_back(make_decoder_block(i, rng));
    }
    dec_final_ln_ = make_ln("dec_final", rng);
    w_out_ = named(xavier_init(d, Vocabulary::decoder().size(), rng), "w_out");
    b_out_ = named(Tensor::zeros({Vocabulary::decoder().size()}), "b_out");
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }

  // Scalar conditions -> (batch, 3, d_model) rows via per-property affine maps.
  Tensor embed_conditions(const std::vector<ConditionSet>& conds) const {
    const int batch = static_cast<int>(conds.size());
    const int d = cfg_.d_model;
    std::vector<double> spread(static_cast<std::size_t>(batch) * 3 * d);
    for (int b = 0; b < batch; ++b) {
      for (int p = 0; p < 3; ++p) {
        const double c = conds[b].values[p];
        if (!std::isfinite(c)) throw Error(ErrorCode::NonFinite, "condition value");
        std::fill_n(spread.begin() + (static_cast<std::size_t>(b) * 3 + p) * d, d, c);
      }
    }
    Tensor c_full = Tensor::from(std::move(spread), {batch, 3, d});
    return add(mul(c_full, cond_w_), cond_b_);
  }

  // Encoder over (conditions ++ tokens); returns (batch, 3 + seq, d_model).
  Tensor encode(const std::vector<int>& enc_ids, int batch, int seq,
                const std::vector<ConditionSet>& conds,
                const std::vector<std::vector<bool>>& token_valid, bool training, Rng* rng,
                std::vector<AttentionWeights>* trace = nullptr) const {
    const int d = cfg_.d_model;
    Tensor tok = reshape(embedding(enc_ids, enc_embed_), {batch, seq, d});
    tok = add(scale(tok, std::sqrt(static_cast<double>(d))), positional_encoding(seq, d));
    if (rng) tok = dropout(tok, cfg_.dropout, *rng, training);
    Tensor x = concat({embed_conditions(conds), tok}, 1);

    std::vector<std::vector<bool>> key_valid(batch, std::vector<bool>(3 + seq, true));
    for (int b = 0; b < batch; ++b) {
      for (int s = 0; s < seq; ++s) key_valid[b][3 + s] = token_valid[b][s];
    }
    const Tensor mask = build_mask(key_valid, cfg_.heads, 3 + seq, false);
    for (const auto& block : enc_blocks_) {
      x = encoder_block(x, block, mask, cfg_.dropout, rng, training, trace);
    }
    return layer_norm(x, enc_final_ln_.gamma, enc_final_ln_.beta);
  }

  // Two linear heads over the token positions of the encoder output.
  std::pair<Tensor, Tensor> posterior(const Tensor& enc_out) const {
    const int batch = enc_out.dim(0), full = enc_out.dim(1), d = enc_out.dim(2);
    const int seq = full - 3;
    Tensor tokens = reshape(slice(enc_out, 1, 3, seq), {batch * seq, d});
    Tensor mu = reshape(add(matmul(tokens, w_mu_), b_mu_), {batch, seq, cfg_.latent_dim});
    Tensor logvar = reshape(add(matmul(tokens, w_logvar_), b_logvar_), {batch, seq, cfg_.latent_dim});
    return {mu, logvar};
  }

  // (batch, seq, latent) -> (batch, 3 + seq, d_model) memory with condition
  // rows in front and the expanded latent code behind.
  Tensor expand_latent(const Tensor& z, const std::vector<ConditionSet>& conds) const {
    const int batch = z.dim(0), seq = z.dim(1);
    Tensor flat = reshape(z, {batch * seq, cfg_.latent_dim});
    Tensor expanded = reshape(add(matmul(flat, w_expand_), b_expand_), {batch, seq, cfg_.d_model});
    return concat({embed_conditions(conds), expanded}, 1);
  }

  // Decoder over shifted token ids with causal self-attention and
  // cross-attention into the latent memory; returns (batch, seq, vocab).
  Tensor decode(const std::vector<int>& dec_ids, int batch, int seq, const Tensor& memory,
                const std::vector<std::vector<bool>>& memory_valid,
                const std::vector<std::vector<bool>>& token_valid, bool training, Rng* rng) const {
    const int d = cfg_.d_model;
    Tensor x = reshape(embedding(dec_ids, dec_embed_), {batch, seq, d});
    x = add(scale(x, std::sqrt(static_cast<double>(d))), positional_encoding(seq, d));
    if (rng) x = dropout(x, cfg_.dropout, *rng, training);

    const Tensor self_mask = build_mask(token_valid, cfg_.heads, seq, true);
    const Tensor mem_mask = build_mask(memory_valid, cfg_.heads, seq, false);
    for (const auto& block : dec_blocks_) {
      x = decoder_block(x, memory, block, self_mask, mem_mask, cfg_.dropout, rng, training);
    }
    x = layer_norm(x, dec_final_ln_.gamma, dec_final_ln_.beta);
    Tensor logits = add(matmul(reshape(x, {batch * seq, d}), w_out_), b_out_);
    return reshape(logits, {batch, seq, Vocabulary::decoder().size()});
  }

  Tensor find_parameter(const std::string& name) const {
    for (const auto& [n, t] : params_) {
      if (n == name) return t;
    }
    throw Error(ErrorCode::CorruptFile, "unknown parameter " + name);
  }

 private:
  Tensor named(Tensor t, const std::string& name) {
    t.set_requires_grad(true);
    params_.emplace_back(name, t);
    return t;
  }

  LayerNormParams make_ln(const std::string& prefix, Rng&) {
    LayerNormParams ln;
    ln.gamma = named(Tensor::full({cfg_.d_model}, 1.0), prefix + ".gamma");
    ln.beta = named(Tensor::zeros({cfg_.d_model}), prefix + ".beta");
    return ln;
  }

  MultiHeadParams make_mha(const std::string& prefix, Rng& rng) {
    const int d = cfg_.d_model;
    MultiHeadParams p;
    p.heads = cfg_.heads;
    p.wq = named(xavier_init(d, d, rng), prefix + ".wq");
    p.bq = named(Tensor::zeros({d}), prefix + ".bq");
    p.wk = named(xavier_init(d, d, rng), prefix + ".wk");
    p.bk = named(Tensor::zeros({d}), prefix + ".bk");
    p.wv = named(xavier_init(d, d, rng), prefix + ".wv");
    p.bv = named(Tensor::zeros({d}), prefix + ".bv");
    p.wo = named(xavier_init(d, d, rng), prefix + ".wo");
    p.bo = named(Tensor::zeros({d}), prefix + ".bo");
    return p;
  }

  FeedForwardParams make_ff(const std::string& prefix, Rng& rng) {
    FeedForwardParams p;
    p.w1 = named(xavier_init(cfg_.d_model, cfg_.d_ff, rng), prefix + ".w1");
    p.b1 = named(Tensor::zeros({cfg_.d_ff}), prefix + ".b1");
    p.w2 = named(xavier_init(cfg_.d_ff, cfg_.d_model, rng), prefix + ".w2");
    p.b2 = named(Tensor::zeros({cfg_.d_model}), prefix + ".b2");
    return p;
  }

  EncoderBlockParams make_encoder_block(int index, Rng& rng) {
    const std::string prefix = "enc." + std::to_string(index);
    EncoderBlockParams block;
    block.attn = make_mha(prefix + ".attn", rng);
    block.ln_attn = make_ln(prefix + ".ln_attn", rng);
    block.ff = make_ff(prefix + ".ff", rng);
    block.ln_ff = make_ln(prefix + ".ln_ff", rng);
    return block;
  }

  DecoderBlockParams make_decoder_block(int index, Rng& rng) {
    const std::string prefix = "dec." + std::to_string(index);
    DecoderBlockParams block;
    block.self_attn = make_mha(prefix + ".self", rng);
    block.ln_self = make_ln(prefix + ".ln_self", rng);
    block.cross_attn = make_mha(prefix + ".cross", rng);
    block.ln_cross = make_ln(prefix + ".ln_cross", rng);
    block.ff = make_ff(prefix + ".ff", rng);
    block.ln_ff = make_ln(prefix + ".ln_ff", rng);
    return block;
  }

  ModelConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> params_;

  Tensor enc_embed_, dec_embed_;
  Tensor cond_w_, cond_b_;
  std::vector<EncoderBlockParams> enc_blocks_;
  LayerNormParams enc_final_ln_;
  Tensor w_mu_, b_mu_, w_logvar_, b_logvar_;
  Tensor w_expand_, b_expand_;
  std::vector<DecoderBlockParams> dec_blocks_;
  LayerNormParams dec_final_ln_;
  Tensor w_out_, b_out_;
};

}  // namespace molgen
