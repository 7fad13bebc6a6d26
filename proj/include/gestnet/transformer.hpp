#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gestnet/nn.hpp"

namespace gestnet {

/// Dimensions of the transformer sub-network. Defaults are the full-size
/// configuration; reduced configurations are used by tests and desk runs.
struct TransformerConfig {
  std::size_t seq_len = 64;
  std::size_t d_model = 66;
  std::size_t heads = 11;
  std::size_t ff_dim = 264;
  std::size_t blocks = 3;
  std::size_t fc_width = 512;
  std::size_t classes = 14;
  double dropout = 0.5;
  double ln_eps = 1e-5;

  std::size_t head_dim() const {
    if (heads == 0 || d_model % heads != 0) {
      throw ConfigError("transformer: heads must divide d_model");
    }
    return d_model / heads;
  }
  std::size_t flatten_dim() const { return seq_len * d_model; }
};

/// Fixed sinusoidal position table [seq_len, d_model]; no trainable scalars.
inline Tensor positional_encoding(std::size_t seq_len, std::size_t d_model) {
  std::vector<double> v(seq_len * d_model);
  for (std::size_t p = 0; p < seq_len; ++p) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model);
      const double angle = static_cast<double>(p) / std::pow(10000.0, exponent);
      v[p * d_model + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return Tensor({seq_len, d_model}, std::move(v));
}

/// Full (non-causal) multi-head scaled dot-product self-attention.
inline Tensor multi_head_self_attention(const Tensor& x, const Linear& wq, const Linear& wk,
                                        const Linear& wv, const Linear& wo, std::size_t heads) {
  if (x.rank() != 3) throw ShapeError("attention expects [batch, seq, d_model]");
  const std::size_t b = x.dim(0), s = x.dim(1), d = x.dim(2);
  if (d % heads != 0) throw ShapeError("attention: heads must divide d_model");
  const std::size_t hd = d / heads;

  auto to_heads = [&](const Tensor& t) {
    // [b,s,d] -> [b*heads, s, hd]
    return reshape(permute(reshape(t, {b, s, heads, hd}), {0, 2, 1, 3}), {b * heads, s, hd});
  };
  Tensor q = to_heads(wq.forward(x));
  Tensor k = to_heads(wk.forward(x));
  Tensor v = to_heads(wv.forward(x));

  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(hd)));
  Tensor attn = softmax(scores, 2);  // each query row is a distribution over keys
  Tensor ctx = matmul(attn, v);      // [b*heads, s, hd]
  Tensor merged = reshape(permute(reshape(ctx, {b, heads, s, hd}), {0, 2, 1, 3}), {b, s, d});
  return wo.forward(merged);
}

/// One transformer block: MHSA -> residual -> layer norm ->
/// transition (affine, Mish, affine) -> residual -> layer norm.
class TransformerBlock {
 public:
  TransformerBlock(std::size_t d_model, std::size_t heads, std::size_t ff_dim, double ln_eps,
                   Rng& rng)
      : wq(d_model, d_model, rng),
        wk(d_model, d_model, rng),
        wv(d_model, d_model, rng),
        wo(d_model, d_model, rng),
        ff1(d_model, ff_dim, rng),
        ff2(ff_dim, d_model, rng),
        ln1(d_model, ln_eps),
        ln2(d_model, ln_eps),
        heads_(heads) {}

  Tensor forward(const Tensor& x) const {
    Tensor attended = multi_head_self_attention(x, wq, wk, wv, wo, heads_);
    Tensor r1 = ln1.forward(add(x, attended));
    Tensor transitioned = ff2.forward(mish(ff1.forward(r1)));
    return ln2.forward(add(r1, transitioned));
  }

  void collect(const std::string& prefix, ParamRegistry& reg) {
    wq.collect(prefix + ".wq", reg);
    wk.collect(prefix + ".wk", reg);
    wv.collect(prefix + ".wv", reg);
    wo.collect(prefix + ".wo", reg);
    ff1.collect(prefix + ".ff1", reg);
    ff2.collect(prefix + ".ff2", reg);
    ln1.collect(prefix + ".ln1", reg);
    ln2.collect(prefix + ".ln2", reg);
  }

  Linear wq, wk, wv, wo, ff1, ff2;
  LayerNormAffine ln1, ln2;

 private:
  std::size_t heads_;
};

/// Transformer sub-network: position signal, a stack of blocks with
/// independent weights, flatten, and the shared classifier head.
class TransformerNet {
 public:
  TransformerNet(const TransformerConfig& cfg, Rng& rng)
      : cfg_(cfg),
        pos_(positional_encoding(cfg.seq_len, cfg.d_model)),
        head(cfg.flatten_dim(), cfg.fc_width, cfg.classes, cfg.dropout, rng) {
    cfg.head_dim();  // validates
    blocks.reserve(cfg.blocks);
    for (std::size_t i = 0; i < cfg.blocks; ++i) {
      blocks.emplace_back(cfg.d_model, cfg.heads, cfg.ff_dim, cfg.ln_eps, rng);
    }
  }

  /// x: [batch, seq_len, d_model] resampled window.
  SubNetworkOutput forward(const Tensor& x, const NetContext& ctx) {
    if (x.rank() != 3 || x.dim(1) != cfg_.seq_len || x.dim(2) != cfg_.d_model) {
      throw ShapeError("transformer input must be [batch," + std::to_string(cfg_.seq_len) + "," +
                       std::to_string(cfg_.d_model) + "], got " + shape_str(x.shape()));
    }
    Tensor h = add_broadcast(x, pos_);
    for (const auto& block : blocks) h = block.forward(h);
    Tensor flat = reshape(h, {x.dim(0), cfg_.flatten_dim()});
    auto out = head.forward(flat, ctx);
    return {out.feature, out.logits};
  }

  void collect(const std::string& prefix, ParamRegistry& reg) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      blocks[i].collect(prefix + ".block" + std::to_string(i + 1), reg);
    }
    head.collect(prefix + ".head", reg);
  }

  const TransformerConfig& config() const { return cfg_; }
  const Tensor& position_table() const { return pos_; }

  std::vector<TransformerBlock> blocks;
  ClassifierHead head;

 private:
  TransformerConfig cfg_;
  Tensor pos_;
};

}  // namespace gestnet
