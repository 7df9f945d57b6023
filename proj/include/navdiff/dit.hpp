#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "navdiff/action.hpp"
#include "navdiff/nn.hpp"
#include "navdiff/tensor.hpp"

namespace navdiff {

// Architecture hyperparameters for the action-denoising transformer.
// The reference configuration is depth 8, hidden 512, heads 8, horizon 8,
// cond_dim 2304; the desk default is depth 2, hidden 64, heads 4, cond 288.
struct DiTConfig {
  std::size_t depth = 2;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  std::size_t horizon = 8;
  std::size_t cond_dim = 288;
  std::size_t action_dim = 3;
  std::size_t mlp_ratio = 4;

  void validate() const {
    if (hidden % heads != 0) {
      throw ConfigError("dit: hidden " + std::to_string(hidden) +
                        " not divisible by heads " + std::to_string(heads));
    }
    if (depth == 0 || horizon == 0 || cond_dim == 0) {
      throw ConfigError("dit: zero-sized configuration");
    }
  }

  static DiTConfig desk() { return {2, 64, 4, 8, 288, 3, 4}; }
  static DiTConfig reference() { return {8, 512, 8, 8, 2304, 3, 4}; }
};

// The per-sublayer modulation triple produced by a block's modulation MLP.
template <typename T>
struct Modulation {
  Tensor<T> gamma, beta, gate;
};

// One transformer block: bidirectional self-attention and an MLP, each
// wrapped in adaptive layer-norm modulation. The modulation MLP's output
// layer is zero-initialized, so gamma = beta = gate = 0 at init and the
// block starts as the identity on the residual stream.
template <typename T>
struct DiTBlock {
  Linear<T> wq, wk, wv, wo;
  Linear<T> mlp_in, mlp_out;
  Linear<T> mod;  // SiLU(u) -> 6 * hidden (zero-initialized output layer)

  void init(ParamList<T>& params, const std::string& prefix,
            const DiTConfig& cfg, Rng& rng) {
    const T std = T(0.02);
    const std::size_t h = cfg.hidden;
    wq.init(params, prefix + ".attn.wq", h, h, rng, std);
    wk.init(params, prefix + ".attn.wk", h, h, rng, std);
    wv.init(params, prefix + ".attn.wv", h, h, rng, std);
    wo.init(params, prefix + ".attn.wo", h, h, rng, std);
    mlp_in.init(params, prefix + ".mlp.fc1", h, h * cfg.mlp_ratio, rng, std);
    mlp_out.init(params, prefix + ".mlp.fc2", h * cfg.mlp_ratio, h, rng, std);
    mod.init(params, prefix + ".mod.out", h, 6 * h, rng, std, /*zero=*/true);
  }

  // (gamma, beta, gate) pairs for the attention and MLP sub-layers.
  std::pair<Modulation<T>, Modulation<T>> modulations(const Tensor<T>& u) const {
    Tensor<T> m = mod.forward_vec(silu(u));
    const std::size_t h = mod.weight.shape[1] / 6;
    auto seg = [&](std::size_t i) { return slice1d(m, i * h, h); };
    return {{seg(0), seg(1), seg(2)}, {seg(3), seg(4), seg(5)}};
  }
};

// Paper-form modulation of normalized activations:
//   gate * (gamma (*) LN(h) + beta), broadcast over tokens.
// With a freshly initialized modulation MLP this is exactly zero.
template <typename T>
Tensor<T> adaln_modulate(const Tensor<T>& tokens, const Modulation<T>& m,
                         T eps = T(1e-5)) {
  Tensor<T> normed = layer_norm(tokens, eps);
  return mul_rowvec(add_rowvec(mul_rowvec(normed, m.gamma), m.beta), m.gate);
}

// Action-space diffusion transformer with adaLN-Zero conditioning.
// Conditioning reaches the tokens only through the per-block modulation
// path (never by concatenation to tokens). The final projection is
// zero-initialized, so a fresh network is the zero function.
template <typename T>
class DiT {
 public:
  DiTConfig cfg;

  void init(ParamList<T>& params, const DiTConfig& config, Rng& rng) {
    cfg = config;
    cfg.validate();
    const T std = T(0.02);
    embed_in_.init(params, "embed.in", cfg.action_dim, cfg.hidden, rng, std);
    embed_pos_ = params.add(
        "embed.pos", randn_tensor<T>({cfg.horizon, cfg.hidden}, rng, std));
    cond_proj_.init(params, "cond.proj", cfg.cond_dim, cfg.hidden, rng, std);
    t_fc1_.init(params, "t_embed.fc1", cfg.hidden, cfg.hidden, rng, std);
    t_fc2_.init(params, "t_embed.fc2", cfg.hidden, cfg.hidden, rng, std);
    blocks_.assign(cfg.depth, DiTBlock<T>());
    for (std::size_t i = 0; i < cfg.depth; ++i)
      blocks_[i].init(params, "block" + std::to_string(i), cfg, rng);
    head_.init(params, "head.out", cfg.hidden, cfg.action_dim, rng, std,
               /*zero=*/true);
  }

  // Per-timestep linear projection to the hidden width plus a learned
  // positional embedding per token index.
  Tensor<T> embed_actions(const Tensor<T>& a_t) const {
    if (a_t.rank() != 2 || a_t.shape[0] != cfg.horizon ||
        a_t.shape[1] != cfg.action_dim) {
      throw ContractError("dit: action block " + shape_str(a_t.shape) +
                          " does not match horizon " +
                          std::to_string(cfg.horizon));
    }
    return add(embed_in_.forward(a_t), embed_pos_);
  }

  Tensor<T> timestep_embedding(int t) const {
    Tensor<T> sin = sinusoidal_embedding<T>(t, cfg.hidden);
    return t_fc2_.forward_vec(silu(t_fc1_.forward_vec(sin)));
  }

  // Noise prediction eps(a_t, t, c). The condition c is a rank-1 tensor of
  // width cond_dim (pass a graph tensor to train through the flow encoder).
  Tensor<T> forward(const Tensor<T>& a_t, int t, const Tensor<T>& cond) const {
    if (cond.rank() != 1 || cond.shape[0] != cfg.cond_dim) {
      throw ContractError("dit: condition width " + shape_str(cond.shape) +
                          " does not match cond_dim " +
                          std::to_string(cfg.cond_dim));
    }
    Tensor<T> tokens = embed_actions(a_t);
    Tensor<T> u = add(timestep_embedding(t), cond_proj_.forward_vec(cond));

    const T eps = T(1e-5);
    for (const auto& block : blocks_) {
      auto [ma, mm] = block.modulations(u);
      // Gate on the sub-layer output with a unit-offset scale inside; the
      // zero-initialized gate still silences the branch at init, while the
      // sub-layer input stays LN(h) so gradients reach the gate.
      Tensor<T> xa = add_rowvec(
          mul_rowvec(layer_norm(tokens, eps), add_scalar(ma.gamma, T(1))),
          ma.beta);
      tokens = add(tokens, mul_rowvec(attention(xa, block), ma.gate));
      Tensor<T> xm = add_rowvec(
          mul_rowvec(layer_norm(tokens, eps), add_scalar(mm.gamma, T(1))),
          mm.beta);
      tokens = add(tokens, mul_rowvec(feed_forward(xm, block), mm.gate));
    }
    return head_.forward(layer_norm(tokens, eps));
  }

  const std::vector<DiTBlock<T>>& blocks() const { return blocks_; }

 private:
  Tensor<T> attention(const Tensor<T>& x, const DiTBlock<T>& blk) const {
    const std::size_t dh = cfg.hidden / cfg.heads;
    Tensor<T> q = blk.wq.forward(x);
    Tensor<T> k = blk.wk.forward(x);
    Tensor<T> v = blk.wv.forward(x);
    std::vector<Tensor<T>> heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      Tensor<T> qh = slice_cols(q, h * dh, dh);
      Tensor<T> kh = slice_cols(k, h * dh, dh);
      Tensor<T> vh = slice_cols(v, h * dh, dh);
      Tensor<T> scores = mul_scalar(matmul(qh, transpose(kh)), scale);
      heads.push_back(matmul(softmax(scores), vh));
    }
    return blk.wo.forward(concat_cols(heads));
  }

  Tensor<T> feed_forward(const Tensor<T>& x, const DiTBlock<T>& blk) const {
    return blk.mlp_out.forward(gelu(blk.mlp_in.forward(x)));
  }

  Linear<T> embed_in_;
  Tensor<T> embed_pos_;
  Linear<T> cond_proj_;
  Linear<T> t_fc1_, t_fc2_;
  std::vector<DiTBlock<T>> blocks_;
  Linear<T> head_;
};

}  // namespace navdiff
