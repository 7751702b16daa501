#pragma once

#include <optional>
#include <string>
#include <vector>

#include "autoad/nn/tensor.hpp"

namespace autoad::nn {

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
         bool trainable = true, double init_std = 0.02);

  NodePtr forward(Graph& g, const NodePtr& x);
  void collect(std::vector<Parameter*>& out);
};

struct LayerNormLayer {
  Parameter gamma;
  Parameter beta;

  LayerNormLayer(const std::string& name, Eigen::Index dim, bool trainable = true);

  NodePtr forward(Graph& g, const NodePtr& x);
  void collect(std::vector<Parameter*>& out);
};

struct MultiHeadAttention {
  Linear q_proj, k_proj, v_proj, out_proj;
  int heads;

  MultiHeadAttention(const std::string& name, Eigen::Index channels, int heads,
                     Rng& rng, bool trainable = true);

  // mask, when present, is Nq x Nkv and added to the attention scores
  // (use large negatives for disallowed positions).
  NodePtr forward(Graph& g, const NodePtr& queries, const NodePtr& keys_values,
                  const Matrix* mask = nullptr);
  void collect(std::vector<Parameter*>& out);
};

struct Mlp {
  Linear fc1, fc2;

  Mlp(const std::string& name, Eigen::Index channels, Eigen::Index hidden, Rng& rng,
      bool trainable = true);

  NodePtr forward(Graph& g, const NodePtr& x);
  void collect(std::vector<Parameter*>& out);
};

// Pre-LN self-attention encoder block.
struct EncoderBlock {
  LayerNormLayer ln1, ln2;
  MultiHeadAttention attn;
  Mlp mlp;

  EncoderBlock(const std::string& name, Eigen::Index channels, int heads,
               Eigen::Index ff_dim, Rng& rng, bool trainable = true);

  NodePtr forward(Graph& g, const NodePtr& x, const Matrix* mask = nullptr);
  void collect(std::vector<Parameter*>& out);
};

// Queries cross-attend to a fixed key/value set; no attention among queries.
struct CrossDecoderBlock {
  LayerNormLayer ln_q, ln_mlp;
  MultiHeadAttention attn;
  Mlp mlp;

  CrossDecoderBlock(const std::string& name, Eigen::Index channels, int heads,
                    Eigen::Index ff_dim, Rng& rng, bool trainable = true);

  NodePtr forward(Graph& g, const NodePtr& queries, const NodePtr& keys_values,
                  const Matrix* mask = nullptr);
  void collect(std::vector<Parameter*>& out);
};

// Residual cross-attention + feed-forward, each scaled by tanh of a learned
// scalar gate that starts at exactly zero.
struct GatedXAttnBlock {
  Parameter gate_attn;  // 1x1
  Parameter gate_ff;    // 1x1
  LayerNormLayer ln_attn, ln_ff;
  MultiHeadAttention xattn;
  Mlp ff;

  GatedXAttnBlock(const std::string& name, Eigen::Index channels, int heads,
                  Eigen::Index ff_dim, Rng& rng, bool trainable = true);

  NodePtr forward(Graph& g, const NodePtr& hidden, const NodePtr& visual_latents,
                  const Matrix* key_mask = nullptr);
  void collect(std::vector<Parameter*>& out);

  double gate_attn_value() const { return gate_attn.value(0, 0); }
  double gate_ff_value() const { return gate_ff.value(0, 0); }
};

Matrix causal_mask(Eigen::Index n);

// Sin-cos positional table, rows are positions.
Matrix sincos_positions(Eigen::Index count, Eigen::Index dim);

}  // namespace autoad::nn
