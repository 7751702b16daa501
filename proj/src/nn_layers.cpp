#include "autoad/nn/layers.hpp"

#include <cmath>

namespace autoad::nn {

Linear::Linear(const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
               bool trainable, double init_std)
    : weight(name + ".weight", gauss_matrix(rng, in, out, init_std), trainable),
      bias(name + ".bias", Matrix::Zero(1, out), trainable) {}

NodePtr Linear::forward(Graph& g, const NodePtr& x) {
  return add_rowvec(g, matmul(g, x, g.param(weight)), g.param(bias));
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

LayerNormLayer::LayerNormLayer(const std::string& name, Eigen::Index dim,
                               bool trainable)
    : gamma(name + ".gamma", Matrix::Ones(1, dim), trainable),
      beta(name + ".beta", Matrix::Zero(1, dim), trainable) {}

NodePtr LayerNormLayer::forward(Graph& g, const NodePtr& x) {
  return layer_norm(g, x, g.param(gamma), g.param(beta));
}

void LayerNormLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, Eigen::Index channels,
                                       int heads_, Rng& rng, bool trainable)
    : q_proj(name + ".q", channels, channels, rng, trainable),
      k_proj(name + ".k", channels, channels, rng, trainable),
      v_proj(name + ".v", channels, channels, rng, trainable),
      out_proj(name + ".o", channels, channels, rng, trainable),
      heads(heads_) {
  if (channels % heads_ != 0) {
    throw AutoadError(ErrorCode::InvalidArgument, "channels not divisible by heads");
  }
}

NodePtr MultiHeadAttention::forward(Graph& g, const NodePtr& queries,
                                    const NodePtr& keys_values, const Matrix* mask) {
  const Eigen::Index channels = q_proj.weight.value.rows();
  const Eigen::Index head_dim = channels / heads;
  auto q = q_proj.forward(g, queries);
  auto k = k_proj.forward(g, keys_values);
  auto v = v_proj.forward(g, keys_values);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<NodePtr> head_outputs;
  head_outputs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    auto qh = slice_cols(g, q, h * head_dim, head_dim);
    auto kh = slice_cols(g, k, h * head_dim, head_dim);
    auto vh = slice_cols(g, v, h * head_dim, head_dim);
    auto scores = scale(g, matmul_nt(g, qh, kh), inv_sqrt);
    if (mask) scores = add_const(g, scores, *mask);
    auto weights = softmax_rows(g, scores);
    head_outputs.push_back(matmul(g, weights, vh));
  }
  return out_proj.forward(g, concat_cols(g, head_outputs));
}

void MultiHeadAttention::collect(std::vector<Parameter*>& out) {
  q_proj.collect(out);
  k_proj.collect(out);
  v_proj.collect(out);
  out_proj.collect(out);
}

Mlp::Mlp(const std::string& name, Eigen::Index channels, Eigen::Index hidden,
         Rng& rng, bool trainable)
    : fc1(name + ".fc1", channels, hidden, rng, trainable),
      fc2(name + ".fc2", hidden, channels, rng, trainable) {}

NodePtr Mlp::forward(Graph& g, const NodePtr& x) {
  return fc2.forward(g, gelu(g, fc1.forward(g, x)));
}

void Mlp::collect(std::vector<Parameter*>& out) {
  fc1.collect(out);
  fc2.collect(out);
}

EncoderBlock::EncoderBlock(const std::string& name, Eigen::Index channels, int heads,
                           Eigen::Index ff_dim, Rng& rng, bool trainable)
    : ln1(name + ".ln1", channels, trainable),
      ln2(name + ".ln2", channels, trainable),
      attn(name + ".attn", channels, heads, rng, trainable),
      mlp(name + ".mlp", channels, ff_dim, rng, trainable) {}

NodePtr EncoderBlock::forward(Graph& g, const NodePtr& x, const Matrix* mask) {
  auto normed = ln1.forward(g, x);
  auto h = add(g, x, attn.forward(g, normed, normed, mask));
  return add(g, h, mlp.forward(g, ln2.forward(g, h)));
}

void EncoderBlock::collect(std::vector<Parameter*>& out) {
  ln1.collect(out);
  ln2.collect(out);
  attn.collect(out);
  mlp.collect(out);
}

CrossDecoderBlock::CrossDecoderBlock(const std::string& name, Eigen::Index channels,
                                     int heads, Eigen::Index ff_dim, Rng& rng,
                                     bool trainable)
    : ln_q(name + ".ln_q", channels, trainable),
      ln_mlp(name + ".ln_mlp", channels, trainable),
      attn(name + ".attn", channels, heads, rng, trainable),
      mlp(name + ".mlp", channels, ff_dim, rng, trainable) {}

NodePtr CrossDecoderBlock::forward(Graph& g, const NodePtr& queries,
                                   const NodePtr& keys_values, const Matrix* mask) {
  auto h = add(g, queries, attn.forward(g, ln_q.forward(g, queries), keys_values, mask));
  return add(g, h, mlp.forward(g, ln_mlp.forward(g, h)));
}

void CrossDecoderBlock::collect(std::vector<Parameter*>& out) {
  ln_q.collect(out);
  ln_mlp.collect(out);
  attn.collect(out);
  mlp.collect(out);
}

GatedXAttnBlock::GatedXAttnBlock(const std::string& name, Eigen::Index channels,
                                 int heads, Eigen::Index ff_dim, Rng& rng,
                                 bool trainable)
    : gate_attn(name + ".gate_attn", Matrix::Zero(1, 1), trainable),
      gate_ff(name + ".gate_ff", Matrix::Zero(1, 1), trainable),
      ln_attn(name + ".ln_attn", channels, trainable),
      ln_ff(name + ".ln_ff", channels, trainable),
      xattn(name + ".xattn", channels, heads, rng, trainable),
      ff(name + ".ff", channels, ff_dim, rng, trainable) {}

NodePtr GatedXAttnBlock::forward(Graph& g, const NodePtr& hidden,
                                 const NodePtr& visual_latents,
                                 const Matrix* key_mask) {
  auto attended =
      xattn.forward(g, ln_attn.forward(g, hidden), visual_latents, key_mask);
  auto h = add(g, hidden, tanh_gate_scale(g, attended, g.param(gate_attn)));
  auto ffed = ff.forward(g, ln_ff.forward(g, h));
  return add(g, h, tanh_gate_scale(g, ffed, g.param(gate_ff)));
}

void GatedXAttnBlock::collect(std::vector<Parameter*>& out) {
  out.push_back(&gate_attn);
  out.push_back(&gate_ff);
  ln_attn.collect(out);
  ln_ff.collect(out);
  xattn.collect(out);
  ff.collect(out);
}

Matrix causal_mask(Eigen::Index n) {
  Matrix m = Matrix::Zero(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = r + 1; c < n; ++c) m(r, c) = -1e30;
  }
  return m;
}

Matrix sincos_positions(Eigen::Index count, Eigen::Index dim) {
  Matrix pos = Matrix::Zero(count, dim);
  for (Eigen::Index p = 0; p < count; ++p) {
    for (Eigen::Index i = 0; i < dim; i += 2) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(dim));
      pos(p, i) = std::sin(static_cast<double>(p) * rate);
      if (i + 1 < dim) pos(p, i + 1) = std::cos(static_cast<double>(p) * rate);
    }
  }
  return pos;
}

}  // namespace autoad::nn
