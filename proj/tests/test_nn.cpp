#include <doctest.h>

#include <cmath>
#include <functional>

#include "autoad/nn/checkpoint.hpp"
#include "autoad/nn/layers.hpp"
#include "autoad/nn/optim.hpp"
#include "autoad/nn/tensor.hpp"
#include "fixtures.hpp"

using namespace autoad;
using namespace autoad::nn;

namespace {

// Central finite differences against the analytic gradient for every entry
// of every parameter.
void check_gradients(std::vector<Parameter*> params,
                     const std::function<NodePtr(Graph&)>& loss_fn,
                     double eps = 1e-5, double tol = 1e-6) {
  for (auto* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(loss_fn(g));
  }
  for (auto* p : params) {
    if (!p->trainable) continue;
    for (Eigen::Index i = 0; i < p->value.rows(); ++i) {
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
        const double saved = p->value(i, j);
        p->value(i, j) = saved + eps;
        Graph gp;
        const double up = loss_fn(gp)->value(0, 0);
        p->value(i, j) = saved - eps;
        Graph gm;
        const double down = loss_fn(gm)->value(0, 0);
        p->value(i, j) = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double analytic = p->grad(i, j);
        const double scale = std::max({1.0, std::abs(numeric), std::abs(analytic)});
        INFO(p->name, "(", i, ",", j, ") numeric=", numeric, " analytic=", analytic);
        CHECK(std::abs(numeric - analytic) / scale < tol);
      }
    }
  }
}

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.gauss();
  }
  return m;
}

}  // namespace

TEST_CASE("elementwise and matmul gradients") {
  Rng rng(1);
  Parameter a("a", random_matrix(rng, 3, 4));
  Parameter b("b", random_matrix(rng, 4, 2));
  Parameter bias("bias", random_matrix(rng, 1, 2));
  check_gradients({&a, &b, &bias}, [&](Graph& g) {
    auto x = matmul(g, g.param(a), g.param(b));
    x = add_rowvec(g, x, g.param(bias));
    x = gelu(g, x);
    return mean_all(g, x);
  });
}

TEST_CASE("softmax, layer norm and slicing gradients") {
  Rng rng(2);
  Parameter a("a", random_matrix(rng, 4, 6));
  Parameter gamma("gamma", Matrix::Ones(1, 6) + 0.1 * random_matrix(rng, 1, 6));
  Parameter beta("beta", 0.1 * random_matrix(rng, 1, 6));
  check_gradients({&a, &gamma, &beta}, [&](Graph& g) {
    auto x = layer_norm(g, g.param(a), g.param(gamma), g.param(beta));
    x = softmax_rows(g, x);
    auto top = slice_rows(g, x, 0, 2);
    auto bottom = slice_rows(g, x, 2, 2);
    auto joined = concat_rows(g, {top, bottom});
    auto left = slice_cols(g, joined, 0, 3);
    return mean_all(g, left);
  }, 1e-5, 1e-5);
}

TEST_CASE("tanh gate gradient and zero-gate exactness") {
  Rng rng(3);
  Parameter a("a", random_matrix(rng, 3, 3));
  Parameter gate("gate", 0.3 * Matrix::Ones(1, 1));
  check_gradients({&a, &gate}, [&](Graph& g) {
    return mean_all(g, tanh_gate_scale(g, g.param(a), g.param(gate)));
  });

  Parameter zero_gate("zg", Matrix::Zero(1, 1));
  Graph g;
  auto out = tanh_gate_scale(g, g.param(a), g.param(zero_gate));
  CHECK(out->value.isZero(0.0));
}

TEST_CASE("loss op gradients") {
  Rng rng(4);
  SUBCASE("bce_with_logits") {
    Parameter logits("logits", random_matrix(rng, 5, 1));
    Matrix labels(5, 1);
    labels << 1, 0, 1, 1, 0;
    Matrix weights(5, 1);
    weights << 1.0, 2.0, 1.0, 0.5, 2.0;
    check_gradients({&logits}, [&](Graph& g) {
      return bce_with_logits(g, g.param(logits), labels, weights);
    });
  }
  SUBCASE("cross_entropy_rows ignores zero-weight rows") {
    Parameter logits("logits", random_matrix(rng, 4, 7));
    std::vector<int> targets = {2, 5, 0, 6};
    std::vector<double> weights = {1.0, 0.0, 1.0, 1.0};
    check_gradients({&logits}, [&](Graph& g) {
      return cross_entropy_rows(g, g.param(logits), targets, weights);
    });
    // The zero-weight row contributes nothing.
    Graph g;
    const double with_row = cross_entropy_rows(g, g.param(logits), targets, weights)
                                ->value(0, 0);
    logits.value(1, 3) += 100.0;
    Graph g2;
    const double perturbed =
        cross_entropy_rows(g2, g2.param(logits), targets, weights)->value(0, 0);
    CHECK(with_row == doctest::Approx(perturbed));
  }
}

TEST_CASE("embedding gather/scatter gradient") {
  Rng rng(5);
  Parameter table("emb", random_matrix(rng, 6, 3));
  std::vector<int> ids = {0, 3, 3, 5};
  check_gradients({&table}, [&](Graph& g) {
    return mean_all(g, gelu(g, embed_rows(g, table, ids)));
  });
}

TEST_CASE("attention and encoder block gradients") {
  Rng rng(6);
  MultiHeadAttention attn("attn", 8, 2, rng);
  Parameter x("x", random_matrix(rng, 3, 8));
  Parameter kv("kv", random_matrix(rng, 5, 8));
  std::vector<Parameter*> params = {&x, &kv};
  attn.collect(params);
  check_gradients(params, [&](Graph& g) {
    return mean_all(g, attn.forward(g, g.param(x), g.param(kv)));
  }, 1e-5, 1e-5);

  EncoderBlock block("enc", 8, 2, 16, rng);
  std::vector<Parameter*> enc_params = {&x};
  block.collect(enc_params);
  const Matrix mask = causal_mask(3);
  check_gradients(enc_params, [&](Graph& g) {
    return mean_all(g, block.forward(g, g.param(x), &mask));
  }, 1e-5, 1e-5);
}

TEST_CASE("gated cross-attention block starts as the identity") {
  Rng rng(7);
  GatedXAttnBlock block("gx", 8, 2, 16, rng);
  CHECK(block.gate_attn_value() == 0.0);
  CHECK(block.gate_ff_value() == 0.0);

  Matrix hidden = random_matrix(rng, 4, 8);
  Matrix latents = random_matrix(rng, 3, 8);
  Graph g;
  auto out = block.forward(g, g.constant(hidden), g.constant(latents));
  CHECK(out->value == hidden);  // bit-for-bit
}

TEST_CASE("causal mask blocks future positions") {
  const Matrix mask = causal_mask(4);
  for (Eigen::Index i = 0; i < 4; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) {
      if (j > i) CHECK(mask(i, j) < -1e20);
      else CHECK(mask(i, j) == 0.0);
    }
  }

  // With a causal mask, earlier outputs ignore later inputs.
  Rng rng(8);
  EncoderBlock block("enc", 8, 2, 16, rng);
  Matrix x = random_matrix(rng, 4, 8);
  Graph g1;
  auto full = block.forward(g1, g1.constant(x), &mask);
  Matrix x2 = x;
  x2.row(3).setConstant(5.0);
  Graph g2;
  const Matrix mask2 = causal_mask(4);
  auto changed = block.forward(g2, g2.constant(x2), &mask2);
  CHECK((full->value.topRows(3) - changed->value.topRows(3)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("sincos positions are deterministic and bounded") {
  auto p1 = sincos_positions(10, 16);
  auto p2 = sincos_positions(10, 16);
  CHECK(p1 == p2);
  CHECK(p1.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
  CHECK(p1.rows() == 10);
  CHECK(p1.cols() == 16);
}

TEST_CASE("adamw skips frozen parameters and decays weights") {
  Rng rng(9);
  Parameter w("w", Matrix::Ones(2, 2));
  Parameter frozen("f", Matrix::Ones(2, 2), /*trainable=*/false);
  AdamWConfig config;
  config.lr = 0.1;
  AdamW opt({&w, &frozen}, config);
  w.grad = Matrix::Ones(2, 2);
  frozen.grad = Matrix::Ones(2, 2);
  opt.step();
  CHECK(w.value(0, 0) < 1.0);
  CHECK(frozen.value == Matrix::Ones(2, 2));
}

TEST_CASE("cosine warmup schedule endpoints") {
  // Warmup counts from 1/warmup so the first step is never wasted at lr 0.
  CHECK(cosine_warmup_lr(1.0, 0, 100, 10) == doctest::Approx(0.1));
  CHECK(cosine_warmup_lr(1.0, 4, 100, 10) == doctest::Approx(0.5));
  CHECK(cosine_warmup_lr(1.0, 9, 100, 10) == doctest::Approx(1.0));
  CHECK(cosine_warmup_lr(1.0, 10, 100, 10) == doctest::Approx(1.0));
  CHECK(cosine_warmup_lr(1.0, 100, 100, 10) == doctest::Approx(0.0).epsilon(1e-9));
  // Monotone decay after warmup.
  double prev = cosine_warmup_lr(1.0, 10, 100, 10);
  for (long s = 11; s <= 100; ++s) {
    double cur = cosine_warmup_lr(1.0, s, 100, 10);
    CHECK(cur <= prev + 1e-12);
    prev = cur;
  }
}

TEST_CASE("checkpoint round trip and mismatch detection") {
  Rng rng(10);
  Parameter a("a", random_matrix(rng, 3, 4));
  Parameter b("b", random_matrix(rng, 2, 2));
  auto dir = testing::fresh_dir("nn_ckpt");
  nlohmann::json config = {{"width", 8}, {"note", "test"}};
  save_checkpoint(dir / "m.ckpt", {&a, &b}, config);

  CHECK(peek_checkpoint_config(dir / "m.ckpt").at("width") == 8);

  Parameter a2("a", Matrix::Zero(3, 4));
  Parameter b2("b", Matrix::Zero(2, 2));
  load_checkpoint(dir / "m.ckpt", {&a2, &b2});
  CHECK(a2.value == a.value);
  CHECK(b2.value == b.value);

  Parameter wrong_shape("a", Matrix::Zero(4, 3));
  CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt", {&wrong_shape, &b2}), AutoadError);
  Parameter wrong_name("zz", Matrix::Zero(3, 4));
  CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt", {&wrong_name, &b2}), AutoadError);
}
