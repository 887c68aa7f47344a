#include <catch_amalgamated.hpp>

#include <cmath>

#include "gradcheck.hpp"
#include "qeye/nn/layers.hpp"
#include "qeye/nn/ops.hpp"

using namespace qeye;
using namespace qeye::nn;
using qeye::testing::check_gradients;
using Catch::Approx;

namespace {

Matrix randn(Eigen::Index r, Eigen::Index c, Rng& rng) {
  return Matrix::NullaryExpr(r, c, [&] { return rng.normal(); });
}

// Weighted sum so every output coordinate gets a distinct upstream gradient.
Var probe(Graph& g, Var y) {
  Matrix w = Matrix::NullaryExpr(y.rows(), y.cols(), [](Eigen::Index i, Eigen::Index j) {
    return std::sin(1.7 * static_cast<double>(31 * i + j + 1));
  });
  return sum_all(mul(y, g.constant(w)));
}

void require_gradients(ParameterStore& store, const qeye::testing::LossFn& f, std::uint64_t seed = 1) {
  Rng rng(seed);
  const auto r = check_gradients(store, f, rng, 16);
  INFO("relative error " << r.relative_error << " over " << r.coordinates);
  CHECK(r.coordinates > 0);
  CHECK(r.relative_error < 1e-6);
}

}  // namespace

TEST_CASE("elementwise and matrix op gradients") {
  Rng rng(3);
  ParameterStore s;
  auto& a = s.add("a", randn(3, 4, rng));
  auto& b = s.add("b", randn(4, 2, rng));
  auto& c = s.add("c", randn(3, 4, rng));
  auto& r = s.add("r", randn(1, 4, rng));
  auto& k = s.add("k", randn(3, 1, rng));
  require_gradients(s, [&](Graph& g) {
    Var x = add_row(mul(g.param(a), g.param(c)), g.param(r));
    x = sub(scale_rows(x, g.param(k)), mul_row(g.param(c), g.param(r)));
    Var y = matmul(gelu(x), g.param(b));
    Var z = matmul_nt(tanh(g.param(a)), g.param(c));
    Var parts[] = {probe(g, y), probe(g, z), probe(g, scale(relu(g.param(a)), 0.5))};
    return sum_all(concat_cols(parts));
  });
}

TEST_CASE("layer norm gradients") {
  Rng rng(4);
  ParameterStore s;
  auto& x = s.add("x", randn(5, 6, rng));
  auto& gamma = s.add("gamma", Matrix::Constant(1, 6, 1.3));
  auto& beta = s.add("beta", randn(1, 6, rng));
  require_gradients(s, [&](Graph& g) { return probe(g, layer_norm(g.param(x), g.param(gamma), g.param(beta))); });
}

TEST_CASE("masked softmax gives exactly zero weight to invalid keys") {
  Graph g;
  Matrix x(2, 3);
  x << 1, 2, 300, 0, -1, 5;
  const char valid[] = {1, 1, 0};
  const Matrix w = softmax_rows(g.constant(x), valid).value();
  CHECK(w(0, 2) == 0.0);
  CHECK(w(1, 2) == 0.0);
  CHECK(w.row(0).sum() == Approx(1.0));
  CHECK(w(0, 1) / w(0, 0) == Approx(std::exp(1.0)));
}

TEST_CASE("softmax, cross-entropy and slicing gradients") {
  Rng rng(5);
  ParameterStore s;
  auto& x = s.add("x", randn(4, 5, rng));
  const char valid[] = {1, 0, 1, 1, 1};
  require_gradients(s, [&](Graph& g) {
    Var w = softmax_rows(g.param(x), valid);
    Var parts[] = {slice_rows(w, 1, 2), slice_cols(g.param(x), 0, 2) , shift_rows(g.param(x), 1)};
    Var stacked[] = {probe(g, parts[0]), probe(g, parts[1]), probe(g, parts[2]), probe(g, shift_rows(parts[2], -2))};
    const int targets[] = {0, 4, 2, 3};
    Var ce = cross_entropy(g.param(x), targets);
    Var sums[] = {sum_all(concat_rows(stacked)), ce};
    return sum_all(concat_rows(sums));
  });
}

TEST_CASE("cross-entropy of uniform logits is log classes") {
  Graph g;
  const int t[] = {2};
  CHECK(cross_entropy(g.constant(Matrix::Zero(1, 4)), t).value()(0, 0) == Approx(std::log(4.0)));
}

TEST_CASE("masked pooling gradients ignore padding rows") {
  Rng rng(6);
  ParameterStore s;
  auto& x = s.add("x", randn(5, 3, rng));
  const char valid[] = {1, 1, 0, 1, 0};
  require_gradients(s, [&](Graph& g) {
    Var parts[] = {mean_rows(g.param(x), valid), max_rows(g.param(x), valid), mean_rows(mask_rows(g.param(x), valid))};
    return probe(g, concat_rows(parts));
  });
  s.zero_grad();
  Graph g;
  Var parts[] = {mean_rows(g.param(x), valid), max_rows(g.param(x), valid)};
  g.backward(probe(g, concat_rows(parts)));
  CHECK(x.grad.row(2).isZero());
  CHECK(x.grad.row(4).isZero());
}

TEST_CASE("embedding gradients land on looked-up rows") {
  Rng rng(7);
  ParameterStore s;
  auto& table = s.add("table", randn(10, 4, rng));
  const int ids[] = {3, 7, 3};
  require_gradients(s, [&](Graph& g) { return probe(g, embedding(g, table, ids)); });
  CHECK(table.grad.row(0).isZero());
  CHECK_FALSE(table.grad.row(3).isZero());
}

TEST_CASE("displacement scale gradients and cap") {
  Rng rng(8);
  ParameterStore s;
  auto& z = s.add("z", randn(4, 6, rng));
  auto& h = s.add("h", randn(4, 6, rng));
  require_gradients(s, [&](Graph& g) { return probe(g, displacement_scale(g.param(z), g.param(h), 0.3)); });
  Graph g;
  const Matrix a = displacement_scale(g.constant(randn(50, 6, rng) * 100), g.constant(randn(50, 6, rng)), 1.0).value();
  CHECK(a.maxCoeff() <= 1.0);
  const Matrix zero_h = displacement_scale(g.constant(randn(2, 3, rng)), g.constant(Matrix::Zero(2, 3)), 1.0).value();
  CHECK(zero_h.isZero());
}

TEST_CASE("attention, transformer block and convolution gradients") {
  Rng rng(9);
  ParameterStore s;
  auto& x = s.add("x", randn(5, 8, rng));
  auto& q = s.add("q", randn(3, 8, rng));
  auto block = TransformerBlock::create(s, "block", 8, 2, 12, rng);
  auto mha = MultiHeadAttention::create(s, "cross", 8, 2, rng);
  auto conv = Conv1d::create(s, "conv", 8, 4, rng);
  const char valid[] = {1, 1, 1, 0, 1};
  require_gradients(s, [&](Graph& g) {
    Rng unused(0);
    Var h = block(g, g.param(x), valid, 0.0, unused);
    Var c = mha(g, g.param(q), h, valid, 0.0, unused);
    Var parts[] = {probe(g, c), probe(g, conv(g, h))};
    return sum_all(concat_rows(parts));
  });
}

TEST_CASE("invalid keys do not influence attention output") {
  Rng rng(10);
  ParameterStore s;
  auto mha = MultiHeadAttention::create(s, "a", 8, 2, rng);
  Matrix kv = randn(4, 8, rng);
  const Matrix q = randn(2, 8, rng);
  const char valid[] = {1, 0, 1, 1};
  Graph g1, g2;
  Rng unused(0);
  const Matrix a = mha(g1, g1.constant(q), g1.constant(kv), valid, 0.0, unused).value();
  kv.row(1) = randn(1, 8, rng) * 50;
  const Matrix b = mha(g2, g2.constant(q), g2.constant(kv), valid, 0.0, unused).value();
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("convolution uses a width-three zero-padded window") {
  Rng rng(11);
  ParameterStore s;
  auto conv = Conv1d::create(s, "c", 1, 1, rng);
  conv.taps.weight->value << 1, 10, 100;  // previous, current, next
  conv.taps.bias->value << 0;
  Graph g;
  Matrix x(3, 1);
  x << 1, 2, 3;
  const Matrix y = conv(g, g.constant(x)).value();
  CHECK(y(0, 0) == Approx(0 + 10 + 200));
  CHECK(y(1, 0) == Approx(1 + 20 + 300));
  CHECK(y(2, 0) == Approx(2 + 30 + 0));
}

TEST_CASE("dropout is the identity outside training") {
  Rng rng(12);
  Graph g;
  const Matrix x = randn(3, 3, rng);
  CHECK(dropout(g.constant(x), 0.5, rng).value() == x);
  g.training = true;
  const Matrix y = dropout(g.constant(Matrix::Ones(200, 50)), 0.5, rng).value();
  const double kept = (y.array() > 0).cast<double>().mean();
  CHECK(kept == Approx(0.5).margin(0.02));
  CHECK(y.maxCoeff() == Approx(2.0));
}

TEST_CASE("frozen parameters receive no gradient") {
  Rng rng(13);
  ParameterStore s;
  auto& a = s.add("enc.a", randn(2, 2, rng));
  auto& b = s.add("head.b", randn(2, 2, rng));
  s.set_frozen_prefix("enc.", true);
  Graph g;
  g.backward(probe(g, matmul(g.param(a), g.param(b))));
  CHECK(a.grad.isZero());
  CHECK_FALSE(b.grad.isZero());
}

TEST_CASE("parameter snapshots restore values") {
  Rng rng(14);
  ParameterStore s;
  auto& a = s.add("a", randn(2, 2, rng));
  const auto snap = s.snapshot();
  const Matrix before = a.value;
  a.value.setZero();
  s.restore(snap);
  CHECK(a.value == before);
  CHECK(s.scalar_count() == 4);
  CHECK_THROWS(s.add("a", Matrix::Zero(1, 1)));
}
