#include "qeye/nn/layers.hpp"

#include <cmath>

namespace qeye::nn {

Matrix glorot(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (Eigen::Index j = 0; j < fan_out; ++j) {
    for (Eigen::Index i = 0; i < fan_in; ++i) m(i, j) = rng.uniform(-limit, limit);
  }
  return m;
}

Matrix normal_init(Eigen::Index rows, Eigen::Index cols, double sd, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal(0.0, sd);
  }
  return m;
}

Linear Linear::create(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng) {
  Linear l;
  l.weight = &store.add(name + ".weight", glorot(in, out, rng));
  l.bias = &store.add(name + ".bias", Matrix::Zero(1, out), true);
  return l;
}

Var Linear::operator()(Graph& g, Var x) const { return add_row(matmul(x, g.param(*weight)), g.param(*bias)); }

LayerNorm LayerNorm::create(ParameterStore& store, const std::string& name, Eigen::Index width) {
  LayerNorm ln;
  ln.gamma = &store.add(name + ".gamma", Matrix::Ones(1, width), true);
  ln.beta = &store.add(name + ".beta", Matrix::Zero(1, width), true);
  return ln;
}

Var LayerNorm::operator()(Graph& g, Var x) const { return layer_norm(x, g.param(*gamma), g.param(*beta)); }

MultiHeadAttention MultiHeadAttention::create(ParameterStore& store, const std::string& name, Eigen::Index width,
                                              int heads, Rng& rng) {
  if (heads < 1 || width % heads != 0) throw std::invalid_argument(name + ": width must divide into heads");
  MultiHeadAttention a;
  a.query = Linear::create(store, name + ".query", width, width, rng);
  a.key = Linear::create(store, name + ".key", width, width, rng);
  a.value = Linear::create(store, name + ".value", width, width, rng);
  a.output = Linear::create(store, name + ".output", width, width, rng);
  a.heads = heads;
  return a;
}

Var MultiHeadAttention::operator()(Graph& g, Var queries, Var keys_values, std::span<const char> key_valid,
                                   double dropout_p, Rng& rng) const {
  Var q = query(g, queries);
  Var k = key(g, keys_values);
  Var v = value(g, keys_values);
  const Eigen::Index width = q.cols();
  const Eigen::Index dh = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> contexts;
  contexts.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
    Var kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
    Var vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
    Var weights = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), key_valid);
    weights = dropout(weights, dropout_p, rng);
    contexts.push_back(matmul(weights, vh));
  }
  Var ctx = heads == 1 ? contexts[0] : concat_cols(contexts);
  return output(g, ctx);
}

TransformerBlock TransformerBlock::create(ParameterStore& store, const std::string& name, Eigen::Index width,
                                          int heads, Eigen::Index ffn_width, Rng& rng) {
  TransformerBlock b;
  b.attention = MultiHeadAttention::create(store, name + ".attention", width, heads, rng);
  b.attention_norm = LayerNorm::create(store, name + ".attention_norm", width);
  b.ffn_in = Linear::create(store, name + ".ffn_in", width, ffn_width, rng);
  b.ffn_out = Linear::create(store, name + ".ffn_out", ffn_width, width, rng);
  b.ffn_norm = LayerNorm::create(store, name + ".ffn_norm", width);
  return b;
}

Var TransformerBlock::operator()(Graph& g, Var x, std::span<const char> key_valid, double dropout_p, Rng& rng) const {
  Var a = dropout(attention(g, x, x, key_valid, dropout_p, rng), dropout_p, rng);
  Var h = attention_norm(g, add(x, a));
  Var f = dropout(ffn_out(g, gelu(ffn_in(g, h))), dropout_p, rng);
  return ffn_norm(g, add(h, f));
}

Conv1d Conv1d::create(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng) {
  Conv1d c;
  c.taps = Linear::create(store, name, 3 * in, out, rng);
  return c;
}

Var Conv1d::operator()(Graph& g, Var x) const {
  Var window[] = {shift_rows(x, -1), x, shift_rows(x, 1)};
  return taps(g, concat_cols(window));
}

}  // namespace qeye::nn
