#pragma once

#include <string>

#include "qeye/nn/ops.hpp"

namespace qeye::nn {

/// Glorot-uniform weights, zero bias.
Matrix glorot(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);
Matrix normal_init(Eigen::Index rows, Eigen::Index cols, double sd, Rng& rng);

struct Linear {
  Parameter* weight = nullptr;  // in x out
  Parameter* bias = nullptr;    // 1 x out

  static Linear create(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng);
  Var operator()(Graph& g, Var x) const;
};

struct LayerNorm {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;

  static LayerNorm create(ParameterStore& store, const std::string& name, Eigen::Index width);
  Var operator()(Graph& g, Var x) const;
};

struct MultiHeadAttention {
  Linear query, key, value, output;
  int heads = 1;

  static MultiHeadAttention create(ParameterStore& store, const std::string& name, Eigen::Index width, int heads,
                                   Rng& rng);
  /// Rows of `queries` attend over rows of `keys_values`; invalid keys get zero weight.
  Var operator()(Graph& g, Var queries, Var keys_values, std::span<const char> key_valid, double dropout,
                 Rng& rng) const;
};

/// Post-norm encoder block: LN(x + MHA(x)), then LN(h + FFN(h)).
struct TransformerBlock {
  MultiHeadAttention attention;
  LayerNorm attention_norm;
  Linear ffn_in, ffn_out;
  LayerNorm ffn_norm;

  static TransformerBlock create(ParameterStore& store, const std::string& name, Eigen::Index width, int heads,
                                 Eigen::Index ffn_width, Rng& rng);
  Var operator()(Graph& g, Var x, std::span<const char> key_valid, double dropout, Rng& rng) const;
};

/// Kernel-3, stride-1, padding-1 convolution over the row (time) axis.
struct Conv1d {
  Linear taps;  // (3 * in) x out

  static Conv1d create(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng);
  Var operator()(Graph& g, Var x) const;
};

}  // namespace qeye::nn
