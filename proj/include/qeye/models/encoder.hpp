#pragma once

#include <span>
#include <string>
#include <vector>

#include "qeye/models/model.hpp"
#include "qeye/nn/layers.hpp"

namespace qeye::models {

/// Small post-norm transformer encoder with learned token and position
/// embeddings. Parameters live under "<prefix>." in the owning store so the
/// whole encoder can be frozen by prefix.
class TextEncoder {
 public:
  TextEncoder() = default;
  static TextEncoder create(nn::ParameterStore& store, const std::string& prefix, const EncoderConfig& config,
                            Rng& rng);

  const EncoderConfig& config() const { return config_; }
  nn::Parameter& token_table() const { return *tokens_; }
  nn::Parameter& position_table() const { return *positions_; }

  nn::Var token_embeddings(nn::Graph& g, std::span<const int> ids) const;
  /// Rows with a negative position get a zero vector.
  nn::Var position_embeddings(nn::Graph& g, std::span<const int> positions) const;
  /// Token plus position embeddings for positions 0..n-1.
  nn::Var embed(nn::Graph& g, std::span<const int> ids) const;
  /// Embedding LayerNorm followed by dropout.
  nn::Var normalize(nn::Graph& g, nn::Var x, double dropout, Rng& rng) const;
  /// Runs blocks [from, to).
  nn::Var run_blocks(nn::Graph& g, nn::Var x, int from, int to, std::span<const char> key_valid, double dropout,
                     Rng& rng) const;

  struct Encoded {
    nn::Var tokens;  // one row per input token
    nn::Var pooled;  // classification-token state (row 0)
  };
  Encoded encode(nn::Graph& g, std::span<const int> ids, double dropout, Rng& rng) const;

 private:
  EncoderConfig config_;
  nn::Parameter* tokens_ = nullptr;
  nn::Parameter* positions_ = nullptr;
  nn::LayerNorm norm_;
  std::vector<nn::TransformerBlock> blocks_;
};

/// Two-layer perceptron: Linear(d, d), ReLU, dropout, Linear(d, classes).
struct ClassifierHead {
  nn::Linear hidden, output;

  static ClassifierHead create(nn::ParameterStore& store, const std::string& name, Eigen::Index width, int classes,
                               Rng& rng);
  nn::Var operator()(nn::Graph& g, nn::Var pooled, double dropout, Rng& rng) const;
};

}  // namespace qeye::models
