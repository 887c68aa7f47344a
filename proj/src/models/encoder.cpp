#include "qeye/models/encoder.hpp"

#include <algorithm>

#include "qeye/models/tokenizer.hpp"

namespace qeye::models {

TextEncoder TextEncoder::create(nn::ParameterStore& store, const std::string& prefix, const EncoderConfig& config,
                                Rng& rng) {
  TextEncoder e;
  e.config_ = config;
  nn::Matrix tokens = nn::normal_init(config.vocab_size, config.width, 0.1, rng);
  tokens.row(kPadId).setZero();
  e.tokens_ = &store.add(prefix + ".tokens", std::move(tokens), true);
  e.positions_ = &store.add(prefix + ".positions", nn::normal_init(config.max_positions, config.width, 0.1, rng), true);
  e.norm_ = nn::LayerNorm::create(store, prefix + ".embedding_norm", config.width);
  for (int l = 0; l < config.layers; ++l) {
    e.blocks_.push_back(nn::TransformerBlock::create(store, prefix + ".block" + std::to_string(l), config.width,
                                                     config.heads, config.ffn_width, rng));
  }
  return e;
}

nn::Var TextEncoder::token_embeddings(nn::Graph& g, std::span<const int> ids) const {
  return nn::embedding(g, *tokens_, ids);
}

nn::Var TextEncoder::position_embeddings(nn::Graph& g, std::span<const int> positions) const {
  std::vector<int> rows(positions.size());
  std::vector<char> valid(positions.size());
  bool any_missing = false;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] >= config_.max_positions) {
      throw TruncationError("gaze positions", static_cast<std::size_t>(positions[i]) + 1, config_.max_positions);
    }
    valid[i] = positions[i] >= 0;
    any_missing = any_missing || !valid[i];
    rows[i] = std::max(positions[i], 0);
  }
  nn::Var out = nn::embedding(g, *positions_, rows);
  return any_missing ? nn::mask_rows(out, valid) : out;
}

nn::Var TextEncoder::embed(nn::Graph& g, std::span<const int> ids) const {
  if (static_cast<int>(ids.size()) > config_.max_positions) {
    throw TruncationError("text", ids.size(), config_.max_positions);
  }
  std::vector<int> positions(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = static_cast<int>(i);
  return nn::add(token_embeddings(g, ids), position_embeddings(g, positions));
}

nn::Var TextEncoder::normalize(nn::Graph& g, nn::Var x, double dropout, Rng& rng) const {
  return nn::dropout(norm_(g, x), dropout, rng);
}

nn::Var TextEncoder::run_blocks(nn::Graph& g, nn::Var x, int from, int to, std::span<const char> key_valid,
                                double dropout, Rng& rng) const {
  for (int l = from; l < to; ++l) x = blocks_[static_cast<std::size_t>(l)](g, x, key_valid, dropout, rng);
  return x;
}

TextEncoder::Encoded TextEncoder::encode(nn::Graph& g, std::span<const int> ids, double dropout, Rng& rng) const {
  nn::Var x = normalize(g, embed(g, ids), dropout, rng);
  x = run_blocks(g, x, 0, config_.layers, {}, dropout, rng);
  return {x, nn::slice_rows(x, 0, 1)};
}

ClassifierHead ClassifierHead::create(nn::ParameterStore& store, const std::string& name, Eigen::Index width,
                                      int classes, Rng& rng) {
  ClassifierHead h;
  h.hidden = nn::Linear::create(store, name + ".hidden", width, width, rng);
  h.output = nn::Linear::create(store, name + ".output", width, classes, rng);
  return h;
}

nn::Var ClassifierHead::operator()(nn::Graph& g, nn::Var pooled, double dropout, Rng& rng) const {
  return output(g, nn::dropout(nn::relu(hidden(g, pooled)), dropout, rng));
}

}  // namespace qeye::models
