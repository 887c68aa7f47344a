#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "qeye/models/model.hpp"

namespace qeye::models {

/// Strict conversion: unknown keys and wrongly-typed values raise ConfigError.
nlohmann::ordered_json model_config_to_json(const ModelConfig& c);
/// Fields absent from `j` keep the defaults of `base`; a "backbone" key
/// resets the encoder to that preset before "encoder" overrides apply.
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});

/// Identifies the word, fixation and global feature layout models consume.
std::uint64_t feature_schema_hash();

class SchemaMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::unique_ptr<Model> model;
  std::uint64_t seed = 0;
  std::uint64_t schema_hash = 0;
  /// Caller-defined metadata (training configuration, validation score ...).
  nlohmann::json metadata;
};

/// CBOR document: format tag, config echo, seed, schema hash, metadata and
/// every parameter by name.
void save_checkpoint(const std::string& path, const Model& model, std::uint64_t seed, std::uint64_t schema_hash,
                     const nlohmann::json& metadata = nlohmann::json::object());
Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_schema_hash);

}  // namespace qeye::models
