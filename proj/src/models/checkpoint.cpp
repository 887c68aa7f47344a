#include "qeye/models/checkpoint.hpp"

#include <fstream>
#include <iterator>
#include <set>

#include "qeye/csv.hpp"
#include "qeye/gaze_features.hpp"

namespace qeye::models {

namespace {

constexpr const char* kFormat = "qeye-checkpoint/1";

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
T typed(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid value for '" + key + "': " + e.what());
  }
}

}  // namespace

nlohmann::ordered_json model_config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["architecture"] = to_string(c.architecture);
  j["task"] = to_string(c.task);
  j["ablation"] = to_string(c.ablation);
  j["injection_layer"] = c.injection_layer;
  j["dropout"] = c.dropout;
  j["backbone"] = to_string(c.backbone);
  j["encoder"] = {{"vocab_size", c.encoder.vocab_size}, {"width", c.encoder.width},
                  {"layers", c.encoder.layers},         {"heads", c.encoder.heads},
                  {"ffn_width", c.encoder.ffn_width},   {"max_positions", c.encoder.max_positions}};
  j["frozen"] = c.frozen;
  j["mag_beta"] = c.mag_beta;
  j["mag_dropout"] = c.mag_dropout;
  j["gaze_budget"] = c.gaze_budget;
  j["cnn_channels"] = c.cnn_channels;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  reject_unknown(j,
                 {"architecture", "task", "ablation", "injection_layer", "dropout", "backbone", "encoder", "frozen",
                  "mag_beta", "mag_dropout", "gaze_budget", "cnn_channels"},
                 "model config");
  if (j.contains("architecture")) c.architecture = parse_architecture(typed<std::string>(j, "architecture"));
  if (j.contains("task")) c.task = parse_task(typed<std::string>(j, "task"));
  if (j.contains("ablation")) c.ablation = parse_ablation(typed<std::string>(j, "ablation"));
  if (j.contains("injection_layer")) c.injection_layer = typed<int>(j, "injection_layer");
  if (j.contains("dropout")) c.dropout = typed<double>(j, "dropout");
  if (j.contains("backbone")) {
    c.backbone = parse_backbone(typed<std::string>(j, "backbone"));
    c.encoder = preset_config(c.backbone);
  }
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    reject_unknown(e, {"vocab_size", "width", "layers", "heads", "ffn_width", "max_positions"}, "encoder config");
    if (e.contains("vocab_size")) c.encoder.vocab_size = typed<int>(e, "vocab_size");
    if (e.contains("width")) c.encoder.width = typed<int>(e, "width");
    if (e.contains("layers")) c.encoder.layers = typed<int>(e, "layers");
    if (e.contains("heads")) c.encoder.heads = typed<int>(e, "heads");
    if (e.contains("ffn_width")) c.encoder.ffn_width = typed<int>(e, "ffn_width");
    if (e.contains("max_positions")) c.encoder.max_positions = typed<int>(e, "max_positions");
  }
  if (j.contains("frozen")) c.frozen = typed<bool>(j, "frozen");
  if (j.contains("mag_beta")) c.mag_beta = typed<double>(j, "mag_beta");
  if (j.contains("mag_dropout")) c.mag_dropout = typed<double>(j, "mag_dropout");
  if (j.contains("gaze_budget")) c.gaze_budget = typed<int>(j, "gaze_budget");
  if (j.contains("cnn_channels")) c.cnn_channels = typed<int>(j, "cnn_channels");
  c.validate();
  return c;
}

std::uint64_t feature_schema_hash() {
  std::vector<std::string> names = word_feature_names();
  for (const auto& n : fixation_feature_names()) names.push_back("fix:" + n);
  for (const auto& n : global_feature_names()) names.push_back("global:" + n);
  return schema_hash(names);
}

void save_checkpoint(const std::string& path, const Model& model, std::uint64_t seed, std::uint64_t hash,
                     const nlohmann::json& metadata) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["config"] = model_config_to_json(model.config());
  j["seed"] = seed;
  j["schema_hash"] = hash;
  j["metadata"] = metadata;
  nlohmann::json params = nlohmann::json::object();
  for (const nn::Parameter* p : model.parameters().all()) {
    std::vector<double> data(p->value.data(), p->value.data() + p->value.size());
    params[p->name] = {{"rows", p->value.rows()}, {"cols", p->value.cols()}, {"data", std::move(data)}};
  }
  j["parameters"] = std::move(params);
  const std::vector<std::uint8_t> bytes = nlohmann::json::to_cbor(j);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot finalize checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path, std::uint64_t expected_schema_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json j;
  try {
      j = nlohmann::json::from_cbor(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint " + path + ": " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kFormat) throw std::runtime_error("not a qeye checkpoint: " + path);
  Checkpoint cp;
  try {
  cp.schema_hash = j.at("schema_hash").get<std::uint64_t>();
  if (cp.schema_hash != expected_schema_hash) {
    throw SchemaMismatchError("checkpoint " + path + " was trained against feature schema " +
                              std::to_string(cp.schema_hash) + ", current schema is " +
                              std::to_string(expected_schema_hash));
  }
  cp.seed = j.at("seed").get<std::uint64_t>();
  cp.metadata = j.value("metadata", nlohmann::json::object());
  const ModelConfig config = model_config_from_json(j.at("config"));
  cp.model = make_model(config, cp.seed);
  const auto& params = j.at("parameters");
  for (nn::Parameter* p : cp.model->parameters().all()) {
    if (!params.contains(p->name)) throw std::runtime_error("checkpoint lacks parameter " + p->name);
    const auto& entry = params.at(p->name);
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto data = entry.at("data").get<std::vector<double>>();
    if (rows != p->value.rows() || cols != p->value.cols() || static_cast<Eigen::Index>(data.size()) != rows * cols) {
      throw std::runtime_error("checkpoint parameter " + p->name + " has the wrong shape");
    }
    p->value = Eigen::Map<const nn::Matrix>(data.data(), rows, cols);
  }
  if (params.size() != cp.model->parameters().all().size()) {
    throw std::runtime_error("checkpoint carries parameters unknown to the model");
  }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint " + path + ": " + e.what());
  }
  return cp;
}

}  // namespace qeye::models
