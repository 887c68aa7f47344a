#include "qeye/models/model.hpp"

#include <cmath>

#include <json.hpp>

#include "qeye/csv.hpp"
#include "qeye/models/architectures.hpp"
#include "qeye/models/tokenizer.hpp"
#include "qeye/nn/ops.hpp"

namespace qeye::models {

namespace {

template <class E, std::size_t N>
E parse_enum(const std::string& s, const std::array<std::pair<E, const char*>, N>& table, const char* what) {
  for (const auto& [value, name] : table) {
    if (s == name) return value;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + s + "'");
}

template <class E, std::size_t N>
std::string enum_name(E v, const std::array<std::pair<E, const char*>, N>& table) {
  for (const auto& [value, name] : table) {
    if (v == value) return name;
  }
  return "?";
}

constexpr std::array<std::pair<Architecture, const char*>, 8> kArchitectures{{
    {Architecture::QEyeConcatWords, "qeye_concat_words"},
    {Architecture::QEyeConcatFixations, "qeye_concat_fixations"},
    {Architecture::QEyeGatedWords, "qeye_gated_words"},
    {Architecture::QEyePostFusionFixations, "qeye_postfusion_fixations"},
    {Architecture::TextOnly, "text_only"},
    {Architecture::Majority, "majority"},
    {Architecture::LogRegGlobal, "logreg_global"},
    {Architecture::CnnFixations, "cnn_fixations"},
}};
constexpr std::array<std::pair<Task, const char*>, 2> kTasks{{{Task::Binary, "binary"}, {Task::MultipleChoice, "choice"}}};
constexpr std::array<std::pair<Ablation, const char*>, 3> kAblations{
    {{Ablation::Full, "full"}, {Ablation::NoLingFeat, "no_ling_feat"}, {Ablation::NoEyes, "no_eyes"}}};
constexpr std::array<std::pair<BackbonePreset, const char*>, 3> kBackbones{
    {{BackbonePreset::Toy, "toy"}, {BackbonePreset::BaseLike, "base-like"}, {BackbonePreset::LargeLike, "large-like"}}};

void append(std::vector<int>& out, const std::vector<int>& part) { out.insert(out.end(), part.begin(), part.end()); }

void check_length(const std::vector<int>& ids, const char* segment, int max_positions) {
  if (static_cast<int>(ids.size()) > max_positions) throw TruncationError(segment, ids.size(), max_positions);
}

void append_answers(std::vector<int>& ids, const ModelInput& in) {
  if (in.answer_tokens.size() != 4) throw std::invalid_argument("choice task requires four answers");
  for (const auto& answer : in.answer_tokens) {
    ids.push_back(kSepId);
    append(ids, answer);
  }
}

}  // namespace

std::string to_string(Architecture a) { return enum_name(a, kArchitectures); }
std::string to_string(Task t) { return enum_name(t, kTasks); }
std::string to_string(Ablation a) { return enum_name(a, kAblations); }
std::string to_string(BackbonePreset b) { return enum_name(b, kBackbones); }
Architecture parse_architecture(const std::string& s) { return parse_enum(s, kArchitectures, "architecture"); }
Task parse_task(const std::string& s) {
  if (s == "multiple_choice") return Task::MultipleChoice;
  return parse_enum(s, kTasks, "task");
}
Ablation parse_ablation(const std::string& s) { return parse_enum(s, kAblations, "ablation"); }
BackbonePreset parse_backbone(const std::string& s) { return parse_enum(s, kBackbones, "backbone preset"); }

const std::vector<Architecture>& all_architectures() {
  static const std::vector<Architecture> all = [] {
    std::vector<Architecture> v;
    for (const auto& [a, name] : kArchitectures) v.push_back(a);
    return v;
  }();
  return all;
}

bool is_word_based(Architecture a) {
  return a == Architecture::QEyeConcatWords || a == Architecture::QEyeGatedWords;
}

EncoderConfig preset_config(BackbonePreset preset) {
  switch (preset) {
    case BackbonePreset::Toy:
      return {512, 16, 2, 2, 32, 256};
    case BackbonePreset::BaseLike:
      return {4096, 64, 4, 4, 256, 512};
    case BackbonePreset::LargeLike:
      return {8192, 128, 8, 8, 512, 512};
  }
  return {};
}

void ModelConfig::validate() const {
  if (ablation == Ablation::NoEyes && !is_word_based(architecture)) {
    throw ConfigError("ablation no_eyes is only valid for word-based architectures, not " + to_string(architecture));
  }
  if (architecture == Architecture::QEyeGatedWords && (injection_layer < 0 || injection_layer >= encoder.layers)) {
    throw ConfigError("injection_layer " + std::to_string(injection_layer) + " outside 0.." +
                      std::to_string(encoder.layers - 1));
  }
  if (architecture == Architecture::LogRegGlobal && task != Task::Binary) {
    throw ConfigError("logreg_global supports the binary task only");
  }
  if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must lie in [0, 1)");
  if (mag_dropout < 0 || mag_dropout >= 1) throw ConfigError("mag_dropout must lie in [0, 1)");
  if (mag_beta < 0) throw ConfigError("mag_beta must be non-negative");
  if (encoder.width < 1 || encoder.layers < 1 || encoder.heads < 1 || encoder.width % encoder.heads != 0) {
    throw ConfigError("encoder width must be positive and divisible by the head count");
  }
  if (encoder.vocab_size <= kFirstHashedId) throw ConfigError("encoder vocabulary too small");
  if (encoder.max_positions < 4) throw ConfigError("encoder max_positions too small");
  if (gaze_budget < 1) throw ConfigError("gaze_budget must be positive");
  if (cnn_channels < 1) throw ConfigError("cnn_channels must be positive");
}

TruncationError::TruncationError(const std::string& segment, std::size_t length, int limit)
    : std::runtime_error("input does not fit the encoder: " + segment + " segment reaches " + std::to_string(length) +
                         " tokens (limit " + std::to_string(limit) + ")"),
      segment_(segment) {}

TextSequence build_text_sequence(const ModelInput& in, Task task, int max_positions) {
  TextSequence s;
  s.ids.push_back(kClsId);
  append(s.ids, in.paragraph_tokens);
  s.ids.push_back(kSepId);
  check_length(s.ids, "paragraph", max_positions);
  append(s.ids, in.question_tokens);
  check_length(s.ids, "question", max_positions);
  if (task == Task::MultipleChoice) {
    append_answers(s.ids, in);
    check_length(s.ids, "answers", max_positions);
  }
  s.ids.push_back(kSepId);
  check_length(s.ids, task == Task::MultipleChoice ? "answers" : "question", max_positions);
  s.paragraph_offset = kParagraphOffset;
  s.paragraph_length = static_cast<int>(in.paragraph_tokens.size());
  return s;
}

std::vector<int> build_paragraph_sequence(const ModelInput& in, int max_positions) {
  std::vector<int> ids{kClsId};
  append(ids, in.paragraph_tokens);
  ids.push_back(kSepId);
  check_length(ids, "paragraph", max_positions);
  return ids;
}

std::vector<int> build_question_sequence(const ModelInput& in, Task task, int max_positions) {
  std::vector<int> ids{kClsId};
  append(ids, in.question_tokens);
  check_length(ids, "question", max_positions);
  if (task == Task::MultipleChoice) append_answers(ids, in);
  ids.push_back(kSepId);
  check_length(ids, task == Task::MultipleChoice ? "answers" : "question", max_positions);
  return ids;
}

Model::Model(ModelConfig config) : config_(std::move(config)) { config_.validate(); }

void Model::fit_direct(std::span<const ModelInput* const>, std::span<const double>, const DirectFitOptions&) {
  throw std::logic_error(to_string(config_.architecture) + " is trained by gradient descent, not fitted directly");
}

Eigen::RowVectorXd Model::logits(const ModelInput& in) const {
  nn::Graph g;
  g.training = false;
  Rng rng(0);
  return forward(g, in, rng).value();
}

Eigen::RowVectorXd Model::probabilities(const ModelInput& in) const { return nn::softmax(logits(in)); }

std::unique_ptr<Model> make_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  std::unique_ptr<Model> m;
  switch (config.architecture) {
    case Architecture::QEyeConcatWords:
    case Architecture::QEyeConcatFixations:
      m = std::make_unique<ConcatModel>(config, rng);
      break;
    case Architecture::QEyeGatedWords:
      m = std::make_unique<GatedModel>(config, rng);
      break;
    case Architecture::QEyePostFusionFixations:
      m = std::make_unique<PostFusionModel>(config, rng);
      break;
    case Architecture::TextOnly:
      m = std::make_unique<TextOnlyModel>(config, rng);
      break;
    case Architecture::Majority:
      m = std::make_unique<MajorityModel>(config);
      break;
    case Architecture::LogRegGlobal:
      m = std::make_unique<LogRegModel>(config);
      break;
    case Architecture::CnnFixations:
      m = std::make_unique<CnnModel>(config, rng);
      break;
  }
  if (config.frozen) m->parameters().set_frozen_prefix("encoder.", true);
  return m;
}

int predict(const Eigen::RowVectorXd& logits, Task task) {
  const Eigen::Index expected = task == Task::Binary ? 2 : 4;
  if (logits.size() != expected) {
    throw std::invalid_argument("expected " + std::to_string(expected) + " logits, got " +
                                std::to_string(logits.size()));
  }
  int best = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (std::isnan(logits(i))) throw NumericError("NaN logit at class " + std::to_string(i));
    if (logits(i) > logits(best)) best = static_cast<int>(i);
  }
  return best;
}

std::string to_json_line(const PredictionRecord& r) {
  nlohmann::ordered_json j;
  j["trial_id"] = r.trial_id;
  j["fold_id"] = r.fold_id;
  j["evaluation_regime"] = r.evaluation_regime;
  j["task"] = to_string(r.task);
  j["class_probabilities"] = r.class_probabilities;
  j["predicted"] = r.predicted;
  j["gold"] = r.gold;
  return j.dump();
}

PredictionRecord prediction_from_json_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  PredictionRecord r;
  r.trial_id = j.at("trial_id").get<std::string>();
  r.fold_id = j.at("fold_id").get<int>();
  r.evaluation_regime = j.at("evaluation_regime").get<std::string>();
  r.task = parse_task(j.at("task").get<std::string>());
  r.class_probabilities = j.at("class_probabilities").get<std::vector<double>>();
  r.predicted = j.at("predicted").get<int>();
  r.gold = j.at("gold").get<int>();
  return r;
}

}  // namespace qeye::models
