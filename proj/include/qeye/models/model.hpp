#pragma once

// Shared forward/predict interface for every comprehension model, plus the
// configuration and input types they consume.

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qeye/corpus.hpp"
#include "qeye/nn/graph.hpp"
#include "qeye/random.hpp"

namespace qeye::models {

enum class Architecture {
  QEyeConcatWords,
  QEyeConcatFixations,
  QEyeGatedWords,
  QEyePostFusionFixations,
  TextOnly,
  Majority,
  LogRegGlobal,
  CnnFixations,
};
enum class Task { Binary, MultipleChoice };
enum class Ablation { Full, NoLingFeat, NoEyes };
enum class BackbonePreset { Toy, BaseLike, LargeLike };

std::string to_string(Architecture a);
std::string to_string(Task t);
std::string to_string(Ablation a);
std::string to_string(BackbonePreset b);
Architecture parse_architecture(const std::string& s);
Task parse_task(const std::string& s);
Ablation parse_ablation(const std::string& s);
BackbonePreset parse_backbone(const std::string& s);

const std::vector<Architecture>& all_architectures();
/// Consumes word-level gaze features.
bool is_word_based(Architecture a);

struct EncoderConfig {
  int vocab_size = 512;
  int width = 16;
  int layers = 2;
  int heads = 2;
  int ffn_width = 32;
  int max_positions = 256;

  bool operator==(const EncoderConfig&) const = default;
};

EncoderConfig preset_config(BackbonePreset preset);

struct ModelConfig {
  Architecture architecture = Architecture::TextOnly;
  Task task = Task::Binary;
  Ablation ablation = Ablation::Full;
  /// Gated model: displacement applied to the input of block k (0 = embedding output).
  int injection_layer = 0;
  double dropout = 0.1;
  BackbonePreset backbone = BackbonePreset::Toy;
  EncoderConfig encoder = preset_config(BackbonePreset::Toy);
  bool frozen = false;
  double mag_beta = 1e-3;
  double mag_dropout = 0.5;
  /// Maximum number of gaze tokens prepended by the concatenation models.
  int gaze_budget = 512;
  int cnn_channels = 16;

  int num_classes() const { return task == Task::Binary ? 2 : 4; }
  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

/// One trial ready for a forward pass. Feature matrices are already
/// standardized; rows flagged invalid are padding and must not influence
/// the output.
struct ModelInput {
  std::string trial_id;

  std::vector<int> paragraph_tokens;
  /// Paragraph word of every paragraph token.
  std::vector<int> paragraph_token_word;
  std::vector<int> question_tokens;
  std::vector<std::vector<int>> answer_tokens;  // four entries, presentation order

  Eigen::MatrixXd word_features;  // one row per word
  /// Text-sequence position attached to each word row (its first sub-word).
  std::vector<int> word_positions;
  std::vector<char> word_valid;

  Eigen::MatrixXd fixation_features;  // one row per fixation
  /// Text-sequence position of the fixated word; -1 when out of any box.
  std::vector<int> fixation_positions;
  std::vector<char> fixation_valid;

  Eigen::RowVectorXd global_features;

  int label = 0;
  Starc starc = Starc::A;
};

/// Position of the first paragraph token within the encoded text sequence.
inline constexpr int kParagraphOffset = 1;

/// Raised when a text segment does not fit into the encoder.
class TruncationError : public std::runtime_error {
 public:
  TruncationError(const std::string& segment, std::size_t length, int limit);
  const std::string& segment() const { return segment_; }

 private:
  std::string segment_;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TextSequence {
  std::vector<int> ids;
  int paragraph_offset = 0;
  int paragraph_length = 0;
};

/// [CLS; p; SEP; q; (a1 SEP a2 SEP a3 SEP a4)?; SEP], answers only for the choice task.
TextSequence build_text_sequence(const ModelInput& in, Task task, int max_positions);
/// [CLS; p; SEP]
std::vector<int> build_paragraph_sequence(const ModelInput& in, int max_positions);
/// [CLS; q; (SEP a1 ... a4)?; SEP]
std::vector<int> build_question_sequence(const ModelInput& in, Task task, int max_positions);

class Model {
 public:
  explicit Model(ModelConfig config);
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore& parameters() { return params_; }
  const nn::ParameterStore& parameters() const { return params_; }

  /// 1 x num_classes logits. Dropout is active only when g.training is set.
  virtual nn::Var forward(nn::Graph& g, const ModelInput& in, Rng& rng) const = 0;

  /// Models fitted in closed form / full batch rather than by the trainer.
  virtual bool fits_directly() const { return false; }
  struct DirectFitOptions {
    double c = 1.0;
    bool l2 = true;
  };
  virtual void fit_direct(std::span<const ModelInput* const> inputs, std::span<const double> weights,
                          const DirectFitOptions& options);

  /// Evaluation-mode logits.
  Eigen::RowVectorXd logits(const ModelInput& in) const;
  Eigen::RowVectorXd probabilities(const ModelInput& in) const;

 protected:
  ModelConfig config_;
  nn::ParameterStore params_;
};

std::unique_ptr<Model> make_model(const ModelConfig& config, std::uint64_t seed);

/// Arg-max class; ties go to the lowest index. Throws NumericError on NaN.
int predict(const Eigen::RowVectorXd& logits, Task task);

struct PredictionRecord {
  std::string trial_id;
  int fold_id = 0;
  std::string evaluation_regime;
  Task task = Task::Binary;
  std::vector<double> class_probabilities;
  int predicted = 0;
  int gold = 0;
};

std::string to_json_line(const PredictionRecord& r);
PredictionRecord prediction_from_json_line(const std::string& line);

}  // namespace qeye::models
