#pragma once

// Concrete model classes. Most callers go through make_model(); tests use
// these types directly to reach architecture-specific diagnostics.

#include <vector>

#include "qeye/models/encoder.hpp"

namespace qeye::models {

/// Column mask applied to gaze feature matrices for an ablation setting.
Eigen::RowVectorXd word_feature_mask(Ablation ablation);
Eigen::RowVectorXd fixation_feature_mask(Ablation ablation);

class GazeOverflowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gaze tokens FC(E) + Emb_pos + Emb_eye, a gaze separator, then the text.
class ConcatModel : public Model {
 public:
  ConcatModel(ModelConfig config, Rng& rng);
  nn::Var forward(nn::Graph& g, const ModelInput& in, Rng& rng) const override;

  /// Final hidden state of the classification token.
  Eigen::RowVectorXd pooled(const ModelInput& in) const;
  /// n_gaze + 1 + n_text.
  int combined_length(const ModelInput& in) const;

 private:
  nn::Var encode(nn::Graph& g, const ModelInput& in, Rng& rng) const;
  bool fixations_;
  TextEncoder encoder_;
  nn::Linear project_;
  nn::Parameter* eye_ = nullptr;
  nn::Parameter* gaze_separator_ = nullptr;
  ClassifierHead head_;
};

/// Gated displacement of paragraph token states by word-level gaze features.
class GatedModel : public Model {
 public:
  GatedModel(ModelConfig config, Rng& rng);
  nn::Var forward(nn::Graph& g, const ModelInput& in, Rng& rng) const override;

  struct TokenTrace {
    double z_norm = 0;
    double h_norm = 0;
    double alpha = 0;
  };
  /// Per-paragraph-token quantities of an evaluation-mode forward.
  std::vector<TokenTrace> trace(const ModelInput& in) const;
  void set_displacement_enabled(bool enabled) { displacement_ = enabled; }

 private:
  nn::Var run(nn::Graph& g, const ModelInput& in, Rng& rng, std::vector<TokenTrace>* trace) const;
  TextEncoder encoder_;
  nn::Linear gate_;
  nn::Parameter* w_e_ = nullptr;
  nn::Parameter* b_h_ = nullptr;
  ClassifierHead head_;
  bool displacement_ = true;
};

/// Convolved fixations attend over the paragraph; the question then attends
/// over the fused reading representation.
class PostFusionModel : public Model {
 public:
  PostFusionModel(ModelConfig config, Rng& rng);
  nn::Var forward(nn::Graph& g, const ModelInput& in, Rng& rng) const override;

  struct Shapes {
    Eigen::Index gaze_rows = 0;
    Eigen::Index fused_rows = 0;
    Eigen::Index question_rows = 0;
    Eigen::Index output_rows = 0;
  };
  Shapes shapes(const ModelInput& in) const;

 private:
  nn::Var run(nn::Graph& g, const ModelInput& in, Rng& rng, Shapes* shapes) const;
  TextEncoder encoder_;
  nn::Conv1d conv1_, conv2_;
  nn::MultiHeadAttention gaze_to_text_, question_to_reading_;
  nn::Linear fuse_;
  ClassifierHead head_;
};

class TextOnlyModel : public Model {
 public:
  TextOnlyModel(ModelConfig config, Rng& rng);
  nn::Var forward(nn::Graph& g, const ModelInput& in, Rng& rng) const override;

 private:
  TextEncoder encoder_;
  ClassifierHead head_;
};

/// Constant prediction of the most frequent training label.
class MajorityModel : public Model {
 public:
  explicit MajorityModel(ModelConfig config);
  nn::Var forward(nn::Graph& g, const ModelInput& in, Rng& rng) const override;
  bool fits_directly() const override { return true; }
  void fit_direct(std::span<const ModelInput* const> inputs, std::span<const double> weights,
                  const DirectFitOptions& options) override;

 private:
  nn::Parameter* log_prior_ = nullptr;
};

/// Logistic regression on the global feature vector; logits (0, w.x + b).
class LogRegModel : public Model {
 public:
  explicit LogRegModel(ModelConfig config);
  nn::Var forward(nn::Graph& g, const ModelInput& in, Rng& rng) const override;
  bool fits_directly() const override { return true; }
  /// Weighted Newton iterations on C * sum(w_i * loss_i) + |w|^2 / 2 (no
  /// penalty when options.l2 is false; the intercept is never penalized).
  void fit_direct(std::span<const ModelInput* const> inputs, std::span<const double> weights,
                  const DirectFitOptions& options) override;

 private:
  nn::Parameter* weight_ = nullptr;
  nn::Parameter* bias_ = nullptr;
};

/// Two convolutions over (x, y, duration, pupil) and masked max-pooling.
class CnnModel : public Model {
 public:
  CnnModel(ModelConfig config, Rng& rng);
  nn::Var forward(nn::Graph& g, const ModelInput& in, Rng& rng) const override;

 private:
  nn::Conv1d conv1_, conv2_;
  nn::Linear output_;
};

}  // namespace qeye::models
