#include "qeye/models/architectures.hpp"

#include <algorithm>
#include <cmath>

#include "qeye/csv.hpp"
#include "qeye/gaze_features.hpp"
#include "qeye/models/tokenizer.hpp"

namespace qeye::models {

namespace {

constexpr std::size_t kWordWidth = WordFeatureVector::kSize;
constexpr std::size_t kFixationWidth = FixationFeatureVector::kSize;
constexpr std::size_t kGlobalWidth = GlobalFeatureVector::kSize;

std::vector<char> validity(std::span<const char> given, Eigen::Index rows) {
  if (given.empty()) return std::vector<char>(static_cast<std::size_t>(rows), 1);
  if (static_cast<Eigen::Index>(given.size()) != rows) throw std::invalid_argument("validity mask size mismatch");
  return {given.begin(), given.end()};
}

std::size_t count_valid(const std::vector<char>& v) {
  return static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](char c) { return c != 0; }));
}

void check_width(const Eigen::MatrixXd& m, std::size_t width, const char* what) {
  if (m.rows() > 0 && static_cast<std::size_t>(m.cols()) != width) {
    throw std::invalid_argument(std::string(what) + " features have " + std::to_string(m.cols()) +
                                " columns, expected " + std::to_string(width));
  }
}

nn::Matrix masked_columns(const Eigen::MatrixXd& features, const Eigen::RowVectorXd& mask) {
  if (features.rows() == 0) return nn::Matrix(0, mask.size());
  return (features.array().rowwise() * mask.array()).matrix();
}

/// Zeroes invalid rows outright so that padding never reaches arithmetic
/// (garbage there could be non-finite).
nn::Matrix drop_invalid_rows(nn::Matrix m, const std::vector<char>& valid) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!valid[static_cast<std::size_t>(i)]) m.row(i).setZero();
  }
  return m;
}

/// Rows for the gaze sequence: features and position per unit.
struct GazeUnits {
  nn::Matrix features;
  std::vector<int> positions;
  std::vector<char> valid;
};

GazeUnits gaze_units(const ModelInput& in, bool fixations, Ablation ablation) {
  GazeUnits u;
  if (fixations) {
    check_width(in.fixation_features, kFixationWidth, "fixation");
    u.valid = validity(in.fixation_valid, in.fixation_features.rows());
    u.features = drop_invalid_rows(masked_columns(in.fixation_features, fixation_feature_mask(ablation)), u.valid);
    u.positions = in.fixation_positions;
  } else {
    check_width(in.word_features, kWordWidth, "word");
    u.valid = validity(in.word_valid, in.word_features.rows());
    u.features = drop_invalid_rows(masked_columns(in.word_features, word_feature_mask(ablation)), u.valid);
    u.positions = in.word_positions;
  }
  if (u.positions.size() != static_cast<std::size_t>(u.features.rows())) {
    throw std::invalid_argument("gaze position count does not match feature rows");
  }
  for (std::size_t i = 0; i < u.valid.size(); ++i) {
    if (!u.valid[i]) u.positions[i] = -1;
  }
  return u;
}

std::vector<char> concat_masks(std::initializer_list<std::span<const char>> parts) {
  std::vector<char> out;
  for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace

Eigen::RowVectorXd word_feature_mask(Ablation ablation) {
  Eigen::RowVectorXd m = Eigen::RowVectorXd::Ones(kWordWidth);
  if (ablation == Ablation::NoEyes) m.head(kWordMeasureCount).setZero();
  if (ablation == Ablation::NoLingFeat) m.segment(kWordMeasureCount, LinguisticFeatures::kCount).setZero();
  return m;
}

Eigen::RowVectorXd fixation_feature_mask(Ablation ablation) {
  Eigen::RowVectorXd m = Eigen::RowVectorXd::Ones(kFixationWidth);
  if (ablation == Ablation::NoEyes) throw ConfigError("ablation no_eyes is only defined for word-based models");
  if (ablation == Ablation::NoLingFeat) m.segment(kFixMeasureCount, LinguisticFeatures::kCount).setZero();
  return m;
}

// --- concatenation -------------------------------------------------------------

ConcatModel::ConcatModel(ModelConfig config, Rng& rng)
    : Model(std::move(config)), fixations_(config_.architecture == Architecture::QEyeConcatFixations) {
  const auto& e = config_.encoder;
  encoder_ = TextEncoder::create(params_, "encoder", e, rng);
  project_ = nn::Linear::create(params_, "gaze.project", fixations_ ? kFixationWidth : kWordWidth, e.width, rng);
  eye_ = &params_.add("gaze.eye_embedding", nn::normal_init(1, e.width, 0.1, rng), true);
  gaze_separator_ = &params_.add("gaze.separator", encoder_.token_table().value.row(kSepId), true);
  head_ = ClassifierHead::create(params_, "head", e.width, config_.num_classes(), rng);
}

int ConcatModel::combined_length(const ModelInput& in) const {
  const auto n_gaze = fixations_ ? in.fixation_features.rows() : in.word_features.rows();
  const auto text = build_text_sequence(in, config_.task, config_.encoder.max_positions);
  return static_cast<int>(n_gaze) + 1 + static_cast<int>(text.ids.size());
}

nn::Var ConcatModel::encode(nn::Graph& g, const ModelInput& in, Rng& rng) const {
  const TextSequence text = build_text_sequence(in, config_.task, config_.encoder.max_positions);
  GazeUnits units = gaze_units(in, fixations_, config_.ablation);
  const auto n_gaze = units.features.rows();
  if (n_gaze > config_.gaze_budget) {
    throw GazeOverflowError("gaze sequence of " + std::to_string(n_gaze) + " units exceeds the budget of " +
                            std::to_string(config_.gaze_budget));
  }
  const std::vector<char> separator_and_text(text.ids.size() + 1, 1);
  const std::vector<char> keys = concat_masks({units.valid, separator_and_text});

  nn::Var z_w = encoder_.embed(g, text.ids);
  std::vector<nn::Var> parts;
  if (n_gaze > 0) {
    nn::Var projected = project_(g, g.constant(std::move(units.features)));
    nn::Var z_ep = nn::add_row(nn::add(projected, encoder_.position_embeddings(g, units.positions)), g.param(*eye_));
    parts.push_back(z_ep);
  }
  parts.push_back(g.param(*gaze_separator_));
  parts.push_back(z_w);
  nn::Var x = encoder_.normalize(g, nn::concat_rows(parts), config_.dropout, rng);
  x = encoder_.run_blocks(g, x, 0, config_.encoder.layers, keys, config_.dropout, rng);
  return nn::slice_rows(x, n_gaze + 1, 1);
}

nn::Var ConcatModel::forward(nn::Graph& g, const ModelInput& in, Rng& rng) const {
  return head_(g, encode(g, in, rng), config_.dropout, rng);
}

Eigen::RowVectorXd ConcatModel::pooled(const ModelInput& in) const {
  nn::Graph g;
  Rng rng(0);
  return encode(g, in, rng).value();
}

// --- gated displacement --------------------------------------------------------

GatedModel::GatedModel(ModelConfig config, Rng& rng) : Model(std::move(config)) {
  const auto& e = config_.encoder;
  encoder_ = TextEncoder::create(params_, "encoder", e, rng);
  gate_ = nn::Linear::create(params_, "mag.gate", e.width + static_cast<int>(kWordWidth), e.width, rng);
  w_e_ = &params_.add("mag.w_e", nn::glorot(kWordWidth, e.width, rng));
  b_h_ = &params_.add("mag.b_h", nn::Matrix::Zero(1, e.width), true);
  head_ = ClassifierHead::create(params_, "head", e.width, config_.num_classes(), rng);
}

nn::Var GatedModel::run(nn::Graph& g, const ModelInput& in, Rng& rng, std::vector<TokenTrace>* trace) const {
  check_width(in.word_features, kWordWidth, "word");
  const TextSequence text = build_text_sequence(in, config_.task, config_.encoder.max_positions);
  const int k = config_.injection_layer;

  nn::Var x = encoder_.normalize(g, encoder_.embed(g, text.ids), config_.dropout, rng);
  x = encoder_.run_blocks(g, x, 0, k, {}, config_.dropout, rng);

  if (displacement_ && text.paragraph_length > 0) {
    // Word features duplicated onto every sub-word token of the word.
    const nn::Matrix words = masked_columns(in.word_features, word_feature_mask(config_.ablation));
    nn::Matrix per_token(text.paragraph_length, static_cast<Eigen::Index>(kWordWidth));
    for (int t = 0; t < text.paragraph_length; ++t) {
      const int w = in.paragraph_token_word.at(static_cast<std::size_t>(t));
      if (w < 0 || w >= words.rows()) throw std::invalid_argument("paragraph token maps to a missing word row");
      per_token.row(t) = words.row(w);
    }
    nn::Var e = g.constant(std::move(per_token));
    const Eigen::Index off = text.paragraph_offset;
    const Eigen::Index len = text.paragraph_length;
    nn::Var z = nn::slice_rows(x, off, len);
    nn::Var both[] = {z, e};
    nn::Var gate = nn::relu(gate_(g, nn::concat_cols(both)));
    nn::Var h = nn::add_row(nn::mul(gate, nn::matmul(e, g.param(*w_e_))), g.param(*b_h_));
    nn::Var alpha = nn::displacement_scale(z, h, config_.mag_beta);
    if (trace) {
      trace->clear();
      for (Eigen::Index i = 0; i < len; ++i) {
        trace->push_back({z.value().row(i).norm(), h.value().row(i).norm(), alpha.value()(i, 0)});
      }
    }
    nn::Var shift = nn::dropout(nn::scale_rows(h, alpha), config_.mag_dropout, rng);
    nn::Var displaced = nn::add(z, shift);
    const Eigen::Index rest = x.rows() - off - len;
    std::vector<nn::Var> rows{nn::slice_rows(x, 0, off), displaced};
    if (rest > 0) rows.push_back(nn::slice_rows(x, off + len, rest));
    x = nn::concat_rows(rows);
  }

  x = encoder_.run_blocks(g, x, k, config_.encoder.layers, {}, config_.dropout, rng);
  return head_(g, nn::slice_rows(x, 0, 1), config_.dropout, rng);
}

nn::Var GatedModel::forward(nn::Graph& g, const ModelInput& in, Rng& rng) const { return run(g, in, rng, nullptr); }

std::vector<GatedModel::TokenTrace> GatedModel::trace(const ModelInput& in) const {
  nn::Graph g;
  Rng rng(0);
  std::vector<TokenTrace> out;
  run(g, in, rng, &out);
  return out;
}

// --- post fusion ------------------------------------------------------------------

PostFusionModel::PostFusionModel(ModelConfig config, Rng& rng) : Model(std::move(config)) {
  const auto& e = config_.encoder;
  encoder_ = TextEncoder::create(params_, "encoder", e, rng);
  conv1_ = nn::Conv1d::create(params_, "fusion.conv1", kFixationWidth, e.width, rng);
  conv2_ = nn::Conv1d::create(params_, "fusion.conv2", e.width, e.width, rng);
  gaze_to_text_ = nn::MultiHeadAttention::create(params_, "fusion.gaze_to_text", e.width, e.heads, rng);
  fuse_ = nn::Linear::create(params_, "fusion.fuse", 2 * e.width, e.width, rng);
  question_to_reading_ = nn::MultiHeadAttention::create(params_, "fusion.question_to_reading", e.width, e.heads, rng);
  head_ = ClassifierHead::create(params_, "head", e.width, config_.num_classes(), rng);
}

nn::Var PostFusionModel::run(nn::Graph& g, const ModelInput& in, Rng& rng, Shapes* shapes) const {
  GazeUnits units = gaze_units(in, true, config_.ablation);
  if (count_valid(units.valid) == 0) throw std::invalid_argument("post-fusion model requires a non-empty fixation sequence");
  const auto paragraph = build_paragraph_sequence(in, config_.encoder.max_positions);
  const auto question = build_question_sequence(in, config_.task, config_.encoder.max_positions);
  const double p = config_.dropout;

  nn::Var z_p = encoder_.encode(g, paragraph, p, rng).tokens;
  nn::Var q_all = encoder_.encode(g, question, p, rng).tokens;
  // Question (and answer) tokens without the enclosing CLS / final SEP.
  nn::Var z_q = nn::slice_rows(q_all, 1, q_all.rows() - 2);

  nn::Var f = g.constant(std::move(units.features));
  nn::Var c = nn::mask_rows(nn::relu(conv1_(g, f)), units.valid);
  nn::Var z_ep = nn::mask_rows(nn::relu(conv2_(g, c)), units.valid);

  nn::Var attended = gaze_to_text_(g, z_ep, z_p, {}, p, rng);
  nn::Var both[] = {attended, z_ep};
  nn::Var reading = fuse_(g, nn::concat_cols(both));
  nn::Var out = question_to_reading_(g, z_q, reading, units.valid, p, rng);
  if (shapes) *shapes = {z_ep.rows(), reading.rows(), z_q.rows(), out.rows()};
  return head_(g, nn::mean_rows(out), p, rng);
}

nn::Var PostFusionModel::forward(nn::Graph& g, const ModelInput& in, Rng& rng) const {
  return run(g, in, rng, nullptr);
}

PostFusionModel::Shapes PostFusionModel::shapes(const ModelInput& in) const {
  nn::Graph g;
  Rng rng(0);
  Shapes s;
  run(g, in, rng, &s);
  return s;
}

// --- text only ------------------------------------------------------------------------

TextOnlyModel::TextOnlyModel(ModelConfig config, Rng& rng) : Model(std::move(config)) {
  encoder_ = TextEncoder::create(params_, "encoder", config_.encoder, rng);
  head_ = ClassifierHead::create(params_, "head", config_.encoder.width, config_.num_classes(), rng);
}

nn::Var TextOnlyModel::forward(nn::Graph& g, const ModelInput& in, Rng& rng) const {
  const TextSequence text = build_text_sequence(in, config_.task, config_.encoder.max_positions);
  auto encoded = encoder_.encode(g, text.ids, config_.dropout, rng);
  return head_(g, encoded.pooled, config_.dropout, rng);
}

// --- majority ----------------------------------------------------------------------------

MajorityModel::MajorityModel(ModelConfig config) : Model(std::move(config)) {
  log_prior_ = &params_.add("majority.log_prior", nn::Matrix::Zero(1, config_.num_classes()), true);
}

nn::Var MajorityModel::forward(nn::Graph& g, const ModelInput&, Rng&) const {
  return g.constant(log_prior_->value);
}

void MajorityModel::fit_direct(std::span<const ModelInput* const> inputs, std::span<const double>,
                               const DirectFitOptions&) {
  if (inputs.empty()) throw std::invalid_argument("majority baseline needs training trials");
  const int classes = config_.num_classes();
  std::vector<double> counts(static_cast<std::size_t>(classes), 0.0);
  for (const ModelInput* in : inputs) counts.at(static_cast<std::size_t>(in->label)) += 1.0;
  const double total = static_cast<double>(inputs.size());
  for (int c = 0; c < classes; ++c) {
    log_prior_->value(0, c) = std::log((counts[static_cast<std::size_t>(c)] + 1.0) / (total + classes));
  }
}

// --- logistic regression ----------------------------------------------------------------

LogRegModel::LogRegModel(ModelConfig config) : Model(std::move(config)) {
  if (config_.task != Task::Binary) throw ConfigError("logreg_global supports the binary task only");
  weight_ = &params_.add("logreg.weight", nn::Matrix::Zero(kGlobalWidth, 1));
  bias_ = &params_.add("logreg.bias", nn::Matrix::Zero(1, 1), true);
}

nn::Var LogRegModel::forward(nn::Graph& g, const ModelInput& in, Rng&) const {
  if (in.global_features.size() != static_cast<Eigen::Index>(kGlobalWidth)) {
    throw std::invalid_argument("logreg_global requires the global feature vector");
  }
  nn::Var x = g.constant(in.global_features);
  nn::Var z = nn::add(nn::matmul(x, g.param(*weight_)), g.param(*bias_));
  nn::Var parts[] = {g.constant(nn::Matrix::Zero(1, 1)), z};
  return nn::concat_cols(parts);
}

void LogRegModel::fit_direct(std::span<const ModelInput* const> inputs, std::span<const double> weights,
                             const DirectFitOptions& options) {
  const auto n = static_cast<Eigen::Index>(inputs.size());
  if (n == 0) throw std::invalid_argument("logistic regression needs training trials");
  if (!weights.empty() && static_cast<Eigen::Index>(weights.size()) != n) {
    throw std::invalid_argument("sample weight count mismatch");
  }
  if (options.l2 && options.c <= 0) throw ConfigError("logistic regression C must be positive");
  const auto k = static_cast<Eigen::Index>(kGlobalWidth);
  Eigen::MatrixXd x(n, k + 1);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const ModelInput& in = *inputs[static_cast<std::size_t>(i)];
    if (in.global_features.size() != k) throw std::invalid_argument("logreg_global requires the global feature vector");
    x.row(i).head(k) = in.global_features;
    x(i, k) = 1.0;
    y(i) = in.label;
    w(i) = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
  }
  // Objective: C * sum w_i * nll_i + 0.5 |beta_{0..k-1}|^2. A tiny ridge keeps
  // the unpenalized problem solvable under separation.
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(k + 1, options.l2 ? 1.0 : 1e-8);
  penalty(k) = 1e-8;
  const double c = options.l2 ? options.c : 1.0;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k + 1);
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::VectorXd z = x * beta;
    Eigen::VectorXd p = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    Eigen::VectorXd grad = c * (x.transpose() * (w.array() * (p - y).array()).matrix()) +
                           penalty.cwiseProduct(beta);
    Eigen::VectorXd curvature = (w.array() * p.array() * (1.0 - p.array())).matrix();
    Eigen::MatrixXd hessian = c * (x.transpose() * curvature.asDiagonal() * x);
    hessian.diagonal() += penalty;
    Eigen::VectorXd step = hessian.ldlt().solve(grad);
    if (!step.allFinite()) break;
    beta -= step;
    if (step.lpNorm<Eigen::Infinity>() < 1e-10) break;
  }
  weight_->value = beta.head(k);
  bias_->value(0, 0) = beta(k);
}

// --- CNN ------------------------------------------------------------------------------------

CnnModel::CnnModel(ModelConfig config, Rng& rng) : Model(std::move(config)) {
  conv1_ = nn::Conv1d::create(params_, "cnn.conv1", 4, config_.cnn_channels, rng);
  conv2_ = nn::Conv1d::create(params_, "cnn.conv2", config_.cnn_channels, config_.cnn_channels, rng);
  output_ = nn::Linear::create(params_, "cnn.output", config_.cnn_channels, config_.num_classes(), rng);
}

nn::Var CnnModel::forward(nn::Graph& g, const ModelInput& in, Rng& rng) const {
  check_width(in.fixation_features, kFixationWidth, "fixation");
  const auto valid = validity(in.fixation_valid, in.fixation_features.rows());
  if (count_valid(valid) == 0) throw std::invalid_argument("CNN baseline requires a non-empty scanpath");
  constexpr FixMeasure channels[] = {FixMeasure::CurrentFixX, FixMeasure::CurrentFixY, FixMeasure::CurrentFixDuration,
                                     FixMeasure::CurrentFixPupil};
  nn::Matrix raw(in.fixation_features.rows(), 4);
  for (int c = 0; c < 4; ++c) raw.col(c) = in.fixation_features.col(static_cast<Eigen::Index>(channels[c]));
  nn::Var x = g.constant(drop_invalid_rows(std::move(raw), valid));
  nn::Var h = nn::mask_rows(nn::relu(conv1_(g, x)), valid);
  h = nn::mask_rows(nn::relu(conv2_(g, h)), valid);
  nn::Var pooled = nn::dropout(nn::max_rows(h, valid), config_.dropout, rng);
  return output_(g, pooled);
}

}  // namespace qeye::models
