#pragma once

// Word-level, fixation-level and global eye-movement features, linguistic
// word properties, and train-fitted standardization.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qeye/corpus.hpp"

namespace qeye {

// --- linguistic word properties ---------------------------------------------

struct LinguisticFeatures {
  double surprisal = 0;          // bits
  double wordfreq_frequency = 0; // -log2 p(word), bits
  double length = 1;             // characters
  double start_of_line = 0;
  double end_of_line = 0;
  double is_content_word = 0;
  double n_lefts = 0;
  double n_rights = 0;
  double distance2head = 0;

  static constexpr std::size_t kCount = 9;
  std::array<double, kCount> as_array() const;
};

const std::array<std::string, LinguisticFeatures::kCount>& linguistic_feature_names();

struct SyntaxAnnotation {
  std::string pos;
  /// Index of the syntactic head; equal to the word's own index for the root.
  int head = 0;
};

class NextWordLogProbProvider {
 public:
  virtual ~NextWordLogProbProvider() = default;
  virtual std::string name() const = 0;
  /// log2 p(word_i | words_<i) for every word of the paragraph.
  virtual std::vector<double> log2_probs(const ParagraphItem& paragraph) const = 0;
};

class FrequencyProvider {
 public:
  virtual ~FrequencyProvider() = default;
  virtual std::string name() const = 0;
  /// log2 unigram probability.
  virtual double log2_prob(const std::string& word) const = 0;
};

class SyntaxProvider {
 public:
  virtual ~SyntaxProvider() = default;
  virtual std::string name() const = 0;
  virtual std::vector<SyntaxAnnotation> annotate(const ParagraphItem& paragraph) const = 0;
};

class ProviderError : public std::runtime_error {
 public:
  ProviderError(const std::string& provider, const std::string& what)
      : std::runtime_error("provider " + provider + ": " + what), provider_(provider) {}
  const std::string& provider() const { return provider_; }

 private:
  std::string provider_;
};

/// Providers used by linguistic_features. With no `next_word`, surprisal
/// falls back to the context-free frequency value.
struct ProviderBundle {
  std::shared_ptr<const NextWordLogProbProvider> next_word;
  std::shared_ptr<const FrequencyProvider> frequency;
  std::shared_ptr<const SyntaxProvider> syntax;
};

/// Per-word annotation table (CSV: paragraph_id, word_index, log2_prob_context,
/// log2_freq, pos, head) serving all three provider interfaces.
class AnnotationTable : public NextWordLogProbProvider, public FrequencyProvider, public SyntaxProvider {
 public:
  struct Row {
    double log2_prob_context = 0;
    double log2_freq = 0;
    std::string pos;
    int head = 0;
  };

  static std::shared_ptr<AnnotationTable> load(const std::string& path);
  static std::shared_ptr<AnnotationTable> read(std::istream& in, const std::string& source);
  static void write(std::ostream& out, const std::vector<std::pair<const ParagraphItem*, std::vector<Row>>>& rows);

  void add(const std::string& paragraph_id, std::vector<Row> rows, const std::vector<std::string>& surfaces);

  std::string name() const override { return "annotation-table"; }
  std::vector<double> log2_probs(const ParagraphItem& paragraph) const override;
  double log2_prob(const std::string& word) const override;
  std::vector<SyntaxAnnotation> annotate(const ParagraphItem& paragraph) const override;

  static ProviderBundle bundle(std::shared_ptr<const AnnotationTable> table, bool with_context_model = true);

 private:
  const std::vector<Row>& rows_for(const ParagraphItem& paragraph) const;
  std::map<std::string, std::vector<Row>> by_paragraph_;
  std::map<std::string, double> by_surface_;
};

/// Explicitly-configured fallback: no syntax (every word its own head, POS "X").
class FlatSyntaxProvider : public SyntaxProvider {
 public:
  std::string name() const override { return "flat-syntax"; }
  std::vector<SyntaxAnnotation> annotate(const ParagraphItem& paragraph) const override;
};

bool is_content_pos(const std::string& pos);

std::vector<LinguisticFeatures> linguistic_features(const ParagraphItem& paragraph, const ProviderBundle& providers);

// --- word level ---------------------------------------------------------------

enum class WordMeasure : std::size_t {
  DwellTime,
  DwellTimePct,
  FixationPct,
  FixationCount,
  RegressionInCount,
  RegressionOutFullCount,
  RunCount,
  FirstFixProgressive,
  FirstFixationDuration,
  FirstFixationVisitedIaCount,
  FirstRunDwellTime,
  FirstRunFixationCount,
  Skip,
  Top,
  Left,
  NormalizedWordId,
  RegressionPathDuration,
  RegressionOutCount,
  SelectiveRegressionPathDuration,
  LastFixationDuration,
  LastRunDwellTime,
  ParagraphRt,
  TotalSkip,
};
inline constexpr std::size_t kWordMeasureCount = 23;

struct WordFeatureVector {
  std::array<double, kWordMeasureCount> eye{};
  LinguisticFeatures ling;

  double operator[](WordMeasure m) const { return eye[static_cast<std::size_t>(m)]; }
  double& operator[](WordMeasure m) { return eye[static_cast<std::size_t>(m)]; }
  static constexpr std::size_t kSize = kWordMeasureCount + LinguisticFeatures::kCount;
  std::array<double, kSize> flat() const;
};

const std::array<std::string, kWordMeasureCount>& word_measure_names();
/// Eye measures followed by linguistic names.
std::vector<std::string> word_feature_names();

/// One vector per paragraph word. Fixations must already carry word indices;
/// out-of-box fixations count toward totals but not toward any word.
std::vector<WordFeatureVector> word_level_features(const Scanpath& scanpath, const ParagraphItem& paragraph,
                                                   std::span<const LinguisticFeatures> ling);

// --- fixation level -----------------------------------------------------------

enum class FixMeasure : std::size_t {
  CurrentFixIndex,
  CurrentFixDuration,
  CurrentFixPupil,
  CurrentFixX,
  CurrentFixY,
  NextFixAngle,
  PreviousFixAngle,
  NextFixDistance,
  PreviousFixDistance,
  NextSacAmplitude,
  NextSacAngle,
  NextSacAvgVelocity,
  NextSacDuration,
  NextSacPeakVelocity,
};
inline constexpr std::size_t kFixMeasureCount = 14;

struct FixationFeatureVector {
  std::array<double, kFixMeasureCount> eye{};
  LinguisticFeatures ling;  // of the fixated word; zeros when out of box
  std::optional<int> word_index;
  bool has_previous = false;
  bool has_next = false;

  double operator[](FixMeasure m) const { return eye[static_cast<std::size_t>(m)]; }
  double& operator[](FixMeasure m) { return eye[static_cast<std::size_t>(m)]; }
  /// eye, ling, has_word, has_previous, has_next.
  static constexpr std::size_t kSize = kFixMeasureCount + LinguisticFeatures::kCount + 3;
  std::array<double, kSize> flat() const;
};

const std::array<std::string, kFixMeasureCount>& fixation_measure_names();
std::vector<std::string> fixation_feature_names();

/// Passthrough report columns win; otherwise kinematics are derived from
/// coordinates (distance in visual degrees, atan2(dy, dx) angles in (-180, 180]).
std::vector<FixationFeatureVector> fixation_level_features(const Scanpath& scanpath, const ParagraphItem& paragraph,
                                                           std::span<const LinguisticFeatures> ling);

/// Angle of the vector (dx, dy) in degrees, mapped into (-180, 180].
double screen_angle_deg(double dx, double dy);

// --- global -------------------------------------------------------------------

struct GlobalFeatureVector {
  double reading_speed_wpm = 0;
  double mean_fixation_duration = 0;
  double mean_dwell_fixated = 0;
  double skip_rate = 0;
  double regression_rate = 0;
  double mean_first_run_dwell = 0;
  double fixation_count = 0;

  static constexpr std::size_t kSize = 7;
  std::array<double, kSize> flat() const;
};

const std::array<std::string, GlobalFeatureVector::kSize>& global_feature_names();

GlobalFeatureVector global_features(const Scanpath& scanpath, const ParagraphItem& paragraph);

// --- standardization ------------------------------------------------------------

/// Column-wise z-scoring fitted on training rows. Columns flagged binary are
/// passed through unchanged; zero-variance columns use std 1.
class Standardizer {
 public:
  Standardizer() = default;
  Standardizer(std::vector<std::string> names, Eigen::RowVectorXd mean, Eigen::RowVectorXd stddev,
               std::vector<bool> binary);

  const std::vector<std::string>& names() const { return names_; }
  const Eigen::RowVectorXd& mean() const { return mean_; }
  const Eigen::RowVectorXd& stddev() const { return std_; }
  const std::vector<bool>& binary() const { return binary_; }
  std::size_t width() const { return names_.size(); }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& features) const;
  void apply_inplace(Eigen::Ref<Eigen::MatrixXd> features) const;

 private:
  std::vector<std::string> names_;
  Eigen::RowVectorXd mean_;
  Eigen::RowVectorXd std_;
  std::vector<bool> binary_;
};

Standardizer fit_standardizer(const Eigen::MatrixXd& train_features, std::vector<std::string> names,
                              std::vector<bool> binary);
Eigen::MatrixXd apply_standardizer(const Standardizer& s, const Eigen::MatrixXd& features);

std::vector<bool> word_feature_binary_mask();
std::vector<bool> fixation_feature_binary_mask();
std::vector<bool> global_feature_binary_mask();

// --- persistence ------------------------------------------------------------------

/// Row-keyed feature matrix with a named schema.
struct FeatureMatrix {
  std::vector<std::string> names;
  std::vector<std::string> row_keys;  // trial_id per row
  std::vector<std::int32_t> row_units; // word or fixation index per row
  Eigen::MatrixXd values;
};

/// Columnar binary file: magic, schema header (names), then one contiguous
/// block per column.
void write_feature_matrix(const std::string& path, const FeatureMatrix& m);
FeatureMatrix read_feature_matrix(const std::string& path);

/// FNV-1a over the ordered feature names; identifies a feature schema.
std::uint64_t schema_hash(std::span<const std::string> names);

}  // namespace qeye
