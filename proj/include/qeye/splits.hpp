#pragma once

// Cross-validation plans over a participant x article grid realizing the
// New Item / New Participant / New Item & Participant evaluation regimes.

#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qeye/corpus.hpp"

namespace qeye {

enum class Portion { Train, Val, TestNewParticipant, TestNewItem, TestBoth };

std::string to_string(Portion p);
Portion parse_portion(const std::string& s);
bool is_test(Portion p);

struct BatchTrial {
  std::string trial_id;
  std::string participant_id;
  std::string article_id;
  std::string paragraph_id;
  std::string question_id;
  Regime regime = Regime::Gathering;
  Starc starc = Starc::A;
};

struct BatchSpec {
  std::string batch_id;
  std::vector<std::string> article_ids;
  std::vector<std::string> participant_ids;
  std::vector<BatchTrial> trials;

  /// Throws ValidationError if a participant has two trials on one paragraph.
  void validate() const;
};

BatchTrial to_batch_trial(const Trial& t);

/// Groups trials into batches: connected components of the participant-article
/// graph (each participant reads the articles of exactly one batch).
std::vector<BatchSpec> infer_batches(const std::vector<Trial>& trials);

struct SplitPlan {
  int fold_id = 0;
  Regime regime_filter = Regime::Gathering;
  std::map<std::string, Portion> assignment;

  std::vector<std::string> trials_in(Portion p) const;
  std::size_t count(Portion p) const;
};

/// Plans for one batch: fold k holds out the k-th article chunk and the k-th
/// chunk of seed-shuffled participants; validation is drawn per answer type
/// from the retained grid until it reaches ~17% of the batch.
std::vector<SplitPlan> make_folds(const BatchSpec& batch, Regime regime, int n_folds, std::uint64_t seed);

/// Union of per-batch plans, fold by fold.
std::vector<SplitPlan> make_dataset_folds(const std::vector<BatchSpec>& batches, Regime regime, int n_folds,
                                          std::uint64_t seed);

inline constexpr double kValidationFraction = 0.17;

enum class Severity { Info, Warning, Fatal };

struct SplitReportEntry {
  Severity severity = Severity::Info;
  std::string check;
  std::string message;
};

struct SplitReport {
  std::vector<SplitReportEntry> entries;
  std::map<Portion, double> proportions;
  std::map<Portion, std::array<std::size_t, 4>> answer_histogram;

  bool ok() const;
  std::size_t count(Severity s) const;
};

/// Checks partition completeness, regime-cell correctness, article atomicity,
/// portion proportions and answer-type balance. Never throws on violations.
SplitReport verify_split(const SplitPlan& plan, const BatchSpec& batch);

void write_split_plans(std::ostream& out, const std::vector<SplitPlan>& plans);
std::vector<SplitPlan> read_split_plans(std::istream& in, const std::string& source, Regime regime);

}  // namespace qeye
