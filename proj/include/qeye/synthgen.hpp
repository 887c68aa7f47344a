#pragma once

// Synthetic reading experiments: pseudo-word corpora with screen geometry,
// participants, scanpaths and STARC-labelled responses, with a tunable link
// between critical-span reading and comprehension.

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "qeye/corpus.hpp"
#include "qeye/gaze_features.hpp"

namespace qeye::synth {

struct SynthSpec {
  // corpus
  int n_articles = 10;
  int paragraphs_per_article = 5;
  double words_per_paragraph = 40;
  int lexicon_size = 2000;
  double zipf_exponent = 1.0;
  int span_min = 3;
  int span_max = 6;

  // participants and regimes
  int n_participants = 60;
  /// Share of participants reading in the Hunting regime.
  double hunting_fraction = 0.0;

  // comprehension
  double skill_sd = 1.0;
  /// Residual item difficulty on top of the question-type offset.
  double difficulty_sd = 0.7;
  std::array<double, 4> question_type_offsets{-2.5, -2.5 / 3, 2.5 / 3, 2.5};
  /// Strength of the link between normalized critical-span dwell and correctness.
  double gaze_link = 3.0;
  double correct_intercept = 3.5;
  double hunting_offset = 0.4;
  /// Incorrect answers: P(B), P(C), P(D) proportional to exp(-rank * 0.35 / temperature).
  double answer_temperature = 1.0;

  // scanpaths
  double duration_intercept = 5.1;  // log ms
  double duration_length = 0.04;
  double duration_frequency = 0.02;
  double duration_surprisal = 0.015;
  double duration_sd = 0.3;
  double speed_sd = 0.2;  // log multiplier, independent of skill
  double skip_intercept = -0.6;
  double skip_length = -0.45;
  double skip_frequency = -0.15;
  double refixation_intercept = -2.2;
  double refixation_length = 0.25;
  double regression_intercept = -2.6;
  /// Engagement effect (per SD) on critical-span fixation durations, log scale.
  double engagement_duration = 0.35;
  /// Logit of re-reading the critical span after the first pass.
  double lookback_intercept = -1.0;
  double lookback_engagement = 1.5;
  double hunting_span_boost = 2.0;
  double hunting_skip_boost = 1.5;
  double off_text_rate = 0.01;
  double px_per_degree = 40.0;

  std::uint64_t seed = 1;

  /// Throws ConfigError when a variance is not positive or gaze_link < 0.
  void validate() const;
};

struct CriticalSpan {
  int start = 0;
  int end = 0;  // exclusive

  int length() const { return end - start; }
  bool contains(int word) const { return word >= start && word < end; }
};

struct SynthQuestion {
  QuestionItem item;
  CriticalSpan span;
  int question_type = 0;
  double difficulty = 0;
};

struct SynthParagraph {
  std::shared_ptr<ParagraphItem> paragraph;
  std::vector<AnnotationTable::Row> annotations;
  std::vector<SynthQuestion> questions;  // three per paragraph
};

struct SynthCorpus {
  std::vector<SynthParagraph> paragraphs;
};

SynthCorpus generate_corpus(const SynthSpec& spec, std::uint64_t seed);

struct ParticipantLatent {
  std::string participant_id;
  double skill = 0;
  double speed = 1;  // multiplier on fixation durations
  double pupil_base = 1000;
  Regime regime = Regime::Gathering;
};

std::vector<ParticipantLatent> generate_participants(const SynthSpec& spec, std::uint64_t seed);

/// `engagement` is the trial's comprehension latent (standard normal).
Scanpath generate_scanpath(const ParticipantLatent& reader, const SynthParagraph& paragraph,
                           const SynthQuestion& question, Regime regime, double engagement, const SynthSpec& spec,
                           std::uint64_t seed);

/// Total fixation duration on critical-span words.
double critical_span_dwell(const Scanpath& scanpath, const CriticalSpan& span);
/// Log ratio of realized span dwell to the reader's expected single-pass dwell
/// on those words, in units of engagement_duration-free log-duration SD.
double normalized_span_dwell(const Scanpath& scanpath, const SynthParagraph& paragraph, const CriticalSpan& span,
                             const ParticipantLatent& reader, const SynthSpec& spec);

struct ResponseLatent {
  double skill = 0;
  double difficulty = 0;
  double normalized_dwell = 0;
  Regime regime = Regime::Gathering;
};

double probability_correct(const ResponseLatent& latent, const SynthSpec& spec);
Starc generate_response(const ResponseLatent& latent, const SynthSpec& spec, std::uint64_t seed);

/// Ground truth per trial, kept out of model inputs.
struct TrialTruth {
  std::string trial_id;
  double skill = 0;
  double difficulty = 0;
  double engagement = 0;
  double normalized_dwell = 0;
  double critical_span_dwell = 0;
  double probability_correct = 0;
  CriticalSpan span;
  int question_type = 0;
};

struct SynthDataset {
  Dataset dataset;
  std::shared_ptr<AnnotationTable> annotations;
  std::vector<TrialTruth> truth;
  SynthCorpus corpus;
  std::vector<ParticipantLatent> participants;
};

/// Every participant reads every paragraph once, answering one of its three
/// questions. Pure function of the spec (including its seed).
SynthDataset generate_dataset(const SynthSpec& spec);

/// manifest.csv, paragraphs.csv, fixations.tsv, annotations.csv and the
/// latent_truth.csv sidecar.
void write_dataset(const std::string& dir, const SynthDataset& data);

}  // namespace qeye::synth
