#pragma once

// Small hand-built paragraphs, scanpaths and model inputs shared by tests.

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "qeye/corpus.hpp"
#include "qeye/gaze_features.hpp"
#include "qeye/models/model.hpp"
#include "qeye/random.hpp"
#include "qeye/synthgen.hpp"

namespace qeye::testing {

/// `n` words of `chars` characters each, wrapped after `per_line` words;
/// boxes are 10 px per character plus a trailing space, 40 px lines.
std::shared_ptr<ParagraphItem> make_paragraph(int n, int per_line = 6, int chars = 4,
                                              const std::string& paragraph_id = "art1_p1");

/// Fixations at the centres of the given words (-1: off text), with durations.
Scanpath make_scanpath(const ParagraphItem& p, const std::vector<std::pair<int, double>>& word_durations);

/// Random word-assigned scanpath of at most `max_fixations` fixations,
/// including occasional off-text fixations.
Scanpath random_scanpath(const ParagraphItem& p, int max_fixations, Rng& rng);

std::vector<LinguisticFeatures> default_ling(const ParagraphItem& p);

/// Small default-shaped synthetic experiment (participants x articles).
synth::SynthDataset small_synth(int participants, int articles, std::uint64_t seed, double gaze_link = 2.0);

/// Random standardized-looking model input for the toy encoder.
models::ModelInput random_input(int paragraph_words, int fixations, int question_words, Rng& rng, int vocab = 512,
                                int word_features = WordFeatureVector::kSize,
                                int fixation_features = FixationFeatureVector::kSize);

}  // namespace qeye::testing
