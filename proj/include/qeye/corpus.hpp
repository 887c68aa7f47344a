#pragma once

// Data model for reading-comprehension trials: paragraphs with word
// interest areas, questions with STARC answer roles, and per-trial scanpaths.

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qeye/csv.hpp"

namespace qeye {

enum class Regime { Gathering, Hunting };
enum class Starc { A = 0, B = 1, C = 2, D = 3 };

std::string to_string(Regime r);
Regime parse_regime(const std::string& s);
char to_char(Starc s);
Starc parse_starc(const std::string& s);

struct WordToken {
  int index = 0;
  std::string surface;
  int line_index = 0;
  double box_left = 0;
  double box_top = 0;
  double box_right = 0;
  double box_bottom = 0;

  /// Half-open containment: [left, right) x [top, bottom).
  bool contains(double x, double y) const {
    return x >= box_left && x < box_right && y >= box_top && y < box_bottom;
  }
};

struct ParagraphItem {
  std::string article_id;
  std::string paragraph_id;
  std::vector<WordToken> words;
  std::string full_text;

  std::size_t size() const { return words.size(); }
  /// Throws ValidationError when words are empty, non-contiguous, or have bad boxes.
  void validate() const;
};

struct QuestionItem {
  std::string question_id;
  std::string text;
  std::array<std::string, 4> answers;
  /// STARC role of each presented position (index 0 is position a1).
  std::array<Starc, 4> starc_of_position{Starc::A, Starc::B, Starc::C, Starc::D};

  void validate() const;
  /// 0-based position holding the given role.
  int position_of(Starc role) const;
};

struct ScreenGeometry {
  double px_per_degree_x = 0;
  double px_per_degree_y = 0;
};

struct Fixation {
  int order_index = 0;
  double x = 0;
  double y = 0;
  double duration = 0;
  double pupil = 0;
  std::optional<int> word_index;
  /// Optional report columns (NEXT_SAC_*, PREVIOUS_FIX_* ...) kept verbatim.
  std::map<std::string, std::string> passthrough;
};

struct Scanpath {
  std::vector<Fixation> fixations;
  double trial_dwell_time = 0;
  std::optional<ScreenGeometry> screen_geometry;

  bool empty() const { return fixations.empty(); }
};

struct Trial {
  std::string trial_id;
  std::string participant_id;
  std::string article_id;
  std::string paragraph_id;
  QuestionItem question;
  Regime regime = Regime::Gathering;
  /// 1..4
  int chosen_position = 1;
  Starc starc_label = Starc::A;
  int binary_label = 1;

  std::shared_ptr<const ParagraphItem> paragraph;
  Scanpath scanpath;

  /// Chosen position index 0..3 (the specific-answer class).
  int choice_label() const { return chosen_position - 1; }
};

/// Trials with paragraphs and scanpaths attached.
struct Dataset {
  std::vector<Trial> trials;
  std::map<std::string, std::shared_ptr<const ParagraphItem>> paragraphs;
};

// --- manifest ---------------------------------------------------------------

/// Columns of the trial manifest, in canonical order. A trailing optional
/// `question_text` column carries the question wording for text models.
const std::vector<std::string>& manifest_columns();

std::vector<Trial> load_manifest(const std::string& path);
std::vector<Trial> read_manifest(std::istream& in, const std::string& source);
void write_manifest(std::ostream& out, const std::vector<Trial>& trials);

// --- paragraph geometry -----------------------------------------------------

std::map<std::string, std::shared_ptr<const ParagraphItem>> load_paragraphs(const std::string& path);
std::map<std::string, std::shared_ptr<const ParagraphItem>> read_paragraphs(std::istream& in,
                                                                           const std::string& source);
void write_paragraphs(std::ostream& out, const std::vector<const ParagraphItem*>& paragraphs);

// --- fixation report --------------------------------------------------------

/// Required columns of the fixation report.
const std::vector<std::string>& fixation_report_required_columns();

std::map<std::string, Scanpath> parse_fixation_report(const std::string& path,
                                                      std::optional<ScreenGeometry> geometry = {});
std::map<std::string, Scanpath> read_fixation_report(std::istream& in, const std::string& source,
                                                     std::optional<ScreenGeometry> geometry = {});
/// Writes one row per fixation. Passthrough columns are the union over fixations.
void write_fixation_report(std::ostream& out, const std::vector<std::pair<std::string, const Scanpath*>>& scanpaths);

/// Sets each fixation's word_index to the word whose box contains it (half-open
/// boxes; earliest index wins on overlap). Out-of-box fixations get no index.
Scanpath assign_fixations_to_words(const Scanpath& scanpath, const ParagraphItem& paragraph);

/// Loads manifest + geometry + fixation report, resolves paragraphs, assigns
/// fixations to words. Trials without a scanpath raise ValidationError.
Dataset load_dataset(const std::string& manifest_path, const std::string& geometry_path,
                     const std::string& fixations_path, std::optional<ScreenGeometry> geometry = {});

}  // namespace qeye
