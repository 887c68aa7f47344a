#include "qeye/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace qeye {

std::string to_string(Regime r) { return r == Regime::Gathering ? "gathering" : "hunting"; }

Regime parse_regime(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "gathering") return Regime::Gathering;
  if (l == "hunting") return Regime::Hunting;
  throw ParseError("unknown regime '" + s + "' (expected gathering or hunting)");
}

char to_char(Starc s) { return static_cast<char>('A' + static_cast<int>(s)); }

Starc parse_starc(const std::string& s) {
  if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'D') return static_cast<Starc>(s[0] - 'A');
  if (s.size() == 1 && s[0] >= 'a' && s[0] <= 'd') return static_cast<Starc>(s[0] - 'a');
  throw ParseError("unknown STARC label '" + s + "'");
}

void ParagraphItem::validate() const {
  if (words.empty()) throw ValidationError("paragraph " + paragraph_id + " has no words");
  int prev_line = words.front().line_index;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const auto& w = words[i];
    if (w.index != static_cast<int>(i)) {
      throw ValidationError("paragraph " + paragraph_id + ": word indices not contiguous at " + std::to_string(i));
    }
    if (!(w.box_left < w.box_right) || !(w.box_top < w.box_bottom)) {
      throw ValidationError("paragraph " + paragraph_id + ": degenerate box for word " + std::to_string(i));
    }
    if (w.line_index < prev_line) {
      throw ValidationError("paragraph " + paragraph_id + ": line_index decreases at word " + std::to_string(i));
    }
    prev_line = w.line_index;
  }
}

void QuestionItem::validate() const {
  std::array<int, 4> seen{};
  for (auto s : starc_of_position) ++seen[static_cast<int>(s)];
  for (int c : seen) {
    if (c != 1) throw ValidationError("question " + question_id + ": STARC answer map is not a bijection over {A,B,C,D}");
  }
}

int QuestionItem::position_of(Starc role) const {
  for (int i = 0; i < 4; ++i) {
    if (starc_of_position[i] == role) return i;
  }
  throw ValidationError("question " + question_id + ": role missing");
}

// --- manifest ---------------------------------------------------------------

const std::vector<std::string>& manifest_columns() {
  static const std::vector<std::string> cols = {
      "trial_id", "participant_id", "article_id", "paragraph_id", "question_id", "regime", "a1", "a2",
      "a3",       "a4",             "starc1",     "starc2",       "starc3",      "starc4", "chosen_position"};
  return cols;
}

std::vector<Trial> read_manifest(std::istream& in, const std::string& source) {
  Table t = Table::read(in, ',', source);
  for (const auto& c : manifest_columns()) t.column(c);
  const bool has_text = t.has("question_text");

  std::vector<Trial> trials;
  trials.reserve(t.rows());
  std::set<std::string> ids;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const std::size_t line = t.line_of(r);
    auto ctx = [&](const std::string& msg) { return source + ": row " + std::to_string(line) + ": " + msg; };
    Trial tr;
    try {
      tr.trial_id = t.at(r, "trial_id");
      tr.participant_id = t.at(r, "participant_id");
      tr.article_id = t.at(r, "article_id");
      tr.paragraph_id = t.at(r, "paragraph_id");
      tr.question.question_id = t.at(r, "question_id");
      if (has_text) tr.question.text = t.at(r, "question_text");
      tr.regime = parse_regime(t.at(r, "regime"));
      for (int i = 0; i < 4; ++i) {
        tr.question.answers[i] = t.at(r, "a" + std::to_string(i + 1));
        tr.question.starc_of_position[i] = parse_starc(t.at(r, "starc" + std::to_string(i + 1)));
      }
      tr.chosen_position = static_cast<int>(parse_int(t.at(r, "chosen_position"), "chosen_position", line));
    } catch (const ParseError& e) {
      throw ParseError(ctx(e.what()), line);
    }
    if (tr.trial_id.empty()) throw ParseError(ctx("empty trial_id"), line);
    if (tr.chosen_position < 1 || tr.chosen_position > 4) {
      throw ParseError(ctx("chosen_position must be in 1..4"), line);
    }
    try {
      tr.question.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(ctx(e.what()));
    }
    tr.starc_label = tr.question.starc_of_position[tr.chosen_position - 1];
    tr.binary_label = tr.starc_label == Starc::A ? 1 : 0;
    if (!ids.insert(tr.trial_id).second) throw ValidationError(ctx("duplicate trial_id " + tr.trial_id));
    trials.push_back(std::move(tr));
  }
  return trials;
}

std::vector<Trial> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return read_manifest(in, path);
}

void write_manifest(std::ostream& out, const std::vector<Trial>& trials) {
  auto cols = manifest_columns();
  cols.push_back("question_text");
  write_delimited(out, cols, ',');
  for (const auto& tr : trials) {
    std::vector<std::string> f = {tr.trial_id,   tr.participant_id, tr.article_id, tr.paragraph_id,
                                  tr.question.question_id, to_string(tr.regime)};
    for (const auto& a : tr.question.answers) f.push_back(a);
    for (auto s : tr.question.starc_of_position) f.emplace_back(1, to_char(s));
    f.push_back(std::to_string(tr.chosen_position));
    f.push_back(tr.question.text);
    write_delimited(out, f, ',');
  }
}

// --- paragraph geometry -----------------------------------------------------

std::map<std::string, std::shared_ptr<const ParagraphItem>> read_paragraphs(std::istream& in,
                                                                           const std::string& source) {
  Table t = Table::read(in, ',', source);
  for (const char* c : {"paragraph_id", "word_index", "surface", "line_index", "left", "top", "right", "bottom"}) {
    t.column(c);
  }
  const bool has_article = t.has("article_id");
  std::map<std::string, std::shared_ptr<ParagraphItem>> building;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const std::size_t line = t.line_of(r);
    auto& p = building[t.at(r, "paragraph_id")];
    if (!p) {
      p = std::make_shared<ParagraphItem>();
      p->paragraph_id = t.at(r, "paragraph_id");
    }
    if (has_article) p->article_id = t.at(r, "article_id");
    WordToken w;
    w.index = static_cast<int>(parse_int(t.at(r, "word_index"), "word_index", line));
    w.surface = t.at(r, "surface");
    w.line_index = static_cast<int>(parse_int(t.at(r, "line_index"), "line_index", line));
    w.box_left = parse_double(t.at(r, "left"), "left", line);
    w.box_top = parse_double(t.at(r, "top"), "top", line);
    w.box_right = parse_double(t.at(r, "right"), "right", line);
    w.box_bottom = parse_double(t.at(r, "bottom"), "bottom", line);
    p->words.push_back(std::move(w));
  }
  std::map<std::string, std::shared_ptr<const ParagraphItem>> out;
  for (auto& [id, p] : building) {
    std::stable_sort(p->words.begin(), p->words.end(),
                     [](const WordToken& a, const WordToken& b) { return a.index < b.index; });
    std::string text;
    for (const auto& w : p->words) {
      if (!text.empty()) text.push_back(' ');
      text += w.surface;
    }
    p->full_text = std::move(text);
    p->validate();
    out.emplace(id, std::move(p));
  }
  return out;
}

std::map<std::string, std::shared_ptr<const ParagraphItem>> load_paragraphs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return read_paragraphs(in, path);
}

void write_paragraphs(std::ostream& out, const std::vector<const ParagraphItem*>& paragraphs) {
  write_delimited(out, {"paragraph_id", "article_id", "word_index", "surface", "line_index", "left", "top", "right", "bottom"},
                  ',');
  for (const auto* p : paragraphs) {
    for (const auto& w : p->words) {
      write_delimited(out,
                      {p->paragraph_id, p->article_id, std::to_string(w.index), w.surface, std::to_string(w.line_index),
                       format_double(w.box_left), format_double(w.box_top), format_double(w.box_right),
                       format_double(w.box_bottom)},
                      ',');
    }
  }
}

// --- fixation report --------------------------------------------------------

const std::vector<std::string>& fixation_report_required_columns() {
  static const std::vector<std::string> cols = {"TRIAL_ID",      "CURRENT_FIX_INDEX",    "CURRENT_FIX_X",
                                                "CURRENT_FIX_Y", "CURRENT_FIX_DURATION", "CURRENT_FIX_PUPIL"};
  return cols;
}

namespace {

constexpr const char* kTrialDwellColumn = "TRIAL_DWELL_TIME";

double optional_number(const std::map<std::string, std::string>& pass, const std::string& key) {
  auto it = pass.find(key);
  if (it == pass.end() || it->second.empty() || it->second == ".") return 0.0;
  return parse_double(it->second, key);
}

}  // namespace

std::map<std::string, Scanpath> read_fixation_report(std::istream& in, const std::string& source,
                                                     std::optional<ScreenGeometry> geometry) {
  Table t = Table::read(in, '\t', source);
  for (const auto& c : fixation_report_required_columns()) {
    if (!t.has(c)) throw ParseError(source + ": schema error: missing required column " + c);
  }
  std::set<std::string> required(fixation_report_required_columns().begin(), fixation_report_required_columns().end());
  std::vector<std::size_t> extra;
  for (std::size_t i = 0; i < t.header().size(); ++i) {
    if (!required.count(t.header()[i]) && t.header()[i] != kTrialDwellColumn) extra.push_back(i);
  }
  const bool has_dwell = t.has(kTrialDwellColumn);

  std::map<std::string, Scanpath> out;
  std::map<std::string, long long> last_index;
  std::map<std::string, double> reported_dwell;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const std::size_t line = t.line_of(r);
    const auto& trial = t.at(r, "TRIAL_ID");
    long long idx = parse_int(t.at(r, "CURRENT_FIX_INDEX"), "CURRENT_FIX_INDEX", line);
    auto li = last_index.find(trial);
    if (li != last_index.end() && idx <= li->second) {
      throw ParseError(source + ": row " + std::to_string(line) + ": ordering error: CURRENT_FIX_INDEX " +
                           std::to_string(idx) + " not increasing within trial " + trial,
                       line);
    }
    last_index[trial] = idx;

    Fixation f;
    f.x = parse_double(t.at(r, "CURRENT_FIX_X"), "CURRENT_FIX_X", line);
    f.y = parse_double(t.at(r, "CURRENT_FIX_Y"), "CURRENT_FIX_Y", line);
    f.duration = parse_double(t.at(r, "CURRENT_FIX_DURATION"), "CURRENT_FIX_DURATION", line);
    f.pupil = parse_double(t.at(r, "CURRENT_FIX_PUPIL"), "CURRENT_FIX_PUPIL", line);
    if (!(f.duration > 0)) {
      throw ValidationError(source + ": row " + std::to_string(line) + ": CURRENT_FIX_DURATION must be positive");
    }
    for (auto c : extra) f.passthrough.emplace(t.header()[c], t.row(r)[c]);
    auto& sp = out[trial];
    f.order_index = static_cast<int>(sp.fixations.size());
    sp.fixations.push_back(std::move(f));
    if (has_dwell) {
      reported_dwell[trial] = parse_double(t.at(r, kTrialDwellColumn), kTrialDwellColumn, line);
    }
  }
  for (auto& [id, sp] : out) {
    sp.screen_geometry = geometry;
    double total = 0, longest = 0;
    for (const auto& f : sp.fixations) {
      total += f.duration + optional_number(f.passthrough, "NEXT_SAC_DURATION");
      longest = std::max(longest, f.duration);
    }
    auto it = reported_dwell.find(id);
    sp.trial_dwell_time = it != reported_dwell.end() ? it->second : total;
    if (sp.trial_dwell_time < longest) {
      throw ValidationError(source + ": trial " + id + ": trial dwell time below the longest fixation");
    }
  }
  return out;
}

std::map<std::string, Scanpath> parse_fixation_report(const std::string& path, std::optional<ScreenGeometry> geometry) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return read_fixation_report(in, path, geometry);
}

void write_fixation_report(std::ostream& out,
                           const std::vector<std::pair<std::string, const Scanpath*>>& scanpaths) {
  std::set<std::string> extra;
  for (const auto& [id, sp] : scanpaths) {
    for (const auto& f : sp->fixations) {
      for (const auto& kv : f.passthrough) extra.insert(kv.first);
    }
  }
  std::vector<std::string> header = fixation_report_required_columns();
  header.emplace_back(kTrialDwellColumn);
  header.insert(header.end(), extra.begin(), extra.end());
  write_delimited(out, header, '\t');
  for (const auto& [id, sp] : scanpaths) {
    for (const auto& f : sp->fixations) {
      std::vector<std::string> row = {id,
                                      std::to_string(f.order_index + 1),
                                      format_double(f.x),
                                      format_double(f.y),
                                      format_double(f.duration),
                                      format_double(f.pupil),
                                      format_double(sp->trial_dwell_time)};
      for (const auto& k : extra) {
        auto it = f.passthrough.find(k);
        row.push_back(it == f.passthrough.end() ? "." : it->second);
      }
      write_delimited(out, row, '\t');
    }
  }
}

Scanpath assign_fixations_to_words(const Scanpath& scanpath, const ParagraphItem& paragraph) {
  Scanpath out = scanpath;
  for (auto& f : out.fixations) {
    f.word_index.reset();
    for (const auto& w : paragraph.words) {
      if (w.contains(f.x, f.y)) {
        f.word_index = w.index;
        break;
      }
    }
  }
  return out;
}

Dataset load_dataset(const std::string& manifest_path, const std::string& geometry_path,
                     const std::string& fixations_path, std::optional<ScreenGeometry> geometry) {
  Dataset ds;
  ds.trials = load_manifest(manifest_path);
  ds.paragraphs = load_paragraphs(geometry_path);
  auto scanpaths = parse_fixation_report(fixations_path, geometry);
  for (auto& tr : ds.trials) {
    auto p = ds.paragraphs.find(tr.paragraph_id);
    if (p == ds.paragraphs.end()) {
      throw ValidationError("trial " + tr.trial_id + ": unknown paragraph " + tr.paragraph_id);
    }
    tr.paragraph = p->second;
    auto s = scanpaths.find(tr.trial_id);
    if (s == scanpaths.end()) throw ValidationError("trial " + tr.trial_id + ": no fixations in report");
    tr.scanpath = assign_fixations_to_words(s->second, *tr.paragraph);
  }
  return ds;
}

}  // namespace qeye
