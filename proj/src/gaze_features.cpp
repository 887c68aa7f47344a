#include "qeye/gaze_features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>

namespace qeye {

// --- linguistic ---------------------------------------------------------------

std::array<double, LinguisticFeatures::kCount> LinguisticFeatures::as_array() const {
  return {surprisal, wordfreq_frequency, length, start_of_line, end_of_line, is_content_word, n_lefts, n_rights,
          distance2head};
}

const std::array<std::string, LinguisticFeatures::kCount>& linguistic_feature_names() {
  static const std::array<std::string, LinguisticFeatures::kCount> names = {
      "surprisal",       "wordfreq_frequency", "length",   "start_of_line", "end_of_line",
      "is_content_word", "n_lefts",            "n_rights", "distance2head"};
  return names;
}

bool is_content_pos(const std::string& pos) {
  return pos == "PROPN" || pos == "NOUN" || pos == "VERB" || pos == "ADV" || pos == "ADJ";
}

std::vector<LinguisticFeatures> linguistic_features(const ParagraphItem& paragraph, const ProviderBundle& providers) {
  if (!providers.frequency) throw ProviderError("frequency", "no frequency provider configured");
  if (!providers.syntax) throw ProviderError("syntax", "no syntax provider configured");
  const std::size_t n = paragraph.size();

  std::vector<double> context;
  if (providers.next_word) {
    try {
      context = providers.next_word->log2_probs(paragraph);
    } catch (const ProviderError&) {
      throw;
    } catch (const std::exception& e) {
      throw ProviderError(providers.next_word->name(), e.what());
    }
    if (context.size() != n) {
      throw ProviderError(providers.next_word->name(), "returned " + std::to_string(context.size()) +
                                                           " probabilities for " + std::to_string(n) + " words");
    }
  }
  std::vector<SyntaxAnnotation> syntax;
  try {
    syntax = providers.syntax->annotate(paragraph);
  } catch (const ProviderError&) {
    throw;
  } catch (const std::exception& e) {
    throw ProviderError(providers.syntax->name(), e.what());
  }
  if (syntax.size() != n) {
    throw ProviderError(providers.syntax->name(), "annotated " + std::to_string(syntax.size()) + " of " +
                                                      std::to_string(n) + " words");
  }

  std::vector<LinguisticFeatures> out(n);
  std::vector<int> lefts(n, 0), rights(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    int h = syntax[i].head;
    if (h < 0 || h >= static_cast<int>(n)) {
      throw ProviderError(providers.syntax->name(), "head index out of range for word " + std::to_string(i));
    }
    if (h == static_cast<int>(i)) continue;
    if (static_cast<int>(i) < h) ++lefts[h];
    else ++rights[h];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& w = paragraph.words[i];
    auto& f = out[i];
    double lp;
    try {
      lp = providers.frequency->log2_prob(w.surface);
    } catch (const ProviderError&) {
      throw;
    } catch (const std::exception& e) {
      throw ProviderError(providers.frequency->name(), e.what());
    }
    if (!std::isfinite(lp) || lp > 0) {
      throw ProviderError(providers.frequency->name(), "invalid log2 probability for '" + w.surface + "'");
    }
    f.wordfreq_frequency = -lp;
    if (!context.empty()) {
      if (!std::isfinite(context[i]) || context[i] > 0) {
        throw ProviderError(providers.next_word->name(), "invalid log2 probability at word " + std::to_string(i));
      }
      f.surprisal = -context[i];
    } else {
      f.surprisal = f.wordfreq_frequency;
    }
    f.length = std::max<double>(1.0, static_cast<double>(w.surface.size()));
    f.start_of_line = (i == 0 || paragraph.words[i - 1].line_index != w.line_index) ? 1.0 : 0.0;
    f.end_of_line = (i + 1 == n || paragraph.words[i + 1].line_index != w.line_index) ? 1.0 : 0.0;
    f.is_content_word = is_content_pos(syntax[i].pos) ? 1.0 : 0.0;
    f.n_lefts = lefts[i];
    f.n_rights = rights[i];
    f.distance2head = std::abs(syntax[i].head - static_cast<int>(i));
  }
  return out;
}

std::shared_ptr<AnnotationTable> AnnotationTable::read(std::istream& in, const std::string& source) {
  Table t = Table::read(in, ',', source);
  auto table = std::make_shared<AnnotationTable>();
  std::map<std::string, std::vector<std::pair<int, Row>>> tmp;
  std::map<std::string, std::vector<std::string>> surfaces;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto line = t.line_of(r);
    Row row;
    row.log2_prob_context = parse_double(t.at(r, "log2_prob_context"), "log2_prob_context", line);
    row.log2_freq = parse_double(t.at(r, "log2_freq"), "log2_freq", line);
    row.pos = t.at(r, "pos");
    row.head = static_cast<int>(parse_int(t.at(r, "head"), "head", line));
    int idx = static_cast<int>(parse_int(t.at(r, "word_index"), "word_index", line));
    const auto& pid = t.at(r, "paragraph_id");
    tmp[pid].emplace_back(idx, row);
    surfaces[pid].push_back(t.has("surface") ? t.at(r, "surface") : std::string{});
  }
  for (auto& [pid, rows] : tmp) {
    std::vector<std::size_t> order(rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rows[a].first < rows[b].first; });
    std::vector<Row> sorted;
    std::vector<std::string> surf;
    for (std::size_t k = 0; k < order.size(); ++k) {
      if (rows[order[k]].first != static_cast<int>(k)) {
        throw ParseError(source + ": paragraph " + pid + ": word indices not contiguous");
      }
      sorted.push_back(rows[order[k]].second);
      surf.push_back(surfaces[pid][order[k]]);
    }
    table->add(pid, std::move(sorted), surf);
  }
  return table;
}

std::shared_ptr<AnnotationTable> AnnotationTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return read(in, path);
}

void AnnotationTable::write(std::ostream& out,
                            const std::vector<std::pair<const ParagraphItem*, std::vector<Row>>>& rows) {
  write_delimited(out, {"paragraph_id", "word_index", "surface", "log2_prob_context", "log2_freq", "pos", "head"}, ',');
  for (const auto& [p, rs] : rows) {
    for (std::size_t i = 0; i < rs.size(); ++i) {
      write_delimited(out,
                      {p->paragraph_id, std::to_string(i), p->words[i].surface, format_double(rs[i].log2_prob_context),
                       format_double(rs[i].log2_freq), rs[i].pos, std::to_string(rs[i].head)},
                      ',');
    }
  }
}

void AnnotationTable::add(const std::string& paragraph_id, std::vector<Row> rows,
                          const std::vector<std::string>& surfaces) {
  for (std::size_t i = 0; i < rows.size() && i < surfaces.size(); ++i) {
    if (!surfaces[i].empty()) by_surface_[surfaces[i]] = rows[i].log2_freq;
  }
  by_paragraph_[paragraph_id] = std::move(rows);
}

const std::vector<AnnotationTable::Row>& AnnotationTable::rows_for(const ParagraphItem& paragraph) const {
  auto it = by_paragraph_.find(paragraph.paragraph_id);
  if (it == by_paragraph_.end()) throw ProviderError(name(), "no annotations for paragraph " + paragraph.paragraph_id);
  if (it->second.size() != paragraph.size()) {
    throw ProviderError(name(), "annotation count mismatch for paragraph " + paragraph.paragraph_id);
  }
  return it->second;
}

std::vector<double> AnnotationTable::log2_probs(const ParagraphItem& paragraph) const {
  std::vector<double> out;
  for (const auto& r : rows_for(paragraph)) out.push_back(r.log2_prob_context);
  return out;
}

double AnnotationTable::log2_prob(const std::string& word) const {
  auto it = by_surface_.find(word);
  if (it == by_surface_.end()) throw ProviderError(name(), "unknown word '" + word + "'");
  return it->second;
}

std::vector<SyntaxAnnotation> AnnotationTable::annotate(const ParagraphItem& paragraph) const {
  std::vector<SyntaxAnnotation> out;
  for (const auto& r : rows_for(paragraph)) out.push_back({r.pos, r.head});
  return out;
}

ProviderBundle AnnotationTable::bundle(std::shared_ptr<const AnnotationTable> table, bool with_context_model) {
  ProviderBundle b;
  if (with_context_model) b.next_word = table;
  b.frequency = table;
  b.syntax = table;
  return b;
}

std::vector<SyntaxAnnotation> FlatSyntaxProvider::annotate(const ParagraphItem& paragraph) const {
  std::vector<SyntaxAnnotation> out(paragraph.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {"X", static_cast<int>(i)};
  return out;
}

// --- word level ---------------------------------------------------------------

const std::array<std::string, kWordMeasureCount>& word_measure_names() {
  static const std::array<std::string, kWordMeasureCount> names = {
      "IA_DWELL_TIME",
      "IA_DWELL_TIME_%",
      "IA_FIXATION_%",
      "IA_FIXATION_COUNT",
      "IA_REGRESSION_IN_COUNT",
      "IA_REGRESSION_OUT_FULL_COUNT",
      "IA_RUN_COUNT",
      "IA_FIRST_FIX_PROGRESSIVE",
      "IA_FIRST_FIXATION_DURATION",
      "IA_FIRST_FIXATION_VISITED_IA_COUNT",
      "IA_FIRST_RUN_DWELL_TIME",
      "IA_FIRST_RUN_FIXATION_COUNT",
      "IA_SKIP",
      "IA_TOP",
      "IA_LEFT",
      "normalized_Word_ID",
      "IA_REGRESSION_PATH_DURATION",
      "IA_REGRESSION_OUT_COUNT",
      "IA_SELECTIVE_REGRESSION_PATH_DURATION",
      "IA_LAST_FIXATION_DURATION",
      "IA_LAST_RUN_DWELL_TIME",
      "PARAGRAPH_RT",
      "total_skip",
  };
  return names;
}

std::vector<std::string> word_feature_names() {
  std::vector<std::string> out(word_measure_names().begin(), word_measure_names().end());
  out.insert(out.end(), linguistic_feature_names().begin(), linguistic_feature_names().end());
  return out;
}

std::array<double, WordFeatureVector::kSize> WordFeatureVector::flat() const {
  std::array<double, kSize> out{};
  std::copy(eye.begin(), eye.end(), out.begin());
  auto l = ling.as_array();
  std::copy(l.begin(), l.end(), out.begin() + kWordMeasureCount);
  return out;
}

std::vector<WordFeatureVector> word_level_features(const Scanpath& scanpath, const ParagraphItem& paragraph,
                                                   std::span<const LinguisticFeatures> ling) {
  const std::size_t nw = paragraph.size();
  if (ling.size() != nw) {
    throw ValidationError("schema error: " + std::to_string(ling.size()) + " linguistic vectors for " +
                          std::to_string(nw) + " words");
  }
  const auto& fx = scanpath.fixations;
  const std::size_t nf = fx.size();
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  auto word_at = [&](std::size_t i) -> int { return fx[i].word_index ? *fx[i].word_index : -1; };

  std::vector<WordFeatureVector> out(nw);
  for (std::size_t w = 0; w < nw; ++w) {
    out[w].ling = ling[w];
    out[w][WordMeasure::Top] = paragraph.words[w].box_top;
    out[w][WordMeasure::Left] = paragraph.words[w].box_left;
    out[w][WordMeasure::NormalizedWordId] = nw > 1 ? static_cast<double>(w) / static_cast<double>(nw - 1) : 0.0;
    out[w][WordMeasure::ParagraphRt] = scanpath.trial_dwell_time;
  }

  // First time any word strictly to the right of w was fixated.
  std::vector<std::size_t> first_idx(nw, kNone);
  for (std::size_t i = 0; i < nf; ++i) {
    int w = word_at(i);
    if (w >= 0 && first_idx[w] == kNone) first_idx[w] = i;
  }
  std::vector<std::size_t> higher_first(nw, kNone);
  for (std::size_t w = nw; w-- > 1;) {
    higher_first[w - 1] = std::min(higher_first[w], first_idx[w]);
  }

  std::vector<bool> seen(nw, false);
  std::size_t distinct_seen = 0;
  int max_seen = -1;
  std::vector<double> run_sum(nw, 0.0);
  std::vector<int> run_len(nw, 0);
  std::vector<bool> in_first_run(nw, false);
  std::vector<int> open_paths;  // words whose regression-path window is open

  for (std::size_t i = 0; i < nf; ++i) {
    const int w = word_at(i);
    const double d = fx[i].duration;

    // Regression-path windows close on entering a word to the right.
    if (w >= 0) {
      std::erase_if(open_paths, [w](int v) { return w > v; });
    }
    if (w >= 0 && !seen[w]) open_paths.push_back(w);
    for (int v : open_paths) {
      out[v][WordMeasure::RegressionPathDuration] += d;
      if (v == w) out[v][WordMeasure::SelectiveRegressionPathDuration] += d;
    }

    if (w < 0) continue;
    auto& f = out[w];
    const bool entering = i == 0 || word_at(i - 1) != w;
    if (!seen[w]) {
      f[WordMeasure::FirstFixProgressive] = max_seen < w ? 1.0 : 0.0;
      f[WordMeasure::FirstFixationDuration] = d;
      f[WordMeasure::FirstFixationVisitedIaCount] = static_cast<double>(distinct_seen);
      in_first_run[w] = true;
    } else if (entering) {
      in_first_run[w] = false;
    }
    if (entering) {
      f[WordMeasure::RunCount] += 1;
      run_sum[w] = 0;
      run_len[w] = 0;
      if (i > 0 && word_at(i - 1) > w) f[WordMeasure::RegressionInCount] += 1;
    }
    run_sum[w] += d;
    run_len[w] += 1;
    f[WordMeasure::LastRunDwellTime] = run_sum[w];
    if (in_first_run[w]) {
      f[WordMeasure::FirstRunDwellTime] = run_sum[w];
      f[WordMeasure::FirstRunFixationCount] = run_len[w];
    }
    f[WordMeasure::DwellTime] += d;
    f[WordMeasure::FixationCount] += 1;
    f[WordMeasure::LastFixationDuration] = d;

    if (i + 1 < nf) {
      int next = word_at(i + 1);
      if (next >= 0 && next < w) {
        f[WordMeasure::RegressionOutFullCount] += 1;
        if (i + 1 < higher_first[w]) f[WordMeasure::RegressionOutCount] += 1;
      }
    }
    if (!seen[w]) {
      seen[w] = true;
      ++distinct_seen;
    }
    max_seen = std::max(max_seen, w);
  }

  for (auto& f : out) {
    const bool fixated = f[WordMeasure::FixationCount] > 0;
    f[WordMeasure::TotalSkip] = fixated ? 0.0 : 1.0;
    f[WordMeasure::Skip] = f[WordMeasure::FirstFixProgressive] > 0 ? 0.0 : 1.0;
    if (f[WordMeasure::Skip] > 0) {
      f[WordMeasure::FirstRunDwellTime] = 0;
      f[WordMeasure::FirstRunFixationCount] = 0;
    }
    f[WordMeasure::DwellTimePct] =
        scanpath.trial_dwell_time > 0 ? f[WordMeasure::DwellTime] / scanpath.trial_dwell_time : 0.0;
    f[WordMeasure::FixationPct] = nf > 0 ? f[WordMeasure::FixationCount] / static_cast<double>(nf) : 0.0;
  }
  return out;
}

// --- fixation level -----------------------------------------------------------

const std::array<std::string, kFixMeasureCount>& fixation_measure_names() {
  static const std::array<std::string, kFixMeasureCount> names = {
      "CURRENT_FIX_INDEX",     "CURRENT_FIX_DURATION", "CURRENT_FIX_PUPIL",      "CURRENT_FIX_X",
      "CURRENT_FIX_Y",         "NEXT_FIX_ANGLE",       "PREVIOUS_FIX_ANGLE",     "NEXT_FIX_DISTANCE",
      "PREVIOUS_FIX_DISTANCE", "NEXT_SAC_AMPLITUDE",   "NEXT_SAC_ANGLE",         "NEXT_SAC_AVG_VELOCITY",
      "NEXT_SAC_DURATION",     "NEXT_SAC_PEAK_VELOCITY"};
  return names;
}

std::vector<std::string> fixation_feature_names() {
  std::vector<std::string> out(fixation_measure_names().begin(), fixation_measure_names().end());
  out.insert(out.end(), linguistic_feature_names().begin(), linguistic_feature_names().end());
  out.push_back("has_word");
  out.push_back("has_previous");
  out.push_back("has_next");
  return out;
}

std::array<double, FixationFeatureVector::kSize> FixationFeatureVector::flat() const {
  std::array<double, kSize> out{};
  std::copy(eye.begin(), eye.end(), out.begin());
  auto l = ling.as_array();
  std::copy(l.begin(), l.end(), out.begin() + kFixMeasureCount);
  out[kSize - 3] = word_index ? 1.0 : 0.0;
  out[kSize - 2] = has_previous ? 1.0 : 0.0;
  out[kSize - 1] = has_next ? 1.0 : 0.0;
  return out;
}

double screen_angle_deg(double dx, double dy) {
  double a = std::atan2(dy, dx) * 180.0 / std::numbers::pi;
  return a <= -180.0 ? a + 360.0 : a;
}

namespace {

std::optional<double> passthrough_value(const Fixation& f, const std::string& key) {
  auto it = f.passthrough.find(key);
  if (it == f.passthrough.end() || it->second.empty() || it->second == ".") return std::nullopt;
  return parse_double(it->second, key);
}

// Saccade main-sequence estimate used when the report has no saccade timing.
constexpr double kMainSequenceSlopeMs = 2.2;
constexpr double kMainSequenceInterceptMs = 21.0;
constexpr double kPeakToMeanVelocity = 1.6;

}  // namespace

std::vector<FixationFeatureVector> fixation_level_features(const Scanpath& scanpath, const ParagraphItem& paragraph,
                                                           std::span<const LinguisticFeatures> ling) {
  if (ling.size() != paragraph.size()) {
    throw ValidationError("schema error: linguistic vector count does not match word count");
  }
  const auto& fx = scanpath.fixations;
  const std::size_t n = fx.size();
  std::vector<FixationFeatureVector> out(n);

  auto distance_deg = [&](const Fixation& a, const Fixation& b) {
    if (!scanpath.screen_geometry || scanpath.screen_geometry->px_per_degree_x <= 0 ||
        scanpath.screen_geometry->px_per_degree_y <= 0) {
      throw ConfigError("screen geometry required to derive saccade distances");
    }
    double dx = (b.x - a.x) / scanpath.screen_geometry->px_per_degree_x;
    double dy = (b.y - a.y) / scanpath.screen_geometry->px_per_degree_y;
    return std::hypot(dx, dy);
  };
  auto pick = [](const Fixation& f, const std::string& key, auto&& derive) -> double {
    if (auto v = passthrough_value(f, key)) return *v;
    return derive();
  };

  for (std::size_t i = 0; i < n; ++i) {
    const auto& f = fx[i];
    auto& v = out[i];
    v[FixMeasure::CurrentFixIndex] = static_cast<double>(f.order_index);
    v[FixMeasure::CurrentFixDuration] = f.duration;
    v[FixMeasure::CurrentFixPupil] = f.pupil;
    v[FixMeasure::CurrentFixX] = f.x;
    v[FixMeasure::CurrentFixY] = f.y;
    v.word_index = f.word_index;
    if (f.word_index) {
      if (*f.word_index < 0 || *f.word_index >= static_cast<int>(paragraph.size())) {
        throw ValidationError("fixation word index out of range");
      }
      v.ling = ling[*f.word_index];
    } else {
      v.ling = LinguisticFeatures{0, 0, 0, 0, 0, 0, 0, 0, 0};
    }
    v.has_previous = i > 0;
    v.has_next = i + 1 < n;
    if (v.has_previous) {
      const auto& p = fx[i - 1];
      // Direction of the incoming saccade (previous -> current).
      v[FixMeasure::PreviousFixAngle] =
          pick(f, "PREVIOUS_FIX_ANGLE", [&] { return screen_angle_deg(f.x - p.x, f.y - p.y); });
      v[FixMeasure::PreviousFixDistance] = pick(f, "PREVIOUS_FIX_DISTANCE", [&] { return distance_deg(p, f); });
    }
    if (v.has_next) {
      const auto& q = fx[i + 1];
      v[FixMeasure::NextFixAngle] = pick(f, "NEXT_FIX_ANGLE", [&] { return screen_angle_deg(q.x - f.x, q.y - f.y); });
      v[FixMeasure::NextFixDistance] = pick(f, "NEXT_FIX_DISTANCE", [&] { return distance_deg(f, q); });
      v[FixMeasure::NextSacAmplitude] = pick(f, "NEXT_SAC_AMPLITUDE", [&] { return v[FixMeasure::NextFixDistance]; });
      v[FixMeasure::NextSacAngle] = pick(f, "NEXT_SAC_ANGLE", [&] { return v[FixMeasure::NextFixAngle]; });
      const double amp = v[FixMeasure::NextSacAmplitude];
      v[FixMeasure::NextSacDuration] =
          pick(f, "NEXT_SAC_DURATION", [&] { return kMainSequenceSlopeMs * amp + kMainSequenceInterceptMs; });
      const double dur = v[FixMeasure::NextSacDuration];
      v[FixMeasure::NextSacAvgVelocity] =
          pick(f, "NEXT_SAC_AVG_VELOCITY", [&] { return dur > 0 ? amp / (dur / 1000.0) : 0.0; });
      v[FixMeasure::NextSacPeakVelocity] =
          pick(f, "NEXT_SAC_PEAK_VELOCITY", [&] { return kPeakToMeanVelocity * v[FixMeasure::NextSacAvgVelocity]; });
    }
  }
  return out;
}

// --- global -------------------------------------------------------------------

const std::array<std::string, GlobalFeatureVector::kSize>& global_feature_names() {
  static const std::array<std::string, GlobalFeatureVector::kSize> names = {
      "reading_speed_wpm", "mean_fixation_duration", "mean_dwell_fixated", "skip_rate",
      "regression_rate",   "mean_first_run_dwell",   "fixation_count"};
  return names;
}

std::array<double, GlobalFeatureVector::kSize> GlobalFeatureVector::flat() const {
  return {reading_speed_wpm, mean_fixation_duration, mean_dwell_fixated, skip_rate,
          regression_rate,   mean_first_run_dwell,   fixation_count};
}

GlobalFeatureVector global_features(const Scanpath& scanpath, const ParagraphItem& paragraph) {
  if (scanpath.empty()) throw ValidationError("empty scanpath: no gaze evidence");
  if (!(scanpath.trial_dwell_time > 0)) throw ValidationError("non-positive paragraph reading time");
  std::vector<LinguisticFeatures> dummy(paragraph.size());
  auto words = word_level_features(scanpath, paragraph, dummy);

  GlobalFeatureVector g;
  const double nw = static_cast<double>(paragraph.size());
  g.reading_speed_wpm = nw / (scanpath.trial_dwell_time / 60000.0);
  double total = 0;
  for (const auto& f : scanpath.fixations) total += f.duration;
  g.fixation_count = static_cast<double>(scanpath.fixations.size());
  g.mean_fixation_duration = total / g.fixation_count;

  double dwell = 0, fixated = 0, skipped = 0, first_run = 0, first_run_n = 0;
  for (const auto& w : words) {
    if (w[WordMeasure::TotalSkip] > 0) {
      skipped += 1;
    } else {
      dwell += w[WordMeasure::DwellTime];
      fixated += 1;
    }
    if (w[WordMeasure::FirstRunFixationCount] > 0) {
      first_run += w[WordMeasure::FirstRunDwellTime];
      first_run_n += 1;
    }
  }
  g.mean_dwell_fixated = fixated > 0 ? dwell / fixated : 0.0;
  g.skip_rate = skipped / nw;
  g.mean_first_run_dwell = first_run_n > 0 ? first_run / first_run_n : 0.0;

  double transitions = 0, regressions = 0;
  const auto& fx = scanpath.fixations;
  for (std::size_t i = 1; i < fx.size(); ++i) {
    if (!fx[i - 1].word_index || !fx[i].word_index) continue;
    transitions += 1;
    if (*fx[i].word_index < *fx[i - 1].word_index) regressions += 1;
  }
  g.regression_rate = transitions > 0 ? regressions / transitions : 0.0;
  return g;
}

// --- standardization ------------------------------------------------------------

Standardizer::Standardizer(std::vector<std::string> names, Eigen::RowVectorXd mean, Eigen::RowVectorXd stddev,
                           std::vector<bool> binary)
    : names_(std::move(names)), mean_(std::move(mean)), std_(std::move(stddev)), binary_(std::move(binary)) {}

void Standardizer::apply_inplace(Eigen::Ref<Eigen::MatrixXd> x) const {
  if (static_cast<std::size_t>(x.cols()) != width()) {
    throw ValidationError("standardizer width " + std::to_string(width()) + " does not match " +
                          std::to_string(x.cols()) + " feature columns");
  }
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    if (binary_[c]) continue;
    x.col(c) = (x.col(c).array() - mean_[c]) / std_[c];
  }
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& features) const {
  Eigen::MatrixXd out = features;
  apply_inplace(out);
  return out;
}

Standardizer fit_standardizer(const Eigen::MatrixXd& x, std::vector<std::string> names, std::vector<bool> binary) {
  const auto cols = static_cast<std::size_t>(x.cols());
  if (names.size() != cols || binary.size() != cols) throw ValidationError("standardizer schema width mismatch");
  if (x.rows() == 0) throw ValidationError("cannot fit a standardizer on zero rows");
  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::RowVectorXd sd(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    double var = (x.col(c).array() - mean[c]).square().mean();
    double s = std::sqrt(var);
    sd[c] = s > 1e-12 * std::max(1.0, std::abs(mean[c])) ? s : 1.0;
    if (binary[c]) {
      mean[c] = 0.0;
      sd[c] = 1.0;
    }
  }
  return Standardizer(std::move(names), std::move(mean), std::move(sd), std::move(binary));
}

Eigen::MatrixXd apply_standardizer(const Standardizer& s, const Eigen::MatrixXd& features) { return s.apply(features); }

std::vector<bool> word_feature_binary_mask() {
  std::vector<bool> m(WordFeatureVector::kSize, false);
  m[static_cast<std::size_t>(WordMeasure::FirstFixProgressive)] = true;
  m[static_cast<std::size_t>(WordMeasure::Skip)] = true;
  m[static_cast<std::size_t>(WordMeasure::TotalSkip)] = true;
  m[kWordMeasureCount + 3] = true;  // start_of_line
  m[kWordMeasureCount + 4] = true;  // end_of_line
  m[kWordMeasureCount + 5] = true;  // is_content_word
  return m;
}

std::vector<bool> fixation_feature_binary_mask() {
  std::vector<bool> m(FixationFeatureVector::kSize, false);
  m[kFixMeasureCount + 3] = true;
  m[kFixMeasureCount + 4] = true;
  m[kFixMeasureCount + 5] = true;
  m[FixationFeatureVector::kSize - 3] = true;
  m[FixationFeatureVector::kSize - 2] = true;
  m[FixationFeatureVector::kSize - 1] = true;
  return m;
}

std::vector<bool> global_feature_binary_mask() { return std::vector<bool>(GlobalFeatureVector::kSize, false); }

// --- persistence ------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'Q', 'E', 'Y', 'E', 'F', 'M', '0', '1'};

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
void put_string(std::ostream& out, const std::string& s) {
  put(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
template <class T>
T get(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError(path + ": truncated feature file");
  return v;
}
std::string get_string(std::istream& in, const std::string& path) {
  auto n = get<std::uint32_t>(in, path);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw ParseError(path + ": truncated feature file");
  return s;
}

}  // namespace

void write_feature_matrix(const std::string& path, const FeatureMatrix& m) {
  if (static_cast<std::size_t>(m.values.cols()) != m.names.size() ||
      static_cast<std::size_t>(m.values.rows()) != m.row_keys.size() || m.row_units.size() != m.row_keys.size()) {
    throw ValidationError("feature matrix shape does not match its schema");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path);
  out.write(kMagic, sizeof kMagic);
  put(out, static_cast<std::uint32_t>(m.names.size()));
  for (const auto& n : m.names) put_string(out, n);
  put(out, schema_hash(m.names));
  put(out, static_cast<std::uint64_t>(m.row_keys.size()));
  for (const auto& k : m.row_keys) put_string(out, k);
  out.write(reinterpret_cast<const char*>(m.row_units.data()),
            static_cast<std::streamsize>(m.row_units.size() * sizeof(std::int32_t)));
  // Eigen's default storage is column-major: each column is contiguous.
  out.write(reinterpret_cast<const char*>(m.values.data()),
            static_cast<std::streamsize>(m.values.size() * sizeof(double)));
}

FeatureMatrix read_feature_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw ParseError(path + ": not a feature matrix file");
  FeatureMatrix m;
  auto ncols = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < ncols; ++i) m.names.push_back(get_string(in, path));
  auto hash = get<std::uint64_t>(in, path);
  if (hash != schema_hash(m.names)) throw ParseError(path + ": schema hash mismatch");
  auto nrows = get<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < nrows; ++i) m.row_keys.push_back(get_string(in, path));
  m.row_units.resize(nrows);
  in.read(reinterpret_cast<char*>(m.row_units.data()), static_cast<std::streamsize>(nrows * sizeof(std::int32_t)));
  m.values.resize(static_cast<Eigen::Index>(nrows), ncols);
  in.read(reinterpret_cast<char*>(m.values.data()), static_cast<std::streamsize>(m.values.size() * sizeof(double)));
  if (!in) throw ParseError(path + ": truncated feature file");
  return m;
}

std::uint64_t schema_hash(std::span<const std::string> names) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& n : names) {
    for (unsigned char c : n) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0x1f;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace qeye
