#include "qeye/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "qeye/csv.hpp"
#include "qeye/random.hpp"

namespace qeye::synth {

namespace {

constexpr double kLeftMargin = 80;
constexpr double kRightLimit = 1840;
constexpr double kTopMargin = 100;
constexpr double kCharWidth = 14;
constexpr double kLineHeight = 56;
// Centre and spread of the log dwell ratio under default scanpath settings,
// so the normalized dwell is roughly standard normal.
constexpr double kDwellRatioCenter = -0.39;
constexpr double kDwellRatioScale = 1.15;

// Fixed wording stem per question type; reserved from the lexicon.
const std::array<std::array<std::string, 3>, 4> kQuestionStems{{{"quo", "dra", "wex"},
                                                                {"zat", "plo", "gry"},
                                                                {"vep", "skro", "fyn"},
                                                                {"kix", "thru", "olq"}}};
const std::array<std::string, 5> kContentPos{"NOUN", "VERB", "ADJ", "ADV", "PROPN"};
const std::array<std::string, 5> kFunctionPos{"DET", "ADP", "PRON", "AUX", "CCONJ"};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Lexicon {
  std::vector<std::string> words;
  std::vector<double> log2_prob;
  std::vector<double> cumulative;
  std::vector<std::string> pos;

  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min(static_cast<std::size_t>(it - cumulative.begin()), words.size() - 1);
  }
};

std::string pseudo_word(int length, Rng& rng) {
  static const std::string consonants = "bcdfghjklmnprstvwz";
  static const std::string vowels = "aeiou";
  std::string w;
  bool vowel = rng.bernoulli(0.3);
  for (int i = 0; i < length; ++i) {
    const std::string& pool = vowel ? vowels : consonants;
    w.push_back(pool[rng.index(pool.size())]);
    vowel = !vowel;
  }
  return w;
}

Lexicon build_lexicon(const SynthSpec& spec, Rng& rng) {
  Lexicon lex;
  std::set<std::string> used;
  for (const auto& stem : kQuestionStems) used.insert(stem.begin(), stem.end());
  double total = 0;
  std::vector<double> weights;
  for (int r = 0; r < spec.lexicon_size; ++r) {
    weights.push_back(1.0 / std::pow(r + 2.7, spec.zipf_exponent));
    total += weights.back();
  }
  double cum = 0;
  for (int r = 0; r < spec.lexicon_size; ++r) {
    const double p = weights[static_cast<std::size_t>(r)] / total;
    const double bits = -std::log2(p);
    const int length = std::clamp(static_cast<int>(std::lround(1.5 + 0.45 * (bits - 4) + rng.normal())), 1, 12);
    std::string w = pseudo_word(length, rng);
    while (used.count(w)) w = pseudo_word(length + 1, rng);
    used.insert(w);
    lex.words.push_back(w);
    lex.log2_prob.push_back(std::log2(p));
    cum += p;
    lex.cumulative.push_back(cum);
    const bool content = length > 3 ? rng.bernoulli(0.85) : (r >= 40 && rng.bernoulli(0.5));
    lex.pos.push_back(content ? kContentPos[rng.index(kContentPos.size())] : kFunctionPos[rng.index(kFunctionPos.size())]);
  }
  lex.cumulative.back() = 1.0;
  return lex;
}

std::string distort(const std::string& w, Rng& rng) {
  std::string out = w;
  const std::size_t i = rng.index(out.size());
  const char replacement = static_cast<char>('a' + rng.index(26));
  out[i] = replacement == out[i] ? static_cast<char>('a' + (replacement - 'a' + 1) % 26) : replacement;
  return out + "e";
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
  return out;
}

double mean_log_duration(const SynthParagraph& p, int w, const SynthSpec& spec) {
  const auto& a = p.annotations[static_cast<std::size_t>(w)];
  const double length = static_cast<double>(p.paragraph->words[static_cast<std::size_t>(w)].surface.size());
  return spec.duration_intercept + spec.duration_length * length + spec.duration_frequency * (-a.log2_freq) +
         spec.duration_surprisal * (-a.log2_prob_context);
}

std::string fmt2(double v) { return format_double(std::round(v * 100.0) / 100.0); }

}  // namespace

void SynthSpec::validate() const {
  if (n_articles < 1 || paragraphs_per_article < 1 || n_participants < 1) {
    throw ConfigError("synthetic spec needs at least one article, paragraph and participant");
  }
  if (words_per_paragraph < span_max + 1) throw ConfigError("words_per_paragraph too small for the critical span");
  if (span_min < 1 || span_max < span_min) throw ConfigError("critical span bounds must satisfy 1 <= min <= max");
  if (!(skill_sd > 0) || !(difficulty_sd > 0) || !(duration_sd > 0) || !(speed_sd > 0)) {
    throw ConfigError("all synthetic variances must be positive");
  }
  if (gaze_link < 0) throw ConfigError("gaze_link must be non-negative");
  if (!(answer_temperature > 0)) throw ConfigError("answer_temperature must be positive");
  if (hunting_fraction < 0 || hunting_fraction > 1) throw ConfigError("hunting_fraction must lie in [0, 1]");
  if (lexicon_size < 50) throw ConfigError("lexicon_size must be at least 50");
  if (!(px_per_degree > 0)) throw ConfigError("px_per_degree must be positive");
}

SynthCorpus generate_corpus(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(mix_seed(seed, 0x636f72707573ULL));
  const Lexicon lex = build_lexicon(spec, rng);
  SynthCorpus corpus;
  for (int a = 0; a < spec.n_articles; ++a) {
    const std::string article_id = "art" + std::to_string(a + 1);
    for (int k = 0; k < spec.paragraphs_per_article; ++k) {
      SynthParagraph sp;
      auto para = std::make_shared<ParagraphItem>();
      para->article_id = article_id;
      para->paragraph_id = article_id + "_p" + std::to_string(k + 1);
      const int n = std::max(spec.span_max + 1, static_cast<int>(std::lround(rng.normal(
                                                    spec.words_per_paragraph, 0.15 * spec.words_per_paragraph))));
      double x = kLeftMargin;
      int line = 0;
      std::vector<std::string> surfaces;
      for (int i = 0; i < n; ++i) {
        const std::size_t id = lex.sample(rng);
        const std::string& s = lex.words[id];
        const double width = kCharWidth * static_cast<double>(s.size() + 1);
        if (x + width > kRightLimit && x > kLeftMargin) {
          ++line;
          x = kLeftMargin;
        }
        WordToken w;
        w.index = i;
        w.surface = s;
        w.line_index = line;
        w.box_left = x;
        w.box_right = x + width;
        w.box_top = kTopMargin + line * kLineHeight;
        w.box_bottom = w.box_top + kLineHeight;
        x += width;
        para->words.push_back(w);
        surfaces.push_back(s);

        AnnotationTable::Row row;
        row.log2_freq = lex.log2_prob[id];
        row.log2_prob_context = std::min(-0.05, lex.log2_prob[id] + rng.normal(0.0, 1.5));
        row.pos = lex.pos[id];
        if (i == 0) {
          row.head = 0;
        } else {
          const int lo = std::max(0, i - 3), hi = std::min(n - 1, i + 3);
          int h = i;
          while (h == i) h = lo + static_cast<int>(rng.index(static_cast<std::uint64_t>(hi - lo + 1)));
          row.head = h;
        }
        sp.annotations.push_back(row);
      }
      para->full_text = join(surfaces);
      sp.paragraph = para;

      for (int q = 0; q < 3; ++q) {
        SynthQuestion sq;
        const int len = spec.span_min + static_cast<int>(rng.index(static_cast<std::uint64_t>(spec.span_max - spec.span_min + 1)));
        sq.span.start = static_cast<int>(rng.index(static_cast<std::uint64_t>(n - len + 1)));
        sq.span.end = sq.span.start + len;
        sq.question_type = static_cast<int>(rng.index(4));
        sq.difficulty = spec.question_type_offsets[static_cast<std::size_t>(sq.question_type)] +
                        rng.normal(0.0, spec.difficulty_sd);
        std::vector<std::string> span_words(surfaces.begin() + sq.span.start, surfaces.begin() + sq.span.end);
        std::vector<std::string> outside;
        for (int i = 0; i < n; ++i) {
          if (!sq.span.contains(i)) outside.push_back(surfaces[static_cast<std::size_t>(i)]);
        }
        auto pick = [&](const std::vector<std::string>& from) { return from[rng.index(from.size())]; };

        QuestionItem& item = sq.item;
        item.question_id = para->paragraph_id + "_q" + std::to_string(q + 1);
        const auto& stem = kQuestionStems[static_cast<std::size_t>(sq.question_type)];
        std::vector<std::string> qwords(stem.begin(), stem.end());
        for (std::size_t i = 0; i < span_words.size() && i < 3; ++i) qwords.push_back(span_words[i]);
        item.text = join(qwords);

        std::array<std::string, 4> by_role;
        by_role[0] = join({pick(span_words), pick(span_words)});
        by_role[1] = join({distort(pick(span_words), rng), pick(span_words)});
        by_role[2] = join({pick(outside), pick(outside)});
        by_role[3] = join({lex.words[lex.sample(rng)], lex.words[lex.sample(rng)]});
        std::vector<int> order{0, 1, 2, 3};
        rng.shuffle(order);
        for (int pos = 0; pos < 4; ++pos) {
          item.starc_of_position[static_cast<std::size_t>(pos)] = static_cast<Starc>(order[static_cast<std::size_t>(pos)]);
          item.answers[static_cast<std::size_t>(pos)] = by_role[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])];
        }
        sp.questions.push_back(std::move(sq));
      }
      corpus.paragraphs.push_back(std::move(sp));
    }
  }
  return corpus;
}

std::vector<ParticipantLatent> generate_participants(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(mix_seed(seed, 0x7061727469ULL));
  std::vector<ParticipantLatent> out;
  for (int i = 0; i < spec.n_participants; ++i) {
    ParticipantLatent p;
    char id[16];
    std::snprintf(id, sizeof id, "s%03d", i + 1);
    p.participant_id = id;
    p.skill = rng.normal(0.0, spec.skill_sd);
    p.speed = std::exp(rng.normal(0.0, spec.speed_sd));
    p.pupil_base = rng.normal(1000.0, 120.0);
    out.push_back(p);
  }
  std::vector<std::size_t> order(out.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const auto n_hunting = static_cast<std::size_t>(std::lround(spec.hunting_fraction * spec.n_participants));
  for (std::size_t i = 0; i < n_hunting; ++i) out[order[i]].regime = Regime::Hunting;
  return out;
}

Scanpath generate_scanpath(const ParticipantLatent& reader, const SynthParagraph& paragraph,
                           const SynthQuestion& question, Regime regime, double engagement, const SynthSpec& spec,
                           std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x7363616eULL));
  const ParagraphItem& para = *paragraph.paragraph;
  const int n = static_cast<int>(para.size());
  const bool hunting = regime == Regime::Hunting;
  const CriticalSpan& span = question.span;

  Scanpath sp;
  sp.screen_geometry = ScreenGeometry{spec.px_per_degree, spec.px_per_degree};
  auto emit = [&](std::optional<int> word) {
    Fixation f;
    double mu = spec.duration_intercept + spec.duration_length * 5;
    if (word) {
      const WordToken& w = para.words[static_cast<std::size_t>(*word)];
      mu = mean_log_duration(paragraph, *word, spec);
      const double width = w.box_right - w.box_left;
      f.x = std::round((w.box_left + 1 + rng.uniform() * (width - 2)) * 10.0) / 10.0;
      const double mid = 0.5 * (w.box_top + w.box_bottom);
      f.y = std::round(std::clamp(mid + rng.normal(0.0, 5.0), w.box_top + 1, w.box_bottom - 1) * 10.0) / 10.0;
      f.word_index = *word;
    } else {
      f.x = std::round((kRightLimit + 20 + rng.uniform() * 40) * 10.0) / 10.0;
      f.y = kTopMargin + rng.uniform() * kLineHeight;
    }
    double d = reader.speed * std::exp(mu + rng.normal(0.0, spec.duration_sd));
    if (word && span.contains(*word)) {
      d *= std::exp(spec.engagement_duration * engagement);
      if (hunting) d *= spec.hunting_span_boost;
    }
    f.duration = std::max(40.0, std::round(d));
    f.pupil = std::round(reader.pupil_base + rng.normal(0.0, 40.0));
    f.order_index = static_cast<int>(sp.fixations.size());
    sp.fixations.push_back(std::move(f));
  };

  for (int i = 0; i < n; ++i) {
    const auto& a = paragraph.annotations[static_cast<std::size_t>(i)];
    const double length = static_cast<double>(para.words[static_cast<std::size_t>(i)].surface.size());
    double p_skip = sigmoid(spec.skip_intercept + spec.skip_length * (length - 5) +
                            spec.skip_frequency * (-a.log2_freq - 10));
    if (hunting && !span.contains(i)) p_skip = std::min(0.95, p_skip * spec.hunting_skip_boost);
    if (rng.bernoulli(p_skip)) continue;
    emit(i);
    if (rng.bernoulli(sigmoid(spec.refixation_intercept + spec.refixation_length * (length - 5)))) emit(i);
    if (i > 0 && rng.bernoulli(sigmoid(spec.regression_intercept))) {
      emit(i - 1 - static_cast<int>(rng.index(static_cast<std::uint64_t>(std::min(i, 4)))));
    }
    if (rng.bernoulli(spec.off_text_rate)) emit(std::nullopt);
  }
  if (rng.bernoulli(sigmoid(spec.lookback_intercept + spec.lookback_engagement * engagement))) {
    for (int w = span.start; w < span.end; ++w) emit(w);
  }
  if (sp.fixations.empty()) emit(0);

  // Saccade kinematics reported as an eyetracker would.
  double total = 0;
  for (std::size_t i = 0; i < sp.fixations.size(); ++i) {
    Fixation& f = sp.fixations[i];
    total += f.duration;
    if (i + 1 < sp.fixations.size()) {
      const Fixation& g = sp.fixations[i + 1];
      const double amp = std::hypot(g.x - f.x, g.y - f.y) / spec.px_per_degree;
      const double dur = std::max(8.0, std::round(2.2 * amp + 21 + rng.normal(0.0, 3.0)));
      f.passthrough["NEXT_SAC_AMPLITUDE"] = fmt2(amp);
      f.passthrough["NEXT_SAC_DURATION"] = format_double(dur);
      f.passthrough["NEXT_FIX_DISTANCE"] = fmt2(amp);
      total += dur;
    }
    if (i > 0) {
      const Fixation& p = sp.fixations[i - 1];
      f.passthrough["PREVIOUS_FIX_DISTANCE"] = fmt2(std::hypot(f.x - p.x, f.y - p.y) / spec.px_per_degree);
    }
  }
  sp.trial_dwell_time = total;
  return sp;
}

double critical_span_dwell(const Scanpath& scanpath, const CriticalSpan& span) {
  double d = 0;
  for (const auto& f : scanpath.fixations) {
    if (f.word_index && span.contains(*f.word_index)) d += f.duration;
  }
  return d;
}

double normalized_span_dwell(const Scanpath& scanpath, const SynthParagraph& paragraph, const CriticalSpan& span,
                             const ParticipantLatent& reader, const SynthSpec& spec) {
  double expected = 0;
  for (int w = span.start; w < span.end; ++w) {
    expected += reader.speed * std::exp(mean_log_duration(paragraph, w, spec) + 0.5 * spec.duration_sd * spec.duration_sd);
  }
  const double ratio = (critical_span_dwell(scanpath, span) + 1.0) / expected;
  return std::clamp((std::log(ratio) - kDwellRatioCenter) / kDwellRatioScale, -4.0, 4.0);
}

double probability_correct(const ResponseLatent& latent, const SynthSpec& spec) {
  const double regime = latent.regime == Regime::Hunting ? spec.hunting_offset : 0.0;
  return sigmoid(spec.correct_intercept + latent.skill - latent.difficulty + spec.gaze_link * latent.normalized_dwell +
                 regime);
}

Starc generate_response(const ResponseLatent& latent, const SynthSpec& spec, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x7265737030ULL));
  if (rng.bernoulli(probability_correct(latent, spec))) return Starc::A;
  std::array<double, 3> w{};
  double total = 0;
  for (int k = 0; k < 3; ++k) {
    w[static_cast<std::size_t>(k)] = std::exp(-0.35 * k / spec.answer_temperature);
    total += w[static_cast<std::size_t>(k)];
  }
  double u = rng.uniform() * total;
  for (int k = 0; k < 3; ++k) {
    u -= w[static_cast<std::size_t>(k)];
    if (u < 0) return static_cast<Starc>(k + 1);
  }
  return Starc::D;
}

SynthDataset generate_dataset(const SynthSpec& spec) {
  spec.validate();
  SynthDataset out;
  out.corpus = generate_corpus(spec, mix_seed(spec.seed, 1));
  out.participants = generate_participants(spec, mix_seed(spec.seed, 2));
  out.annotations = std::make_shared<AnnotationTable>();
  for (const auto& p : out.corpus.paragraphs) {
    out.dataset.paragraphs[p.paragraph->paragraph_id] = p.paragraph;
    std::vector<std::string> surfaces;
    for (const auto& w : p.paragraph->words) surfaces.push_back(w.surface);
    out.annotations->add(p.paragraph->paragraph_id, p.annotations, surfaces);
  }
  std::uint64_t trial_index = 0;
  for (const auto& reader : out.participants) {
    for (const auto& p : out.corpus.paragraphs) {
      const std::uint64_t trial_seed = mix_seed(mix_seed(spec.seed, 3), trial_index++);
      Rng rng(trial_seed);
      const SynthQuestion& q = p.questions[rng.index(p.questions.size())];
      const double engagement = rng.normal();

      Trial t;
      t.trial_id = reader.participant_id + "_" + p.paragraph->paragraph_id;
      t.participant_id = reader.participant_id;
      t.article_id = p.paragraph->article_id;
      t.paragraph_id = p.paragraph->paragraph_id;
      t.question = q.item;
      t.regime = reader.regime;
      t.paragraph = p.paragraph;
      t.scanpath = generate_scanpath(reader, p, q, reader.regime, engagement, spec, mix_seed(trial_seed, 1));

      TrialTruth truth;
      truth.trial_id = t.trial_id;
      truth.skill = reader.skill;
      truth.difficulty = q.difficulty;
      truth.engagement = engagement;
      truth.critical_span_dwell = critical_span_dwell(t.scanpath, q.span);
      truth.normalized_dwell = normalized_span_dwell(t.scanpath, p, q.span, reader, spec);
      const ResponseLatent latent{reader.skill, q.difficulty, truth.normalized_dwell, reader.regime};
      truth.probability_correct = probability_correct(latent, spec);
      truth.span = q.span;
      truth.question_type = q.question_type;

      t.starc_label = generate_response(latent, spec, mix_seed(trial_seed, 2));
      t.chosen_position = q.item.position_of(t.starc_label) + 1;
      t.binary_label = t.starc_label == Starc::A ? 1 : 0;
      out.dataset.trials.push_back(std::move(t));
      out.truth.push_back(truth);
    }
  }
  return out;
}

void write_dataset(const std::string& dir, const SynthDataset& data) {
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(dir + "/" + name);
    if (!f) throw std::runtime_error("cannot write " + dir + "/" + name);
    return f;
  };
  {
    auto f = open("manifest.csv");
    write_manifest(f, data.dataset.trials);
  }
  {
    auto f = open("paragraphs.csv");
    std::vector<const ParagraphItem*> paragraphs;
    for (const auto& p : data.corpus.paragraphs) paragraphs.push_back(p.paragraph.get());
    write_paragraphs(f, paragraphs);
  }
  {
    auto f = open("fixations.tsv");
    std::vector<std::pair<std::string, const Scanpath*>> scanpaths;
    for (const auto& t : data.dataset.trials) scanpaths.emplace_back(t.trial_id, &t.scanpath);
    write_fixation_report(f, scanpaths);
  }
  {
    auto f = open("annotations.csv");
    std::vector<std::pair<const ParagraphItem*, std::vector<AnnotationTable::Row>>> rows;
    for (const auto& p : data.corpus.paragraphs) rows.emplace_back(p.paragraph.get(), p.annotations);
    AnnotationTable::write(f, rows);
  }
  {
    auto f = open("latent_truth.csv");
    write_delimited(f,
                    {"trial_id", "skill", "difficulty", "engagement", "normalized_dwell", "critical_span_dwell",
                     "probability_correct", "span_start", "span_end", "question_type"},
                    ',');
    for (const auto& t : data.truth) {
      write_delimited(f,
                      {t.trial_id, format_double(t.skill), format_double(t.difficulty), format_double(t.engagement),
                       format_double(t.normalized_dwell), format_double(t.critical_span_dwell),
                       format_double(t.probability_correct), std::to_string(t.span.start),
                       std::to_string(t.span.end), std::to_string(t.question_type)},
                      ',');
    }
  }
}

}  // namespace qeye::synth
