#include "fixtures.hpp"

namespace qeye::testing {

std::shared_ptr<ParagraphItem> make_paragraph(int n, int per_line, int chars, const std::string& paragraph_id) {
  auto p = std::make_shared<ParagraphItem>();
  p->article_id = paragraph_id.substr(0, paragraph_id.find('_'));
  p->paragraph_id = paragraph_id;
  const double width = 10.0 * (chars + 1);
  for (int i = 0; i < n; ++i) {
    WordToken w;
    w.index = i;
    w.surface = std::string(static_cast<std::size_t>(chars), static_cast<char>('a' + i % 26));
    w.line_index = i / per_line;
    w.box_left = 100 + width * (i % per_line);
    w.box_right = w.box_left + width;
    w.box_top = 50 + 40.0 * w.line_index;
    w.box_bottom = w.box_top + 40;
    if (i) p->full_text += ' ';
    p->full_text += w.surface;
    p->words.push_back(w);
  }
  return p;
}

Scanpath make_scanpath(const ParagraphItem& p, const std::vector<std::pair<int, double>>& word_durations) {
  Scanpath sp;
  double total = 0;
  for (const auto& [word, duration] : word_durations) {
    Fixation f;
    f.order_index = static_cast<int>(sp.fixations.size());
    f.duration = duration;
    f.pupil = 1000;
    if (word >= 0) {
      const WordToken& w = p.words[static_cast<std::size_t>(word)];
      f.x = 0.5 * (w.box_left + w.box_right);
      f.y = 0.5 * (w.box_top + w.box_bottom);
      f.word_index = word;
    } else {
      f.x = 5;
      f.y = 5;
    }
    total += duration;
    sp.fixations.push_back(f);
  }
  sp.trial_dwell_time = total;
  sp.screen_geometry = ScreenGeometry{50, 50};
  return sp;
}

Scanpath random_scanpath(const ParagraphItem& p, int max_fixations, Rng& rng) {
  const int n = static_cast<int>(rng.index(static_cast<std::uint64_t>(max_fixations + 1)));
  std::vector<std::pair<int, double>> wd;
  int w = static_cast<int>(rng.index(p.size()));
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    if (u < 0.1) {
      wd.emplace_back(-1, 50 + static_cast<double>(rng.index(300)));
      continue;
    }
    if (u < 0.35) {
      // stay
    } else if (u < 0.75) {
      w = std::min<int>(static_cast<int>(p.size()) - 1, w + 1 + static_cast<int>(rng.index(2)));
    } else {
      w = static_cast<int>(rng.index(p.size()));
    }
    wd.emplace_back(w, 50 + static_cast<double>(rng.index(400)) + 0.25 * static_cast<double>(rng.index(4)));
  }
  Scanpath sp = make_scanpath(p, wd);
  sp.trial_dwell_time += static_cast<double>(rng.index(500));
  return sp;
}

std::vector<LinguisticFeatures> default_ling(const ParagraphItem& p) {
  std::vector<LinguisticFeatures> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i].length = static_cast<double>(p.words[i].surface.size());
    out[i].surprisal = 3.0 + static_cast<double>(i % 5);
    out[i].wordfreq_frequency = 8.0 + static_cast<double>(i % 3);
  }
  return out;
}

synth::SynthDataset small_synth(int participants, int articles, std::uint64_t seed, double gaze_link) {
  synth::SynthSpec spec;
  spec.n_participants = participants;
  spec.n_articles = articles;
  spec.paragraphs_per_article = 2;
  spec.words_per_paragraph = 20;
  spec.gaze_link = gaze_link;
  spec.seed = seed;
  return synth::generate_dataset(spec);
}

models::ModelInput random_input(int paragraph_words, int fixations, int question_words, Rng& rng, int vocab,
                                int word_features, int fixation_features) {
  models::ModelInput in;
  in.trial_id = "t" + std::to_string(rng.index(1000000));
  auto token = [&] { return 8 + static_cast<int>(rng.index(static_cast<std::uint64_t>(vocab - 8))); };
  for (int w = 0; w < paragraph_words; ++w) {
    in.word_positions.push_back(models::kParagraphOffset + static_cast<int>(in.paragraph_tokens.size()));
    const int pieces = 1 + static_cast<int>(rng.index(2));
    for (int k = 0; k < pieces; ++k) {
      in.paragraph_tokens.push_back(token());
      in.paragraph_token_word.push_back(w);
    }
  }
  for (int q = 0; q < question_words; ++q) in.question_tokens.push_back(token());
  in.answer_tokens.resize(4);
  for (auto& a : in.answer_tokens) {
    for (int k = 0; k < 2; ++k) a.push_back(token());
  }
  in.word_features = Eigen::MatrixXd::NullaryExpr(paragraph_words, word_features, [&] { return rng.normal(); });
  in.word_valid.assign(static_cast<std::size_t>(paragraph_words), 1);
  in.fixation_features = Eigen::MatrixXd::NullaryExpr(fixations, fixation_features, [&] { return rng.normal(); });
  for (int f = 0; f < fixations; ++f) {
    const bool off = rng.bernoulli(0.1);
    in.fixation_positions.push_back(off ? -1 : in.word_positions[rng.index(static_cast<std::uint64_t>(paragraph_words))]);
  }
  in.fixation_valid.assign(static_cast<std::size_t>(fixations), 1);
  in.global_features = Eigen::RowVectorXd::NullaryExpr(GlobalFeatureVector::kSize, [&] { return rng.normal(); });
  in.label = static_cast<int>(rng.index(2));
  in.starc = static_cast<Starc>(rng.index(4));
  return in;
}

}  // namespace qeye::testing
