#include "qeye/models/featurize.hpp"

#include <filesystem>

#include "qeye/csv.hpp"

namespace qeye::models {

namespace {

template <std::size_t N>
void set_row(Eigen::MatrixXd& m, Eigen::Index r, const std::array<double, N>& values) {
  for (std::size_t c = 0; c < N; ++c) m(r, static_cast<Eigen::Index>(c)) = values[c];
}

FeatureMatrix collect(const FeatureStore& store, const std::vector<std::string>& names,
                      Eigen::MatrixXd TrialFeatures::*member) {
  FeatureMatrix out;
  out.names = names;
  Eigen::Index rows = 0;
  for (const auto& [id, f] : store) rows += (f.*member).rows();
  out.values.resize(rows, static_cast<Eigen::Index>(names.size()));
  Eigen::Index r = 0;
  for (const auto& [id, f] : store) {
    const Eigen::MatrixXd& m = f.*member;
    for (Eigen::Index i = 0; i < m.rows(); ++i, ++r) {
      out.values.row(r) = m.row(i);
      out.row_keys.push_back(id);
      out.row_units.push_back(static_cast<std::int32_t>(i));
    }
  }
  return out;
}

void check_names(const FeatureMatrix& m, const std::vector<std::string>& expected, const std::string& path) {
  if (m.names != expected) throw ValidationError(path + ": feature schema does not match this build");
}

}  // namespace

FeatureStore extract_features(const Dataset& dataset, const ProviderBundle& providers) {
  std::map<std::string, std::vector<LinguisticFeatures>> ling_by_paragraph;
  FeatureStore store;
  for (const Trial& t : dataset.trials) {
    if (!t.paragraph) throw ValidationError("trial " + t.trial_id + " has no paragraph attached");
    auto it = ling_by_paragraph.find(t.paragraph_id);
    if (it == ling_by_paragraph.end()) {
      it = ling_by_paragraph.emplace(t.paragraph_id, linguistic_features(*t.paragraph, providers)).first;
    }
    const auto& ling = it->second;
    TrialFeatures f;
    const auto words = word_level_features(t.scanpath, *t.paragraph, ling);
    f.word.resize(static_cast<Eigen::Index>(words.size()), WordFeatureVector::kSize);
    for (std::size_t i = 0; i < words.size(); ++i) set_row(f.word, static_cast<Eigen::Index>(i), words[i].flat());
    const auto fixations = fixation_level_features(t.scanpath, *t.paragraph, ling);
    f.fixation.resize(static_cast<Eigen::Index>(fixations.size()), FixationFeatureVector::kSize);
    for (std::size_t i = 0; i < fixations.size(); ++i) {
      set_row(f.fixation, static_cast<Eigen::Index>(i), fixations[i].flat());
    }
    f.global.resize(GlobalFeatureVector::kSize);
    if (!t.scanpath.empty()) {
      const auto g = global_features(t.scanpath, *t.paragraph).flat();
      for (std::size_t i = 0; i < g.size(); ++i) f.global(static_cast<Eigen::Index>(i)) = g[i];
    } else {
      f.global.setZero();
    }
    store.emplace(t.trial_id, std::move(f));
  }
  return store;
}

void write_feature_store(const std::string& dir, const FeatureStore& store) {
  std::filesystem::create_directories(dir);
  write_feature_matrix(dir + "/word.qfm", collect(store, word_feature_names(), &TrialFeatures::word));
  write_feature_matrix(dir + "/fixation.qfm", collect(store, fixation_feature_names(), &TrialFeatures::fixation));

  FeatureMatrix global;
  global.names.assign(global_feature_names().begin(), global_feature_names().end());
  global.values.resize(static_cast<Eigen::Index>(store.size()), GlobalFeatureVector::kSize);
  Eigen::Index r = 0;
  for (const auto& [id, f] : store) {
    global.values.row(r++) = f.global;
    global.row_keys.push_back(id);
    global.row_units.push_back(0);
  }
  write_feature_matrix(dir + "/global.qfm", global);
}

FeatureStore read_feature_store(const std::string& dir) {
  const FeatureMatrix global = read_feature_matrix(dir + "/global.qfm");
  check_names(global, {global_feature_names().begin(), global_feature_names().end()}, dir + "/global.qfm");
  FeatureStore store;
  for (std::size_t r = 0; r < global.row_keys.size(); ++r) {
    TrialFeatures f;
    f.global = global.values.row(static_cast<Eigen::Index>(r));
    f.word.resize(0, WordFeatureVector::kSize);
    f.fixation.resize(0, FixationFeatureVector::kSize);
    store.emplace(global.row_keys[r], std::move(f));
  }
  auto scatter = [&](const std::string& path, const std::vector<std::string>& names,
                     Eigen::MatrixXd TrialFeatures::*member) {
    const FeatureMatrix m = read_feature_matrix(path);
    check_names(m, names, path);
    std::map<std::string, std::vector<Eigen::Index>> rows;
    for (std::size_t r = 0; r < m.row_keys.size(); ++r) rows[m.row_keys[r]].push_back(static_cast<Eigen::Index>(r));
    for (auto& [id, idx] : rows) {
      auto it = store.find(id);
      if (it == store.end()) throw ValidationError(path + ": trial " + id + " missing from global features");
      Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.values.cols());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (m.row_units[static_cast<std::size_t>(idx[i])] != static_cast<std::int32_t>(i)) {
          throw ValidationError(path + ": rows of trial " + id + " are out of order");
        }
        out.row(static_cast<Eigen::Index>(i)) = m.values.row(idx[i]);
      }
      it->second.*member = std::move(out);
    }
  };
  scatter(dir + "/word.qfm", word_feature_names(), &TrialFeatures::word);
  scatter(dir + "/fixation.qfm", fixation_feature_names(), &TrialFeatures::fixation);
  return store;
}

FeatureStandardizers fit_standardizers(const FeatureStore& store, std::span<const std::string> train_trial_ids) {
  if (train_trial_ids.empty()) throw std::invalid_argument("standardizers need at least one training trial");
  Eigen::Index word_rows = 0, fix_rows = 0;
  std::vector<const TrialFeatures*> train;
  for (const auto& id : train_trial_ids) {
    auto it = store.find(id);
    if (it == store.end()) throw ValidationError("no features for trial " + id);
    train.push_back(&it->second);
    word_rows += it->second.word.rows();
    fix_rows += it->second.fixation.rows();
  }
  Eigen::MatrixXd word(word_rows, WordFeatureVector::kSize), fixation(fix_rows, FixationFeatureVector::kSize),
      global(static_cast<Eigen::Index>(train.size()), GlobalFeatureVector::kSize);
  Eigen::Index w = 0, f = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    word.middleRows(w, train[i]->word.rows()) = train[i]->word;
    w += train[i]->word.rows();
    fixation.middleRows(f, train[i]->fixation.rows()) = train[i]->fixation;
    f += train[i]->fixation.rows();
    global.row(static_cast<Eigen::Index>(i)) = train[i]->global;
  }
  FeatureStandardizers s;
  s.word = fit_standardizer(word, word_feature_names(), word_feature_binary_mask());
  s.fixation = fit_standardizer(fixation, fixation_feature_names(), fixation_feature_binary_mask());
  s.global = fit_standardizer(global, {global_feature_names().begin(), global_feature_names().end()},
                              global_feature_binary_mask());
  return s;
}

ModelInput make_input(const Trial& trial, const TrialFeatures& features, const FeatureStandardizers& standardizers,
                      const HashingTokenizer& tokenizer, Task task) {
  if (!trial.paragraph) throw ValidationError("trial " + trial.trial_id + " has no paragraph attached");
  const ParagraphItem& paragraph = *trial.paragraph;
  if (features.word.rows() != static_cast<Eigen::Index>(paragraph.size())) {
    throw ValidationError("trial " + trial.trial_id + ": word feature rows do not match the paragraph");
  }
  if (features.fixation.rows() != static_cast<Eigen::Index>(trial.scanpath.fixations.size())) {
    throw ValidationError("trial " + trial.trial_id + ": fixation feature rows do not match the scanpath");
  }
  ModelInput in;
  in.trial_id = trial.trial_id;

  std::vector<std::string> surfaces;
  surfaces.reserve(paragraph.size());
  for (const auto& w : paragraph.words) surfaces.push_back(w.surface);
  const auto p = tokenizer.tokenize_words(surfaces);
  in.paragraph_tokens = p.ids;
  in.paragraph_token_word = p.word_of_token;
  in.question_tokens = tokenizer.tokenize_text(trial.question.text).ids;
  for (const auto& a : trial.question.answers) in.answer_tokens.push_back(tokenizer.tokenize_text(a).ids);

  in.word_features = standardizers.word.apply(features.word);
  in.word_positions.resize(paragraph.size());
  for (std::size_t i = 0; i < paragraph.size(); ++i) in.word_positions[i] = kParagraphOffset + p.first_token_of_word[i];
  in.word_valid.assign(paragraph.size(), 1);

  in.fixation_features = standardizers.fixation.apply(features.fixation);
  for (const Fixation& fx : trial.scanpath.fixations) {
    in.fixation_positions.push_back(fx.word_index ? in.word_positions.at(static_cast<std::size_t>(*fx.word_index)) : -1);
  }
  in.fixation_valid.assign(trial.scanpath.fixations.size(), 1);

  in.global_features = standardizers.global.apply(features.global);
  in.label = task == Task::Binary ? trial.binary_label : trial.choice_label();
  in.starc = trial.starc_label;
  return in;
}

}  // namespace qeye::models
