#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "qeye/models/architectures.hpp"
#include "qeye/models/tokenizer.hpp"
#include "qeye/nn/ops.hpp"

using namespace qeye;
using namespace qeye::models;
using qeye::testing::random_input;
using Catch::Approx;

namespace {

ModelConfig config_for(Architecture a, Task t = Task::Binary) {
  ModelConfig c;
  c.architecture = a;
  c.task = t;
  return c;
}

double max_delta(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

/// Appends `extra` invalid rows of garbage to the gaze sequences.
ModelInput with_padding(ModelInput in, int extra, Rng& rng, bool fixations) {
  auto pad = [&](Eigen::MatrixXd& m, std::vector<int>& pos, std::vector<char>& valid) {
    const auto old = m.rows();
    m.conservativeResize(old + extra, m.cols());
    for (Eigen::Index r = old; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal(0, 1e3);
    }
    for (int k = 0; k < extra; ++k) {
      pos.push_back(static_cast<int>(rng.index(40)));
      valid.push_back(0);
    }
  };
  if (fixations) pad(in.fixation_features, in.fixation_positions, in.fixation_valid);
  else pad(in.word_features, in.word_positions, in.word_valid);
  return in;
}

}  // namespace

TEST_CASE("every architecture emits one logit per class") {
  Rng rng(1);
  const auto in = random_input(8, 10, 3, rng);
  for (Architecture a : all_architectures()) {
    for (Task t : {Task::Binary, Task::MultipleChoice}) {
      if (a == Architecture::LogRegGlobal && t == Task::MultipleChoice) {
        CHECK_THROWS_AS(make_model(config_for(a, t), 1), ConfigError);
        continue;
      }
      auto m = make_model(config_for(a, t), 1);
      const auto logits = m->logits(in);
      INFO(to_string(a) << " " << to_string(t));
      CHECK(logits.size() == (t == Task::Binary ? 2 : 4));
      const auto p = m->probabilities(in);
      CHECK(p.sum() == Approx(1.0).margin(1e-6));
      CHECK(p.minCoeff() >= 0);
      CHECK(m->logits(in) == logits);
    }
  }
}

TEST_CASE("text-only model ignores gaze") {
  Rng rng(2);
  auto m = make_model(config_for(Architecture::TextOnly), 2);
  auto a = random_input(8, 10, 3, rng);
  auto b = a;
  b.word_features.setRandom();
  b.fixation_features.setRandom();
  b.global_features.setRandom();
  CHECK(m->logits(a) == m->logits(b));
}

TEST_CASE("text sequence overflow names the segment") {
  Rng rng(3);
  auto cfg = config_for(Architecture::TextOnly);
  cfg.encoder.max_positions = 16;
  auto m = make_model(cfg, 3);
  const auto in = random_input(20, 4, 2, rng);
  try {
    (void)m->logits(in);
    FAIL("expected TruncationError");
  } catch (const TruncationError& e) {
    CHECK(e.segment() == "paragraph");
  }
}

TEST_CASE("concatenated sequence length") {
  Rng rng(4);
  const auto in = random_input(6, 9, 3, rng);
  ConcatModel words(config_for(Architecture::QEyeConcatWords), rng);
  ConcatModel fixes(config_for(Architecture::QEyeConcatFixations), rng);
  const int n_text = static_cast<int>(in.paragraph_tokens.size() + in.question_tokens.size()) + 3;
  CHECK(words.combined_length(in) == 6 + 1 + n_text);
  CHECK(fixes.combined_length(in) == 9 + 1 + n_text);
}

TEST_CASE("concatenation ignores garbage in padded gaze tokens") {
  Rng rng(5);
  for (auto a : {Architecture::QEyeConcatWords, Architecture::QEyeConcatFixations}) {
    auto m = make_model(config_for(a), 5);
    for (int k = 0; k < 10; ++k) {
      const auto in = random_input(7, 9, 3, rng);
      const auto padded = with_padding(in, 4, rng, a == Architecture::QEyeConcatFixations);
      CHECK(max_delta(m->logits(in), m->logits(padded)) < 1e-6);
    }
  }
}

TEST_CASE("concatenation is invariant to gaze token order") {
  Rng rng(6);
  ConcatModel m(config_for(Architecture::QEyeConcatFixations), rng);
  for (int k = 0; k < 10; ++k) {
    const auto in = random_input(7, 12, 3, rng);
    std::vector<int> order(12);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    auto perm = in;
    for (int i = 0; i < 12; ++i) {
      perm.fixation_features.row(i) = in.fixation_features.row(order[i]);
      perm.fixation_positions[i] = in.fixation_positions[order[i]];
    }
    CHECK(max_delta(m.pooled(in), m.pooled(perm)) < 1e-5);
  }
}

TEST_CASE("gaze budget overflow") {
  Rng rng(7);
  auto cfg = config_for(Architecture::QEyeConcatFixations);
  cfg.gaze_budget = 5;
  auto m = make_model(cfg, 7);
  CHECK_THROWS_AS(m->logits(random_input(4, 6, 2, rng)), GazeOverflowError);
}

TEST_CASE("zero displacement strength leaves the text path untouched") {
  Rng rng(8);
  for (int k : {0, 1}) {
    auto cfg = config_for(Architecture::QEyeGatedWords);
    cfg.mag_beta = 0;
    cfg.injection_layer = k;
    GatedModel on(cfg, rng);
    for (int i = 0; i < 10; ++i) {
      const auto in = random_input(8, 5, 3, rng);
      const auto with = on.logits(in);
      on.set_displacement_enabled(false);
      const auto without = on.logits(in);
      on.set_displacement_enabled(true);
      CHECK(max_delta(with, without) < 1e-6);
    }
  }
}

TEST_CASE("displacement scale never exceeds one") {
  Rng rng(9);
  auto cfg = config_for(Architecture::QEyeGatedWords);
  cfg.mag_beta = 5.0;
  GatedModel m(cfg, rng);
  for (int i = 0; i < 20; ++i) {
    auto in = random_input(6, 3, 2, rng);
    in.word_features *= 20;
    for (const auto& t : m.trace(in)) {
      CHECK(t.alpha >= 0);
      CHECK(t.alpha <= 1);
    }
  }
}

TEST_CASE("displacement scale arithmetic") {
  nn::Graph g;
  nn::Matrix z = nn::Matrix::Zero(1, 2), h = nn::Matrix::Zero(1, 2);
  z << 3, 4;
  h << 60, 80;
  CHECK(nn::displacement_scale(g.constant(z), g.constant(h), 1e-3).value()(0, 0) == Approx(5e-5));
}

TEST_CASE("injection layer outside the encoder is rejected") {
  auto cfg = config_for(Architecture::QEyeGatedWords);
  cfg.injection_layer = 2;
  CHECK_THROWS_AS(make_model(cfg, 1), ConfigError);
  cfg.injection_layer = -1;
  CHECK_THROWS_AS(make_model(cfg, 1), ConfigError);
}

TEST_CASE("post-fusion shapes follow the fixation and question lengths") {
  Rng rng(10);
  PostFusionModel m(config_for(Architecture::QEyePostFusionFixations), rng);
  const auto in = random_input(8, 11, 4, rng);
  const auto s = m.shapes(in);
  CHECK(s.gaze_rows == 11);
  CHECK(s.fused_rows == 11);
  CHECK(s.question_rows == 4);
  CHECK(s.output_rows == 4);
}

TEST_CASE("post-fusion ignores extra padding") {
  Rng rng(11);
  auto m = make_model(config_for(Architecture::QEyePostFusionFixations), 11);
  for (int k = 0; k < 10; ++k) {
    const auto in = random_input(7, 9, 3, rng);
    CHECK(max_delta(m->logits(in), m->logits(with_padding(in, 9, rng, true))) < 1e-6);
  }
}

TEST_CASE("gaze-reading models need fixations") {
  Rng rng(12);
  auto in = random_input(5, 0, 2, rng);
  CHECK_THROWS(make_model(config_for(Architecture::QEyePostFusionFixations), 1)->logits(in));
  CHECK_THROWS(make_model(config_for(Architecture::CnnFixations), 1)->logits(in));
}

TEST_CASE("no-eyes ablation removes every gaze measure") {
  Rng rng(13);
  for (auto a : {Architecture::QEyeConcatWords, Architecture::QEyeGatedWords}) {
    auto cfg = config_for(a);
    cfg.ablation = Ablation::NoEyes;
    cfg.mag_beta = 0.5;
    auto m = make_model(cfg, 13);
    for (int i = 0; i < 10; ++i) {
      const auto in = random_input(8, 6, 3, rng);
      auto mutated = in;
      mutated.word_features.leftCols(kWordMeasureCount).setRandom();
      mutated.word_features.leftCols(kWordMeasureCount) *= 100;
      mutated.fixation_features.setRandom();
      CHECK(max_delta(m->logits(in), m->logits(mutated)) < 1e-6);
    }
  }
  auto cfg = config_for(Architecture::QEyeConcatFixations);
  cfg.ablation = Ablation::NoEyes;
  CHECK_THROWS_AS(make_model(cfg, 1), ConfigError);
}

TEST_CASE("architecture gradients match finite differences") {
  Rng rng(14);
  for (auto a : {Architecture::QEyeConcatWords, Architecture::QEyeConcatFixations, Architecture::QEyeGatedWords,
                 Architecture::QEyePostFusionFixations, Architecture::TextOnly, Architecture::CnnFixations}) {
    for (Task t : {Task::Binary, Task::MultipleChoice}) {
      auto cfg = config_for(a, t);
      cfg.mag_beta = 0.5;
      auto m = make_model(cfg, 14);
      auto in = random_input(6, 7, 3, rng);
      in.label = static_cast<int>(rng.index(static_cast<std::uint64_t>(cfg.num_classes())));
      const auto r = qeye::testing::check_model_gradients(*m, in, rng, 6);
      INFO(to_string(a) << " " << to_string(t) << " rel " << r.relative_error);
      CHECK(r.relative_error < 1e-4);
      CHECK(r.analytic_norm > 0);
    }
  }
}

TEST_CASE("majority baseline predicts the most frequent label") {
  Rng rng(15);
  std::vector<ModelInput> data;
  for (int i = 0; i < 10; ++i) {
    data.push_back(random_input(3, 2, 1, rng));
    data.back().label = i < 7 ? 0 : 1;
  }
  std::vector<const ModelInput*> ptrs;
  for (const auto& d : data) ptrs.push_back(&d);
  auto m = make_model(config_for(Architecture::Majority), 1);
  REQUIRE(m->fits_directly());
  m->fit_direct(ptrs, {}, {});
  CHECK(predict(m->logits(data[9]), Task::Binary) == 0);
}

TEST_CASE("logistic regression separates a linear signal") {
  Rng rng(16);
  std::vector<ModelInput> data;
  for (int i = 0; i < 200; ++i) {
    auto in = random_input(2, 1, 1, rng);
    in.label = in.global_features(0) + 0.2 * rng.normal() > 0 ? 1 : 0;
    data.push_back(in);
  }
  std::vector<const ModelInput*> ptrs;
  for (const auto& d : data) ptrs.push_back(&d);
  auto m = make_model(config_for(Architecture::LogRegGlobal), 1);
  m->fit_direct(ptrs, {}, {1.0, true});
  int right = 0;
  for (const auto& d : data) right += predict(m->logits(d), Task::Binary) == d.label;
  CHECK(right >= 180);
  CHECK(m->parameters().at("logreg.weight").value(0, 0) > 1.0);
}

TEST_CASE("prediction breaks ties toward the lowest class and rejects NaN") {
  Eigen::RowVectorXd l(4);
  l << 1, 3, 3, 0;
  CHECK(predict(l, Task::MultipleChoice) == 1);
  l(2) = std::nan("");
  CHECK_THROWS_AS(predict(l, Task::MultipleChoice), NumericError);
  CHECK_THROWS(predict(l, Task::Binary));
}

TEST_CASE("prediction records round-trip through JSON lines") {
  PredictionRecord r;
  r.trial_id = "t\"7";
  r.fold_id = 3;
  r.evaluation_regime = "new_both";
  r.task = Task::MultipleChoice;
  r.class_probabilities = {0.1, 0.2, 0.3, 0.4};
  r.predicted = 3;
  r.gold = 1;
  const auto back = prediction_from_json_line(to_json_line(r));
  CHECK(back.trial_id == r.trial_id);
  CHECK(back.fold_id == 3);
  CHECK(back.task == Task::MultipleChoice);
  CHECK(back.class_probabilities == r.class_probabilities);
  CHECK(back.gold == 1);
}

TEST_CASE("hashing tokenizer is deterministic and maps words to tokens") {
  HashingTokenizer tok(512);
  const auto e = tok.tokenize_words({"Reading", "comprehension", "a"});
  CHECK(e.first_token_of_word.size() == 3);
  CHECK(e.first_token_of_word[0] == 0);
  CHECK(e.word_of_token.size() == e.ids.size());
  CHECK(tok.tokenize_word("Reading") == tok.tokenize_word("reading"));
  for (int id : e.ids) {
    CHECK(id >= kFirstHashedId);
    CHECK(id < 512);
  }
  CHECK(split_words("  two\twords \n") == std::vector<std::string>{"two", "words"});
}
