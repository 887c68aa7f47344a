// Acceptance gate: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 1 5 9      run a subset
//
// Exit status is non-zero when any selected criterion fails.

#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracle_word_features.hpp"
#include "qeye/harness/experiment.hpp"
#include "qeye/harness/metrics.hpp"
#include "qeye/models/architectures.hpp"
#include "qeye/splits.hpp"
#include "qeye/synthgen.hpp"

using namespace qeye;
using models::Ablation;
using models::Architecture;
using models::ModelConfig;
using models::ModelInput;
using models::Task;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kOracleSeconds = 60;
constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 600;
constexpr double kGatedTolerance = 1e-6;
constexpr double kInvarianceTolerance = 1e-5;
constexpr double kGazeMargin = 5.0;
constexpr double kTextMargin = 3.0;
constexpr double kNullGazeMargin = 1.5;
constexpr double kSeparationSeconds = 7200;
constexpr double kAblationTolerance = 1e-6;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << std::fixed << v;
  return s.str();
}

std::string scientific(double v) {
  std::ostringstream s;
  s.precision(2);
  s << std::scientific << v;
  return s.str();
}

double max_delta(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

ModelConfig config_for(Architecture a, Task t = Task::Binary) {
  ModelConfig c;
  c.architecture = a;
  c.task = t;
  return c;
}

/// Appends `extra` invalid garbage rows to the word or fixation sequence.
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

/// Shuffles the gaze sequence rows together with their positions and masks.
ModelInput permuted(const ModelInput& in, Rng& rng, bool fixations) {
  ModelInput out = in;
  const Eigen::MatrixXd& m = fixations ? in.fixation_features : in.word_features;
  const auto& pos = fixations ? in.fixation_positions : in.word_positions;
  const auto& valid = fixations ? in.fixation_valid : in.word_valid;
  std::vector<std::size_t> order(pos.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  Eigen::MatrixXd& om = fixations ? out.fixation_features : out.word_features;
  auto& opos = fixations ? out.fixation_positions : out.word_positions;
  auto& ovalid = fixations ? out.fixation_valid : out.word_valid;
  for (std::size_t i = 0; i < order.size(); ++i) {
    om.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(order[i]));
    opos[i] = pos[order[i]];
    ovalid[i] = valid[order[i]];
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// 1 --------------------------------------------------------------------------
Outcome feature_oracle() {
  Stopwatch clock;
  Rng rng(1001);
  int mismatches = 0;
  constexpr int kCases = 1000;
  for (int k = 0; k < kCases; ++k) {
    const auto p = testing::make_paragraph(1 + static_cast<int>(rng.index(12)), 5);
    const Scanpath sp = testing::random_scanpath(*p, 30, rng);
    const auto ling = testing::default_ling(*p);
    const auto got = word_level_features(sp, *p, ling);
    const auto want = testing::oracle_word_features(sp, *p, ling);
    bool same = got.size() == want.size();
    for (std::size_t w = 0; same && w < got.size(); ++w) {
      const auto a = got[w].flat(), b = want[w].flat();
      same = std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
    }
    if (!same) ++mismatches;
  }
  const double secs = clock.seconds();
  return {mismatches == 0 && secs < kOracleSeconds,
          std::to_string(kCases - mismatches) + "/" + std::to_string(kCases) + " bit-identical, " + fmt(secs, 1) +
              " s (limit " + fmt(kOracleSeconds, 0) + " s)"};
}

// 2 --------------------------------------------------------------------------
Outcome metric_exactness() {
  const std::vector<int> golds2{1, 1, 1, 0, 0, 1, 1, 1, 0, 1};
  const std::vector<int> ones(golds2.size(), 1);
  const std::vector<int> golds4{0, 0, 0, 0, 1, 1, 2, 3, 3, 0};
  const std::vector<int> zeros(golds4.size(), 0);
  const std::vector<int> golds{1, 1, 0, 0}, preds{1, 0, 0, 0};
  const double b = harness::balanced_accuracy(ones, golds2, 2);
  const double m = harness::balanced_accuracy(zeros, golds4, 4);
  const double h = harness::balanced_accuracy(preds, golds, 2);
  return {b == 50.0 && m == 25.0 && h == 75.0,
          "binary majority " + fmt(b, 6) + ", 4-way majority " + fmt(m, 6) + ", hand case " + fmt(h, 6)};
}

// 3 --------------------------------------------------------------------------
Outcome split_protocol() {
  synth::SynthSpec spec;
  spec.n_participants = 60;
  spec.n_articles = 10;
  spec.seed = 3;
  const auto data = synth::generate_dataset(spec);
  const auto batches = infer_batches(data.dataset.trials);
  if (batches.size() != 1) return {false, "expected one batch, got " + std::to_string(batches.size())};
  const BatchSpec& batch = batches.front();
  const auto plans = make_folds(batch, Regime::Gathering, 10, 3);
  const std::map<Portion, double> target{{Portion::Train, 0.64},
                                         {Portion::Val, 0.17},
                                         {Portion::TestNewItem, 0.09},
                                         {Portion::TestNewParticipant, 0.09},
                                         {Portion::TestBoth, 0.01}};
  int failed = 0;
  double worst = 0;
  std::map<std::string, int> participant_held, article_held;
  for (const auto& plan : plans) {
    const auto rep = verify_split(plan, batch);
    if (!rep.ok() || rep.count(Severity::Warning) > 0) ++failed;
    for (const auto& [portion, share] : target) {
      const auto it = rep.proportions.find(portion);
      worst = std::max(worst, std::abs((it == rep.proportions.end() ? 0.0 : it->second) - share));
    }
    std::set<std::string> ps, as;
    for (const auto& t : batch.trials) {
      const Portion p = plan.assignment.at(t.trial_id);
      if (p == Portion::TestNewParticipant || p == Portion::TestBoth) ps.insert(t.participant_id);
      if (p == Portion::TestNewItem || p == Portion::TestBoth) as.insert(t.article_id);
    }
    for (const auto& p : ps) ++participant_held[p];
    for (const auto& a : as) ++article_held[a];
  }
  bool once = participant_held.size() == 60 && article_held.size() == 10;
  for (const auto& [p, n] : participant_held) once = once && n == 1;
  for (const auto& [a, n] : article_held) once = once && n == 1;
  return {plans.size() == 10 && failed == 0 && worst <= 0.02 && once,
          std::to_string(plans.size()) + " folds, " + std::to_string(failed) + " with violations, max proportion gap " +
              fmt(100 * worst, 2) + " points, each participant/article held out once: " + (once ? "yes" : "no")};
}

// 4 --------------------------------------------------------------------------
Outcome gradient_checks() {
  Stopwatch clock;
  const std::vector<Architecture> archs{Architecture::QEyeConcatWords,  Architecture::QEyeConcatFixations,
                                        Architecture::QEyeGatedWords,   Architecture::QEyePostFusionFixations,
                                        Architecture::TextOnly,         Architecture::CnnFixations};
  double worst = 0;
  std::string worst_name;
  int checks = 0;
  for (Architecture a : archs) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      for (Task t : {Task::Binary, Task::MultipleChoice}) {
        Rng rng(seed * 7919 + static_cast<std::uint64_t>(a));
        auto cfg = config_for(a, t);
        cfg.mag_beta = 0.5;  // well inside the smooth region of the displacement cap
        auto model = models::make_model(cfg, seed);
        auto in = testing::random_input(6, 7, 3, rng);
        in.label = static_cast<int>(rng.index(static_cast<std::uint64_t>(cfg.num_classes())));
        const auto r = testing::check_model_gradients(*model, in, rng, 6);
        ++checks;
        if (!(r.relative_error <= worst) || r.analytic_norm == 0) {
          worst = r.analytic_norm == 0 ? 1.0 : r.relative_error;
          worst_name = models::to_string(a) + "/" + models::to_string(t) + "/seed " + std::to_string(seed);
        }
      }
    }
  }
  const double secs = clock.seconds();
  return {worst < kGradTolerance && secs < kGradSeconds,
          std::to_string(checks) + " checks over 6 architectures x 5 seeds x 2 tasks, max relative error " +
              scientific(worst) + " (" + worst_name + ", limit " + scientific(kGradTolerance) + "), " +
              fmt(secs, 1) + " s (limit " + fmt(kGradSeconds, 0) + " s)"};
}

// 5 --------------------------------------------------------------------------
Outcome gated_limits() {
  Rng rng(5005);
  double worst_beta0 = 0;
  for (int k : {0, 1}) {
    auto cfg = config_for(Architecture::QEyeGatedWords);
    cfg.mag_beta = 0;
    cfg.injection_layer = k;
    models::GatedModel m(cfg, rng);
    for (int i = 0; i < 25; ++i) {
      const auto in = testing::random_input(4 + static_cast<int>(rng.index(10)), 5, 3, rng);
      const auto with = m.logits(in);
      m.set_displacement_enabled(false);
      worst_beta0 = std::max(worst_beta0, max_delta(with, m.logits(in)));
      m.set_displacement_enabled(true);
    }
  }
  double max_alpha = 0;
  std::size_t tokens = 0;
  const double betas[] = {1e-3, 0.1, 1.0, 5.0, 50.0};
  for (int i = 0; i < 100; ++i) {
    auto cfg = config_for(Architecture::QEyeGatedWords);
    cfg.mag_beta = betas[i % 5];
    cfg.injection_layer = i % 2;
    models::GatedModel m(cfg, rng);
    auto in = testing::random_input(3 + static_cast<int>(rng.index(12)), 4, 3, rng);
    in.word_features *= std::pow(10.0, rng.uniform(-2, 2));
    for (const auto& t : m.trace(in)) {
      max_alpha = std::max(max_alpha, t.alpha);
      ++tokens;
    }
  }
  return {worst_beta0 < kGatedTolerance && max_alpha <= 1.0,
          "beta=0 max logit delta " + scientific(worst_beta0) + " (limit " + scientific(kGatedTolerance) +
              "), max alpha " + fmt(max_alpha, 6) + " over " + std::to_string(tokens) + " tokens of 100 forwards"};
}

// 6 --------------------------------------------------------------------------
Outcome invariances() {
  Rng rng(6006);
  constexpr int kInstances = 50;
  double worst_mask = 0, worst_perm = 0;
  for (Architecture a : {Architecture::QEyeConcatWords, Architecture::QEyeConcatFixations}) {
    const bool fixations = a == Architecture::QEyeConcatFixations;
    auto model = models::make_model(config_for(a), 66);
    for (int i = 0; i < kInstances; ++i) {
      const auto in = testing::random_input(3 + static_cast<int>(rng.index(10)), 3 + static_cast<int>(rng.index(12)),
                                            3, rng);
      const auto base = model->logits(in);
      worst_mask = std::max(worst_mask, max_delta(base, model->logits(with_padding(in, 1 + static_cast<int>(rng.index(8)),
                                                                                    rng, fixations))));
      worst_perm = std::max(worst_perm, max_delta(base, model->logits(permuted(in, rng, fixations))));
    }
  }
  auto post = models::make_model(config_for(Architecture::QEyePostFusionFixations), 67);
  double worst_post = 0;
  for (int i = 0; i < kInstances; ++i) {
    const auto in = testing::random_input(3 + static_cast<int>(rng.index(10)), 2 + static_cast<int>(rng.index(12)), 3,
                                          rng);
    worst_post = std::max(worst_post, max_delta(post->logits(in), post->logits(with_padding(
                                                                        in, 1 + static_cast<int>(rng.index(8)), rng, true))));
  }
  return {worst_mask < kInvarianceTolerance && worst_perm < kInvarianceTolerance && worst_post < kInvarianceTolerance,
          "concat padding " + scientific(worst_mask) + ", concat permutation " + scientific(worst_perm) +
              ", post-fusion padding " + scientific(worst_post) + " (limit " + scientific(kInvarianceTolerance) +
              ", " + std::to_string(kInstances) + " instances each)"};
}

// 7 --------------------------------------------------------------------------
harness::ExperimentConfig separation_config(const std::string& name, Architecture a) {
  harness::ExperimentConfig c;
  c.model_name = name;
  c.model.architecture = a;
  c.seed = 1;
  if (a != Architecture::Majority) {
    // Reduced grid for a desk-scale run: one larger step size, longer schedule.
    c.grid = harness::SearchGrid{{3e-3}, {0.1}, {}, {}};
    c.train.max_epochs = 20;
    c.train.early_stop_patience = 20;
    c.grid_override = true;
  }
  return c;
}

std::map<std::string, double> run_separation(double gaze_link, const std::vector<std::pair<std::string, Architecture>>& models,
                                             const std::string& dir) {
  synth::SynthSpec spec;
  spec.gaze_link = gaze_link;
  const auto data = synth::generate_dataset(spec);
  const auto features = models::extract_features(data.dataset, AnnotationTable::bundle(data.annotations));
  const auto plans = make_dataset_folds(infer_batches(data.dataset.trials), Regime::Gathering, 10, 1);
  std::map<std::string, double> pooled;
  for (const auto& [name, arch] : models) {
    Stopwatch clock;
    const auto out = harness::run_experiment(separation_config(name, arch), data.dataset, features, plans, dir);
    if (!out.complete) throw std::runtime_error(name + " failed: " + out.failures.front());
    for (const auto& row : out.table.rows) {
      if (row.evaluation_regime == "all") pooled[name] = row.balanced_accuracy;
    }
    std::cerr << "  [gaze link " << gaze_link << "] " << name << " pooled BA " << fmt(pooled[name], 2) << " ("
              << fmt(clock.seconds(), 0) << " s)\n";
  }
  return pooled;
}

Outcome planted_signal() {
  Stopwatch clock;
  const std::string root = (fs::temp_directory_path() / "qeye_acceptance_separation").string();
  fs::remove_all(root);
  const auto linked = run_separation(synth::SynthSpec{}.gaze_link,
                                     {{"majority", Architecture::Majority},
                                      {"text_only", Architecture::TextOnly},
                                      {"concat", Architecture::QEyeConcatWords}},
                                     root + "/linked");
  const auto null = run_separation(0.0, {{"text_only", Architecture::TextOnly}, {"concat", Architecture::QEyeConcatWords}},
                                   root + "/null");
  fs::remove_all(root);
  const double secs = clock.seconds();
  const double gaze_gain = linked.at("concat") - linked.at("text_only");
  const double text_gain = linked.at("text_only") - linked.at("majority");
  const double null_gain = null.at("concat") - null.at("text_only");
  return {gaze_gain >= kGazeMargin && text_gain >= kTextMargin && null_gain <= kNullGazeMargin &&
              secs <= kSeparationSeconds,
          "concat - text " + fmt(gaze_gain, 2) + " (>= " + fmt(kGazeMargin, 1) + "), text - majority " +
              fmt(text_gain, 2) + " (>= " + fmt(kTextMargin, 1) + "), without gaze link concat - text " +
              fmt(null_gain, 2) + " (<= " + fmt(kNullGazeMargin, 1) + "), " + fmt(secs / 60, 1) + " min (limit " +
              fmt(kSeparationSeconds / 60, 0) + " min)"};
}

// 8 --------------------------------------------------------------------------
Outcome bootstrap_sanity() {
  constexpr int kTrials = 1000;
  std::vector<int> golds(kTrials);
  for (int i = 0; i < kTrials; ++i) golds[static_cast<std::size_t>(i)] = i % 2;
  std::vector<int> wrong(kTrials);
  for (int i = 0; i < kTrials; ++i) wrong[static_cast<std::size_t>(i)] = 1 - golds[static_cast<std::size_t>(i)];
  Rng rng(8008);
  std::vector<int> noisy(kTrials);
  for (auto& p : noisy) p = static_cast<int>(rng.index(2));
  const double identical = harness::paired_bootstrap(noisy, noisy, golds, 2, 10000, 1);
  const double extreme = harness::paired_bootstrap(golds, wrong, golds, 2, 10000, 2);
  // Equal accuracy, disjoint errors: a misses trials [0, 200), b misses [200, 400).
  std::vector<int> a = golds, b = golds;
  for (int i = 0; i < 200; ++i) a[static_cast<std::size_t>(i)] = 1 - golds[static_cast<std::size_t>(i)];
  for (int i = 200; i < 400; ++i) b[static_cast<std::size_t>(i)] = 1 - golds[static_cast<std::size_t>(i)];
  const double balanced = harness::paired_bootstrap(a, b, golds, 2, 100000, 3);
  return {identical == 1.0 && extreme < 0.001 && balanced >= 0.4 && balanced <= 0.6,
          "identical p=" + fmt(identical, 4) + ", all-correct vs all-wrong p=" + fmt(extreme, 4) +
              ", disjoint equal-accuracy p=" + fmt(balanced, 4) + " (1e5 resamples)"};
}

// 9 --------------------------------------------------------------------------
Outcome determinism() {
  const auto data = testing::small_synth(12, 10, 909);
  const auto features = models::extract_features(data.dataset, AnnotationTable::bundle(data.annotations));
  const auto plans = make_dataset_folds(infer_batches(data.dataset.trials), Regime::Gathering, 10, 9);
  harness::ExperimentConfig c;
  c.model_name = "concat";
  c.model.architecture = Architecture::QEyeConcatWords;
  c.seed = 9;
  c.grid = harness::SearchGrid{{1e-3}, {0.1}, {}, {}};
  c.train.max_epochs = 2;
  c.grid_override = true;
  const fs::path root = fs::temp_directory_path() / "qeye_acceptance_determinism";
  fs::remove_all(root);
  const auto a = harness::run_experiment(c, data.dataset, features, plans, (root / "a").string());
  const auto b = harness::run_experiment(c, data.dataset, features, plans, (root / "b").string());
  bool same = a.complete && b.complete && a.predictions.size() == b.predictions.size();
  for (const char* f : {"predictions.ndjson", "results.csv"}) {
    same = same && slurp(root / "a" / "concat" / f) == slurp(root / "b" / "concat" / f);
  }
  const std::size_t n = a.predictions.size();
  fs::remove_all(root);
  return {same, std::to_string(n) + " prediction records over 10 folds; predictions and results files " +
                    (same ? "byte-identical" : "differ")};
}

// 10 -------------------------------------------------------------------------
Outcome ablation_contract() {
  Rng rng(1010);
  double worst = 0;
  int instances = 0;
  for (Architecture a : {Architecture::QEyeConcatWords, Architecture::QEyeGatedWords}) {
    auto cfg = config_for(a);
    cfg.ablation = Ablation::NoEyes;
    cfg.mag_beta = 0.5;
    auto model = models::make_model(cfg, 1010);
    for (int i = 0; i < 50; ++i) {
      const auto in = testing::random_input(3 + static_cast<int>(rng.index(10)), 6, 3, rng);
      auto mutated = in;
      for (Eigen::Index r = 0; r < mutated.word_features.rows(); ++r) {
        for (std::size_t c = 0; c < kWordMeasureCount; ++c) mutated.word_features(r, static_cast<Eigen::Index>(c)) = rng.normal(0, 100);
      }
      mutated.fixation_features.setConstant(rng.normal(0, 100));
      mutated.global_features.setConstant(rng.normal(0, 100));
      worst = std::max(worst, max_delta(model->logits(in), model->logits(mutated)));
      ++instances;
    }
  }
  return {worst < kAblationTolerance, "max logit delta " + scientific(worst) + " over " + std::to_string(instances) +
                                          " mutated instances (limit " + scientific(kAblationTolerance) + ")"};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "feature-oracle equivalence", feature_oracle},
      {2, "metric exactness", metric_exactness},
      {3, "split protocol", split_protocol},
      {4, "gradient correctness", gradient_checks},
      {5, "gated-model limits", gated_limits},
      {6, "masking and permutation invariance", invariances},
      {7, "planted-signal separation", planted_signal},
      {8, "bootstrap sanity", bootstrap_sanity},
      {9, "determinism", determinism},
      {10, "no-eyes ablation contract", ablation_contract},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
