// Command-line front end: synthetic data, feature extraction, splits,
// training/evaluation runs and significance testing.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qeye/corpus.hpp"
#include "qeye/csv.hpp"
#include "qeye/gaze_features.hpp"
#include "qeye/harness/experiment.hpp"
#include "qeye/harness/metrics.hpp"
#include "qeye/models/featurize.hpp"
#include "qeye/splits.hpp"
#include "qeye/synthgen.hpp"

namespace fs = std::filesystem;
using namespace qeye;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string regime = "gathering";
  std::string task = "binary";
  std::string config;
};

struct DataOptions {
  std::string dir;
  std::string manifest;
  std::string paragraphs;
  std::string fixations;
  std::string annotations;

  void resolve() {
    auto def = [&](std::string& path, const char* name) {
      if (path.empty()) {
        if (dir.empty()) throw ConfigError(std::string("missing --data or --") + name);
        path = dir + "/" + name;
      }
    };
    def(manifest, "manifest.csv");
    def(paragraphs, "paragraphs.csv");
    def(fixations, "fixations.tsv");
    def(annotations, "annotations.csv");
  }
};

void add_data_options(CLI::App* cmd, DataOptions& d) {
  cmd->add_option("--data", d.dir, "Directory with manifest.csv, paragraphs.csv, fixations.tsv, annotations.csv");
  cmd->add_option("--manifest", d.manifest, "Trial manifest (CSV)");
  cmd->add_option("--paragraphs", d.paragraphs, "Paragraph geometry (CSV)");
  cmd->add_option("--fixations", d.fixations, "Fixation report (TSV)");
  cmd->add_option("--annotations", d.annotations, "Per-word annotation table (CSV)");
}

Dataset load(DataOptions& d) {
  d.resolve();
  return load_dataset(d.manifest, d.paragraphs, d.fixations);
}

harness::ExperimentConfig load_config(const GlobalOptions& g) {
  harness::ExperimentConfig c;
  if (!g.config.empty()) {
    std::ifstream in(g.config);
    if (!in) throw ConfigError("cannot open config " + g.config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(g.config + ": " + e.what());
    }
    c = harness::experiment_config_from_json(j);
  }
  c.model.task = models::parse_task(g.task);
  c.seed = g.seed;
  if (c.model_name.empty()) c.model_name = models::to_string(c.model.architecture);
  c.model.validate();
  return c;
}

std::vector<SplitPlan> load_plans(const std::string& path, Regime regime) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_split_plans(in, path, regime);
}

int folds_in(const std::vector<models::PredictionRecord>& records) {
  int n = 0;
  for (const auto& r : records) n = std::max(n, r.fold_id + 1);
  return n;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reading-comprehension prediction from eye movements"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--regime", g.regime, "Reading regime")
      ->check(CLI::IsMember({"gathering", "hunting"}))
      ->capture_default_str();
  app.add_option("--task", g.task, "Prediction task")->check(CLI::IsMember({"binary", "choice"}))->capture_default_str();
  app.add_option("--config", g.config, "Experiment config (JSON)");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth::SynthSpec spec;
  std::string synth_out;
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_option("--participants", spec.n_participants)->capture_default_str();
  synth_cmd->add_option("--articles", spec.n_articles)->capture_default_str();
  synth_cmd->add_option("--paragraphs-per-article", spec.paragraphs_per_article)->capture_default_str();
  synth_cmd->add_option("--words-per-paragraph", spec.words_per_paragraph)->capture_default_str();
  synth_cmd->add_option("--gaze-link", spec.gaze_link, "Gaze/comprehension link strength")->capture_default_str();
  synth_cmd->add_option("--hunting-fraction", spec.hunting_fraction)->capture_default_str();

  // extract-features
  auto* fx_cmd = app.add_subcommand("extract-features", "Compute word, fixation and global features");
  DataOptions fx_data;
  std::string fx_out;
  bool fx_no_context = false;
  add_data_options(fx_cmd, fx_data);
  fx_cmd->add_option("--out", fx_out, "Feature directory")->required();
  fx_cmd->add_flag("--no-context-model", fx_no_context, "Use context-free frequency as surprisal");

  // make-splits
  auto* split_cmd = app.add_subcommand("make-splits", "Build cross-validation plans");
  std::string split_manifest, split_out;
  int split_folds = 10;
  split_cmd->add_option("--manifest", split_manifest, "Trial manifest (CSV)")->required();
  split_cmd->add_option("--folds", split_folds)->capture_default_str();
  split_cmd->add_option("--out", split_out, "Output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Run the cross-validated experiment");
  DataOptions train_data;
  std::string train_features, train_splits, train_out;
  add_data_options(train_cmd, train_data);
  train_cmd->add_option("--features", train_features, "Feature directory")->required();
  train_cmd->add_option("--splits", train_splits, "Split plan file")->required();
  train_cmd->add_option("--out", train_out, "Run directory")->required();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Aggregate predictions into a results table");
  std::string eval_predictions, eval_model, eval_out;
  int eval_folds = 0;
  eval_cmd->add_option("--predictions", eval_predictions, "Prediction records (NDJSON)")->required();
  eval_cmd->add_option("--model", eval_model, "Model name")->required();
  eval_cmd->add_option("--folds", eval_folds, "Expected fold count (default: inferred)");
  eval_cmd->add_option("--out", eval_out, "Results CSV (default: stdout)");

  // significance
  auto* sig_cmd = app.add_subcommand("significance", "Paired bootstrap against a baseline");
  std::string sig_model, sig_baseline, sig_name, sig_out;
  int sig_resamples = 10000;
  sig_cmd->add_option("--predictions", sig_model, "Model prediction records")->required();
  sig_cmd->add_option("--baseline", sig_baseline, "Baseline prediction records")->required();
  sig_cmd->add_option("--model", sig_name, "Model name")->required();
  sig_cmd->add_option("--resamples", sig_resamples)->capture_default_str();
  sig_cmd->add_option("--out", sig_out, "Results CSV (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    const Regime regime = parse_regime(g.regime);

    if (*synth_cmd) {
      spec.seed = g.seed;
      const auto data = synth::generate_dataset(spec);
      synth::write_dataset(synth_out, data);
      std::cout << "wrote " << data.dataset.trials.size() << " trials to " << synth_out << "\n";
    } else if (*fx_cmd) {
      const Dataset dataset = load(fx_data);
      const auto table = AnnotationTable::load(fx_data.annotations);
      const auto store = models::extract_features(dataset, AnnotationTable::bundle(table, !fx_no_context));
      models::write_feature_store(fx_out, store);
      std::cout << "wrote features for " << store.size() << " trials to " << fx_out << "\n";
    } else if (*split_cmd) {
      const auto trials = load_manifest(split_manifest);
      const auto batches = infer_batches(trials);
      const auto plans = make_dataset_folds(batches, regime, split_folds, g.seed);
      int fatal = 0;
      for (const auto& plan : plans) {
        for (const auto& batch : batches) {
          const SplitReport rep = verify_split(plan, batch);
          for (const auto& e : rep.entries) {
            if (e.severity == Severity::Info) continue;
            std::cerr << "fold " << plan.fold_id << " [" << batch.batch_id << "] " << e.check << ": " << e.message
                      << "\n";
          }
          fatal += static_cast<int>(rep.count(Severity::Fatal));
        }
      }
      fs::create_directories(split_out);
      const std::string path = split_out + "/splits_" + g.regime + ".csv";
      std::ofstream out(path, std::ios::binary);
      write_split_plans(out, plans);
      std::cout << "wrote " << plans.size() << " folds to " << path << "\n";
      if (fatal) return 2;
    } else if (*train_cmd) {
      const harness::ExperimentConfig config = load_config(g);
      const Dataset dataset = load(train_data);
      const auto store = models::read_feature_store(train_features);
      const auto plans = load_plans(train_splits, regime);
      const auto outcome = harness::run_experiment(config, dataset, store, plans, train_out);
      std::cout << "folds trained " << outcome.folds_trained << ", reused " << outcome.folds_reused << "\n";
      if (!outcome.complete) {
        for (const auto& f : outcome.failures) std::cerr << f << "\n";
        return 3;
      }
      outcome.table.write_csv(std::cout);
    } else if (*eval_cmd) {
      const auto records = harness::read_predictions(eval_predictions);
      const int folds = eval_folds > 0 ? eval_folds : folds_in(records);
      const auto table = harness::aggregate_results(records, eval_model, g.regime, folds);
      if (eval_out.empty()) {
        table.write_csv(std::cout);
      } else {
        std::ofstream out(eval_out, std::ios::binary);
        table.write_csv(out);
      }
    } else if (*sig_cmd) {
      const auto records = harness::read_predictions(sig_model);
      const auto baseline = harness::read_predictions(sig_baseline);
      auto table = harness::aggregate_results(records, sig_name, g.regime, folds_in(records));
      harness::attach_p_values(table, records, baseline, sig_resamples, g.seed);
      if (sig_out.empty()) {
        table.write_csv(std::cout);
      } else {
        std::ofstream out(sig_out, std::ios::binary);
        table.write_csv(out);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
