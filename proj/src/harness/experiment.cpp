#include "qeye/harness/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "qeye/csv.hpp"
#include "qeye/models/checkpoint.hpp"
#include "qeye/nn/ops.hpp"
#include "qeye/random.hpp"

namespace qeye::harness {

namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Identifies a fold's training job: configuration, seed and the exact
/// train/validation assignment.
std::string fold_key(const ExperimentConfig& config, const SplitPlan& plan) {
  std::uint64_t h = fnv1a(experiment_config_to_json(config).dump());
  h = fnv1a(std::to_string(plan.fold_id) + "|" + to_string(plan.regime_filter), h);
  for (const auto& [id, portion] : plan.assignment) h = fnv1a(id + "=" + to_string(portion) + ";", h);
  return hex(h);
}

template <class T>
std::vector<T> json_list(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<std::vector<T>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid value for '" + key + "': " + e.what());
  }
}

}  // namespace

std::vector<TrainConfig> ExperimentConfig::search_grid() const {
  const SearchGrid g = grid ? *grid : default_grid(model.architecture);
  std::vector<TrainConfig> entries = g.expand(train);
  if (!grid_override) {
    for (const auto& e : entries) check_in_grid(e, model.architecture);
  }
  return entries;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig c) {
  static const std::set<std::string> allowed{"model_name", "model", "train", "grid", "grid_override", "seed"};
  if (!j.is_object()) throw ConfigError("config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in config");
  }
  try {
    if (j.contains("model_name")) c.model_name = j.at("model_name").get<std::string>();
    if (j.contains("grid_override")) c.grid_override = j.at("grid_override").get<bool>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config value: ") + e.what());
  }
  if (j.contains("model")) c.model = models::model_config_from_json(j.at("model"), c.model);
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    static const std::set<std::string> grid_keys{"learning_rates", "dropouts", "regularization_cs", "l2"};
    if (!g.is_object()) throw ConfigError("grid must be an object");
    for (const auto& [key, value] : g.items()) {
      if (!grid_keys.count(key)) throw ConfigError("unknown key '" + key + "' in grid");
    }
    SearchGrid grid;
    if (g.contains("learning_rates")) grid.learning_rates = json_list<double>(g, "learning_rates");
    if (g.contains("dropouts")) grid.dropouts = json_list<double>(g, "dropouts");
    if (g.contains("regularization_cs")) grid.regularization_cs = json_list<double>(g, "regularization_cs");
    if (g.contains("l2")) grid.l2 = json_list<bool>(g, "l2");
    c.grid = grid;
  }
  if (c.model_name.empty()) c.model_name = models::to_string(c.model.architecture);
  return c;
}

nlohmann::ordered_json experiment_config_to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["model_name"] = c.model_name;
  j["model"] = models::model_config_to_json(c.model);
  j["train"] = train_config_to_json(c.train);
  if (c.grid) {
    j["grid"] = {{"learning_rates", c.grid->learning_rates},
                 {"dropouts", c.grid->dropouts},
                 {"regularization_cs", c.grid->regularization_cs},
                 {"l2", c.grid->l2}};
  }
  j["grid_override"] = c.grid_override;
  j["seed"] = c.seed;
  return j;
}

std::string evaluation_regime_name(Portion p) {
  switch (p) {
    case Portion::TestNewItem:
      return "new_item";
    case Portion::TestNewParticipant:
      return "new_participant";
    case Portion::TestBoth:
      return "new_both";
    default:
      throw std::invalid_argument("portion " + to_string(p) + " is not a test regime");
  }
}

void write_predictions(const std::string& path, std::span<const models::PredictionRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& r : records) out << models::to_json_line(r) << '\n';
}

std::vector<models::PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<models::PredictionRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(models::prediction_from_json_line(line));
    } catch (const std::exception& e) {
      throw ParseError(path + ": line " + std::to_string(n) + ": " + e.what(), n);
    }
  }
  return out;
}

ExperimentOutcome run_experiment(const ExperimentConfig& config, const Dataset& dataset,
                                 const models::FeatureStore& features, std::span<const SplitPlan> plans,
                                 const std::string& output_dir, ExperimentObserver* observer) {
  if (plans.empty()) throw std::invalid_argument("no split plans given");
  config.model.validate();
  const std::vector<TrainConfig> grid = config.search_grid();
  const std::string dir = output_dir + "/" + config.model_name;
  fs::create_directories(dir);
  const models::HashingTokenizer tokenizer(config.model.encoder.vocab_size);
  const std::uint64_t schema = models::feature_schema_hash();

  std::map<std::string, const Trial*> trials;
  for (const Trial& t : dataset.trials) trials.emplace(t.trial_id, &t);
  const Regime regime = plans.front().regime_filter;

  ExperimentOutcome outcome;
  for (const SplitPlan& plan : plans) {
    const int fold = plan.fold_id;
    try {
      if (plan.regime_filter != regime) throw std::invalid_argument("plans mix reading regimes");
      for (const auto& [id, portion] : plan.assignment) {
        auto it = trials.find(id);
        if (it == trials.end()) throw ValidationError("split plan names unknown trial " + id);
        if (it->second->regime != regime) {
          throw ValidationError("trial " + id + " belongs to the " + to_string(it->second->regime) + " regime");
        }
      }
      const std::vector<std::string> train_ids = plan.trials_in(Portion::Train);
      const std::vector<std::string> val_ids = plan.trials_in(Portion::Val);
      if (observer) observer->on_standardizer_fit(fold, train_ids);
      const models::FeatureStandardizers standardizers = models::fit_standardizers(features, train_ids);

      std::map<std::string, models::ModelInput> inputs;
      for (const auto& [id, portion] : plan.assignment) {
        auto f = features.find(id);
        if (f == features.end()) throw ValidationError("no features for trial " + id);
        inputs.emplace(id, models::make_input(*trials.at(id), f->second, standardizers, tokenizer, config.model.task));
      }
      auto pointers = [&](const std::vector<std::string>& ids) {
        std::vector<const models::ModelInput*> out;
        for (const auto& id : ids) out.push_back(&inputs.at(id));
        return out;
      };
      const auto train = pointers(train_ids);
      const auto val = pointers(val_ids);

      TrainingHooks hooks;
      if (observer) {
        hooks.on_validation_read = [observer, fold](std::span<const std::string> ids) {
          observer->on_validation_read(fold, ids);
        };
      }

      const std::string ckpt = dir + "/fold_" + std::to_string(fold) + ".ckpt";
      const std::string key = fold_key(config, plan);
      std::unique_ptr<models::Model> model;
      if (fs::exists(ckpt)) {
        try {
          models::Checkpoint cp = models::load_checkpoint(ckpt, schema);
          if (cp.metadata.value("fold_key", "") == key) model = std::move(cp.model);
        } catch (const models::SchemaMismatchError&) {
          model.reset();
        }
      }
      const bool reused = static_cast<bool>(model);
      if (!model) {
        SearchResult search = hyperparameter_search(config.model, grid, train, val,
                                                    mix_seed(config.seed, 0x666f6c64ULL + static_cast<std::uint64_t>(fold)),
                                                    &hooks);
        model = std::move(search.best_model);
        nlohmann::json meta;
        meta["fold_key"] = key;
        meta["train_config"] = train_config_to_json(search.best);
        meta["validation_score"] = search.best_result.best_validation_score;
        meta["best_epoch"] = search.best_result.best_epoch;
        models::save_checkpoint(ckpt, *model, config.seed, schema, meta);
        ++outcome.folds_trained;
      } else {
        ++outcome.folds_reused;
      }
      if (observer) observer->on_fold_model(fold, reused);

      for (const auto& [id, portion] : plan.assignment) {
        if (!is_test(portion)) continue;
        const models::ModelInput& in = inputs.at(id);
        if (observer) observer->on_test_prediction(fold, id);
        models::PredictionRecord r;
        r.trial_id = id;
        r.fold_id = fold;
        r.evaluation_regime = evaluation_regime_name(portion);
        r.task = config.model.task;
        const Eigen::RowVectorXd logits = model->logits(in);
        r.predicted = models::predict(logits, config.model.task);
        const Eigen::RowVectorXd probs = nn::softmax(logits);
        r.class_probabilities.assign(probs.data(), probs.data() + probs.size());
        r.gold = in.label;
        outcome.predictions.push_back(std::move(r));
      }
    } catch (const std::exception& e) {
      outcome.complete = false;
      outcome.failures.push_back("fold " + std::to_string(fold) + ": " + e.what());
    }
  }

  write_predictions(dir + "/predictions.ndjson", outcome.predictions);
  const std::string marker = dir + "/INCOMPLETE";
  if (outcome.complete) {
    std::vector<int> folds;
    for (const auto& p : plans) folds.push_back(p.fold_id);
    outcome.table = aggregate_results(outcome.predictions, config.model_name, to_string(regime),
                                      static_cast<int>(plans.size()));
    std::ofstream out(dir + "/results.csv", std::ios::binary);
    outcome.table.write_csv(out);
    fs::remove(marker);
  } else {
    std::ofstream out(marker);
    for (const auto& f : outcome.failures) out << f << '\n';
  }
  return outcome;
}

}  // namespace qeye::harness
