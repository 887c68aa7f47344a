#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qeye/harness/metrics.hpp"
#include "qeye/harness/training.hpp"
#include "qeye/models/featurize.hpp"
#include "qeye/splits.hpp"

namespace qeye::harness {

struct ExperimentConfig {
  /// Label used in result tables and as the output sub-directory.
  std::string model_name;
  models::ModelConfig model;
  TrainConfig train;
  /// Replaces the architecture's default grid when set.
  std::optional<SearchGrid> grid;
  /// Allows grid values and optimization constants outside the declared protocol.
  bool grid_override = false;
  std::uint64_t seed = 0;

  /// Effective grid after validation against the protocol.
  std::vector<TrainConfig> search_grid() const;
};

/// Strict document: {"model_name", "model": {...}, "train": {...}, "grid": {...}, "grid_override"}.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
nlohmann::ordered_json experiment_config_to_json(const ExperimentConfig& c);

/// Instrumentation for the leakage guards; default implementations do nothing.
class ExperimentObserver {
 public:
  virtual ~ExperimentObserver() = default;
  virtual void on_standardizer_fit(int /*fold*/, std::span<const std::string> /*trial_ids*/) {}
  virtual void on_validation_read(int /*fold*/, std::span<const std::string> /*trial_ids*/) {}
  virtual void on_test_prediction(int /*fold*/, const std::string& /*trial_id*/) {}
  virtual void on_fold_model(int /*fold*/, bool /*reused_checkpoint*/) {}
};

struct ExperimentOutcome {
  std::vector<models::PredictionRecord> predictions;
  ResultsTable table;
  bool complete = true;
  std::vector<std::string> failures;
  int folds_trained = 0;
  int folds_reused = 0;
};

/// Evaluation-regime name of a test portion (new_item, new_participant, new_both).
std::string evaluation_regime_name(Portion p);

/// For every plan: fit standardizers on train rows, search the grid on
/// validation, predict test trials once. Writes
/// <output_dir>/<model_name>/{fold_<k>.ckpt, predictions.ndjson, results.csv}
/// and an INCOMPLETE marker listing failed folds. Completed folds are reused
/// from their checkpoints on reruns.
ExperimentOutcome run_experiment(const ExperimentConfig& config, const Dataset& dataset,
                                 const models::FeatureStore& features, std::span<const SplitPlan> plans,
                                 const std::string& output_dir, ExperimentObserver* observer = nullptr);

void write_predictions(const std::string& path, std::span<const models::PredictionRecord> records);
std::vector<models::PredictionRecord> read_predictions(const std::string& path);

}  // namespace qeye::harness
