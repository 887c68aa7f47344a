#pragma once

// Balanced sampling, AdamW training with warmup/decay and early stopping,
// and validation-driven hyperparameter search.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qeye/models/model.hpp"

namespace qeye::harness {

struct TrainConfig {
  double learning_rate = 1e-4;
  double dropout = 0.1;
  int batch_size = 16;
  double warmup_ratio = 0.1;
  double weight_decay = 0.1;
  int max_epochs = 10;
  int early_stop_patience = 3;
  std::uint64_t seed = 0;
  /// Directly-fitted models (logistic regression) only.
  double regularization_c = 1.0;
  bool l2 = true;

  void validate() const;
};

nlohmann::ordered_json train_config_to_json(const TrainConfig& c);
/// Strict: unknown keys raise ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Hyperparameter grid searched for each architecture by default.
struct SearchGrid {
  std::vector<double> learning_rates;
  std::vector<double> dropouts;
  std::vector<double> regularization_cs;
  std::vector<bool> l2;

  /// Cartesian product applied on top of `base`.
  std::vector<TrainConfig> expand(const TrainConfig& base) const;
};

SearchGrid default_grid(models::Architecture architecture);
/// Throws ConfigError when a config value lies outside the default grid.
void check_in_grid(const TrainConfig& config, models::Architecture architecture);

/// Per-epoch down-sampling to the minority STARC class without replacement,
/// shuffled by (seed, epoch). Returns indices into `classes`.
std::vector<std::size_t> balanced_sample(std::span<const Starc> classes, std::uint64_t seed, int epoch);

/// Sample weights equal to the expected inclusion rate of balanced_sample.
std::vector<double> balanced_weights(std::span<const Starc> classes);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double validation_score = 0;
};

struct TrainResult {
  double best_validation_score = 0;
  int best_epoch = 0;
  std::vector<EpochLog> history;
};

/// Hooks for instrumentation; every callback is optional.
struct TrainingHooks {
  /// Called once per validation pass with the trial ids read.
  std::function<void(std::span<const std::string>)> on_validation_read;
  /// Called after each epoch, before early-stopping bookkeeping.
  std::function<void(const EpochLog&, const models::Model&)> on_epoch_end;
};

std::vector<int> predict_all(const models::Model& model, std::span<const models::ModelInput* const> inputs);
double validation_score(const models::Model& model, std::span<const models::ModelInput* const> validation,
                        const TrainingHooks* hooks = nullptr);

/// Trains in place. On return the model holds the best-validation parameters.
TrainResult train_model(models::Model& model, const TrainConfig& config,
                        std::span<const models::ModelInput* const> train,
                        std::span<const models::ModelInput* const> validation, const TrainingHooks* hooks = nullptr);

struct SearchResult {
  TrainConfig best;
  TrainResult best_result;
  std::unique_ptr<models::Model> best_model;
  /// Validation score per grid entry, in grid order.
  std::vector<std::pair<TrainConfig, double>> scores;
};

/// Index of the winning grid entry: highest score, then lower learning rate,
/// then lower dropout, then grid order.
std::size_t select_best(std::span<const std::pair<TrainConfig, double>> scores);

SearchResult hyperparameter_search(const models::ModelConfig& model_config, std::span<const TrainConfig> grid,
                                   std::span<const models::ModelInput* const> train,
                                   std::span<const models::ModelInput* const> validation, std::uint64_t model_seed,
                                   const TrainingHooks* hooks = nullptr);

}  // namespace qeye::harness
