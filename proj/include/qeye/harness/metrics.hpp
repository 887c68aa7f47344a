#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "qeye/models/model.hpp"

namespace qeye::harness {

/// Mean per-class recall x 100 over the classes 0..n_classes-1 that occur in
/// `golds`. Throws on empty or misaligned input.
double balanced_accuracy(std::span<const int> preds, std::span<const int> golds, int n_classes);

/// One-sided paired bootstrap over trials: the fraction of resamples in which
/// balanced_accuracy(a) <= balanced_accuracy(b).
double paired_bootstrap(std::span<const int> preds_a, std::span<const int> preds_b, std::span<const int> golds,
                        int n_classes, int n_resamples = 10000, std::uint64_t seed = 0);

struct ResultRow {
  std::string model;
  std::string regime_filter;
  std::string evaluation_regime;  // new_item | new_participant | new_both | all
  double balanced_accuracy = 0;
  std::size_t n_trials = 0;
  std::optional<double> p_value_vs_baseline;
};

struct ResultsTable {
  std::vector<ResultRow> rows;

  void write_csv(std::ostream& out) const;
  static ResultsTable read_csv(std::istream& in, const std::string& source);
};

const std::vector<std::string>& evaluation_regimes();

/// Pools predictions per evaluation regime over all folds and scores each pool
/// once; 'all' pools the three regimes. Every fold in 0..n_folds-1 must have
/// contributed predictions.
ResultsTable aggregate_results(std::span<const models::PredictionRecord> records, const std::string& model,
                               const std::string& regime_filter, int n_folds);

/// Attaches bootstrap p-values of `model` rows against `baseline` rows,
/// matching predictions by trial id within each evaluation regime.
void attach_p_values(ResultsTable& table, std::span<const models::PredictionRecord> model_records,
                     std::span<const models::PredictionRecord> baseline_records, int n_resamples,
                     std::uint64_t seed);

}  // namespace qeye::harness
