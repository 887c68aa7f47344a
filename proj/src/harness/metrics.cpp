#include "qeye/harness/metrics.hpp"

#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "qeye/csv.hpp"
#include "qeye/random.hpp"

namespace qeye::harness {

namespace {

void check_labels(std::span<const int> v, int n_classes, const char* what) {
  for (int x : v) {
    if (x < 0 || x >= n_classes) {
      throw std::invalid_argument(std::string(what) + " label " + std::to_string(x) + " outside 0.." +
                                  std::to_string(n_classes - 1));
    }
  }
}

/// BA from per-class counts of gold occurrences and correct predictions.
double score_counts(const std::vector<long>& support, const std::vector<long>& correct) {
  double sum = 0;
  int present = 0;
  for (std::size_t c = 0; c < support.size(); ++c) {
    if (support[c] == 0) continue;
    sum += static_cast<double>(correct[c]) / static_cast<double>(support[c]);
    ++present;
  }
  return 100.0 * sum / present;
}

}  // namespace

double balanced_accuracy(std::span<const int> preds, std::span<const int> golds, int n_classes) {
  if (golds.empty()) throw std::invalid_argument("balanced accuracy of an empty prediction set");
  if (preds.size() != golds.size()) throw std::invalid_argument("prediction and gold counts differ");
  if (n_classes < 1) throw std::invalid_argument("at least one class is required");
  check_labels(preds, n_classes, "predicted");
  check_labels(golds, n_classes, "gold");
  std::vector<long> support(static_cast<std::size_t>(n_classes), 0), correct(support);
  for (std::size_t i = 0; i < golds.size(); ++i) {
    ++support[static_cast<std::size_t>(golds[i])];
    if (preds[i] == golds[i]) ++correct[static_cast<std::size_t>(golds[i])];
  }
  return score_counts(support, correct);
}

double paired_bootstrap(std::span<const int> preds_a, std::span<const int> preds_b, std::span<const int> golds,
                        int n_classes, int n_resamples, std::uint64_t seed) {
  if (preds_a.size() != golds.size() || preds_b.size() != golds.size()) {
    throw std::invalid_argument("paired bootstrap needs aligned predictions: " + std::to_string(preds_a.size()) +
                                " vs " + std::to_string(preds_b.size()) + " vs " + std::to_string(golds.size()) +
                                " golds");
  }
  if (golds.empty()) throw std::invalid_argument("paired bootstrap of an empty prediction set");
  if (n_resamples < 1) throw std::invalid_argument("paired bootstrap needs at least one resample");
  check_labels(preds_a, n_classes, "predicted");
  check_labels(preds_b, n_classes, "predicted");
  check_labels(golds, n_classes, "gold");
  Rng rng(mix_seed(seed, 0x626f6f74ULL));
  const std::size_t n = golds.size();
  const auto k = static_cast<std::size_t>(n_classes);
  std::vector<long> support(k), correct_a(k), correct_b(k);
  long not_better = 0;
  for (int r = 0; r < n_resamples; ++r) {
    std::fill(support.begin(), support.end(), 0);
    std::fill(correct_a.begin(), correct_a.end(), 0);
    std::fill(correct_b.begin(), correct_b.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = rng.index(n);
      const auto gold = static_cast<std::size_t>(golds[j]);
      ++support[gold];
      correct_a[gold] += preds_a[j] == golds[j];
      correct_b[gold] += preds_b[j] == golds[j];
    }
    if (score_counts(support, correct_a) <= score_counts(support, correct_b)) ++not_better;
  }
  return static_cast<double>(not_better) / n_resamples;
}

const std::vector<std::string>& evaluation_regimes() {
  static const std::vector<std::string> r{"new_item", "new_participant", "new_both", "all"};
  return r;
}

void ResultsTable::write_csv(std::ostream& out) const {
  write_delimited(out, {"model", "regime_filter", "evaluation_regime", "balanced_accuracy", "n_trials",
                        "p_value_vs_baseline"},
                  ',');
  for (const auto& r : rows) {
    write_delimited(out,
                    {r.model, r.regime_filter, r.evaluation_regime, format_double(r.balanced_accuracy),
                     std::to_string(r.n_trials), r.p_value_vs_baseline ? format_double(*r.p_value_vs_baseline) : ""},
                    ',');
  }
}

ResultsTable ResultsTable::read_csv(std::istream& in, const std::string& source) {
  const Table t = Table::read(in, ',', source);
  ResultsTable table;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    ResultRow r;
    r.model = t.at(i, "model");
    r.regime_filter = t.at(i, "regime_filter");
    r.evaluation_regime = t.at(i, "evaluation_regime");
    r.balanced_accuracy = parse_double(t.at(i, "balanced_accuracy"), "balanced_accuracy", t.line_of(i));
    r.n_trials = static_cast<std::size_t>(parse_int(t.at(i, "n_trials"), "n_trials", t.line_of(i)));
    const std::string& p = t.at(i, "p_value_vs_baseline");
    if (!p.empty()) r.p_value_vs_baseline = parse_double(p, "p_value_vs_baseline", t.line_of(i));
    table.rows.push_back(std::move(r));
  }
  return table;
}

ResultsTable aggregate_results(std::span<const models::PredictionRecord> records, const std::string& model,
                               const std::string& regime_filter, int n_folds) {
  std::set<int> folds;
  for (const auto& r : records) folds.insert(r.fold_id);
  for (int f = 0; f < n_folds; ++f) {
    if (!folds.count(f)) {
      std::string present;
      for (int p : folds) present += (present.empty() ? "" : ",") + std::to_string(p);
      throw std::invalid_argument("fold " + std::to_string(f) + " contributed no test predictions (folds present: " +
                                  (present.empty() ? "none" : present) + ")");
    }
  }
  ResultsTable table;
  for (const std::string& regime : evaluation_regimes()) {
    std::vector<int> preds, golds;
    int n_classes = 0;
    for (const auto& r : records) {
      if (regime != "all" && r.evaluation_regime != regime) continue;
      preds.push_back(r.predicted);
      golds.push_back(r.gold);
      n_classes = r.task == models::Task::Binary ? 2 : 4;
    }
    ResultRow row{model, regime_filter, regime, 0.0, preds.size(), std::nullopt};
    row.balanced_accuracy = preds.empty() ? std::numeric_limits<double>::quiet_NaN()
                                          : balanced_accuracy(preds, golds, n_classes);
    table.rows.push_back(std::move(row));
  }
  return table;
}

void attach_p_values(ResultsTable& table, std::span<const models::PredictionRecord> model_records,
                     std::span<const models::PredictionRecord> baseline_records, int n_resamples,
                     std::uint64_t seed) {
  std::map<std::pair<std::string, std::string>, const models::PredictionRecord*> baseline;
  for (const auto& r : baseline_records) baseline[{r.evaluation_regime, r.trial_id}] = &r;
  for (auto& row : table.rows) {
    std::vector<int> a, b, golds;
    int n_classes = 2;
    for (const auto& r : model_records) {
      if (row.evaluation_regime != "all" && r.evaluation_regime != row.evaluation_regime) continue;
      auto it = baseline.find({r.evaluation_regime, r.trial_id});
      if (it == baseline.end()) throw std::invalid_argument("baseline lacks a prediction for trial " + r.trial_id);
      if (it->second->gold != r.gold) throw std::invalid_argument("gold mismatch for trial " + r.trial_id);
      a.push_back(r.predicted);
      b.push_back(it->second->predicted);
      golds.push_back(r.gold);
      n_classes = r.task == models::Task::Binary ? 2 : 4;
    }
    if (!golds.empty()) row.p_value_vs_baseline = paired_bootstrap(a, b, golds, n_classes, n_resamples, seed);
  }
}

}  // namespace qeye::harness
