#include "qeye/harness/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "qeye/csv.hpp"
#include "qeye/harness/metrics.hpp"
#include "qeye/nn/ops.hpp"
#include "qeye/random.hpp"

namespace qeye::harness {

namespace {

using models::Model;
using models::ModelInput;

template <class T>
T typed(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid value for '" + key + "': " + e.what());
  }
}

bool contains(const std::vector<double>& values, double v) {
  return std::find(values.begin(), values.end(), v) != values.end();
}

/// True when `a` should be preferred over `b`.
bool precedes(const std::pair<TrainConfig, double>& a, const std::pair<TrainConfig, double>& b) {
  if (a.second != b.second) return a.second > b.second;
  if (a.first.learning_rate != b.first.learning_rate) return a.first.learning_rate < b.first.learning_rate;
  return a.first.dropout < b.first.dropout;
}

struct AdamState {
  nn::Matrix m, v;
};

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (warmup_ratio < 0 || warmup_ratio > 1) throw ConfigError("warmup_ratio must lie in [0, 1]");
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
  if (max_epochs < 1) throw ConfigError("max_epochs must be positive");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be positive");
  if (l2 && !(regularization_c > 0)) throw ConfigError("regularization C must be positive");
}

nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["dropout"] = c.dropout;
  j["batch_size"] = c.batch_size;
  j["warmup_ratio"] = c.warmup_ratio;
  j["weight_decay"] = c.weight_decay;
  j["max_epochs"] = c.max_epochs;
  j["early_stop_patience"] = c.early_stop_patience;
  j["seed"] = c.seed;
  j["regularization_c"] = c.regularization_c;
  j["l2"] = c.l2;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  static const std::set<std::string> allowed{"learning_rate", "dropout",          "batch_size", "warmup_ratio",
                                             "weight_decay",  "max_epochs",       "early_stop_patience",
                                             "seed",          "regularization_c", "l2"};
  if (!j.is_object()) throw ConfigError("train config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in train config");
  }
  if (j.contains("learning_rate")) c.learning_rate = typed<double>(j, "learning_rate");
  if (j.contains("dropout")) c.dropout = typed<double>(j, "dropout");
  if (j.contains("batch_size")) c.batch_size = typed<int>(j, "batch_size");
  if (j.contains("warmup_ratio")) c.warmup_ratio = typed<double>(j, "warmup_ratio");
  if (j.contains("weight_decay")) c.weight_decay = typed<double>(j, "weight_decay");
  if (j.contains("max_epochs")) c.max_epochs = typed<int>(j, "max_epochs");
  if (j.contains("early_stop_patience")) c.early_stop_patience = typed<int>(j, "early_stop_patience");
  if (j.contains("seed")) c.seed = typed<std::uint64_t>(j, "seed");
  if (j.contains("regularization_c")) c.regularization_c = typed<double>(j, "regularization_c");
  if (j.contains("l2")) c.l2 = typed<bool>(j, "l2");
  c.validate();
  return c;
}

std::vector<TrainConfig> SearchGrid::expand(const TrainConfig& base) const {
  auto or_base = [](const std::vector<double>& v, double b) { return v.empty() ? std::vector<double>{b} : v; };
  const auto lrs = or_base(learning_rates, base.learning_rate);
  const auto drops = or_base(dropouts, base.dropout);
  const auto cs = or_base(regularization_cs, base.regularization_c);
  const std::vector<bool> l2s = l2.empty() ? std::vector<bool>{base.l2} : l2;
  std::vector<TrainConfig> out;
  for (double lr : lrs) {
    for (double d : drops) {
      for (bool penalized : l2s) {
        // C only matters with a penalty.
        for (double c : penalized ? cs : std::vector<double>{cs.front()}) {
          TrainConfig t = base;
          t.learning_rate = lr;
          t.dropout = d;
          t.l2 = penalized;
          t.regularization_c = c;
          out.push_back(t);
        }
      }
    }
  }
  return out;
}

SearchGrid default_grid(models::Architecture architecture) {
  using models::Architecture;
  switch (architecture) {
    case Architecture::Majority:
      return {};
    case Architecture::LogRegGlobal:
      return {{}, {}, {0.1, 5, 10, 50, 100}, {true, false}};
    case Architecture::CnnFixations:
      return {{1e-5, 3e-5, 1e-4, 1e-3}, {0.1, 0.3, 0.5}, {}, {}};
    default:
      return {{1e-5, 3e-5, 1e-4}, {0.1, 0.3, 0.5}, {}, {}};
  }
}

void check_in_grid(const TrainConfig& config, models::Architecture architecture) {
  const SearchGrid grid = default_grid(architecture);
  if (!grid.learning_rates.empty() && !contains(grid.learning_rates, config.learning_rate)) {
    throw ConfigError("learning_rate " + format_double(config.learning_rate) +
                      " is outside the declared grid (set grid_override to allow it)");
  }
  if (!grid.dropouts.empty() && !contains(grid.dropouts, config.dropout)) {
    throw ConfigError("dropout " + format_double(config.dropout) +
                      " is outside the declared grid (set grid_override to allow it)");
  }
  if (!grid.regularization_cs.empty() && config.l2 && !contains(grid.regularization_cs, config.regularization_c)) {
    throw ConfigError("regularization C " + format_double(config.regularization_c) +
                      " is outside the declared grid (set grid_override to allow it)");
  }
  if (config.batch_size != 16 || config.warmup_ratio != 0.1 || config.weight_decay != 0.1 ||
      config.early_stop_patience != 3 || config.max_epochs != 10) {
    throw ConfigError("optimization constants differ from the declared protocol (set grid_override to allow it)");
  }
}

std::vector<std::size_t> balanced_sample(std::span<const Starc> classes, std::uint64_t seed, int epoch) {
  std::array<std::vector<std::size_t>, 4> by_class;
  for (std::size_t i = 0; i < classes.size(); ++i) by_class[static_cast<std::size_t>(classes[i])].push_back(i);
  std::string missing;
  for (std::size_t c = 0; c < 4; ++c) {
    if (by_class[c].empty()) missing += std::string(missing.empty() ? "" : ", ") + to_char(static_cast<Starc>(c));
  }
  if (!missing.empty()) throw std::invalid_argument("balanced sampling needs every answer class; empty: " + missing);
  std::size_t minority = classes.size();
  for (const auto& v : by_class) minority = std::min(minority, v.size());

  Rng rng(mix_seed(seed, 0x65706f6368ULL ^ static_cast<std::uint64_t>(epoch)));
  std::vector<std::size_t> out;
  out.reserve(4 * minority);
  for (auto& members : by_class) {
    std::vector<std::size_t> pool = members;
    // Partial Fisher-Yates: the first `minority` entries form the draw.
    for (std::size_t i = 0; i < minority; ++i) {
      const std::size_t j = i + rng.index(pool.size() - i);
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
  }
  rng.shuffle(out);
  return out;
}

std::vector<double> balanced_weights(std::span<const Starc> classes) {
  std::array<std::size_t, 4> counts{};
  for (Starc s : classes) ++counts[static_cast<std::size_t>(s)];
  const std::size_t minority = *std::min_element(counts.begin(), counts.end());
  if (minority == 0) throw std::invalid_argument("balanced weighting needs every answer class");
  std::vector<double> w;
  w.reserve(classes.size());
  for (Starc s : classes) w.push_back(static_cast<double>(minority) / static_cast<double>(counts[static_cast<std::size_t>(s)]));
  return w;
}

std::vector<int> predict_all(const Model& model, std::span<const ModelInput* const> inputs) {
  std::vector<int> preds;
  preds.reserve(inputs.size());
  for (const ModelInput* in : inputs) preds.push_back(models::predict(model.logits(*in), model.config().task));
  return preds;
}

double validation_score(const Model& model, std::span<const ModelInput* const> validation,
                        const TrainingHooks* hooks) {
  if (validation.empty()) throw std::invalid_argument("validation set is empty");
  if (hooks && hooks->on_validation_read) {
    std::vector<std::string> ids;
    for (const ModelInput* in : validation) ids.push_back(in->trial_id);
    hooks->on_validation_read(ids);
  }
  std::vector<int> golds;
  for (const ModelInput* in : validation) golds.push_back(in->label);
  return balanced_accuracy(predict_all(model, validation), golds, model.config().num_classes());
}

TrainResult train_model(Model& model, const TrainConfig& config, std::span<const ModelInput* const> train,
                        std::span<const ModelInput* const> validation, const TrainingHooks* hooks) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("training set is empty");
  std::vector<Starc> classes;
  classes.reserve(train.size());
  for (const ModelInput* in : train) classes.push_back(in->starc);

  TrainResult result;
  if (model.fits_directly()) {
    model.fit_direct(train, balanced_weights(classes), {config.regularization_c, config.l2});
    EpochLog log{0, std::numeric_limits<double>::quiet_NaN(), validation_score(model, validation, hooks)};
    if (hooks && hooks->on_epoch_end) hooks->on_epoch_end(log, model);
    result.history.push_back(log);
    result.best_validation_score = log.validation_score;
    return result;
  }

  auto params = model.parameters().all();
  std::vector<AdamState> state(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    state[i].m = nn::Matrix::Zero(params[i]->value.rows(), params[i]->value.cols());
    state[i].v = state[i].m;
  }
  const std::size_t epoch_size = balanced_sample(classes, config.seed, 0).size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const long steps_per_epoch = static_cast<long>((epoch_size + batch - 1) / batch);
  const long total_steps = steps_per_epoch * config.max_epochs;
  const long warmup_steps = static_cast<long>(std::ceil(config.warmup_ratio * static_cast<double>(total_steps)));
  auto rate = [&](long step) {
    if (step < warmup_steps) return config.learning_rate * static_cast<double>(step + 1) / warmup_steps;
    const long remaining = total_steps - step;
    return config.learning_rate * static_cast<double>(remaining) / static_cast<double>(std::max(1L, total_steps - warmup_steps));
  };
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  auto best = model.parameters().snapshot();
  result.best_validation_score = -1;
  int since_best = 0;
  long step = 0;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto order = balanced_sample(classes, config.seed, epoch);
    Rng dropout_rng(mix_seed(config.seed, 0x64726f70ULL + static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double inv = 1.0 / static_cast<double>(end - start);
      model.parameters().zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const ModelInput& in = *train[order[k]];
        nn::Graph g;
        g.training = true;
        nn::Var logits = model.forward(g, in, dropout_rng);
        const int target[] = {in.label};
        nn::Var loss = nn::cross_entropy(logits, target);
        const double value = loss.value()(0, 0);
        if (!std::isfinite(value)) {
          throw DivergenceError("non-finite loss " + std::to_string(value) + " at epoch " + std::to_string(epoch) +
                                ", step " + std::to_string(step) + ", trial " + in.trial_id + " (learning rate " +
                                format_double(config.learning_rate) + ")");
        }
        loss_sum += value;
        g.backward(nn::scale(loss, inv));
      }
      const double lr = rate(step);
      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        nn::Parameter& p = *params[i];
        if (p.frozen) continue;
        state[i].m = beta1 * state[i].m + (1 - beta1) * p.grad;
        state[i].v = beta2 * state[i].v + (1 - beta2) * p.grad.cwiseProduct(p.grad);
        nn::Matrix update =
            ((state[i].m.array() / bc1) / ((state[i].v.array() / bc2).sqrt() + eps)).matrix();
        if (!p.no_decay) update += config.weight_decay * p.value;
        p.value -= lr * update;
      }
    }
    EpochLog log{epoch, loss_sum / static_cast<double>(order.size()), validation_score(model, validation, hooks)};
    result.history.push_back(log);
    if (hooks && hooks->on_epoch_end) hooks->on_epoch_end(log, model);
    if (log.validation_score > result.best_validation_score) {
      result.best_validation_score = log.validation_score;
      result.best_epoch = epoch;
      best = model.parameters().snapshot();
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }
  model.parameters().restore(best);
  return result;
}

std::size_t select_best(std::span<const std::pair<TrainConfig, double>> scores) {
  if (scores.empty()) throw std::invalid_argument("hyperparameter grid is empty");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (precedes(scores[i], scores[best])) best = i;
  }
  return best;
}

SearchResult hyperparameter_search(const models::ModelConfig& model_config, std::span<const TrainConfig> grid,
                                   std::span<const ModelInput* const> train,
                                   std::span<const ModelInput* const> validation, std::uint64_t model_seed,
                                   const TrainingHooks* hooks) {
  if (grid.empty()) throw std::invalid_argument("hyperparameter grid is empty");
  SearchResult out;
  for (const TrainConfig& tc : grid) {
    models::ModelConfig mc = model_config;
    mc.dropout = tc.dropout;
    auto model = models::make_model(mc, model_seed);
    TrainResult r = train_model(*model, tc, train, validation, hooks);
    out.scores.emplace_back(tc, r.best_validation_score);
    if (!out.best_model || precedes(out.scores.back(), {out.best, out.best_result.best_validation_score})) {
      out.best = tc;
      out.best_result = std::move(r);
      out.best_model = std::move(model);
    }
  }
  return out;
}

}  // namespace qeye::harness
