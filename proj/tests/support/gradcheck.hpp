#pragma once

// Central-difference gradient checks against the autograd backward pass.

#include <functional>

#include "qeye/models/model.hpp"
#include "qeye/nn/graph.hpp"
#include "qeye/random.hpp"

namespace qeye::testing {

struct GradCheckResult {
  /// ||analytic - numeric|| / (||analytic|| + ||numeric||) over the sampled coordinates.
  double relative_error = 0;
  std::size_t coordinates = 0;
  double analytic_norm = 0;
};

using LossFn = std::function<nn::Var(nn::Graph&)>;

/// Samples up to `per_parameter` coordinates of every trainable parameter,
/// favouring coordinates with a non-zero analytic gradient.
GradCheckResult check_gradients(nn::ParameterStore& store, const LossFn& loss, Rng& rng, int per_parameter = 8,
                                double step = 1e-5);

/// Evaluation-mode cross-entropy of a model on one input.
GradCheckResult check_model_gradients(models::Model& model, const models::ModelInput& input, Rng& rng,
                                      int per_parameter = 8);

}  // namespace qeye::testing
