#pragma once

// Turns trials plus extracted gaze features into model inputs.

#include <map>
#include <span>
#include <string>

#include "qeye/gaze_features.hpp"
#include "qeye/models/model.hpp"
#include "qeye/models/tokenizer.hpp"

namespace qeye::models {

/// Unstandardized features of one trial.
struct TrialFeatures {
  Eigen::MatrixXd word;      // words x WordFeatureVector::kSize
  Eigen::MatrixXd fixation;  // fixations x FixationFeatureVector::kSize
  Eigen::RowVectorXd global; // GlobalFeatureVector::kSize
};

using FeatureStore = std::map<std::string, TrialFeatures>;

/// Linguistic features are computed once per paragraph.
FeatureStore extract_features(const Dataset& dataset, const ProviderBundle& providers);

/// word.qfm, fixation.qfm and global.qfm under `dir`.
void write_feature_store(const std::string& dir, const FeatureStore& store);
FeatureStore read_feature_store(const std::string& dir);

struct FeatureStandardizers {
  Standardizer word;
  Standardizer fixation;
  Standardizer global;
};

/// Fits on the rows of the listed trials only.
FeatureStandardizers fit_standardizers(const FeatureStore& store, std::span<const std::string> train_trial_ids);

ModelInput make_input(const Trial& trial, const TrialFeatures& features, const FeatureStandardizers& standardizers,
                      const HashingTokenizer& tokenizer, Task task);

}  // namespace qeye::models
