#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "qeye/models/checkpoint.hpp"

using namespace qeye;
using namespace qeye::models;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) { return (fs::temp_directory_path() / name).string(); }

}  // namespace

TEST_CASE("checkpoint restores bit-identical predictions") {
  Rng rng(1);
  for (Architecture a : all_architectures()) {
    ModelConfig cfg;
    cfg.architecture = a;
    cfg.task = a == Architecture::LogRegGlobal ? Task::Binary : Task::MultipleChoice;
    auto m = make_model(cfg, 42);
    // Move away from the initialization so restoring is not a reseed.
    for (nn::Parameter* p : m->parameters().all()) p->value.array() += 0.01;
    const auto in = qeye::testing::random_input(6, 5, 3, rng);
    const std::string path = temp_path("qeye_ckpt_" + to_string(a) + ".ckpt");
    save_checkpoint(path, *m, 42, feature_schema_hash(), {{"validation_score", 61.5}});
    const auto cp = load_checkpoint(path, feature_schema_hash());
    INFO(to_string(a));
    CHECK(cp.seed == 42);
    CHECK(cp.metadata.at("validation_score") == 61.5);
    CHECK(cp.model->config().architecture == a);
    CHECK(cp.model->logits(in) == m->logits(in));
    fs::remove(path);
  }
}

TEST_CASE("checkpoint refuses a different feature schema") {
  auto m = make_model(ModelConfig{}, 1);
  const std::string path = temp_path("qeye_ckpt_schema.ckpt");
  save_checkpoint(path, *m, 1, 1234);
  CHECK_THROWS_AS(load_checkpoint(path, 999), SchemaMismatchError);
  fs::remove(path);
}

TEST_CASE("corrupt checkpoint is reported") {
  const std::string path = temp_path("qeye_ckpt_corrupt.ckpt");
  {
    std::ofstream out(path, std::ios::binary);
    out << "not cbor at all";
  }
  CHECK_THROWS_WITH(load_checkpoint(path, feature_schema_hash()), Catch::Matchers::ContainsSubstring(path));
  fs::remove(path);
}

TEST_CASE("model config JSON is strict and round-trips") {
  ModelConfig c;
  c.architecture = Architecture::QEyeGatedWords;
  c.injection_layer = 1;
  c.mag_beta = 0.25;
  c.ablation = Ablation::NoLingFeat;
  const auto back = model_config_from_json(model_config_to_json(c));
  CHECK(back.architecture == c.architecture);
  CHECK(back.injection_layer == 1);
  CHECK(back.mag_beta == 0.25);
  CHECK(back.ablation == Ablation::NoLingFeat);
  CHECK(back.encoder == c.encoder);
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"architecure", "text_only"}}), ConfigError);
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"dropout", "high"}}), ConfigError);
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"encoder", {{"depth", 3}}}}), ConfigError);
}

TEST_CASE("backbone presets reset the encoder before overrides") {
  const auto c = model_config_from_json(nlohmann::json{{"backbone", "base-like"}, {"encoder", {{"layers", 3}}}});
  CHECK(c.backbone == BackbonePreset::BaseLike);
  CHECK(c.encoder.width == preset_config(BackbonePreset::BaseLike).width);
  CHECK(c.encoder.layers == 3);
}
