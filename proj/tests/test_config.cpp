#include <catch2/catch.hpp>

#include "sfm/config.hpp"

using namespace sfm;

TEST_CASE("defaults carry the reference hyperparameter set") {
  const ExperimentConfig cfg;
  REQUIRE(cfg.gamma == 0.99);
  REQUIRE(cfg.lr_actor == 5e-4);
  REQUIRE(cfg.lr_sf == 5e-4);
  REQUIRE(cfg.lr_features == 5e-4);
  REQUIRE(cfg.update_interval == 250);
  REQUIRE(cfg.target_noise == 0.2);
  REQUIRE(cfg.target_noise_clip == 0.5);
  REQUIRE(cfg.action_noise == 0.1);
  REQUIRE(cfg.batch_size == 256);
  REQUIRE(cfg.buffer_capacity == 100000);
  REQUIRE(cfg.warmup_steps == 1000);
  REQUIRE(cfg.steps == 60000);
  REQUIRE(cfg.features_dim == 32);
  REQUIRE(cfg.features_kind == FeatureKind::Fdm);
}

TEST_CASE("parse and serialize round-trip to a fixed point") {
  const std::string text =
      "env = gridworld\n"
      "features.kind = hilbert   # expectile features\n"
      "gamma = 0.95\n"
      "seeds = 0, 1, 2\n"
      "steps = 5000\n";
  const ExperimentConfig cfg = ExperimentConfig::parse(text);
  REQUIRE(cfg.env == "gridworld");
  REQUIRE(cfg.features_kind == FeatureKind::Hilbert);
  REQUIRE(cfg.gamma == 0.95);
  REQUIRE(cfg.seeds == std::vector<int>{0, 1, 2});
  const std::string canon = cfg.serialize();
  const ExperimentConfig again = ExperimentConfig::parse(canon);
  REQUIRE(again.serialize() == canon);
}

TEST_CASE("unknown keys are rejected") {
  REQUIRE_THROWS_WITH(ExperimentConfig::parse("leraning_rate = 0.1\n"),
                      Catch::Matchers::Contains("unknown config key"));
}

TEST_CASE("numeric keys are range-checked") {
  REQUIRE_THROWS_AS(ExperimentConfig::parse("gamma = 1.0\n"), ConfigError);
  REQUIRE_THROWS_AS(ExperimentConfig::parse("gamma = -0.1\n"), ConfigError);
  REQUIRE_THROWS_AS(ExperimentConfig::parse("lr.actor = 0\n"), ConfigError);
  REQUIRE_THROWS_AS(ExperimentConfig::parse("batch_size = 0\n"), ConfigError);
  REQUIRE_THROWS_AS(ExperimentConfig::parse("steps = -5\n"), ConfigError);
  REQUIRE_THROWS_AS(ExperimentConfig::parse("feature_tau = 1\n"), ConfigError);
  REQUIRE_THROWS_AS(ExperimentConfig::parse("gamma = fast\n"), ConfigError);
  REQUIRE_THROWS_AS(ExperimentConfig::parse("env = mujoco\n"), ConfigError);
  REQUIRE_THROWS_AS(ExperimentConfig::parse("features.kind = pixels\n"), ConfigError);
  REQUIRE_THROWS_AS(ExperimentConfig::parse("seeds = \n"), ConfigError);
  REQUIRE_THROWS_AS(ExperimentConfig::parse("witness.normalize = maybe\n"), ConfigError);
  REQUIRE_THROWS_AS(ExperimentConfig::parse("just a line\n"), ConfigError);
}

TEST_CASE("config hash is stable under key reordering") {
  const ExperimentConfig a = ExperimentConfig::parse("gamma = 0.95\nsteps = 100\n");
  const ExperimentConfig b = ExperimentConfig::parse("steps = 100\ngamma = 0.95\n");
  REQUIRE(a.hash() == b.hash());
  const ExperimentConfig c = ExperimentConfig::parse("steps = 101\ngamma = 0.95\n");
  REQUIRE(a.hash() != c.hash());
}

TEST_CASE("json overrides apply on top of the file") {
  ExperimentConfig cfg = ExperimentConfig::parse("gamma = 0.95\n");
  cfg.apply_json_overrides(R"({"steps": 1234, "features.kind": "random",
                               "witness.normalize": true, "gamma": 0.9})");
  REQUIRE(cfg.steps == 1234);
  REQUIRE(cfg.features_kind == FeatureKind::Random);
  REQUIRE(cfg.witness_normalize);
  REQUIRE(cfg.gamma == 0.9);
  REQUIRE_THROWS_AS(cfg.apply_json_overrides("not json"), ConfigError);
  REQUIRE_THROWS_AS(cfg.apply_json_overrides(R"({"unknown.key": 1})"), ConfigError);
  REQUIRE_THROWS_AS(cfg.apply_json_overrides(R"({"gamma": [1,2]})"), ConfigError);
}

TEST_CASE("trainer config mirrors the experiment config") {
  ExperimentConfig cfg;
  cfg.gamma = 0.9;
  cfg.batch_size = 64;
  cfg.sf_mode = SfMode::Td3;
  cfg.actor_kind = ActorKind::Gaussian;
  const TrainerConfig t = cfg.trainer_config();
  REQUIRE(t.gamma == 0.9);
  REQUIRE(t.batch_size == 64);
  REQUIRE(t.sf_mode == SfMode::Td3);
  REQUIRE(t.actor_kind == ActorKind::Gaussian);
}

TEST_CASE("manifest serializes its fields") {
  RunManifest m;
  m.config_hash = hash_hex(0xdeadbeef);
  m.seed = 3;
  m.started_at = "2026-01-01T00:00:00Z";
  m.finished_at = "2026-01-01T00:05:00Z";
  m.outputs["metrics_csv"] = "runs/seed_3/metrics.csv";
  const auto j = m.to_json();
  REQUIRE(j["config_hash"] == "00000000deadbeef");
  REQUIRE(j["seed"] == 3);
  REQUIRE(j["outputs"]["metrics_csv"] == "runs/seed_3/metrics.csv");
  REQUIRE(j["version"] == kVersion);
}

TEST_CASE("environment factory honours config fields") {
  ExperimentConfig cfg;
  cfg.env = "gridworld";
  cfg.env_horizon = 55;
  const auto env = cfg.make_environment();
  REQUIRE(env->name() == "gridworld");
  REQUIRE(env->horizon() == 55);
}
