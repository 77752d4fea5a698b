// Command-line front end: demo generation, training runs and seed sweeps,
// the oracle verification suites, learning-curve aggregation, and policy
// evaluation. Exit codes: 0 ok, 2 config error, 3 verification failure,
// 4 numeric abort.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "sfm/config.hpp"
#include "sfm/demos.hpp"
#include "sfm/plotdata.hpp"
#include "sfm/trainer.hpp"
#include "sfm/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitVerify = 3;
constexpr int kExitNumeric = 4;

void save_actor_checkpoints(const fs::path& dir, const sfm::Policy& actor,
                            sfm::ActorKind kind, const std::string& stem) {
  if (kind == sfm::ActorKind::Deterministic) {
    const auto& a = static_cast<const sfm::DeterministicActor&>(actor);
    sfm::save_params((dir / (stem + ".bin")).string(), a.net());
  } else {
    const auto& a = static_cast<const sfm::GaussianActor&>(actor);
    sfm::save_params((dir / (stem + "_mean.bin")).string(), a.mean_net());
    sfm::save_params((dir / (stem + "_std.bin")).string(), a.std_net());
  }
}

struct SeedOutcome {
  int seed = 0;
  bool numeric_abort = false;
  std::string error;
  double final_normalized_return = 0.0;
  double runtime_seconds = 0.0;
};

SeedOutcome run_one_seed(const sfm::ExperimentConfig& cfg, int seed, const fs::path& run_dir) {
  SeedOutcome outcome;
  outcome.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  fs::create_directories(run_dir);

  sfm::RunManifest manifest;
  manifest.config_hash = sfm::hash_hex(cfg.hash());
  manifest.seed = seed;
  manifest.started_at = sfm::iso_timestamp();
  manifest.outputs["config"] = (run_dir / "config.ini").string();
  manifest.outputs["metrics_csv"] = (run_dir / "metrics.csv").string();
  manifest.outputs["summary_json"] = (run_dir / "summary.json").string();
  manifest.outputs["checkpoints"] = (run_dir / "checkpoints").string();

  {
    std::ofstream f(run_dir / "config.ini");
    f << cfg.serialize();
  }

  const auto env = cfg.make_environment();
  const sfm::DemoSet demos = sfm::read_demos(cfg.demos_path);

  try {
    sfm::TrainResult result = sfm::train(*env, demos, cfg.trainer_config(), seed);
    sfm::write_metrics_csv((run_dir / "metrics.csv").string(), result.metrics);

    const fs::path ckpt = run_dir / "checkpoints";
    fs::create_directories(ckpt);
    auto& st = result.state;
    save_actor_checkpoints(ckpt, *st.actor, st.actor_kind, "actor_final");
    if (st.best_actor_params.size() > 0) {
      sfm::detail::set_actor_params(*st.actor, st.actor_kind, st.best_actor_params);
      save_actor_checkpoints(ckpt, *st.actor, st.actor_kind, "actor_best");
    }
    sfm::save_params((ckpt / "phi.bin").string(), st.features->phi());
    sfm::save_params((ckpt / "psi1.bin").string(), st.sf->psi1());
    sfm::save_params((ckpt / "psi2.bin").string(), st.sf->psi2());
    sfm::Vector bounds(st.sf->dim() * 2);
    bounds << st.sf->clip_low(), st.sf->clip_high();
    sfm::save_vector_checkpoint((ckpt / "sf_bounds.bin").string(), bounds);
    {
      json meta;
      meta["features_kind"] = sfm::to_string(st.features->kind());
      meta["actor_kind"] = sfm::to_string(st.actor_kind);
      meta["sf_mode"] = sfm::to_string(st.sf->settings().mode);
      std::ofstream f(ckpt / "meta.json");
      f << meta.dump(2) << "\n";
    }

    const auto& last = result.metrics.back();
    outcome.final_normalized_return = last.normalized_return;
    json summary;
    summary["seed"] = seed;
    summary["steps"] = cfg.steps;
    summary["expert_return"] = result.expert_return;
    summary["random_return"] = result.random_return;
    summary["final_return"] = last.episode_return;
    summary["final_normalized_return"] = last.normalized_return;
    summary["final_feature_gap"] = last.feature_gap;
    summary["best_checkpoint_score"] = st.best_checkpoint_score;
    summary["best_checkpoint_return"] = result.best_checkpoint_return;
    summary["best_checkpoint_normalized_return"] = result.best_checkpoint_normalized_return;
    const auto t1 = std::chrono::steady_clock::now();
    outcome.runtime_seconds = std::chrono::duration<double>(t1 - t0).count();
    summary["runtime_seconds"] = outcome.runtime_seconds;
    std::ofstream f(run_dir / "summary.json");
    f << summary.dump(2) << "\n";
  } catch (const sfm::TrainAbort& e) {
    std::ofstream f(run_dir / "abort_dump.json");
    f << e.state_dump() << "\n";
    outcome.numeric_abort = true;
    outcome.error = e.what();
  }

  manifest.finished_at = sfm::iso_timestamp();
  std::ofstream mf(run_dir / "manifest.json");
  mf << manifest.to_json().dump(2) << "\n";
  return outcome;
}

int cmd_train(const std::string& config_path, const std::string& json_override,
              const std::string& out_dir, int seed_override) {
  sfm::ExperimentConfig cfg = sfm::ExperimentConfig::from_file(config_path);
  if (!json_override.empty()) cfg.apply_json_overrides(json_override);
  if (seed_override >= 0) cfg.seeds = {seed_override};
  if (!fs::exists(cfg.demos_path))
    throw sfm::ConfigError("demo file does not exist: " + cfg.demos_path);

  fs::create_directories(out_dir);
  std::vector<SeedOutcome> outcomes(cfg.seeds.size());
  const unsigned workers =
      std::min<unsigned>(std::max(1u, std::thread::hardware_concurrency()),
                         static_cast<unsigned>(cfg.seeds.size()));
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < cfg.seeds.size(); i = next.fetch_add(1)) {
        const int seed = cfg.seeds[i];
        outcomes[i] =
            run_one_seed(cfg, seed, fs::path(out_dir) / ("seed_" + std::to_string(seed)));
      }
    });
  for (auto& t : pool) t.join();

  bool any_abort = false;
  for (const auto& o : outcomes) {
    if (o.numeric_abort) {
      std::cerr << "seed " << o.seed << ": " << o.error << "\n";
      any_abort = true;
    } else {
      std::cout << "seed " << o.seed << ": final_normalized_return="
                << o.final_normalized_return << " (" << o.runtime_seconds << " s)\n";
    }
  }
  return any_abort ? kExitNumeric : kExitOk;
}

int cmd_gen_demos(const std::string& env_name, int n, const std::string& out,
                  bool state_only, uint64_t seed, double gamma, int horizon) {
  const auto env = sfm::make_env(env_name, horizon);
  const sfm::DemoSet demos = sfm::generate_demos(*env, n, seed, state_only, gamma);
  sfm::write_demos(out, demos);
  std::cout << "wrote " << demos.trajectories.size() << " demonstration(s) to " << out << "\n";
  return kExitOk;
}

int cmd_verify(const std::string& suite, const std::string& out, uint64_t seed,
               const std::string& fault) {
  const auto reports = sfm::verify_suites(suite, seed, fault);
  json j;
  j["suites"] = json::array();
  bool all_pass = true;
  for (const auto& rep : reports) {
    j["suites"].push_back(rep.to_json());
    for (const auto& c : rep.checks) {
      std::cout << (c.pass ? "PASS" : "FAIL") << "  " << rep.suite << "/" << c.name
                << "  max_error=" << c.max_error << "  tolerance=" << c.tolerance << "\n";
      all_pass = all_pass && c.pass;
    }
  }
  j["pass"] = all_pass;
  if (!out.empty()) {
    std::ofstream f(out);
    f << j.dump(2) << "\n";
  }
  return all_pass ? kExitOk : kExitVerify;
}

int cmd_plotdata(const std::vector<std::string>& run_dirs, const std::string& out) {
  std::vector<sfm::MetricsTable> runs;
  for (const auto& dir : run_dirs) {
    fs::path p(dir);
    if (fs::is_directory(p)) p /= "metrics.csv";
    runs.push_back(sfm::read_metrics_csv(p.string()));
  }
  sfm::write_plotdata_csv(out, runs);
  std::cout << "aggregated " << runs.size() << " run(s) into " << out << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& env_name, const std::string& actor_path,
             const std::string& actor_std_path, int episodes, uint64_t seed, int horizon) {
  const auto env = sfm::make_env(env_name, horizon);
  sfm::ActorSettings acfg;
  std::unique_ptr<sfm::Policy> actor;
  const auto sizes = sfm::checkpoint_layer_sizes(actor_path);
  acfg.hidden = sizes.size() > 2 ? sizes[1] : 64;
  if (actor_std_path.empty()) {
    auto a = std::make_unique<sfm::DeterministicActor>(env->state_dim(), env->action_dim(),
                                                       acfg, 0);
    sfm::load_params(actor_path, a->mutable_net());
    actor = std::move(a);
  } else {
    auto a = std::make_unique<sfm::GaussianActor>(env->state_dim(), env->action_dim(), acfg, 0);
    sfm::load_params(actor_path, a->mutable_mean_net());
    sfm::load_params(actor_std_path, a->mutable_std_net());
    actor = std::move(a);
  }
  const double ret = sfm::evaluate_return(*env, *actor, episodes, seed);
  const auto expert = sfm::make_expert(*env);
  const sfm::UniformRandomPolicy random_policy(env->action_dim());
  const double expert_ret = sfm::evaluate_return(*env, *expert, episodes, seed + 1);
  const double random_ret = sfm::evaluate_return(*env, random_policy, episodes, seed + 2);
  std::cout << "mean_return=" << ret
            << " normalized_return=" << sfm::normalize_return(ret, random_ret, expert_ret)
            << " (expert=" << expert_ret << ", random=" << random_ret << ")\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Successor feature matching: training and verification harness"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-demos", "Generate expert demonstrations");
  std::string gen_env = "pointmass", gen_out = "demos.json";
  int gen_n = 1, gen_horizon = 0;
  bool gen_state_only = false;
  uint64_t gen_seed = 0;
  double gen_gamma = 0.99;
  gen->add_option("--env", gen_env, "Environment name (gridworld|pointmass)");
  gen->add_option("--n", gen_n, "Number of demonstrations");
  gen->add_option("--out", gen_out, "Output demo file");
  gen->add_flag("--state-only", gen_state_only, "Drop action labels");
  gen->add_option("--seed", gen_seed, "Generation seed");
  gen->add_option("--gamma", gen_gamma, "Discount recorded in the demo file");
  gen->add_option("--horizon", gen_horizon, "Episode horizon override");

  auto* train = app.add_subcommand("train", "Run training for every configured seed");
  std::string train_config, train_json, train_out = "runs";
  int train_seed = -1;
  train->add_option("--config", train_config, "Experiment config file")->required();
  train->add_option("--json", train_json, "JSON overrides, e.g. '{\"steps\": 1000}'");
  train->add_option("--out", train_out, "Output directory");
  train->add_option("--seed", train_seed, "Override the config seed list with one seed");

  auto* verify = app.add_subcommand("verify", "Run the oracle verification suites");
  std::string verify_suite = "all", verify_out = "verify_report.json", verify_fault;
  uint64_t verify_seed = 7;
  verify->add_option("--suite", verify_suite, "lemma1|prop1|prop2|sf_oracle|all");
  verify->add_option("--out", verify_out, "Report JSON path");
  verify->add_option("--seed", verify_seed, "Suite seed");
  verify->add_option("--inject-fault", verify_fault, "Corrupt the named check (harness test)")
      ->group("");

  auto* plot = app.add_subcommand("plotdata", "Aggregate metrics across runs");
  std::vector<std::string> plot_runs;
  std::string plot_out = "plotdata.csv";
  plot->add_option("runs", plot_runs, "Run directories or metrics.csv files")->required();
  plot->add_option("--out", plot_out, "Aggregated CSV path");

  auto* eval = app.add_subcommand("eval", "Evaluate an actor checkpoint");
  std::string eval_env = "pointmass", eval_actor, eval_actor_std;
  int eval_episodes = 10, eval_horizon = 0;
  uint64_t eval_seed = 0;
  eval->add_option("--env", eval_env, "Environment name");
  eval->add_option("--actor", eval_actor, "Actor checkpoint (mean net for gaussian)")->required();
  eval->add_option("--actor-std", eval_actor_std, "Gaussian std-head checkpoint");
  eval->add_option("--episodes", eval_episodes, "Evaluation episodes");
  eval->add_option("--seed", eval_seed, "Evaluation seed");
  eval->add_option("--horizon", eval_horizon, "Episode horizon override");

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      return cmd_gen_demos(gen_env, gen_n, gen_out, gen_state_only, gen_seed, gen_gamma,
                           gen_horizon);
    if (train->parsed()) return cmd_train(train_config, train_json, train_out, train_seed);
    if (verify->parsed()) return cmd_verify(verify_suite, verify_out, verify_seed, verify_fault);
    if (plot->parsed()) return cmd_plotdata(plot_runs, plot_out);
    if (eval->parsed())
      return cmd_eval(eval_env, eval_actor, eval_actor_std, eval_episodes, eval_seed,
                      eval_horizon);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  } catch (const sfm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const sfm::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
