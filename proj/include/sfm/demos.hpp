#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfm/env.hpp"

namespace sfm {

struct DemoSet {
  std::string env_name;
  double gamma = 0.99;
  std::vector<Trajectory> trajectories;
};

inline nlohmann::json demos_to_json(const DemoSet& demos) {
  nlohmann::json j;
  j["env"] = demos.env_name;
  j["gamma"] = demos.gamma;
  j["trajectories"] = nlohmann::json::array();
  for (const auto& traj : demos.trajectories) {
    nlohmann::json t;
    t["states"] = nlohmann::json::array();
    for (const auto& s : traj.states)
      t["states"].push_back(std::vector<double>(s.data(), s.data() + s.size()));
    if (traj.state_only()) {
      t["actions"] = nullptr;
    } else {
      t["actions"] = nlohmann::json::array();
      for (const auto& a : traj.actions)
        t["actions"].push_back(std::vector<double>(a.data(), a.data() + a.size()));
    }
    j["trajectories"].push_back(std::move(t));
  }
  return j;
}

inline void write_demos(const std::string& path, const DemoSet& demos) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open demo file for writing: " + path);
  f << demos_to_json(demos).dump(2) << "\n";
}

inline DemoSet read_demos(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open demo file: " + path);
  nlohmann::json j;
  f >> j;
  DemoSet demos;
  demos.env_name = j.at("env").get<std::string>();
  demos.gamma = j.at("gamma").get<double>();
  for (const auto& t : j.at("trajectories")) {
    Trajectory traj;
    for (const auto& s : t.at("states")) {
      const auto v = s.get<std::vector<double>>();
      traj.states.push_back(Eigen::Map<const Vector>(v.data(), v.size()));
    }
    if (!t.at("actions").is_null()) {
      for (const auto& a : t.at("actions")) {
        const auto v = a.get<std::vector<double>>();
        traj.actions.push_back(Eigen::Map<const Vector>(v.data(), v.size()));
      }
      if (traj.actions.size() + 1 != traj.states.size())
        throw std::runtime_error("demo trajectory must hold one action per transition");
    }
    if (traj.states.empty()) throw std::runtime_error("demo trajectory has no states");
    demos.trajectories.push_back(std::move(traj));
  }
  return demos;
}

inline DemoSet generate_demos(const ContinuousEnv& env, int n_demos, uint64_t seed,
                              bool state_only, double gamma) {
  const auto expert = make_expert(env);
  DemoSet demos;
  demos.env_name = env.name();
  demos.gamma = gamma;
  Rng rng(seed);
  for (int i = 0; i < n_demos; ++i)
    demos.trajectories.push_back(
        rollout_episode(env, *expert, rng, state_only, /*explore=*/false, /*query_reward=*/false)
            .trajectory);
  return demos;
}

}  // namespace sfm
