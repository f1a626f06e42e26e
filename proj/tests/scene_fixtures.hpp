// Randomized scenes for property tests: random object counts, variants,
// distractors and a short random-action prefix so the gripper and objects
// move away from their spawn poses.
#pragma once

#include <random>

#include "docir/simworld.hpp"

namespace docir::testing {

struct RandomScene {
  SceneConfig config;
  SceneState state;
  Observation observation;
};

inline RandomScene random_scene(std::uint64_t seed, int max_random_steps = 12) {
  std::mt19937_64 rng(seed);
  const int counts[] = {3, 5, 7, 9};
  RandomScene s;
  s.config = scene_config_for_objects(counts[rng() % 4], rng() % 2 ? TargetVariant::varying_target
                                                                   : TargetVariant::fixed_target);
  s.config.distractor_count = static_cast<int>(rng() % 4);
  auto [state, obs] = reset(s.config, seed, Task::pick);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int steps = static_cast<int>(rng() % (max_random_steps + 1));
  for (int k = 0; k < steps && !state.terminated; ++k) {
    Action a;
    a.arm = {u(rng), u(rng), u(rng)};
    a.gripper = u(rng) > 0 ? 1.0 : -1.0;
    StepResult r = step(state, a, s.config);
    state = std::move(r.state);
    obs = std::move(r.observation);
  }
  s.state = std::move(state);
  s.observation = std::move(obs);
  return s;
}

}  // namespace docir::testing
