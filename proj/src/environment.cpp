#include "docir/environment.hpp"

#include <cmath>
#include <random>

namespace docir {

TabletopEnv::TabletopEnv(SceneConfig config, Task task, std::shared_ptr<const InitStateSet> init_states)
    : config_(std::move(config)), task_(task), init_states_(std::move(init_states)) {
  config_.validate();
  if (task_ == Task::place && (!init_states_ || init_states_->empty())) {
    throw std::invalid_argument("TabletopEnv: place task needs initial states");
  }
}

Observation TabletopEnv::reset(std::uint64_t seed) {
  auto [state, obs] = docir::reset(config_, seed, task_, init_states_.get());
  state_ = std::move(state);
  return obs;
}

EnvStep TabletopEnv::step(const Action& action) {
  StepResult r = docir::step(state_, action, config_);
  state_ = std::move(r.state);
  return {std::move(r.observation), r.reward.total, r.terminated, r.success};
}

namespace {

double dist(const Vec3& a, const Vec3& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                   (a[2] - b[2]) * (a[2] - b[2]));
}

}  // namespace

Observation PointReachEnv::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> xy(0.1, 0.9);
  std::uniform_real_distribution<double> z(0.05, 0.25);
  gripper_ = {xy(rng), xy(rng), z(rng)};
  goal_ = {xy(rng), xy(rng), z(rng)};
  steps_ = 0;
  return make_observation();
}

EnvStep PointReachEnv::step(const Action& action) {
  const double before = dist(gripper_, goal_);
  for (int k = 0; k < 3; ++k) {
    const double a = std::clamp(action.arm[k], -1.0, 1.0);
    gripper_[k] = std::clamp(gripper_[k] + geometry_.step_size * a, 0.0, geometry_.workspace_max[k]);
  }
  ++steps_;
  const double after = dist(gripper_, goal_);
  EnvStep out;
  out.success = after <= kSuccessRadius;
  out.reward = (before - after) - 0.01 + (out.success ? 10.0 : 0.0);
  out.done = out.success || steps_ >= kHorizon;
  out.observation = make_observation();
  return out;
}

Observation PointReachEnv::make_observation() const {
  Observation obs;
  obs.proprio = {gripper_[0], gripper_[1], gripper_[2], goal_[0], goal_[1], goal_[2]};
  return obs;
}

}  // namespace docir
