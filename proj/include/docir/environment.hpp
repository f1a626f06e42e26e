// Episodic environment interface consumed by rollout collection, plus the
// tabletop and point-reach implementations.
#pragma once

#include <cstdint>
#include <memory>

#include "docir/simworld.hpp"

namespace docir {

struct EnvStep {
  Observation observation;
  double reward = 0;
  bool done = false;
  bool success = false;
};

/// One independent episodic state machine. Instances share nothing, so each
/// may be owned and advanced by a different worker.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual Observation reset(std::uint64_t seed) = 0;
  virtual EnvStep step(const Action& action) = 0;
  virtual InstanceRegistry registry() const = 0;
  virtual IdSet target_ids() const = 0;
  virtual int proprio_dim() const = 0;
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

class TabletopEnv final : public Environment {
 public:
  TabletopEnv(SceneConfig config, Task task, std::shared_ptr<const InitStateSet> init_states = nullptr);

  Observation reset(std::uint64_t seed) override;
  EnvStep step(const Action& action) override;
  InstanceRegistry registry() const override { return state_.registry(); }
  IdSet target_ids() const override { return {state_.target_id}; }
  int proprio_dim() const override { return Observation::kProprioDim; }

  const SceneState& state() const { return state_; }
  const SceneConfig& config() const { return config_; }

 private:
  SceneConfig config_;
  Task task_;
  std::shared_ptr<const InitStateSet> init_states_;
  SceneState state_;
};

/// Image-free reaching task: move the gripper to a random goal. The
/// observation is gripper position followed by goal position.
class PointReachEnv final : public Environment {
 public:
  static constexpr double kSuccessRadius = 0.04;
  static constexpr int kHorizon = 50;

  Observation reset(std::uint64_t seed) override;
  EnvStep step(const Action& action) override;
  InstanceRegistry registry() const override { return {}; }
  IdSet target_ids() const override { return {}; }
  int proprio_dim() const override { return 6; }

 private:
  Observation make_observation() const;

  WorldGeometry geometry_;
  Vec3 gripper_{};
  Vec3 goal_{};
  int steps_ = 0;
};

}  // namespace docir
