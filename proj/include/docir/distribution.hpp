// Mixed action distribution: a diagonal Gaussian over the 3-D arm command and
// a Bernoulli over the gripper.
#pragma once

#include <array>
#include <random>

#include "docir/simworld.hpp"

namespace docir {

inline constexpr double kMinLogStd = -5.0;
inline constexpr double kMaxLogStd = 1.0;

struct ActionDist {
  std::array<double, 3> arm_mean{};
  std::array<double, 3> arm_log_std{};  // already clamped
  double gripper_logit = 0;
};

/// Arm drawn unclamped; the environment clamps at use. The gripper logit is
/// P(close) in log-odds.
Action sample(const ActionDist& dist, std::mt19937_64& rng);
/// Gaussian log-density of the unclamped arm plus the Bernoulli log-mass.
double log_prob(const ActionDist& dist, const Action& action);
double entropy(const ActionDist& dist);
/// Clamped mean and the more likely gripper command.
Action deterministic(const ActionDist& dist);

double gripper_close_probability(const ActionDist& dist);

}  // namespace docir
