#include "docir/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace docir {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

double gripper_close_probability(const ActionDist& dist) {
  return 1.0 / (1.0 + std::exp(-dist.gripper_logit));
}

Action sample(const ActionDist& dist, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Action a;
  for (int k = 0; k < 3; ++k) a.arm[k] = dist.arm_mean[k] + std::exp(dist.arm_log_std[k]) * normal(rng);
  a.gripper = unit(rng) < gripper_close_probability(dist) ? 1.0 : -1.0;
  return a;
}

double log_prob(const ActionDist& dist, const Action& action) {
  double lp = 0;
  for (int k = 0; k < 3; ++k) {
    const double z = (action.arm[k] - dist.arm_mean[k]) * std::exp(-dist.arm_log_std[k]);
    lp += -0.5 * z * z - dist.arm_log_std[k] - kHalfLog2Pi;
  }
  const double sign = action.gripper > 0 ? 1.0 : -1.0;
  lp += -softplus(-sign * dist.gripper_logit);
  return lp;
}

double entropy(const ActionDist& dist) {
  double h = 0;
  for (double ls : dist.arm_log_std) h += 0.5 + kHalfLog2Pi + ls;
  const double l = dist.gripper_logit;
  h += softplus(l) - l * gripper_close_probability(dist);
  return h;
}

Action deterministic(const ActionDist& dist) {
  Action a;
  for (int k = 0; k < 3; ++k) a.arm[k] = std::clamp(dist.arm_mean[k], -1.0, 1.0);
  a.gripper = dist.gripper_logit > 0 ? 1.0 : -1.0;
  return a;
}

}  // namespace docir
