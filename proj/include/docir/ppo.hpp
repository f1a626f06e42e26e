// Rollout collection, generalized advantage estimation and the clipped
// surrogate update, plus the training loop that ties them together.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "docir/autodiff/adam.hpp"
#include "docir/environment.hpp"
#include "docir/policy.hpp"

namespace docir {

struct PPOHypers {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatches = 8;
  double lr = 3e-4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  int rollout_length = 512;
  int num_envs = 8;
  double max_grad_norm = 0.5;

  void validate() const;
};

void to_json(nlohmann::json& j, const PPOHypers& h);
void from_json(const nlohmann::json& j, PPOHypers& h);

/// Transitions stored env-major: index = env * horizon + t.
struct RolloutBatch {
  int num_envs = 0;
  int horizon = 0;
  std::vector<PolicyInput> inputs;
  std::vector<Action> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;
  std::vector<double> bootstrap;  // value of the state after each env's last step
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return static_cast<std::size_t>(num_envs) * horizon; }
  std::size_t index(int env, int t) const { return static_cast<std::size_t>(env) * horizon + t; }
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Backward recursion over one env's trajectory. `bootstrap` is the value of
/// the state following the final step; it is ignored if that step is done.
GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
              double bootstrap, double gamma, double lambda);

/// Fills batch.advantages / batch.returns env by env.
void compute_advantages(RolloutBatch& batch, const PPOHypers& hypers);
/// Zero mean, unit variance with a 1e-8 guard on the deviation.
void normalize(std::span<double> values);

struct EpisodeStats {
  int episodes = 0;
  int successes = 0;
  double return_sum = 0;
};

/// Derives the seed of a given episode of a given env from the run seed.
std::uint64_t episode_seed(std::uint64_t run_seed, int env, long episode);

/// Owns N environments and carries their state across rollouts.
template <class T>
class RolloutCollector {
 public:
  /// threads > 1 steps environments concurrently; the result is identical
  /// to the sequential path because each env is exclusively owned.
  RolloutCollector(const EnvFactory& factory, int num_envs, std::uint64_t seed, int threads = 1);

  RolloutBatch collect(ActorCritic<T>& policy, int horizon, std::mt19937_64& rng, EpisodeStats* stats = nullptr);
  long total_steps() const { return total_steps_; }
  int num_envs() const { return static_cast<int>(envs_.size()); }

 private:
  struct Slot {
    std::unique_ptr<Environment> env;
    PolicyInput current;
    long episode = 0;
    double episode_return = 0;
  };

  void reset_slot(int i);

  std::vector<Slot> slots_;
  std::vector<Environment*> envs_;
  std::uint64_t seed_;
  int threads_;
  bool keep_frames_;
  long total_steps_ = 0;
};

struct LossReport {
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double clip_fraction = 0;
  double approx_kl = 0;
  double grad_norm = 0;
};

template <class T>
struct LossTerms {
  ad::Var<T> total;
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double clip_fraction = 0;
  double approx_kl = 0;
};

/// Loss on one minibatch whose forward pass produced `heads`.
template <class T>
LossTerms<T> ppo_loss(const PolicyHeads<T>& heads, const ad::Tensor<T>& actions, std::span<const double> old_log_probs,
                      std::span<const double> advantages, std::span<const double> returns, const PPOHypers& hypers);

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& what, nlohmann::json diagnostic)
      : std::runtime_error(what), diagnostic_(std::move(diagnostic)) {}
  const nlohmann::json& diagnostic() const { return diagnostic_; }

 private:
  nlohmann::json diagnostic_;
};

/// Normalizes advantages, then runs epochs x minibatches passes with a fresh
/// shuffle per epoch and one optimizer step per minibatch. Reported values are
/// minibatch averages.
template <class T>
LossReport ppo_update(ActorCritic<T>& policy, ad::OptimState<T>& optim, RolloutBatch& batch, const PPOHypers& hypers,
                      std::mt19937_64& rng);

struct EvalResult {
  int episodes = 0;
  int successes = 0;
  double mean_return = 0;

  double success_rate() const { return episodes == 0 ? 0.0 : static_cast<double>(successes) / episodes; }
};

/// Fixed base of the evaluation seed sequence shared by every method.
inline constexpr std::uint64_t kEvalSeedBase = 1'000'000'007ULL;

/// Deterministic-action evaluation; episode i uses seed seed_base + i.
template <class T>
EvalResult evaluate_policy(ActorCritic<T>& policy, const EnvFactory& factory, int episodes,
                           std::uint64_t seed_base = kEvalSeedBase, int parallel = 25);

struct TrainConfig {
  EnvFactory env_factory;
  EnvFactory eval_env_factory;  // defaults to env_factory
  PolicyConfig policy;
  PPOHypers hypers;
  long step_budget = 0;
  std::uint64_t seed = 0;
  int eval_every = 20;
  int eval_episodes = 32;
  std::uint64_t eval_seed_base = kEvalSeedBase;
  std::filesystem::path out_dir;
  int threads = 1;
  bool deterministic = false;
  /// Merged into every checkpoint manifest.
  nlohmann::json manifest = nlohmann::json::object();
  /// Called after each metrics line is written.
  std::function<void(const nlohmann::json&)> on_metrics;
};

struct TrainResult {
  long steps = 0;
  int updates = 0;
  int evals = 0;
  double best_success = -1;
  int best_update = 0;
  double last_success = -1;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::filesystem::path metrics_path;
};

/// Writes metrics.jsonl, best.ckpt and last.ckpt under out_dir. With a zero
/// budget only the initial parameters are saved (as best.ckpt).
template <class T>
TrainResult train(const TrainConfig& config);

extern template class RolloutCollector<float>;
extern template class RolloutCollector<double>;

}  // namespace docir
