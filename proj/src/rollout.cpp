#include <algorithm>
#include <cmath>
#include <thread>

#include "docir/ppo.hpp"

namespace docir {

GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
              double bootstrap, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw std::invalid_argument("gae: rewards/values/dones lengths " + std::to_string(n) + "/" +
                                std::to_string(values.size()) + "/" + std::to_string(dones.size()));
  }
  GaeResult out;
  out.advantages.resize(n);
  out.returns.resize(n);
  double next_adv = 0;
  double next_value = bootstrap;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + values[k];
    next_value = values[k];
  }
  return out;
}

void compute_advantages(RolloutBatch& batch, const PPOHypers& hypers) {
  batch.advantages.assign(batch.size(), 0.0);
  batch.returns.assign(batch.size(), 0.0);
  const std::size_t t = batch.horizon;
  for (int e = 0; e < batch.num_envs; ++e) {
    const std::size_t o = batch.index(e, 0);
    auto r = gae(std::span(batch.rewards).subspan(o, t), std::span(batch.values).subspan(o, t),
                 std::span(batch.dones).subspan(o, t), batch.bootstrap[e], hypers.gamma, hypers.lambda);
    std::copy(r.advantages.begin(), r.advantages.end(), batch.advantages.begin() + o);
    std::copy(r.returns.begin(), r.returns.end(), batch.returns.begin() + o);
  }
}

void normalize(std::span<double> values) {
  if (values.empty()) return;
  double mean = 0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  const double sd = std::sqrt(var) + 1e-8;
  for (double& v : values) v = (v - mean) / sd;
}

std::uint64_t episode_seed(std::uint64_t run_seed, int env, long episode) {
  // splitmix64 finalizer over a packed key
  std::uint64_t z = run_seed * 0x9E3779B97F4A7C15ULL + (static_cast<std::uint64_t>(env) << 40) +
                    static_cast<std::uint64_t>(episode);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <class T>
RolloutCollector<T>::RolloutCollector(const EnvFactory& factory, int num_envs, std::uint64_t seed, int threads)
    : seed_(seed), threads_(std::max(1, threads)) {
  if (num_envs < 1) throw std::invalid_argument("RolloutCollector: need at least one env");
  slots_.resize(num_envs);
  for (int i = 0; i < num_envs; ++i) {
    slots_[i].env = factory();
    envs_.push_back(slots_[i].env.get());
    reset_slot(i);
  }
}

template <class T>
void RolloutCollector<T>::reset_slot(int i) {
  Slot& s = slots_[i];
  const Observation obs = s.env->reset(episode_seed(seed_, i, s.episode));
  s.current = PolicyInput::from(obs, s.env->registry(), s.env->target_ids(), !obs.base.empty());
  s.episode_return = 0;
}

template <class T>
RolloutBatch RolloutCollector<T>::collect(ActorCritic<T>& policy, int horizon, std::mt19937_64& rng,
                                          EpisodeStats* stats) {
  if (horizon < 1) throw std::invalid_argument("collect: horizon must be positive");
  const int n = num_envs();
  RolloutBatch batch;
  batch.num_envs = n;
  batch.horizon = horizon;
  batch.inputs.resize(batch.size());
  batch.actions.resize(batch.size());
  batch.log_probs.resize(batch.size());
  batch.rewards.resize(batch.size());
  batch.values.resize(batch.size());
  batch.dones.resize(batch.size());
  batch.bootstrap.resize(n);

  std::vector<const PolicyInput*> current(n);
  std::vector<ActionDist> dists;
  std::vector<double> values;
  std::vector<Action> actions(n);
  std::vector<EnvStep> results(n);
  std::vector<PolicyInput> next_inputs(n);

  auto step_range = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      results[i] = slots_[i].env->step(actions[i]);
      if (!results[i].done) {
        const Observation& obs = results[i].observation;
        next_inputs[i] = PolicyInput::from(obs, slots_[i].env->registry(), slots_[i].env->target_ids(), !obs.base.empty());
      }
    }
  };

  for (int t = 0; t < horizon; ++t) {
    for (int i = 0; i < n; ++i) current[i] = &slots_[i].current;
    policy.act(current, dists, values);
    for (int i = 0; i < n; ++i) {
      actions[i] = sample(dists[i], rng);
      const std::size_t k = batch.index(i, t);
      batch.actions[k] = actions[i];
      batch.log_probs[k] = log_prob(dists[i], actions[i]);
      batch.values[k] = values[i];
    }

    const int workers = std::min(threads_, n);
    if (workers <= 1) {
      step_range(0, n);
    } else {
      std::vector<std::thread> pool;
      const int chunk = (n + workers - 1) / workers;
      for (int w = 0; w < workers; ++w) pool.emplace_back(step_range, w * chunk, std::min(n, (w + 1) * chunk));
      for (auto& th : pool) th.join();
    }

    for (int i = 0; i < n; ++i) {
      Slot& s = slots_[i];
      const std::size_t k = batch.index(i, t);
      batch.inputs[k] = std::move(s.current);
      batch.rewards[k] = results[i].reward;
      batch.dones[k] = results[i].done ? 1 : 0;
      s.episode_return += results[i].reward;
      if (results[i].done) {
        if (stats) {
          stats->episodes += 1;
          stats->successes += results[i].success ? 1 : 0;
          stats->return_sum += s.episode_return;
        }
        s.episode += 1;
        reset_slot(i);
      } else {
        s.current = std::move(next_inputs[i]);
      }
    }
    total_steps_ += n;
  }

  for (int i = 0; i < n; ++i) current[i] = &slots_[i].current;
  policy.act(current, dists, values);
  for (int i = 0; i < n; ++i) batch.bootstrap[i] = values[i];
  return batch;
}

template <class T>
EvalResult evaluate_policy(ActorCritic<T>& policy, const EnvFactory& factory, int episodes, std::uint64_t seed_base,
                           int parallel) {
  EvalResult result;
  if (episodes <= 0) return result;
  const int n = std::max(1, std::min(parallel, episodes));
  struct Live {
    std::unique_ptr<Environment> env;
    PolicyInput input;
    double ret = 0;
    bool active = false;
  };
  std::vector<Live> live(n);
  int next_episode = 0;
  auto start = [&](Live& l) {
    if (next_episode >= episodes) {
      l.active = false;
      return;
    }
    const Observation obs = l.env->reset(seed_base + static_cast<std::uint64_t>(next_episode++));
    l.input = PolicyInput::from(obs, l.env->registry(), l.env->target_ids(), !obs.base.empty());
    l.ret = 0;
    l.active = true;
  };
  for (auto& l : live) {
    l.env = factory();
    start(l);
  }

  std::vector<const PolicyInput*> inputs;
  std::vector<int> owners;
  std::vector<ActionDist> dists;
  std::vector<double> values;
  double return_sum = 0;
  while (true) {
    inputs.clear();
    owners.clear();
    for (int i = 0; i < n; ++i) {
      if (live[i].active) {
        inputs.push_back(&live[i].input);
        owners.push_back(i);
      }
    }
    if (inputs.empty()) break;
    policy.act(inputs, dists, values);
    for (std::size_t j = 0; j < owners.size(); ++j) {
      Live& l = live[owners[j]];
      EnvStep r = l.env->step(deterministic(dists[j]));
      l.ret += r.reward;
      if (r.done) {
        result.episodes += 1;
        result.successes += r.success ? 1 : 0;
        return_sum += l.ret;
        start(l);
      } else {
        l.input = PolicyInput::from(r.observation, l.env->registry(), l.env->target_ids(), !r.observation.base.empty());
      }
    }
  }
  result.mean_return = return_sum / result.episodes;
  return result;
}

template class RolloutCollector<float>;
template class RolloutCollector<double>;
template EvalResult evaluate_policy<float>(ActorCritic<float>&, const EnvFactory&, int, std::uint64_t, int);
template EvalResult evaluate_policy<double>(ActorCritic<double>&, const EnvFactory&, int, std::uint64_t, int);

}  // namespace docir
