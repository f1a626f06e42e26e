#include "docir/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <malloc.h>
#include <cmath>
#include <fstream>
#include <numeric>

#include "docir/autodiff/ops.hpp"

namespace docir {

void PPOHypers::validate() const {
  if (!(gamma > 0 && gamma <= 1)) throw std::invalid_argument("PPOHypers: gamma must be in (0,1]");
  if (!(lambda >= 0 && lambda <= 1)) throw std::invalid_argument("PPOHypers: lambda must be in [0,1]");
  if (!(clip_eps > 0)) throw std::invalid_argument("PPOHypers: clip epsilon must be positive");
  if (epochs < 1 || minibatches < 1 || rollout_length < 1 || num_envs < 1) {
    throw std::invalid_argument("PPOHypers: counts must be positive");
  }
  if (minibatches > rollout_length * num_envs) throw std::invalid_argument("PPOHypers: more minibatches than samples");
  if (!(lr > 0)) throw std::invalid_argument("PPOHypers: learning rate must be positive");
}

void to_json(nlohmann::json& j, const PPOHypers& h) {
  j = {{"gamma", h.gamma},           {"lambda", h.lambda},
       {"clip_eps", h.clip_eps},     {"epochs", h.epochs},
       {"minibatches", h.minibatches}, {"lr", h.lr},
       {"entropy_coef", h.entropy_coef}, {"value_coef", h.value_coef},
       {"rollout_length", h.rollout_length}, {"num_envs", h.num_envs},
       {"max_grad_norm", h.max_grad_norm}};
}

void from_json(const nlohmann::json& j, PPOHypers& h) {
  PPOHypers d;
  h.gamma = j.value("gamma", d.gamma);
  h.lambda = j.value("lambda", d.lambda);
  h.clip_eps = j.value("clip_eps", d.clip_eps);
  h.epochs = j.value("epochs", d.epochs);
  h.minibatches = j.value("minibatches", d.minibatches);
  h.lr = j.value("lr", d.lr);
  h.entropy_coef = j.value("entropy_coef", d.entropy_coef);
  h.value_coef = j.value("value_coef", d.value_coef);
  h.rollout_length = j.value("rollout_length", d.rollout_length);
  h.num_envs = j.value("num_envs", d.num_envs);
  h.max_grad_norm = j.value("max_grad_norm", d.max_grad_norm);
}

template <class T>
LossTerms<T> ppo_loss(const PolicyHeads<T>& heads, const ad::Tensor<T>& actions, std::span<const double> old_log_probs,
                      std::span<const double> advantages, std::span<const double> returns, const PPOHypers& hypers) {
  ad::Graph<T>& g = *heads.value.graph;
  const int b = heads.value.shape()[0];
  if (static_cast<int>(old_log_probs.size()) != b || static_cast<int>(advantages.size()) != b ||
      static_cast<int>(returns.size()) != b) {
    throw std::invalid_argument("ppo_loss: minibatch arrays disagree with batch size");
  }
  auto column = [&](std::span<const double> v) {
    ad::Tensor<T> t({b});
    for (int i = 0; i < b; ++i) t[i] = static_cast<T>(v[i]);
    return g.constant(std::move(t));
  };

  auto new_lp = log_prob(heads, actions);
  auto ratio = ad::exp(ad::sub(new_lp, column(old_log_probs)));
  auto adv = column(advantages);
  auto surrogate = ad::minimum(ad::mul(ratio, adv), ad::mul(ad::clamp(ratio, 1.0 - hypers.clip_eps, 1.0 + hypers.clip_eps), adv));
  auto policy_loss = ad::scale(ad::mean(surrogate), -1.0);
  auto value_loss = ad::mean(ad::square(ad::sub(heads.value, column(returns))));
  auto ent = ad::mean(entropy(heads));
  auto total = ad::add(policy_loss, ad::scale(value_loss, hypers.value_coef));
  total = ad::sub(total, ad::scale(ent, hypers.entropy_coef));

  LossTerms<T> out;
  out.total = total;
  out.policy_loss = policy_loss.value()[0];
  out.value_loss = value_loss.value()[0];
  out.entropy = ent.value()[0];
  int clipped = 0;
  double kl = 0;
  const auto& r = ratio.value();
  for (int i = 0; i < b; ++i) {
    const double rho = r[i];
    if (std::abs(rho - 1.0) > hypers.clip_eps) ++clipped;
    kl += (rho - 1.0) - std::log(rho);
  }
  out.clip_fraction = static_cast<double>(clipped) / b;
  out.approx_kl = kl / b;
  return out;
}

namespace {

double mean_abs(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += std::abs(x);
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

template <class T>
LossReport ppo_update(ActorCritic<T>& policy, ad::OptimState<T>& optim, RolloutBatch& batch, const PPOHypers& hypers,
                      std::mt19937_64& rng) {
  const std::size_t n = batch.size();
  if (batch.advantages.size() != n || batch.returns.size() != n) {
    throw std::invalid_argument("ppo_update: advantages not computed");
  }
  normalize(batch.advantages);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  LossReport report;
  int passes = 0;
  std::vector<const PolicyInput*> inputs;
  std::vector<double> old_lp, adv, ret;
  for (int epoch = 0; epoch < hypers.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int m = 0; m < hypers.minibatches; ++m) {
      const std::size_t begin = n * m / hypers.minibatches;
      const std::size_t end = n * (m + 1) / hypers.minibatches;
      const int b = static_cast<int>(end - begin);
      inputs.clear();
      old_lp.clear();
      adv.clear();
      ret.clear();
      ad::Tensor<T> actions({b, 4});
      for (std::size_t j = begin; j < end; ++j) {
        const std::size_t k = order[j];
        const int row = static_cast<int>(j - begin);
        inputs.push_back(&batch.inputs[k]);
        old_lp.push_back(batch.log_probs[k]);
        adv.push_back(batch.advantages[k]);
        ret.push_back(batch.returns[k]);
        for (int d = 0; d < 3; ++d) actions[row * 4 + d] = static_cast<T>(batch.actions[k].arm[d]);
        actions[row * 4 + 3] = static_cast<T>(batch.actions[k].gripper);
      }

      ad::Graph<T> graph;
      const auto pb = make_policy_batch<T>(policy.config(), inputs);
      const auto heads = policy.forward(graph, pb);
      const auto terms = ppo_loss(heads, actions, old_lp, adv, ret, hypers);
      const double total = terms.total.value()[0];
      if (!std::isfinite(total)) {
        throw NonFiniteLoss("ppo_update: non-finite loss at epoch " + std::to_string(epoch) + ", minibatch " +
                                std::to_string(m),
                            {{"epoch", epoch},
                             {"minibatch", m},
                             {"policy_loss", terms.policy_loss},
                             {"value_loss", terms.value_loss},
                             {"entropy", terms.entropy},
                             {"approx_kl", terms.approx_kl},
                             {"mean_abs_advantage", mean_abs(adv)},
                             {"mean_abs_return", mean_abs(ret)},
                             {"mean_abs_old_log_prob", mean_abs(old_lp)},
                             {"optimizer_step", optim.step}});
      }
      policy.params().zero_grad();
      graph.backward(terms.total);
      const double norm = ad::adam_step(policy.params(), optim);
      if (!std::isfinite(norm)) {
        throw NonFiniteLoss("ppo_update: non-finite gradient norm", {{"epoch", epoch}, {"minibatch", m}, {"loss", total}});
      }
      report.policy_loss += terms.policy_loss;
      report.value_loss += terms.value_loss;
      report.entropy += terms.entropy;
      report.clip_fraction += terms.clip_fraction;
      report.approx_kl += terms.approx_kl;
      report.grad_norm += norm;
      ++passes;
    }
  }
  for (double* v : {&report.policy_loss, &report.value_loss, &report.entropy, &report.clip_fraction,
                    &report.approx_kl, &report.grad_norm}) {
    *v /= passes;
  }
  return report;
}

namespace {

nlohmann::json maybe(double v, bool present) { return present ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

template <class T>
TrainResult train(const TrainConfig& config) {
  config.hypers.validate();
  if (!config.env_factory) throw std::invalid_argument("train: no environment factory");
  std::filesystem::create_directories(config.out_dir);
  const EnvFactory& eval_factory = config.eval_env_factory ? config.eval_env_factory : config.env_factory;

  // Large per-minibatch buffers would otherwise be returned to the OS and
  // page-faulted back in on every pass.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  TrainResult result;
  result.metrics_path = config.out_dir / "metrics.jsonl";
  result.best_checkpoint = config.out_dir / "best.ckpt";
  result.last_checkpoint = config.out_dir / "last.ckpt";
  std::ofstream metrics(result.metrics_path, std::ios::trunc);
  if (!metrics) throw std::runtime_error("train: cannot write " + result.metrics_path.string());

  ActorCritic<T> policy(config.policy, config.seed);
  ad::OptimState<T> optim;
  optim.config.lr = config.hypers.lr;
  optim.config.max_grad_norm = config.hypers.max_grad_norm;
  RolloutCollector<T> collector(config.env_factory, config.hypers.num_envs, config.seed,
                                config.deterministic ? 1 : config.threads);
  std::mt19937_64 sample_rng(config.seed ^ 0x5A4D'504C'4553ULL);
  std::mt19937_64 shuffle_rng(config.seed ^ 0x5348'5546'464CULL);

  auto manifest = [&](const std::string& tag, double success) {
    nlohmann::json m = config.manifest;
    m["seed"] = config.seed;
    m["hypers"] = config.hypers;
    m["checkpoint"] = tag;
    m["update"] = result.updates;
    m["step"] = collector.total_steps();
    m["eval_success"] = maybe(success, success >= 0);
    return m;
  };
  save_policy(result.best_checkpoint, policy, manifest("initial", -1));

  const auto t0 = std::chrono::steady_clock::now();
  auto emit = [&](nlohmann::json line) {
    line["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics << line.dump() << '\n';
    metrics.flush();
    if (config.on_metrics) config.on_metrics(line);
  };

  while (collector.total_steps() < config.step_budget) {
    EpisodeStats stats;
    RolloutBatch batch = collector.collect(policy, config.hypers.rollout_length, sample_rng, &stats);
    compute_advantages(batch, config.hypers);
    LossReport report;
    try {
      report = ppo_update(policy, optim, batch, config.hypers, shuffle_rng);
    } catch (const NonFiniteLoss& e) {
      nlohmann::json dump = e.diagnostic();
      dump["message"] = e.what();
      dump["update"] = result.updates + 1;
      dump["step"] = collector.total_steps();
      std::ofstream(config.out_dir / "diagnostic.json") << dump.dump(2) << '\n';
      throw;
    }
    result.updates += 1;
    const bool have_episodes = stats.episodes > 0;
    emit({{"kind", "update"},
          {"step", collector.total_steps()},
          {"update", result.updates},
          {"mean_return", maybe(have_episodes ? stats.return_sum / stats.episodes : 0.0, have_episodes)},
          {"success_rate", maybe(have_episodes ? static_cast<double>(stats.successes) / stats.episodes : 0.0, have_episodes)},
          {"policy_loss", report.policy_loss},
          {"value_loss", report.value_loss},
          {"entropy", report.entropy},
          {"clip_fraction", report.clip_fraction},
          {"approx_kl", report.approx_kl}});

    const bool last = collector.total_steps() >= config.step_budget;
    if (result.updates % config.eval_every == 0 || last) {
      const EvalResult ev = evaluate_policy(policy, eval_factory, config.eval_episodes, config.eval_seed_base);
      result.evals += 1;
      result.last_success = ev.success_rate();
      emit({{"kind", "eval"},
            {"step", collector.total_steps()},
            {"update", result.updates},
            {"mean_return", ev.mean_return},
            {"success_rate", ev.success_rate()},
            {"policy_loss", nullptr},
            {"value_loss", nullptr},
            {"entropy", nullptr},
            {"clip_fraction", nullptr},
            {"approx_kl", nullptr}});
      save_policy(result.last_checkpoint, policy, manifest("last", ev.success_rate()));
      if (ev.success_rate() >= result.best_success) {
        result.best_success = ev.success_rate();
        result.best_update = result.updates;
        save_policy(result.best_checkpoint, policy, manifest("best", ev.success_rate()));
      }
    }
  }
  result.steps = collector.total_steps();
  return result;
}

#define DOCIR_INSTANTIATE_PPO(T)                                                                                  \
  template LossTerms<T> ppo_loss<T>(const PolicyHeads<T>&, const ad::Tensor<T>&, std::span<const double>,         \
                                    std::span<const double>, std::span<const double>, const PPOHypers&);          \
  template LossReport ppo_update<T>(ActorCritic<T>&, ad::OptimState<T>&, RolloutBatch&, const PPOHypers&,         \
                                    std::mt19937_64&);                                                            \
  template TrainResult train<T>(const TrainConfig&);

DOCIR_INSTANTIATE_PPO(float)
DOCIR_INSTANTIATE_PPO(double)

}  // namespace docir
