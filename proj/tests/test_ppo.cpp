#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "docir/autodiff/ops.hpp"
#include "docir/ppo.hpp"
#include "gae_oracle.hpp"
#include "mock_envs.hpp"

using namespace docir;
using namespace docir::testing;

namespace {

PolicyConfig proprio_policy(int dim, int hidden = 32) {
  PolicyConfig c;
  c.repr = ReprMode::make(ReprKind::proprio, 1);
  c.proprio_dim = dim;
  c.hidden = hidden;
  return c;
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("docir_ppo_" + name);
  std::filesystem::remove_all(p);
  return p;
}

std::vector<nlohmann::json> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(nlohmann::json::parse(line));
  return out;
}

TrainConfig bandit_config(const std::filesystem::path& dir, long budget, std::uint64_t seed = 3) {
  TrainConfig c;
  c.env_factory = [] { return std::make_unique<BanditEnv>(); };
  c.policy = proprio_policy(1);
  c.hypers.num_envs = 8;
  c.hypers.rollout_length = 32;
  c.hypers.minibatches = 4;
  c.hypers.lr = 3e-3;
  c.step_budget = budget;
  c.seed = seed;
  c.eval_every = 10;
  c.eval_episodes = 20;
  c.out_dir = dir;
  c.deterministic = true;
  return c;
}

// Heads built from constants so the loss can be checked against scalar formulas.
struct FixedHeads {
  ad::Graph<double> graph;
  ad::Tensor<double> mean{{4, 3}, std::vector<double>{0.1, -0.2, 0.3, 0.5, 0.0, -0.4, -0.3, 0.2, 0.1, 0.0, 0.6, -0.1}};
  ad::Tensor<double> log_std{{3}, std::vector<double>{-0.5, -0.2, 0.1}};
  ad::Tensor<double> logit{{4}, std::vector<double>{0.4, -1.0, 2.0, 0.0}};
  ad::Tensor<double> value{{4}, std::vector<double>{0.5, -0.3, 1.2, 0.0}};
  PolicyHeads<double> heads;

  FixedHeads() {
    for (auto* t : {&mean, &log_std, &logit, &value}) t->set_requires_grad(true);
    heads.arm_mean = graph.parameter(mean);
    heads.arm_log_std = ad::broadcast_rows(graph.parameter(log_std), 4);
    heads.gripper_logit = graph.parameter(logit);
    heads.value = graph.parameter(value);
  }
  ActionDist dist(int i) const {
    ActionDist d;
    for (int k = 0; k < 3; ++k) {
      d.arm_mean[k] = mean[i * 3 + k];
      d.arm_log_std[k] = log_std[k];
    }
    d.gripper_logit = logit[i];
    return d;
  }
};

}  // namespace

TEST_CASE("gae: worked examples") {
  // single terminal step: A = r - V
  auto r = gae(std::vector<double>{2.0}, std::vector<double>{0.5}, std::vector<std::uint8_t>{1}, 9.0, 0.99, 0.95);
  CHECK(r.advantages[0] == doctest::Approx(1.5));
  CHECK(r.returns[0] == doctest::Approx(2.0));
  // two steps, cut: delta1 = 1 + 0.9*4 - 2 = 2.6; delta0 = 0 + 0.9*2 - 1 = 0.8; A0 = 0.8 + 0.9*0.5*2.6
  r = gae(std::vector<double>{0.0, 1.0}, std::vector<double>{1.0, 2.0}, std::vector<std::uint8_t>{0, 0}, 4.0, 0.9, 0.5);
  CHECK(r.advantages[1] == doctest::Approx(2.6));
  CHECK(r.advantages[0] == doctest::Approx(0.8 + 0.45 * 2.6));
  CHECK(r.returns[0] == doctest::Approx(r.advantages[0] + 1.0));
  CHECK_THROWS_AS(gae(std::vector<double>{1.0}, std::vector<double>{}, std::vector<std::uint8_t>{0}, 0, 0.9, 0.9),
                  std::invalid_argument);
}

TEST_CASE("gae matches the brute-force sum on random trajectories") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 300; ++i) {
    const auto tr = random_trajectory(rng);
    const double gamma = std::uniform_real_distribution<double>(0.5, 1.0)(rng);
    const double lambda = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto got = gae(tr.rewards, tr.values, tr.dones, tr.bootstrap, gamma, lambda);
    const auto want = brute_force_advantages(tr, gamma, lambda);
    for (std::size_t k = 0; k < want.size(); ++k) {
      REQUIRE(std::abs(got.advantages[k] - want[k]) < 1e-10);
      REQUIRE(std::abs(got.returns[k] - (want[k] + tr.values[k])) < 1e-10);
    }
  }
}

TEST_CASE("gae limits: lambda = 1 gives Monte-Carlo returns, gamma = 0 gives r - V") {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 100; ++i) {
    const auto tr = random_trajectory(rng);
    const auto mc = monte_carlo_returns(tr, 0.97);
    const auto one = gae(tr.rewards, tr.values, tr.dones, tr.bootstrap, 0.97, 1.0);
    for (std::size_t k = 0; k < mc.size(); ++k) REQUIRE(std::abs(one.returns[k] - mc[k]) < 1e-10);
    // gamma must be positive for training; the recursion itself accepts 0
    const auto zero = gae(tr.rewards, tr.values, tr.dones, tr.bootstrap, 0.0, 0.95);
    for (std::size_t k = 0; k < mc.size(); ++k) REQUIRE(zero.advantages[k] == tr.rewards[k] - tr.values[k]);
  }
}

TEST_CASE("compute_advantages works env by env") {
  std::mt19937_64 rng(23);
  RolloutBatch b;
  b.num_envs = 3;
  b.horizon = 10;
  std::vector<Trajectory> trs;
  for (int e = 0; e < 3; ++e) {
    trs.push_back(random_trajectory(rng, 10, 10, 0.2));
    b.rewards.insert(b.rewards.end(), trs[e].rewards.begin(), trs[e].rewards.end());
    b.values.insert(b.values.end(), trs[e].values.begin(), trs[e].values.end());
    b.dones.insert(b.dones.end(), trs[e].dones.begin(), trs[e].dones.end());
    b.bootstrap.push_back(trs[e].bootstrap);
  }
  PPOHypers h;
  compute_advantages(b, h);
  for (int e = 0; e < 3; ++e) {
    const auto want = brute_force_advantages(trs[e], h.gamma, h.lambda);
    for (int t = 0; t < 10; ++t) CHECK(b.advantages[b.index(e, t)] == doctest::Approx(want[t]).epsilon(1e-12));
  }
}

TEST_CASE("normalize") {
  std::vector<double> v{1, 2, 3, 4};
  normalize(v);
  double mean = 0, sq = 0;
  for (double x : v) mean += x / 4;
  for (double x : v) sq += (x - mean) * (x - mean) / 4;
  CHECK(std::abs(mean) < 1e-15);
  CHECK(sq == doctest::Approx(1.0).epsilon(1e-7));
  std::vector<double> constant(5, 3.0);
  normalize(constant);
  for (double x : constant) CHECK(x == 0.0);
}

TEST_CASE("clipped surrogate loss on four transitions") {
  FixedHeads f;
  PPOHypers h;
  h.clip_eps = 0.2;
  h.value_coef = 0.5;
  h.entropy_coef = 0.01;
  const std::vector<Action> actions{{{0.2, -0.1, 0.5}, 1}, {{0.9, 0.3, -0.2}, -1}, {{-0.5, 0.1, 0.0}, 1}, {{0.0, 0.0, 0.0}, -1}};
  ad::Tensor<double> act({4, 4});
  for (int i = 0; i < 4; ++i) {
    for (int k = 0; k < 3; ++k) act[i * 4 + k] = actions[i].arm[k];
    act[i * 4 + 3] = actions[i].gripper;
  }
  // old log-probs chosen so ratios land inside and on both sides of the clip range
  const double offsets[] = {0.05, -0.6, 0.4, 0.0};
  const std::vector<double> adv{1.0, -0.5, 2.0, -1.5};
  const std::vector<double> ret{1.0, 0.0, 0.7, -0.2};
  std::vector<double> old_lp;
  for (int i = 0; i < 4; ++i) old_lp.push_back(log_prob(f.dist(i), actions[i]) + offsets[i]);

  const auto terms = ppo_loss(f.heads, act, old_lp, adv, ret, h);

  double surrogate = 0, value = 0, ent = 0, kl = 0;
  int clipped = 0;
  for (int i = 0; i < 4; ++i) {
    const double rho = std::exp(log_prob(f.dist(i), actions[i]) - old_lp[i]);
    const double clipped_rho = std::min(std::max(rho, 0.8), 1.2);
    surrogate += std::min(rho * adv[i], clipped_rho * adv[i]) / 4;
    value += (f.value[i] - ret[i]) * (f.value[i] - ret[i]) / 4;
    ent += entropy(f.dist(i)) / 4;
    kl += ((rho - 1) - std::log(rho)) / 4;
    clipped += std::abs(rho - 1) > 0.2;
  }
  CHECK(std::abs(terms.policy_loss - (-surrogate)) < 1e-10);
  CHECK(std::abs(terms.value_loss - value) < 1e-10);
  CHECK(std::abs(terms.entropy - ent) < 1e-10);
  CHECK(std::abs(terms.total.value()[0] - (-surrogate + 0.5 * value - 0.01 * ent)) < 1e-10);
  CHECK(std::abs(terms.approx_kl - kl) < 1e-12);
  CHECK(terms.clip_fraction == doctest::Approx(clipped / 4.0));
  CHECK(clipped == 2);
}

TEST_CASE("clipped samples contribute no policy gradient") {
  // with positive advantage and ratio above 1 + eps the min picks the constant branch
  FixedHeads f;
  PPOHypers h;
  h.entropy_coef = 0;
  h.value_coef = 0;
  ad::Tensor<double> act({4, 4}, 0.0);
  for (int i = 0; i < 4; ++i) act[i * 4 + 3] = 1;
  std::vector<double> old_lp;
  for (int i = 0; i < 4; ++i) old_lp.push_back(log_prob(f.dist(i), Action{{0, 0, 0}, 1}) - (i == 2 ? 0.5 : 0.0));
  const std::vector<double> adv{0.0, 0.0, 1.0, 0.0};
  const auto terms = ppo_loss(f.heads, act, old_lp, adv, std::vector<double>(4, 0.0), h);
  f.graph.backward(terms.total);
  for (double g : f.mean.grad()) CHECK(g == 0.0);
  for (double g : f.logit.grad()) CHECK(g == 0.0);

  // inside the clip range the same sample does move the policy
  FixedHeads inside;
  std::vector<double> lp2;
  for (int i = 0; i < 4; ++i) lp2.push_back(log_prob(inside.dist(i), Action{{0, 0, 0}, 1}));
  inside.graph.backward(ppo_loss(inside.heads, act, lp2, adv, std::vector<double>(4, 0.0), h).total);
  CHECK(inside.logit.grad()[2] != 0.0);
}

TEST_CASE("rollout bookkeeping with a counting environment") {
  const int n = 2;
  const int horizon = 5;
  RolloutCollector<double> collector([] { return std::make_unique<CountingEnv>(); }, n, 77);
  ActorCritic<double> policy(proprio_policy(2, 8), 1);
  std::mt19937_64 rng(5);
  EpisodeStats stats;
  const RolloutBatch a = collector.collect(policy, horizon, rng, &stats);
  CHECK(collector.total_steps() == n * horizon);
  CHECK(stats.episodes == n);
  CHECK(stats.successes == n);
  CHECK(stats.return_sum == doctest::Approx(n * 6.0));
  for (int e = 0; e < n; ++e) {
    const std::vector<double> rewards{1, 2, 3, 1, 2};
    const std::vector<std::uint8_t> dones{0, 0, 1, 0, 0};
    for (int t = 0; t < horizon; ++t) {
      const std::size_t k = a.index(e, t);
      CHECK(a.rewards[k] == rewards[t]);
      CHECK(a.dones[k] == dones[t]);
      CHECK(a.inputs[k].proprio[1] == (t < 3 ? t : t - 3));
      const long episode = t < 3 ? 0 : 1;
      CHECK(a.inputs[k].proprio[0] == static_cast<double>(episode_seed(77, e, episode) % 1000));
    }
  }
  REQUIRE(a.bootstrap.size() == n);
  // the next rollout continues the open episodes
  const RolloutBatch b = collector.collect(policy, horizon, rng, &stats);
  CHECK(b.rewards[b.index(0, 0)] == 3);
  CHECK(b.dones[b.index(0, 0)] == 1);
  CHECK(stats.episodes == 2 * n + n);
  CHECK_THROWS_AS(collector.collect(policy, 0, rng), std::invalid_argument);
}

TEST_CASE("threaded collection equals sequential collection") {
  auto factory = [] { return std::make_unique<CountingEnv>(); };
  RolloutCollector<double> seq(factory, 5, 9, 1);
  RolloutCollector<double> par(factory, 5, 9, 3);
  ActorCritic<double> policy(proprio_policy(2, 8), 1);
  std::mt19937_64 r1(1), r2(1);
  const auto a = seq.collect(policy, 7, r1);
  const auto b = par.collect(policy, 7, r2);
  CHECK(a.rewards == b.rewards);
  CHECK(a.log_probs == b.log_probs);
  CHECK(a.bootstrap == b.bootstrap);
}

TEST_CASE("stored log-probabilities match the policy that sampled") {
  RolloutCollector<double> collector([] { return std::make_unique<BanditEnv>(); }, 4, 1);
  ActorCritic<double> policy(proprio_policy(1, 8), 2);
  std::mt19937_64 rng(3);
  const auto batch = collector.collect(policy, 3, rng);
  std::vector<const PolicyInput*> in;
  for (const auto& x : batch.inputs) in.push_back(&x);
  std::vector<ActionDist> dists;
  std::vector<double> values;
  policy.act(in, dists, values);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    CHECK(batch.log_probs[k] == log_prob(dists[k], batch.actions[k]));
    CHECK(batch.values[k] == values[k]);
  }
}

TEST_CASE("evaluation is deterministic and uses the fixed seed sequence") {
  ActorCritic<double> policy(proprio_policy(2, 8), 4);
  auto factory = [] { return std::make_unique<CountingEnv>(); };
  const EvalResult a = evaluate_policy(policy, factory, 7, 100, 3);
  const EvalResult b = evaluate_policy(policy, factory, 7, 100, 5);
  CHECK(a.episodes == 7);
  CHECK(a.successes == 7);
  CHECK(a.mean_return == doctest::Approx(6.0));
  CHECK(a.mean_return == b.mean_return);
  CHECK(evaluate_policy(policy, factory, 0).episodes == 0);
}

TEST_CASE("a zero budget saves only the initial parameters") {
  const auto dir = fresh_dir("zero");
  const TrainResult r = train<double>(bandit_config(dir, 0));
  CHECK(r.updates == 0);
  CHECK(r.steps == 0);
  CHECK(std::filesystem::exists(dir / "best.ckpt"));
  CHECK_FALSE(std::filesystem::exists(dir / "last.ckpt"));
  CHECK(read_lines(dir / "metrics.jsonl").empty());
  CHECK(load_policy_manifest(dir / "best.ckpt").at("checkpoint") == "initial");
  std::filesystem::remove_all(dir);
}

TEST_CASE("metrics lines: one per update and one per evaluation") {
  const auto dir = fresh_dir("lines");
  auto cfg = bandit_config(dir, 256 * 25);
  const TrainResult r = train<double>(cfg);
  CHECK(r.updates == 25);
  CHECK(r.evals == 3);  // updates 10, 20 and the final one
  const auto lines = read_lines(dir / "metrics.jsonl");
  CHECK(static_cast<int>(lines.size()) == r.updates + r.evals);
  int evals = 0;
  for (const auto& l : lines) {
    for (const char* key : {"kind", "step", "update", "mean_return", "success_rate", "policy_loss", "value_loss",
                            "entropy", "clip_fraction", "approx_kl", "wall_time"}) {
      CHECK(l.contains(key));
    }
    if (l.at("kind") == "eval") {
      ++evals;
      CHECK(l.at("policy_loss").is_null());
    }
  }
  CHECK(evals == 3);
  CHECK(std::filesystem::exists(dir / "last.ckpt"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("training is reproducible for a fixed seed") {
  auto run = [](const std::string& name, std::uint64_t seed) {
    const auto dir = fresh_dir(name);
    train<double>(bandit_config(dir, 256 * 6, seed));
    auto lines = read_lines(dir / "metrics.jsonl");
    for (auto& l : lines) l.erase("wall_time");
    std::ifstream ck(dir / "last.ckpt", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(ck)), std::istreambuf_iterator<char>());
    std::filesystem::remove_all(dir);
    return std::pair{lines, bytes};
  };
  const auto a = run("rep_a", 8);
  const auto b = run("rep_b", 8);
  const auto c = run("rep_c", 9);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK(a.second != c.second);
}

TEST_CASE("PPO solves a one-step bandit") {
  const auto dir = fresh_dir("bandit");
  auto cfg = bandit_config(dir, 50'000);
  cfg.eval_episodes = 200;
  cfg.eval_every = 1000;
  const TrainResult r = train<double>(cfg);
  CHECK(r.last_success >= 0.99);
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-finite losses abort with a diagnostic") {
  const auto dir = fresh_dir("nan");
  auto cfg = bandit_config(dir, 1000);
  cfg.env_factory = [] { return std::make_unique<BanditEnv>(true); };
  CHECK_THROWS_AS(train<double>(cfg), NonFiniteLoss);
  REQUIRE(std::filesystem::exists(dir / "diagnostic.json"));
  std::ifstream in(dir / "diagnostic.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j.contains("message"));
  CHECK(j.at("update") == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("hyperparameter validation and JSON") {
  PPOHypers h;
  CHECK_NOTHROW(h.validate());
  nlohmann::json j = h;
  CHECK(j.at("gamma") == 0.99);
  CHECK(j.at("rollout_length") == 512);
  const PPOHypers back = nlohmann::json{{"lr", 1e-3}}.get<PPOHypers>();
  CHECK(back.lr == 1e-3);
  CHECK(back.epochs == 4);
  h.minibatches = 10'000;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
  PPOHypers g;
  g.gamma = 0;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}
