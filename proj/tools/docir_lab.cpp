// docir_lab: train, evaluate, run suites, harvest place initial states and
// plot learning curves.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "docir/curves.hpp"
#include "docir/harness.hpp"

namespace fs = std::filesystem;
using namespace docir;

namespace {

struct TrainFlags {
  std::string config;
  std::string task, variant, repr, data_root, init_set;
  int objects = 0, eval_episodes = 0, resolution = 0, threads = 0, eval_every = 0;
  std::uint64_t seed = 0;
  long steps = 0;
  bool deterministic = false;
  PPOHypers hypers;
};

void add_hyper_flags(CLI::App* cmd, PPOHypers& h) {
  cmd->add_option("--gamma", h.gamma);
  cmd->add_option("--lambda", h.lambda);
  cmd->add_option("--clip", h.clip_eps);
  cmd->add_option("--epochs", h.epochs);
  cmd->add_option("--minibatches", h.minibatches);
  cmd->add_option("--lr", h.lr);
  cmd->add_option("--entropy-coef", h.entropy_coef);
  cmd->add_option("--value-coef", h.value_coef);
  cmd->add_option("--rollout-length", h.rollout_length);
  cmd->add_option("--num-envs", h.num_envs);
  cmd->add_option("--max-grad-norm", h.max_grad_norm);
}

RunConfig resolve_run(CLI::App* cmd, const TrainFlags& f) {
  RunConfig rc;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw std::runtime_error("cannot read config " + f.config);
    rc = nlohmann::json::parse(in).get<RunConfig>();
  }
  auto given = [&](const char* name) { return cmd->count(name) > 0; };
  if (given("--task")) rc.task = parse_task(f.task);
  if (given("--variant")) rc.variant = parse_variant(f.variant);
  if (given("--objects")) rc.objects = f.objects;
  if (given("--repr")) rc.repr = parse_repr_kind(f.repr);
  if (given("--seed")) rc.seed = f.seed;
  if (given("--steps")) rc.steps = f.steps;
  if (given("--deterministic")) rc.deterministic = f.deterministic;
  if (given("--eval-episodes")) rc.eval_episodes = f.eval_episodes;
  if (given("--resolution")) rc.resolution = f.resolution;
  if (given("--threads")) rc.threads = f.threads;
  if (given("--eval-every")) rc.eval_every = f.eval_every;
  if (given("--init-set")) rc.init_set = f.init_set;
  if (given("--data-root")) rc.data_root = f.data_root;
  if (rc.data_root.empty()) rc.data_root = default_data_root();
  const PPOHypers d;
  PPOHypers& h = rc.hypers;
  const PPOHypers& o = f.hypers;
  if (given("--gamma")) h.gamma = o.gamma;
  if (given("--lambda")) h.lambda = o.lambda;
  if (given("--clip")) h.clip_eps = o.clip_eps;
  if (given("--epochs")) h.epochs = o.epochs;
  if (given("--minibatches")) h.minibatches = o.minibatches;
  if (given("--lr")) h.lr = o.lr;
  if (given("--entropy-coef")) h.entropy_coef = o.entropy_coef;
  if (given("--value-coef")) h.value_coef = o.value_coef;
  if (given("--rollout-length")) h.rollout_length = o.rollout_length;
  if (given("--num-envs")) h.num_envs = o.num_envs;
  if (given("--max-grad-norm")) h.max_grad_norm = o.max_grad_norm;
  if (rc.task == Task::place && rc.init_set.empty()) {
    rc.init_set = rc.data_root / "init_sets" / (to_string(rc.variant) + "-" + std::to_string(rc.objects) + ".json");
  }
  return rc;
}

nlohmann::json run_config_of(const fs::path& checkpoint) {
  const auto manifest = load_policy_manifest(checkpoint);
  if (!manifest.contains("run")) throw std::runtime_error("checkpoint manifest has no run configuration");
  return manifest.at("run");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disentangled object-centric representation lab"};
  app.require_subcommand(1);

  TrainFlags tf;
  auto* train_cmd = app.add_subcommand("train", "Train one policy");
  train_cmd->add_option("--config", tf.config, "JSON file mirroring the flags");
  train_cmd->add_option("--task", tf.task)->check(CLI::IsMember({"pick", "place"}));
  train_cmd->add_option("--variant", tf.variant)->check(CLI::IsMember({"fixed", "varying"}));
  train_cmd->add_option("--objects", tf.objects)->check(CLI::IsMember({3, 5, 7, 9}));
  train_cmd->add_option("--repr", tf.repr)
      ->check(CLI::IsMember({"docir", "ocr", "flat", "ablation-a", "ablation-b", "ablation-c"}));
  train_cmd->add_option("--seed", tf.seed);
  train_cmd->add_option("--steps", tf.steps);
  train_cmd->add_flag("--deterministic", tf.deterministic, "Single-threaded, bit-reproducible");
  train_cmd->add_option("--eval-episodes", tf.eval_episodes);
  train_cmd->add_option("--eval-every", tf.eval_every);
  train_cmd->add_option("--resolution", tf.resolution);
  train_cmd->add_option("--threads", tf.threads);
  train_cmd->add_option("--init-set", tf.init_set);
  train_cmd->add_option("--data-root", tf.data_root);
  add_hyper_flags(train_cmd, tf.hypers);

  std::string ckpt, ood;
  int episodes = 100, count = 3;
  auto* eval_cmd = app.add_subcommand("eval", "Deterministic evaluation of a checkpoint");
  eval_cmd->add_option("--checkpoint", ckpt)->required();
  eval_cmd->add_option("--episodes", episodes);
  eval_cmd->add_option("--ood", ood)->check(CLI::IsMember({"recolor", "distractors"}));
  eval_cmd->add_option("--count", count, "Distractor count for --ood distractors");

  std::string preset, suite_dir, suite_root;
  int seeds = 3, max_runs = 0;
  auto* suite_cmd = app.add_subcommand("suite", "Run a preset matrix (resumable)");
  suite_cmd->add_option("--preset", preset)->required();
  suite_cmd->add_option("--seeds", seeds);
  suite_cmd->add_option("--max-runs", max_runs, "Train at most this many new runs");
  suite_cmd->add_option("--suite-dir", suite_dir);
  suite_cmd->add_option("--data-root", suite_root);
  suite_cmd->add_option("--episodes", episodes, "Episodes per OOD evaluation");
  suite_cmd->add_option("--count", count, "Distractors for the ood preset");

  int harvest_n = 200;
  std::string harvest_out;
  auto* harvest_cmd = app.add_subcommand("harvest", "Collect pick terminal states for place episodes");
  harvest_cmd->add_option("--checkpoint", ckpt)->required();
  harvest_cmd->add_option("--n", harvest_n);
  harvest_cmd->add_option("--out", harvest_out);

  std::string curves_in, curves_out, field = "success_rate";
  int window = 50;
  auto* curves_cmd = app.add_subcommand("curves", "Learning curves from metrics streams");
  curves_cmd->add_option("--in", curves_in, "Glob over metrics.jsonl files")->required();
  curves_cmd->add_option("--out", curves_out, "Output prefix")->required();
  curves_cmd->add_option("--window", window);
  curves_cmd->add_option("--field", field);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const RunConfig rc = resolve_run(train_cmd, tf);
      const RunOutcome o = run_training(rc, &std::cout);
      std::cout << "best checkpoint " << o.train.best_checkpoint.string() << "\nsuccess_rate "
                << o.final_eval.success_rate() << " (" << o.final_eval.successes << "/" << o.final_eval.episodes
                << ")\n";
    } else if (*eval_cmd) {
      const RunConfig rc = run_config_of(ckpt).get<RunConfig>();
      SceneConfig scene = rc.scene();
      if (ood == "recolor") scene = ood_recolor(scene);
      if (ood == "distractors") scene = add_distractors(scene, count);
      std::shared_ptr<const InitStateSet> init;
      if (rc.task == Task::place) init = load_init_set(rc.init_set);
      const EvalResult r = evaluate(ckpt, scene, rc.task, episodes, init, rc.repr);
      std::cout << "success_rate " << r.success_rate() << " (" << r.successes << "/" << r.episodes << ")"
                << " mean_return " << r.mean_return << "\n";
    } else if (*suite_cmd) {
      const fs::path root = suite_root.empty() ? default_data_root() : fs::path(suite_root);
      if (preset_warns(preset)) {
        std::cerr << "warning: preset '" << preset << "' trains 144 runs of 10M steps each; "
                  << "expect weeks of CPU time\n";
      }
      const auto matrix = suite_preset(preset, root, seeds);
      SuiteOptions opts;
      opts.suite_dir = suite_dir.empty() ? root / "suites" / preset : fs::path(suite_dir);
      opts.expected_seeds = seeds;
      opts.max_new_runs = max_runs;
      const SuiteReport rep = run_suite(matrix, opts, &std::cout);
      std::cout << "trained " << rep.trained << ", skipped " << rep.skipped << "\n";
      for (const auto& c : rep.cells) {
        std::cout << to_string(c.task) << " " << to_string(c.variant) << " " << c.objects << " " << to_string(c.repr)
                  << ": " << c.per_seed.size() << "/" << c.expected_seeds << " seeds";
        if (auto m = c.mean()) std::cout << ", mean " << *m;
        else std::cout << " (partial)";
        std::cout << "\n";
      }
      if (preset == "ood") run_ood_suite(matrix, opts, episodes, count, &std::cout);
      std::cout << "results in " << opts.suite_dir.string() << "\n";
    } else if (*harvest_cmd) {
      const RunConfig rc = run_config_of(ckpt).get<RunConfig>();
      ActorCritic<float> policy = load_policy<float>(ckpt);
      const SceneConfig scene = rc.scene();
      StatePolicy act = [&](const Observation& obs, const SceneState& s) {
        const PolicyInput in = PolicyInput::from(obs, s.registry(), {s.target_id}, true);
        const PolicyInput* ptr = &in;
        std::vector<ActionDist> d;
        std::vector<double> v;
        policy.act(std::span(&ptr, 1), d, v);
        return deterministic(d[0]);
      };
      const InitStateSet set = harvest_pick_terminals(act, scene, harvest_n);
      const fs::path out = harvest_out.empty()
                               ? rc.data_root / "init_sets" / (to_string(rc.variant) + "-" + std::to_string(rc.objects) + ".json")
                               : fs::path(harvest_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      save_init_states(out.string(), set);
      std::cout << "saved " << set.states.size() << " states to " << out.string() << "\n";
    } else if (*curves_cmd) {
      const auto files = expand_glob(curves_in);
      if (files.empty()) throw std::runtime_error("no files match " + curves_in);
      const CurveSet set = curves(files, curves_out, window, field);
      std::cout << "wrote " << curves_out << ".csv and " << curves_out << ".svg (" << set.size() << " methods)\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
