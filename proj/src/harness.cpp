#include "docir/harness.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace docir {

namespace fs = std::filesystem;

fs::path default_data_root() {
  if (const char* env = std::getenv("DOCIR_LAB_DATA"); env && *env) return env;
  return fs::current_path() / "docir_lab_data";
}

std::string RunConfig::cell_id() const {
  return to_string(task) + "-" + to_string(variant) + "-" + std::to_string(objects) + "-" + to_string(repr);
}

std::string RunConfig::run_id() const { return cell_id() + "-s" + std::to_string(seed); }

fs::path RunConfig::run_dir() const {
  return (data_root.empty() ? default_data_root() : data_root) / "runs" / run_id();
}

SceneConfig RunConfig::scene() const {
  SceneConfig s = scene_config_for_objects(objects, variant);
  s.resolution = resolution;
  return s;
}

PolicyConfig RunConfig::policy_config() const {
  PolicyConfig p;
  p.repr = ReprMode::make(repr, objects);
  p.resolution = resolution;
  p.proprio_dim = Observation::kProprioDim;
  return p;
}

void RunConfig::validate() const {
  scene().validate();
  hypers.validate();
  policy_config().validate();
  if (repr == ReprKind::proprio) throw std::invalid_argument("RunConfig: proprio-only is not a tabletop method");
  if (steps < 0) throw std::invalid_argument("RunConfig: negative step budget");
  if (eval_episodes < 1 || train_eval_episodes < 1 || eval_every < 1) {
    throw std::invalid_argument("RunConfig: evaluation counts must be positive");
  }
  if (task == Task::place && init_set.empty()) {
    throw std::invalid_argument("RunConfig: place runs need an init-set path (see `harvest`)");
  }
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"task", to_string(c.task)},
       {"variant", to_string(c.variant)},
       {"objects", c.objects},
       {"repr", to_string(c.repr)},
       {"seed", c.seed},
       {"steps", c.steps},
       {"eval_episodes", c.eval_episodes},
       {"resolution", c.resolution},
       {"hypers", c.hypers},
       {"deterministic", c.deterministic},
       {"threads", c.threads},
       {"eval_every", c.eval_every},
       {"train_eval_episodes", c.train_eval_episodes},
       {"data_root", c.data_root.string()},
       {"init_set", c.init_set.string()}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  if (j.contains("repr")) c.repr = parse_repr_kind(j.at("repr").get<std::string>());
  c.objects = j.value("objects", c.objects);
  c.seed = j.value("seed", c.seed);
  c.steps = j.value("steps", c.steps);
  c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
  c.resolution = j.value("resolution", c.resolution);
  if (j.contains("hypers")) c.hypers = j.at("hypers").get<PPOHypers>();
  c.deterministic = j.value("deterministic", c.deterministic);
  c.threads = j.value("threads", c.threads);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.train_eval_episodes = j.value("train_eval_episodes", c.train_eval_episodes);
  if (j.contains("data_root")) c.data_root = j.at("data_root").get<std::string>();
  if (j.contains("init_set")) c.init_set = j.at("init_set").get<std::string>();
}

EnvFactory tabletop_factory(const SceneConfig& scene, Task task, std::shared_ptr<const InitStateSet> init_states) {
  return [scene, task, init_states] { return std::make_unique<TabletopEnv>(scene, task, init_states); };
}

std::shared_ptr<const InitStateSet> load_init_set(const fs::path& path) {
  return std::make_shared<const InitStateSet>(load_init_states(path.string()));
}

RunOutcome run_training(const RunConfig& config, std::ostream* log) {
  config.validate();
  RunOutcome out;
  out.config = config;
  out.run_dir = config.run_dir();
  fs::create_directories(out.run_dir);
  {
    std::ofstream(out.run_dir / "run.json") << nlohmann::json(config).dump(2) << '\n';
  }

  std::shared_ptr<const InitStateSet> init;
  if (config.task == Task::place) init = load_init_set(config.init_set);
  const SceneConfig scene = config.scene();

  TrainConfig tc;
  tc.env_factory = tabletop_factory(scene, config.task, init);
  tc.policy = config.policy_config();
  tc.hypers = config.hypers;
  tc.step_budget = config.steps;
  tc.seed = config.seed;
  tc.eval_every = config.eval_every;
  tc.eval_episodes = config.train_eval_episodes;
  tc.out_dir = out.run_dir;
  tc.threads = config.threads;
  tc.deterministic = config.deterministic;
  tc.manifest = {{"run", config}, {"scene", scene}, {"task", to_string(config.task)}};
  if (log) {
    tc.on_metrics = [log, id = config.run_id()](const nlohmann::json& line) {
      if (line.at("kind") != "eval") return;
      *log << id << " step " << line.at("step").get<long>() << " update " << line.at("update").get<int>()
           << " eval success " << line.at("success_rate").get<double>() << std::endl;
    };
  }
  out.train = train<float>(tc);

  out.final_eval = evaluate(out.train.best_checkpoint, scene, config.task, config.eval_episodes, init, config.repr);
  nlohmann::json result = {{"run_id", config.run_id()},
                           {"final_success", out.final_eval.success_rate()},
                           {"final_episodes", out.final_eval.episodes},
                           {"final_mean_return", out.final_eval.mean_return},
                           {"best_train_eval_success", out.train.best_success},
                           {"best_update", out.train.best_update},
                           {"updates", out.train.updates},
                           {"steps", out.train.steps},
                           {"best_checkpoint", out.train.best_checkpoint.string()},
                           {"metrics", out.train.metrics_path.string()}};
  std::ofstream(out.run_dir / "result.json") << result.dump(2) << '\n';
  if (log) *log << config.run_id() << " final success " << out.final_eval.success_rate() << std::endl;
  return out;
}

EvalResult evaluate(const fs::path& checkpoint, const SceneConfig& scene, Task task, int episodes,
                    std::shared_ptr<const InitStateSet> init_states, std::optional<ReprKind> expected_repr) {
  ActorCritic<float> policy = load_policy<float>(checkpoint);
  const PolicyConfig& pc = policy.config();
  if (expected_repr && pc.repr.kind != *expected_repr) {
    throw std::invalid_argument("evaluate: checkpoint was trained with " + to_string(pc.repr.kind) + ", expected " +
                                to_string(*expected_repr));
  }
  if (pc.repr.uses_images() && pc.resolution != scene.resolution) {
    throw std::invalid_argument("evaluate: checkpoint resolution " + std::to_string(pc.resolution) +
                                " does not match the scene's " + std::to_string(scene.resolution));
  }
  const int scene_objects = scene.n_cubes + scene.n_plates + scene.distractor_count;
  pc.repr.validate(scene_objects);
  if (task == Task::place && !init_states) {
    const auto manifest = load_policy_manifest(checkpoint);
    const auto path = manifest.value("run", nlohmann::json::object()).value("init_set", std::string());
    if (path.empty()) throw std::invalid_argument("evaluate: place evaluation needs an init-state set");
    init_states = load_init_set(path);
  }
  return evaluate_policy(policy, tabletop_factory(scene, task, init_states), episodes, kEvalSeedBase);
}

OodResult ood_suite(const fs::path& checkpoint, const SceneConfig& base, Task task, int episodes, int distractor_count,
                    std::shared_ptr<const InitStateSet> init_states) {
  OodResult r;
  r.in_distribution = evaluate(checkpoint, base, task, episodes, init_states);
  r.recolor = evaluate(checkpoint, ood_recolor(base), task, episodes, init_states);
  r.distractors = evaluate(checkpoint, add_distractors(base, distractor_count), task, episodes, init_states);
  return r;
}

std::optional<double> ResultCell::mean() const {
  if (partial() || per_seed.empty()) return std::nullopt;
  double s = 0;
  for (double v : per_seed) s += v;
  return s / static_cast<double>(per_seed.size());
}

std::optional<double> ResultCell::median() const {
  if (partial() || per_seed.empty()) return std::nullopt;
  std::vector<double> v = per_seed;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

class FileLock {
 public:
  explicit FileLock(const fs::path& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw std::runtime_error("cannot open lock file " + path.string());
    ::flock(fd_, LOCK_EX);
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

fs::path lock_path(const fs::path& manifest) { return manifest.string() + ".lock"; }

std::string format_rate(std::optional<double> v) {
  if (!v) return "";
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << *v;
  return s.str();
}

}  // namespace

void append_manifest(const fs::path& manifest, const ManifestEntry& e) {
  if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());
  FileLock lock(lock_path(manifest));
  std::ofstream out(manifest, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + manifest.string());
  nlohmann::json j = {{"run_id", e.run_id},
                      {"config", e.config},
                      {"final_success", e.final_success},
                      {"final_episodes", e.final_episodes},
                      {"best_checkpoint", e.best_checkpoint.string()},
                      {"metrics", e.metrics.string()}};
  out << j.dump() << '\n';
}

std::vector<ManifestEntry> read_manifest(const fs::path& manifest) {
  std::vector<ManifestEntry> entries;
  if (!fs::exists(manifest)) return entries;
  FileLock lock(lock_path(manifest));
  std::ifstream in(manifest);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    ManifestEntry e;
    e.run_id = j.at("run_id").get<std::string>();
    e.config = j.at("config").get<RunConfig>();
    e.final_success = j.at("final_success").get<double>();
    e.final_episodes = j.at("final_episodes").get<int>();
    e.best_checkpoint = j.at("best_checkpoint").get<std::string>();
    e.metrics = j.at("metrics").get<std::string>();
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<ResultCell> aggregate_cells(const std::vector<RunConfig>& matrix, const std::vector<ManifestEntry>& done) {
  std::map<std::string, const ManifestEntry*> by_run;
  for (const auto& e : done) by_run[e.run_id] = &e;
  std::vector<ResultCell> cells;
  std::map<std::string, std::size_t> index;
  for (const auto& rc : matrix) {
    auto [it, fresh] = index.try_emplace(rc.cell_id(), cells.size());
    if (fresh) {
      ResultCell c;
      c.task = rc.task;
      c.variant = rc.variant;
      c.objects = rc.objects;
      c.repr = rc.repr;
      cells.push_back(c);
    }
    ResultCell& cell = cells[it->second];
    cell.expected_seeds += 1;
    if (auto d = by_run.find(rc.run_id()); d != by_run.end()) {
      cell.seeds.push_back(rc.seed);
      cell.per_seed.push_back(d->second->final_success);
      cell.run_ids.push_back(rc.run_id());
    }
  }
  return cells;
}

void write_long_csv(const fs::path& path, const std::vector<ResultCell>& cells) {
  std::ofstream out(path);
  out << "task,variant,objects,repr,seed,success_rate,run_id\n";
  for (const auto& c : cells) {
    for (std::size_t i = 0; i < c.per_seed.size(); ++i) {
      out << to_string(c.task) << ',' << to_string(c.variant) << ',' << c.objects << ',' << to_string(c.repr) << ','
          << c.seeds[i] << ',' << format_rate(c.per_seed[i]) << ',' << c.run_ids[i] << '\n';
    }
  }
}

void write_table_csv(const fs::path& path, const std::vector<ResultCell>& cells) {
  std::vector<int> counts;
  for (const auto& c : cells) {
    if (std::find(counts.begin(), counts.end(), c.objects) == counts.end()) counts.push_back(c.objects);
  }
  std::sort(counts.begin(), counts.end());
  std::vector<std::string> rows;
  std::map<std::string, std::map<int, const ResultCell*>> grid;
  for (const auto& c : cells) {
    const std::string key = to_string(c.task) + ',' + to_string(c.variant) + ',' + to_string(c.repr);
    if (!grid.contains(key)) rows.push_back(key);
    grid[key][c.objects] = &c;
  }
  std::ofstream out(path);
  out << "task,variant,repr";
  for (int n : counts) out << ",objects_" << n << ",objects_" << n << "_status";
  out << '\n';
  for (const auto& key : rows) {
    out << key;
    for (int n : counts) {
      auto it = grid[key].find(n);
      if (it == grid[key].end()) {
        out << ",,absent";
        continue;
      }
      const ResultCell& c = *it->second;
      const std::string status = c.partial() ? "partial " + std::to_string(c.per_seed.size()) + "/" +
                                                   std::to_string(c.expected_seeds)
                                             : "complete";
      out << ',' << format_rate(c.mean()) << ',' << status;
    }
    out << '\n';
  }
}

namespace {

// A completed run directory whose recorded config matches `rc` exactly.
std::optional<ManifestEntry> finished_run(const RunConfig& rc) {
  const fs::path dir = rc.run_dir();
  if (!fs::exists(dir / "result.json") || !fs::exists(dir / "run.json")) return std::nullopt;
  std::ifstream run_in(dir / "run.json");
  if (nlohmann::json::parse(run_in) != nlohmann::json(rc)) return std::nullopt;
  std::ifstream result_in(dir / "result.json");
  const auto r = nlohmann::json::parse(result_in);
  return ManifestEntry{rc.run_id(), rc, r.at("final_success").get<double>(), r.at("final_episodes").get<int>(),
                       r.at("best_checkpoint").get<std::string>(), r.at("metrics").get<std::string>()};
}

}  // namespace

SuiteReport run_suite(const std::vector<RunConfig>& matrix, const SuiteOptions& options, std::ostream* log) {
  fs::create_directories(options.suite_dir);
  const fs::path manifest = options.suite_dir / "manifest.jsonl";
  SuiteReport report;
  for (const auto& rc : matrix) {
    const auto done = read_manifest(manifest);
    const bool completed =
        std::any_of(done.begin(), done.end(), [&](const ManifestEntry& e) { return e.run_id == rc.run_id(); });
    if (completed) {
      report.skipped += 1;
      continue;
    }
    if (auto prior = finished_run(rc)) {
      // trained earlier by another suite sharing the data root
      if (log) *log << "reusing " << rc.run_id() << std::endl;
      append_manifest(manifest, *prior);
      report.skipped += 1;
      continue;
    }
    if (options.max_new_runs > 0 && report.trained >= options.max_new_runs) continue;
    if (log) *log << "training " << rc.run_id() << " for " << rc.steps << " steps" << std::endl;
    const RunOutcome o = run_training(rc, log);
    append_manifest(manifest, {rc.run_id(), rc, o.final_eval.success_rate(), o.final_eval.episodes,
                               o.train.best_checkpoint, o.train.metrics_path});
    report.trained += 1;
  }
  report.cells = aggregate_cells(matrix, read_manifest(manifest));
  write_long_csv(options.suite_dir / "results_long.csv", report.cells);
  write_table_csv(options.suite_dir / "table.csv", report.cells);
  return report;
}

namespace {

RunConfig base_run(const fs::path& root, Task task, TargetVariant variant, int objects, ReprKind repr,
                   std::uint64_t seed, long steps) {
  RunConfig r;
  r.task = task;
  r.variant = variant;
  r.objects = objects;
  r.repr = repr;
  r.seed = seed;
  r.steps = steps;
  r.data_root = root;
  if (task == Task::place) {
    r.init_set = root / "init_sets" / (to_string(variant) + "-" + std::to_string(objects) + ".json");
  }
  return r;
}

}  // namespace

bool preset_warns(const std::string& name) { return name == "full"; }

std::vector<RunConfig> suite_preset(const std::string& name, const fs::path& root, int seeds) {
  constexpr long kPickSteps = 1'000'000;
  constexpr long kPlaceSteps = 1'500'000;
  constexpr long kFullSteps = 10'000'000;
  std::vector<RunConfig> m;
  auto add_seeds = [&](Task t, TargetVariant v, int n, ReprKind r, long steps) {
    for (int s = 0; s < seeds; ++s) m.push_back(base_run(root, t, v, n, r, static_cast<std::uint64_t>(s), steps));
  };
  const auto fixed = TargetVariant::fixed_target;
  const auto varying = TargetVariant::varying_target;

  if (name == "smoke") {
    for (ReprKind r : {ReprKind::docir, ReprKind::ocr}) {
      for (int s = 0; s < seeds; ++s) {
        RunConfig rc = base_run(root, Task::pick, fixed, 3, r, static_cast<std::uint64_t>(s), 512);
        rc.hypers.num_envs = 2;
        rc.hypers.rollout_length = 64;
        rc.hypers.minibatches = 2;
        rc.hypers.epochs = 1;
        rc.eval_episodes = 4;
        rc.train_eval_episodes = 2;
        m.push_back(rc);
      }
    }
  } else if (name == "paper-table1-desk") {
    add_seeds(Task::pick, fixed, 3, ReprKind::docir, kPickSteps);
    for (ReprKind r : {ReprKind::docir, ReprKind::ocr, ReprKind::flat}) add_seeds(Task::pick, varying, 5, r, kPickSteps);
  } else if (name == "ablations") {
    for (ReprKind r : {ReprKind::docir, ReprKind::ablation_a, ReprKind::ablation_b, ReprKind::ablation_c}) {
      add_seeds(Task::pick, varying, 5, r, kPickSteps);
    }
  } else if (name == "ood") {
    add_seeds(Task::pick, fixed, 3, ReprKind::docir, kPickSteps);
  } else if (name == "full") {
    for (Task t : {Task::pick, Task::place}) {
      for (TargetVariant v : {fixed, varying}) {
        for (int n : {3, 5, 7, 9}) {
          for (ReprKind r : {ReprKind::docir, ReprKind::ocr, ReprKind::flat}) add_seeds(t, v, n, r, kFullSteps);
        }
      }
    }
  } else if (name == "table1-desk-place") {
    for (TargetVariant v : {fixed, varying}) {
      for (ReprKind r : {ReprKind::docir, ReprKind::ocr, ReprKind::flat}) add_seeds(Task::place, v, 3, r, kPlaceSteps);
    }
  } else {
    throw std::invalid_argument("unknown preset '" + name +
                                "' (smoke, paper-table1-desk, table1-desk-place, ablations, ood, full)");
  }
  return m;
}

std::vector<OodRow> run_ood_suite(const std::vector<RunConfig>& matrix, const SuiteOptions& options, int episodes,
                                  int distractor_count, std::ostream* log) {
  const auto done = read_manifest(options.suite_dir / "manifest.jsonl");
  std::vector<OodRow> rows;
  for (const auto& rc : matrix) {
    if (rc.repr != ReprKind::docir || rc.task != Task::pick) continue;
    auto it = std::find_if(done.begin(), done.end(), [&](const ManifestEntry& e) { return e.run_id == rc.run_id(); });
    if (it == done.end()) continue;
    OodRow row{rc.run_id(), ood_suite(it->best_checkpoint, rc.scene(), rc.task, episodes, distractor_count)};
    if (log) {
      *log << row.run_id << " in-dist " << row.result.in_distribution.success_rate() << " recolor "
           << row.result.recolor.success_rate() << " distractors " << row.result.distractors.success_rate()
           << std::endl;
    }
    rows.push_back(std::move(row));
  }
  std::ofstream out(options.suite_dir / "ood.csv");
  out << "run_id,in_distribution,recolor,distractors,recolor_retention,distractor_retention\n";
  for (const auto& r : rows) {
    const double base = r.result.in_distribution.success_rate();
    auto retention = [&](double v) { return base > 0 ? format_rate(v / base) : std::string(); };
    out << r.run_id << ',' << format_rate(base) << ',' << format_rate(r.result.recolor.success_rate()) << ','
        << format_rate(r.result.distractors.success_rate()) << ',' << retention(r.result.recolor.success_rate()) << ','
        << retention(r.result.distractors.success_rate()) << '\n';
  }
  return rows;
}

}  // namespace docir
