// Experiment orchestration: single runs, checkpoint evaluation, resumable
// suites over task/variant/object-count/representation grids, and the
// out-of-distribution checks.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "docir/ppo.hpp"

namespace docir {

/// $DOCIR_LAB_DATA if set, else ./docir_lab_data.
std::filesystem::path default_data_root();

struct RunConfig {
  Task task = Task::pick;
  TargetVariant variant = TargetVariant::fixed_target;
  int objects = 3;  // 3, 5, 7 or 9 (cubes + plates)
  ReprKind repr = ReprKind::docir;
  std::uint64_t seed = 0;
  long steps = 1'000'000;
  int eval_episodes = 100;
  int resolution = 48;
  PPOHypers hypers;
  bool deterministic = false;
  int threads = 1;
  int eval_every = 20;
  int train_eval_episodes = 32;
  std::filesystem::path data_root;
  /// Required for place runs.
  std::filesystem::path init_set;

  std::string cell_id() const;  // e.g. pick-fixed-3-docir
  std::string run_id() const;   // cell_id plus -s<seed>
  std::filesystem::path run_dir() const;
  SceneConfig scene() const;
  PolicyConfig policy_config() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, RunConfig& c);

EnvFactory tabletop_factory(const SceneConfig& scene, Task task, std::shared_ptr<const InitStateSet> init_states);
std::shared_ptr<const InitStateSet> load_init_set(const std::filesystem::path& path);

struct RunOutcome {
  RunConfig config;
  TrainResult train;
  EvalResult final_eval;
  std::filesystem::path run_dir;
};

/// Trains, then evaluates the best checkpoint on config.eval_episodes
/// deterministic episodes. Writes run.json and result.json in the run dir.
RunOutcome run_training(const RunConfig& config, std::ostream* log = nullptr);

/// Deterministic evaluation of a saved policy on the shared seed sequence.
/// Throws if the checkpoint's representation or resolution disagrees with
/// `expected_repr` / the scene.
EvalResult evaluate(const std::filesystem::path& checkpoint, const SceneConfig& scene, Task task, int episodes,
                    std::shared_ptr<const InitStateSet> init_states = nullptr,
                    std::optional<ReprKind> expected_repr = std::nullopt);

struct OodResult {
  EvalResult in_distribution;
  EvalResult recolor;
  EvalResult distractors;
};

OodResult ood_suite(const std::filesystem::path& checkpoint, const SceneConfig& base, Task task, int episodes = 100,
                    int distractor_count = 3, std::shared_ptr<const InitStateSet> init_states = nullptr);

struct ResultCell {
  Task task = Task::pick;
  TargetVariant variant = TargetVariant::fixed_target;
  int objects = 0;
  ReprKind repr = ReprKind::docir;
  int expected_seeds = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_seed;
  std::vector<std::string> run_ids;

  bool partial() const { return static_cast<int>(per_seed.size()) < expected_seeds; }
  /// Mean over completed seeds; nullopt for partial cells.
  std::optional<double> mean() const;
  std::optional<double> median() const;
};

/// One line of the append-only suite manifest.
struct ManifestEntry {
  std::string run_id;
  RunConfig config;
  double final_success = 0;
  int final_episodes = 0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path metrics;
};

void append_manifest(const std::filesystem::path& manifest, const ManifestEntry& entry);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest);

/// Groups runs by cell in first-seen order.
std::vector<ResultCell> aggregate_cells(const std::vector<RunConfig>& matrix, const std::vector<ManifestEntry>& done);

void write_long_csv(const std::filesystem::path& path, const std::vector<ResultCell>& cells);
/// Rows are (task, variant, representation); columns are object counts.
void write_table_csv(const std::filesystem::path& path, const std::vector<ResultCell>& cells);

struct SuiteOptions {
  std::filesystem::path suite_dir;
  int expected_seeds = 3;
  /// Stop after this many newly trained runs (0 = no limit).
  int max_new_runs = 0;
};

struct SuiteReport {
  std::vector<ResultCell> cells;
  int trained = 0;
  int skipped = 0;
};

/// Trains every run of the matrix not yet in the suite manifest, then emits
/// results_long.csv and table.csv in the suite directory.
SuiteReport run_suite(const std::vector<RunConfig>& matrix, const SuiteOptions& options, std::ostream* log = nullptr);

/// Named run matrices: smoke, paper-table1-desk, ablations, ood, full.
std::vector<RunConfig> suite_preset(const std::string& name, const std::filesystem::path& data_root, int seeds = 3);
bool preset_warns(const std::string& name);

/// For each DOCIR pick run of the matrix present in the manifest, evaluates
/// its best checkpoint in-distribution, recolored and with distractors.
/// Writes ood.csv in the suite directory.
struct OodRow {
  std::string run_id;
  OodResult result;
};
std::vector<OodRow> run_ood_suite(const std::vector<RunConfig>& matrix, const SuiteOptions& options, int episodes,
                                  int distractor_count, std::ostream* log = nullptr);

}  // namespace docir
