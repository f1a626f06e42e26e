#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "docir/curves.hpp"
#include "docir/harness.hpp"

using namespace docir;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("docir_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::string> read_rows(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) rows.push_back(line);
  return rows;
}

void write_metrics(const fs::path& path, const std::vector<double>& values, long step0 = 100) {
  std::ofstream out(path);
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << nlohmann::json{{"kind", "update"}, {"step", step0 * static_cast<long>(i + 1)}, {"success_rate", values[i]}}
               .dump()
        << '\n';
    // evaluation lines and nulls are skipped by the reader
    out << nlohmann::json{{"kind", "eval"}, {"step", 1}, {"success_rate", 99.0}}.dump() << '\n';
  }
  out << nlohmann::json{{"kind", "update"}, {"step", 1}, {"success_rate", nullptr}}.dump() << '\n';
}

ManifestEntry entry_for(const RunConfig& rc, double success) {
  return {rc.run_id(), rc, success, 100, "best.ckpt", "metrics.jsonl"};
}

}  // namespace

TEST_CASE("run identifiers and JSON") {
  RunConfig rc;
  rc.variant = TargetVariant::varying_target;
  rc.objects = 5;
  rc.repr = ReprKind::ablation_b;
  rc.seed = 2;
  rc.data_root = "/tmp/lab";
  CHECK(rc.cell_id() == "pick-varying-5-ablation-b");
  CHECK(rc.run_id() == "pick-varying-5-ablation-b-s2");
  CHECK(rc.run_dir() == fs::path("/tmp/lab/runs/pick-varying-5-ablation-b-s2"));
  CHECK(rc.scene().n_cubes == 3);
  CHECK(rc.policy_config().repr.stacks_per_view() == 2);

  const nlohmann::json j = rc;
  CHECK(nlohmann::json(j.get<RunConfig>()) == j);
  const RunConfig partial = nlohmann::json{{"objects", 7}, {"repr", "ocr"}}.get<RunConfig>();
  CHECK(partial.objects == 7);
  CHECK(partial.repr == ReprKind::ocr);
  CHECK(partial.steps == 1'000'000);
  CHECK(partial.hypers.rollout_length == 512);
}

TEST_CASE("run validation") {
  RunConfig rc;
  CHECK_NOTHROW(rc.validate());
  rc.task = Task::place;
  CHECK_THROWS_AS(rc.validate(), std::invalid_argument);
  rc.init_set = "sets/place.json";
  CHECK_NOTHROW(rc.validate());
  RunConfig bad;
  bad.objects = 4;
  CHECK_THROWS(bad.validate());
  bad = RunConfig{};
  bad.repr = ReprKind::proprio;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("aggregation groups seeds into cells and flags partial cells") {
  const auto matrix = suite_preset("ood", "/tmp/x", 3);
  REQUIRE(matrix.size() == 3);
  auto matrix2 = matrix;
  for (auto& rc : matrix2) rc.repr = ReprKind::ocr;
  std::vector<RunConfig> all = matrix;
  all.insert(all.end(), matrix2.begin(), matrix2.end());

  std::vector<ManifestEntry> done{entry_for(all[0], 0.5), entry_for(all[1], 0.9), entry_for(all[2], 0.6),
                                  entry_for(all[3], 0.2), entry_for(all[5], 0.4)};
  const auto cells = aggregate_cells(all, done);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].repr == ReprKind::docir);
  CHECK_FALSE(cells[0].partial());
  CHECK(*cells[0].mean() == doctest::Approx((0.5 + 0.9 + 0.6) / 3));
  CHECK(*cells[0].median() == doctest::Approx(0.6));
  CHECK(cells[1].partial());
  CHECK_FALSE(cells[1].mean());
  CHECK(cells[1].seeds == std::vector<std::uint64_t>{0, 2});

  const auto dir = fresh_dir("aggregate");
  write_table_csv(dir / "table.csv", cells);
  const auto rows = read_rows(dir / "table.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "task,variant,repr,objects_3,objects_3_status");
  CHECK(rows[1] == "pick,fixed,docir,0.6667,complete");
  CHECK(rows[2] == "pick,fixed,ocr,,partial 2/3");
  write_long_csv(dir / "long.csv", cells);
  CHECK(read_rows(dir / "long.csv").size() == 1 + 5);
  fs::remove_all(dir);
}

TEST_CASE("manifest round-trip") {
  const auto dir = fresh_dir("manifest");
  RunConfig rc;
  rc.seed = 4;
  append_manifest(dir / "m.jsonl", entry_for(rc, 0.25));
  rc.seed = 5;
  append_manifest(dir / "m.jsonl", entry_for(rc, 0.75));
  const auto back = read_manifest(dir / "m.jsonl");
  REQUIRE(back.size() == 2);
  CHECK(back[1].run_id == "pick-fixed-3-docir-s5");
  CHECK(back[1].final_success == 0.75);
  CHECK(back[1].config.seed == 5);
  CHECK(read_manifest(dir / "missing.jsonl").empty());
  fs::remove_all(dir);
}

TEST_CASE("presets") {
  CHECK(suite_preset("paper-table1-desk", "/r").size() == 12);
  CHECK(suite_preset("ablations", "/r").size() == 12);
  const auto full = suite_preset("full", "/r");
  CHECK(full.size() == 144);
  CHECK(full.front().steps == 10'000'000);
  CHECK(preset_warns("full"));
  CHECK_FALSE(preset_warns("smoke"));
  const auto place = suite_preset("table1-desk-place", "/r", 1);
  CHECK(place.front().init_set == fs::path("/r/init_sets/fixed-3.json"));
  CHECK_THROWS_AS(suite_preset("nope", "/r"), std::invalid_argument);
}

TEST_CASE("smoke suite trains, resumes and evaluates") {
  const auto root = fresh_dir("smoke");
  const auto matrix = suite_preset("smoke", root, 1);
  REQUIRE(matrix.size() == 2);
  SuiteOptions opt{root / "suite", 1, 1};
  std::ostringstream log;
  const SuiteReport first = run_suite(matrix, opt, &log);
  CHECK(first.trained == 1);
  CHECK(first.skipped == 0);
  REQUIRE(first.cells.size() == 2);
  CHECK_FALSE(first.cells[0].partial());
  CHECK(first.cells[1].partial());

  opt.max_new_runs = 0;
  const SuiteReport second = run_suite(matrix, opt, &log);
  CHECK(second.trained == 1);
  CHECK(second.skipped == 1);
  CHECK_FALSE(second.cells[1].partial());
  const SuiteReport third = run_suite(matrix, opt, &log);
  CHECK(third.trained == 0);
  CHECK(third.skipped == 2);
  // another suite over the same data root reuses the finished runs
  const SuiteReport shared = run_suite(matrix, SuiteOptions{root / "other", 1, 0}, &log);
  CHECK(shared.trained == 0);
  CHECK(shared.skipped == 2);
  CHECK(read_manifest(root / "other" / "manifest.jsonl").size() == 2);

  const auto docir_run = matrix[0].run_dir();
  for (const char* f : {"run.json", "result.json", "metrics.jsonl", "best.ckpt", "best.ckpt.manifest.json"}) {
    CHECK(fs::exists(docir_run / f));
  }
  CHECK(read_rows(root / "suite" / "table.csv").size() == 3);

  // zero distractors reproduces the in-distribution evaluation
  const auto ood = ood_suite(docir_run / "best.ckpt", matrix[0].scene(), Task::pick, 6, 0);
  CHECK(ood.distractors.successes == ood.in_distribution.successes);
  CHECK(ood.distractors.mean_return == ood.in_distribution.mean_return);
  CHECK(ood.recolor.episodes == 6);
  // a checkpoint evaluated as the wrong method is refused
  CHECK_THROWS_AS(evaluate(docir_run / "best.ckpt", matrix[0].scene(), Task::pick, 2, nullptr, ReprKind::ocr),
                  std::invalid_argument);
  SceneConfig other_res = matrix[0].scene();
  other_res.resolution = 32;
  CHECK_THROWS_AS(evaluate(docir_run / "best.ckpt", other_res, Task::pick, 2), std::invalid_argument);

  const auto rows = run_ood_suite(matrix, opt, 4, 3);
  CHECK(rows.size() == 1);
  CHECK(read_rows(root / "suite" / "ood.csv").size() == 2);
  fs::remove_all(root);
}

TEST_CASE("rolling means") {
  Series constant;
  for (int i = 0; i < 10; ++i) {
    constant.steps.push_back(i);
    constant.values.push_back(0.4);
  }
  const Series r = rolling_mean(constant, 3);
  CHECK(r.values.size() == 8);
  for (double v : r.values) CHECK(v == doctest::Approx(0.4));
  CHECK(r.steps.front() == 2);

  Series shortish{{1, 2}, {0.2, 0.6}};
  const Series c = rolling_mean(shortish, 5);
  REQUIRE(c.values.size() == 1);
  CHECK(c.values[0] == doctest::Approx(0.4));
  CHECK(c.steps[0] == 2);
  CHECK_THROWS(rolling_mean(shortish, 0));
}

TEST_CASE("seed aggregation matches a pointwise oracle") {
  const std::vector<Series> seeds{{{1, 2, 3, 4}, {0.1, 0.5, 0.2, 0.9}},
                                  {{1, 2, 3}, {0.3, 0.1, 0.4}},
                                  {{1, 2, 3, 4, 5}, {0.2, 0.2, 0.9, 0.0, 1.0}}};
  const CurveBand band = aggregate_seeds(seeds);
  REQUIRE(band.steps.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const double a = seeds[0].values[i], b = seeds[1].values[i], c = seeds[2].values[i];
    CHECK(band.mean[i] == doctest::Approx((a + b + c) / 3));
    CHECK(band.min[i] == std::min({a, b, c}));
    CHECK(band.max[i] == std::max({a, b, c}));
  }
}

TEST_CASE("curves from metrics files grouped by method") {
  const auto dir = fresh_dir("curves");
  for (const char* repr : {"docir", "ocr"}) {
    for (int s = 0; s < 3; ++s) {
      const auto run = dir / (std::string(repr) + "-s" + std::to_string(s));
      fs::create_directories(run);
      std::ofstream(run / "run.json") << nlohmann::json{{"repr", repr}}.dump();
      std::vector<double> v;
      for (int i = 0; i < 12; ++i) v.push_back(repr == std::string("docir") ? 0.1 * s : 0.5);
      write_metrics(run / "metrics.jsonl", v);
    }
  }
  const auto series = read_metric_series(dir / "ocr-s0" / "metrics.jsonl");
  CHECK(series.values.size() == 12);
  CHECK(series.steps[1] == 200);

  const auto files = expand_glob((dir / "*" / "metrics.jsonl").string());
  CHECK(files.size() == 6);
  const CurveSet set = curves(files, dir / "out", 4);
  REQUIRE(set.size() == 2);
  CHECK(set.at("docir").mean.front() == doctest::Approx(0.1));
  CHECK(set.at("docir").min.front() == doctest::Approx(0.0));
  CHECK(set.at("docir").max.front() == doctest::Approx(0.2));
  CHECK(set.at("ocr").mean.size() == 9);
  CHECK(fs::exists(dir / "out.csv"));
  CHECK(fs::exists(dir / "out.svg"));
  const std::string svg = render_svg(set, "t", "success");
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("docir") != std::string::npos);
  fs::remove_all(dir);
}
