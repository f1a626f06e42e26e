#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "docir/environment.hpp"
#include "scene_fixtures.hpp"

using namespace docir;

namespace {

SceneConfig three_objects(TargetVariant v = TargetVariant::fixed_target) { return scene_config_for_objects(3, v); }

// A hand-built pick scene: two cubes and a plate far apart, gripper at home.
SceneState hand_scene(const SceneConfig& cfg) {
  auto [s, obs] = reset(cfg, 1, Task::pick);
  const double h = cfg.geometry.cube_half;
  s.objects[0].position = {0.3, 0.3, h};
  s.objects[1].position = {0.7, 0.7, h};
  s.objects[2].position = {0.3, 0.7, 0.5 * cfg.geometry.plate_height};
  for (auto& o : s.objects) o.initial_position = o.position;
  s.target_id = s.objects[0].id;
  return s;
}

StepResult act(const SceneState& s, const SceneConfig& cfg, Vec3 arm, double gripper) {
  return step(s, Action{arm, gripper}, cfg);
}

double ledger_sum(const SceneState& s) {
  double t = 0;
  for (const auto& [id, v] : s.displacement_ledger) t += v;
  return t;
}

}  // namespace

TEST_CASE("object-count settings map to cube/plate pairs") {
  const std::map<int, std::pair<int, int>> expected{{3, {2, 1}}, {5, {3, 2}}, {7, {4, 3}}, {9, {5, 4}}};
  for (const auto& [n, cp] : expected) {
    const auto c = scene_config_for_objects(n, TargetVariant::fixed_target);
    CHECK(c.n_cubes == cp.first);
    CHECK(c.n_plates == cp.second);
  }
  CHECK_THROWS_AS(scene_config_for_objects(4, TargetVariant::fixed_target), std::invalid_argument);
  CHECK(palettes_disjoint(training_palette(), held_out_palette()));
}

TEST_CASE("reset is deterministic and respects spacing and bounds") {
  const auto cfg = scene_config_for_objects(9, TargetVariant::varying_target);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto [a, oa] = reset(cfg, seed, Task::pick);
    auto [b, ob] = reset(cfg, seed, Task::pick);
    REQUIRE(nlohmann::json(a) == nlohmann::json(b));
    REQUIRE(oa.base.rgb == ob.base.rgb);
    REQUIRE(a.objects.size() == 9);
    for (std::size_t i = 0; i < a.objects.size(); ++i) {
      const auto& p = a.objects[i].position;
      CHECK(p[0] >= 0.1);
      CHECK(p[0] <= 0.9);
      CHECK(p[1] >= 0.1);
      CHECK(p[1] <= 0.9);
      CHECK(a.objects[i].bottom(cfg.geometry) == doctest::Approx(0.0));
      for (std::size_t j = i + 1; j < a.objects.size(); ++j) {
        CHECK(std::hypot(p[0] - a.objects[j].position[0], p[1] - a.objects[j].position[1]) >= 0.12);
      }
    }
    CHECK(a.gripper == cfg.geometry.home);
    CHECK(oa.proprio.size() == Observation::kProprioDim);
    CHECK(ledger_sum(a) == 0.0);
  }
}

TEST_CASE("impossible spacing raises a placement error") {
  auto cfg = scene_config_for_objects(9, TargetVariant::fixed_target);
  cfg.geometry.min_spacing = 0.5;
  CHECK_THROWS_AS(reset(cfg, 0, Task::pick), PlacementError);
}

TEST_CASE("fixed target is the first cube; varying target is uniform over cubes") {
  auto fixed = scene_config_for_objects(5, TargetVariant::fixed_target);
  for (std::uint64_t seed = 0; seed < 20; ++seed) CHECK(reset(fixed, seed, Task::pick).first.target_id == kFirstObjectId);

  // Chi-square goodness of fit over the 3 cubes; 2 dof, p = 0.001 critical value.
  auto varying = scene_config_for_objects(5, TargetVariant::varying_target);
  constexpr int kDraws = 3000;
  std::map<InstanceId, int> counts;
  for (int seed = 0; seed < kDraws; ++seed) counts[reset(varying, seed, Task::pick).first.target_id] += 1;
  REQUIRE(counts.size() == 3);
  double chi2 = 0;
  for (const auto& [id, n] : counts) {
    CHECK(id < kFirstObjectId + 3);
    const double e = kDraws / 3.0;
    chi2 += (n - e) * (n - e) / e;
  }
  CHECK(chi2 < 13.82);
}

TEST_CASE("arm commands are clamped and scaled by the step size") {
  const auto cfg = three_objects();
  const SceneState s = hand_scene(cfg);
  const auto r = act(s, cfg, {5.0, -0.5, 0.0}, -1);
  CHECK(r.state.gripper[0] == doctest::Approx(0.5 + 0.03));
  CHECK(r.state.gripper[1] == doctest::Approx(0.5 - 0.015));
  CHECK(r.state.gripper[2] == doctest::Approx(0.2));
  CHECK(r.state.prev_action.arm[0] == 1.0);
  CHECK(r.observation.proprio[3] == doctest::Approx(1.0));  // displacement / step size
  CHECK(r.reward.time_penalty == -0.01);
}

TEST_CASE("grasp, lift and pick success") {
  const auto cfg = three_objects();
  SceneState s = hand_scene(cfg);
  s.gripper = {0.3 + 0.02, 0.3, 0.065};  // within grasp radius, below cube top + margin
  auto closed = act(s, cfg, {0, 0, 0}, 1);
  REQUIRE(closed.state.attached);
  CHECK(*closed.state.attached == s.target_id);
  CHECK(closed.reward.grasp_bonus == 0.5);

  // release and regrasp: the bonus is paid once per episode
  auto opened = act(closed.state, cfg, {0, 0, 0}, -1);
  CHECK_FALSE(opened.state.attached);
  auto again = act(opened.state, cfg, {0, 0, 0}, 1);
  CHECK(again.state.attached);
  CHECK(again.reward.grasp_bonus == 0.0);

  SceneState cur = again.state;
  StepResult r;
  int steps = 0;
  do {
    r = act(cur, cfg, {0, 0, 1}, 1);
    CHECK(r.reward.lift == doctest::Approx(2.0 * (r.state.gripper[2] - cur.gripper[2])));
    cur = r.state;
    ++steps;
  } while (!r.terminated && steps < 10);
  CHECK(r.success);
  CHECK(r.reward.success_bonus == 10.0);
  CHECK(cur.gripper[2] >= 0.15);
}

TEST_CASE("grasp fails outside the radius or above the margin") {
  const auto cfg = three_objects();
  SceneState s = hand_scene(cfg);
  s.gripper = {0.3 + 0.03, 0.3, 0.06};
  CHECK_FALSE(act(s, cfg, {0, 0, 0}, 1).state.attached);
  s.gripper = {0.3, 0.3, 0.0705};
  CHECK_FALSE(act(s, cfg, {0, 0, 0}, 1).state.attached);
}

TEST_CASE("pushing a non-target cube is penalized by its ledger increment and can terminate") {
  const auto cfg = three_objects();
  SceneState s = hand_scene(cfg);
  const InstanceId other = s.objects[1].id;
  // gripper low, to the left of cube 1 and touching it after one step
  s.gripper = {0.7 - 0.03 - 0.02 - 0.01, 0.7, 0.01};
  auto r = act(s, cfg, {1, 0, 0}, 1);
  const double moved = r.state.displacement_ledger.at(other);
  // analytic push: the gripper's right face ends at x + 0.03 + 0.02 = cube left face
  CHECK(moved == doctest::Approx(0.02));
  CHECK(r.state.object(other).position[0] == doctest::Approx(0.72));
  CHECK(r.reward.disturb_penalty == doctest::Approx(-5.0 * moved));
  CHECK_FALSE(r.terminated);

  SceneState cur = r.state;
  int steps = 0;
  while (!r.terminated && steps < 10) {
    r = act(cur, cfg, {1, 0, 0}, 1);
    cur = r.state;
    ++steps;
  }
  CHECK(r.terminated);
  CHECK_FALSE(r.success);
  CHECK(cur.displacement_ledger.at(other) > 0.05);
}

TEST_CASE("episodes end at the horizon and further steps are rejected") {
  auto cfg = three_objects();
  cfg.episode_horizon = 3;
  SceneState s = hand_scene(cfg);
  StepResult r;
  for (int k = 0; k < 3; ++k) {
    r = act(s, cfg, {0, 0, 0}, -1);
    s = r.state;
  }
  CHECK(r.terminated);
  CHECK_THROWS_AS(step(s, Action{}, cfg), std::logic_error);
}

TEST_CASE("base view rasterization matches a point-in-shape oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto scene = testing::random_scene(seed + 100);
    const Frame f = render_view(scene.state, scene.config, View::base);
    const auto& g = scene.config.geometry;
    const int res = scene.config.resolution;
    for (int row = 0; row < res; ++row) {
      for (int col = 0; col < res; ++col) {
        const double x = (col + 0.5) / res;
        const double y = (row + 0.5) / res;
        // highest-top object covering the point, later IDs winning ties
        InstanceId expected = kBackgroundId;
        double best_top = -1;
        for (const auto& o : scene.state.objects) {
          const bool inside = o.kind == ObjectKind::cube
                                  ? std::abs(x - o.position[0]) <= g.cube_half && std::abs(y - o.position[1]) <= g.cube_half
                                  : std::hypot(x - o.position[0], y - o.position[1]) <= g.plate_radius;
          if (inside && o.top(g) >= best_top) {
            expected = o.id;
            best_top = o.top(g);
          }
        }
        const double gx = scene.state.gripper[0];
        const double gy = scene.state.gripper[1];
        const double spread = scene.state.closed ? 0.034 : 0.045;
        if (std::abs(x - gx) <= spread + 0.011 && std::abs(y - gy) <= 0.011) expected = kPalmId;
        for (double fx : {gx - spread, gx + spread}) {
          if (std::abs(x - fx) <= 0.011 && std::abs(y - gy) <= 0.025) expected = kFingerId;
        }
        REQUIRE(f.ids[row * res + col] == expected);
      }
    }
  }
}

TEST_CASE("wrist view is centered on the gripper") {
  const auto cfg = three_objects();
  SceneState s = hand_scene(cfg);
  s.gripper = {0.3, 0.3, 0.12};
  const Frame f = render_view(s, cfg, View::wrist);
  CHECK(f.view == View::wrist);
  // image center is the gripper position: palm pixels straddle it
  const int c = cfg.resolution / 2;
  CHECK(f.ids[c * cfg.resolution + c] == kPalmId);
  // the target cube lies under the gripper, so it appears around the palm
  int cube_pixels = 0;
  for (auto id : f.ids) cube_pixels += id == s.target_id;
  CHECK(cube_pixels > 0);
  CHECK_NOTHROW(f.validate(s.registry()));
}

TEST_CASE("scripted expert solves pick reliably") {
  for (int n : {3, 5, 9}) {
    const auto cfg = scene_config_for_objects(n, TargetVariant::varying_target);
    int successes = 0;
    constexpr int kEpisodes = 40;
    for (int ep = 0; ep < kEpisodes; ++ep) {
      auto [s, obs] = reset(cfg, 500 + ep, Task::pick);
      StepResult r;
      do {
        r = step(s, expert_action(s, cfg.geometry), cfg);
        s = r.state;
      } while (!r.terminated);
      successes += r.success;
    }
    CHECK(successes >= 36);
  }
}

TEST_CASE("harvested pick terminals seed place episodes the expert can solve") {
  const auto cfg = scene_config_for_objects(5, TargetVariant::varying_target);
  StatePolicy expert = [&](const Observation&, const SceneState& s) { return expert_action(s, cfg.geometry); };
  const InitStateSet set = harvest_pick_terminals(expert, cfg, 12);
  REQUIRE(set.states.size() == 12);
  for (const auto& st : set.states) CHECK(pick_success(st, cfg.geometry));

  const auto path = std::filesystem::temp_directory_path() / "docir_init_states_test.json";
  save_init_states(path.string(), set);
  const InitStateSet loaded = load_init_states(path.string());
  CHECK(nlohmann::json(loaded) == nlohmann::json(set));
  std::filesystem::remove(path);

  int successes = 0;
  for (int ep = 0; ep < 20; ++ep) {
    auto [s, obs] = reset(cfg, 900 + ep, Task::place, &set);
    CHECK(s.place_cube);
    CHECK(s.step_count == 0);
    CHECK(ledger_sum(s) == 0.0);
    CHECK(s.object(s.target_id).id != *s.place_cube);
    StepResult r;
    do {
      r = step(s, expert_action(s, cfg.geometry), cfg);
      s = r.state;
    } while (!r.terminated);
    successes += r.success;
  }
  CHECK(successes >= 16);
  CHECK_THROWS_AS(reset(cfg, 0, Task::place, nullptr), std::invalid_argument);
}

TEST_CASE("out-of-distribution scene variants") {
  const auto cfg = three_objects();
  const auto recolored = ood_recolor(cfg);
  CHECK(recolored.palette.colors == held_out_palette().colors);
  CHECK_THROWS_AS(ood_recolor(cfg, Palette{"empty", {}}), std::invalid_argument);
  CHECK_THROWS_AS(ood_recolor(cfg, cfg.palette), std::invalid_argument);

  const auto more = add_distractors(cfg, 3);
  auto [s, obs] = reset(more, 4, Task::pick);
  CHECK(s.objects.size() == 6);
  int distractors = 0;
  for (const auto& o : s.objects) distractors += o.distractor;
  CHECK(distractors == 3);
  CHECK_FALSE(s.object(s.target_id).distractor);

  // zero distractors leaves the scene unchanged
  auto [a, oa] = reset(add_distractors(cfg, 0), 4, Task::pick);
  auto [b, ob] = reset(cfg, 4, Task::pick);
  CHECK(nlohmann::json(a) == nlohmann::json(b));
}

TEST_CASE("scene state JSON round-trip") {
  const auto scene = testing::random_scene(42);
  const nlohmann::json j = scene.state;
  const SceneState back = j.get<SceneState>();
  CHECK(nlohmann::json(back) == j);
  const nlohmann::json c = scene.config;
  CHECK(nlohmann::json(c.get<SceneConfig>()) == c);
}

TEST_CASE("tabletop environment wraps the world functions") {
  TabletopEnv env(three_objects(), Task::pick);
  const Observation o = env.reset(3);
  CHECK(o.base.height == 48);
  CHECK(env.target_ids() == IdSet{env.state().target_id});
  CHECK(env.registry().robot_ids == IdSet{kFingerId, kPalmId});
  const EnvStep r = env.step(Action{{0, 0, -1}, -1});
  CHECK(r.observation.proprio.size() == 11);
  CHECK_THROWS_AS(TabletopEnv(three_objects(), Task::place), std::invalid_argument);
}

TEST_CASE("point reach environment") {
  PointReachEnv env;
  const Observation o = env.reset(9);
  REQUIRE(o.proprio.size() == 6);
  Vec3 gripper{o.proprio[0], o.proprio[1], o.proprio[2]};
  const Vec3 goal{o.proprio[3], o.proprio[4], o.proprio[5]};
  EnvStep r;
  int steps = 0;
  do {
    Action a;
    for (int k = 0; k < 3; ++k) a.arm[k] = std::clamp((goal[k] - gripper[k]) / 0.03, -1.0, 1.0);
    r = env.step(a);
    for (int k = 0; k < 3; ++k) gripper[k] = r.observation.proprio[k];
    ++steps;
  } while (!r.done);
  CHECK(r.success);
  CHECK(steps < PointReachEnv::kHorizon);
}
