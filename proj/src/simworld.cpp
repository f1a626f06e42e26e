#include "docir/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace docir {

namespace {

double hdist(const Vec3& a, const Vec3& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

double norm3(const Vec3& a, const Vec3& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                   (a[2] - b[2]) * (a[2] - b[2]));
}

constexpr double kEps = 1e-12;

// Axis-aligned collision volume.
struct Box {
  double cx, cy, hx, hy, bottom, top;
};

Box gripper_box(const SceneState& s, const WorldGeometry& g) {
  return {s.gripper[0], s.gripper[1], g.gripper_half_width, g.gripper_half_width, s.gripper[2],
          s.gripper[2] + g.gripper_height};
}

Box object_box(const SceneObject& o, const WorldGeometry& g) {
  const double h = o.footprint_half(g);
  return {o.position[0], o.position[1], h, h, o.bottom(g), o.top(g)};
}

void follow_gripper(SceneState& s) {
  if (!s.attached) return;
  auto& cube = s.object(*s.attached);
  for (int k = 0; k < 3; ++k) cube.position[k] = s.gripper[k] + s.attach_offset[k];
}

// Pushes non-attached objects out of the gripper and carried cube along the
// axis of least penetration. Vertical penetration from above lifts the
// gripper instead, since nothing can be pushed into the table.
void resolve_contacts(SceneState& s, const WorldGeometry& g) {
  for (int pass = 0; pass < 4; ++pass) {
    bool changed = false;
    for (auto& obj : s.objects) {
      if (s.attached && obj.id == *s.attached) continue;
      for (int pusher = 0; pusher < 2; ++pusher) {
        Box p;
        if (pusher == 0) {
          if (!s.closed && obj.kind == ObjectKind::cube && hdist(s.gripper, obj.position) <= g.grasp_radius) {
            continue;  // open fingers straddle the cube
          }
          p = gripper_box(s, g);
        } else {
          if (!s.attached) continue;
          p = object_box(s.object(*s.attached), g);
        }
        const Box o = object_box(obj, g);
        const double dx = o.cx - p.cx;
        const double dy = o.cy - p.cy;
        const double ox = p.hx + o.hx - std::abs(dx);
        const double oy = p.hy + o.hy - std::abs(dy);
        const bool z_overlap = p.bottom < o.top - kEps && p.top > o.bottom + kEps;
        if (ox <= kEps || oy <= kEps || !z_overlap) continue;

        const double oz = o.top - p.bottom;
        if (oz <= std::min(ox, oy)) {
          s.gripper[2] = std::min(s.gripper[2] + oz, g.workspace_max[2]);
          follow_gripper(s);
        } else if (ox <= oy) {
          const double dir = dx >= 0 ? 1.0 : -1.0;
          obj.position[0] = std::clamp(obj.position[0] + dir * ox, 0.0, g.workspace_max[0]);
        } else {
          const double dir = dy >= 0 ? 1.0 : -1.0;
          obj.position[1] = std::clamp(obj.position[1] + dir * oy, 0.0, g.workspace_max[1]);
        }
        changed = true;
      }
    }
    if (!changed) break;
  }
}

bool footprints_overlap(const SceneObject& cube, const SceneObject& other, const WorldGeometry& g) {
  const double dx = std::abs(cube.position[0] - other.position[0]);
  const double dy = std::abs(cube.position[1] - other.position[1]);
  if (other.kind == ObjectKind::cube) {
    return dx < 2 * g.cube_half - kEps && dy < 2 * g.cube_half - kEps;
  }
  // square vs disk: distance from disk center to the square
  const double qx = std::max(dx - g.cube_half, 0.0);
  const double qy = std::max(dy - g.cube_half, 0.0);
  return qx * qx + qy * qy < g.plate_radius * g.plate_radius - kEps;
}

void release(SceneState& s, const WorldGeometry& g) {
  const InstanceId id = *s.attached;
  s.attached.reset();
  auto& cube = s.object(id);
  double support = 0.0;
  for (const auto& other : s.objects) {
    if (other.id == id) continue;
    if (!footprints_overlap(cube, other, g)) continue;
    const double top = other.top(g);
    if (top <= cube.bottom(g) + 1e-9) support = std::max(support, top);
  }
  cube.position[2] = support + cube.half_height(g);
}

void try_grasp(SceneState& s, const WorldGeometry& g) {
  std::optional<InstanceId> best;
  double best_d = 0;
  for (const auto& obj : s.objects) {
    if (obj.kind != ObjectKind::cube) continue;
    const double d = hdist(s.gripper, obj.position);
    if (d > g.grasp_radius) continue;
    if (s.gripper[2] > obj.top(g) + g.grasp_z_margin) continue;
    if (!best || d < best_d) {
      best = obj.id;
      best_d = d;
    }
  }
  if (!best) return;
  s.attached = best;
  const auto& cube = s.object(*best);
  for (int k = 0; k < 3; ++k) s.attach_offset[k] = cube.position[k] - s.gripper[k];
}

// Objects whose ledger may exceed the limits: the cube in hand (or carried
// into a Place episode) moves by design.
bool is_carried(const SceneState& s, InstanceId id) {
  return (s.attached && *s.attached == id) || (s.place_cube && *s.place_cube == id);
}

double task_distance(const SceneState& s, Task task, const WorldGeometry& g) {
  const auto& target = s.object(s.target_id);
  if (task == Task::pick) return norm3(s.gripper, target.position);
  if (!s.place_cube) return 0.0;
  const auto& cube = s.object(*s.place_cube);
  const Vec3 cube_bottom{cube.position[0], cube.position[1], cube.bottom(g)};
  const Vec3 target_top{target.position[0], target.position[1], target.top(g)};
  return norm3(cube_bottom, target_top);
}

InstanceId draw_target(const SceneState& s, const SceneConfig& config, std::mt19937_64& rng) {
  const auto eligible = s.eligible_targets();
  if (eligible.empty()) throw std::invalid_argument("reset: scene has no eligible target");
  if (config.variant == TargetVariant::fixed_target) {
    if (s.task == Task::place) {
      for (const auto& o : s.objects) {
        if (o.kind == ObjectKind::plate && !o.distractor) return o.id;
      }
    }
    return eligible.front();
  }
  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  return eligible[pick(rng)];
}

}  // namespace

std::string to_string(Task task) { return task == Task::pick ? "pick" : "place"; }

std::string to_string(TargetVariant variant) {
  return variant == TargetVariant::fixed_target ? "fixed" : "varying";
}

Task parse_task(const std::string& s) {
  if (s == "pick") return Task::pick;
  if (s == "place") return Task::place;
  throw std::invalid_argument("unknown task '" + s + "'");
}

TargetVariant parse_variant(const std::string& s) {
  if (s == "fixed" || s == "fixed_target") return TargetVariant::fixed_target;
  if (s == "varying" || s == "varying_target") return TargetVariant::varying_target;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

Palette training_palette() {
  return {"train",
          {{230, 25, 75}, {60, 180, 75}, {255, 225, 25}, {0, 130, 200}, {245, 130, 48},
           {145, 30, 180}, {70, 240, 240}, {240, 50, 230}, {210, 245, 60}, {250, 190, 212},
           {0, 128, 128}, {170, 110, 40}}};
}

Palette held_out_palette() {
  return {"held_out",
          {{128, 0, 0}, {128, 128, 0}, {0, 0, 128}, {170, 255, 195}, {220, 190, 255},
           {255, 250, 200}, {255, 215, 180}, {255, 127, 80}, {255, 195, 0}, {0, 100, 0},
           {135, 206, 235}, {75, 0, 130}}};
}

void SceneConfig::validate() const {
  if (n_cubes < 1 || n_plates < 0 || distractor_count < 0) {
    throw std::invalid_argument("SceneConfig: need at least one cube and non-negative counts");
  }
  if (palette.colors.empty()) throw std::invalid_argument("SceneConfig: empty palette");
  if (episode_horizon < 1) throw std::invalid_argument("SceneConfig: horizon must be positive");
  if (resolution < 8) throw std::invalid_argument("SceneConfig: resolution too small");
}

SceneConfig scene_config_for_objects(int total_objects, TargetVariant variant) {
  SceneConfig c;
  switch (total_objects) {
    case 3: c.n_cubes = 2; c.n_plates = 1; break;
    case 5: c.n_cubes = 3; c.n_plates = 2; break;
    case 7: c.n_cubes = 4; c.n_plates = 3; break;
    case 9: c.n_cubes = 5; c.n_plates = 4; break;
    default: throw std::invalid_argument("object count must be 3, 5, 7 or 9");
  }
  c.palette = training_palette();
  c.variant = variant;
  return c;
}

const SceneObject& SceneState::object(InstanceId id) const {
  for (const auto& o : objects) {
    if (o.id == id) return o;
  }
  throw std::out_of_range("SceneState: no object with id " + std::to_string(id));
}

SceneObject& SceneState::object(InstanceId id) {
  return const_cast<SceneObject&>(std::as_const(*this).object(id));
}

InstanceRegistry SceneState::registry() const {
  InstanceRegistry r;
  r.robot_ids = {kFingerId, kPalmId};
  for (const auto& o : objects) r.object_ids.insert(o.id);
  return r;
}

std::vector<InstanceId> SceneState::eligible_targets() const {
  std::vector<InstanceId> out;
  for (const auto& o : objects) {
    if (o.distractor) continue;
    if (task == Task::pick && o.kind != ObjectKind::cube) continue;
    if (task == Task::place && place_cube && o.id == *place_cube) continue;
    out.push_back(o.id);
  }
  return out;
}

std::pair<SceneState, Observation> reset(const SceneConfig& config, std::uint64_t seed, Task task,
                                         const InitStateSet* init_set) {
  config.validate();
  const auto& g = config.geometry;
  std::mt19937_64 rng(seed);
  SceneState s;

  if (task == Task::place) {
    if (init_set == nullptr || init_set->empty()) {
      throw std::invalid_argument("reset: place episodes need a nonempty init-state set");
    }
    std::uniform_int_distribution<std::size_t> pick(0, init_set->states.size() - 1);
    const SceneState& stored = init_set->states[pick(rng)];
    s.gripper = stored.gripper;
    s.closed = stored.closed;
    s.attached = stored.attached;
    s.attach_offset = stored.attach_offset;
    s.objects = stored.objects;
    if (!s.attached) throw std::invalid_argument("reset: stored pick state holds no cube");
    s.place_cube = s.attached;
  } else {
    std::uniform_real_distribution<double> coord(g.spawn_margin, 1.0 - g.spawn_margin);
    const int total = config.object_count();
    const int originals = config.n_cubes + config.n_plates;
    for (int i = 0; i < total; ++i) {
      SceneObject o;
      o.id = kFirstObjectId + i;
      if (i < config.n_cubes) {
        o.kind = ObjectKind::cube;
      } else if (i < originals) {
        o.kind = ObjectKind::plate;
      } else {
        o.kind = (i - originals) % 2 == 0 ? ObjectKind::cube : ObjectKind::plate;
        o.distractor = true;
      }
      o.color = config.palette.colors[i % config.palette.colors.size()];
      bool placed = false;
      for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
        const double x = coord(rng);
        const double y = coord(rng);
        placed = std::all_of(s.objects.begin(), s.objects.end(), [&](const SceneObject& other) {
          return std::hypot(other.position[0] - x, other.position[1] - y) >= g.min_spacing;
        });
        if (placed) o.position = {x, y, o.half_height(g)};
      }
      if (!placed) throw PlacementError("reset: could not place " + std::to_string(total) + " objects");
      s.objects.push_back(o);
    }
    s.gripper = g.home;
  }

  s.task = task;
  for (auto& o : s.objects) {
    o.initial_position = o.position;
    s.displacement_ledger[o.id] = 0.0;
  }
  s.target_id = draw_target(s, config, rng);
  s.prev_action = Action{{0, 0, 0}, s.closed ? 1.0 : -1.0};
  return {s, observe(s, config)};
}

StepResult step(const SceneState& state, const Action& action, const SceneConfig& config) {
  if (state.terminated) throw std::logic_error("step: episode already terminated");
  if (state.step_count >= config.episode_horizon) throw std::logic_error("step: horizon reached");
  const auto& g = config.geometry;

  SceneState next = state;
  Vec3 arm;
  for (int k = 0; k < 3; ++k) arm[k] = std::clamp(action.arm[k], -1.0, 1.0);
  const bool close = action.gripper > 0;

  Vec3 target;
  for (int k = 0; k < 3; ++k) {
    target[k] = std::clamp(state.gripper[k] + g.step_size * arm[k], 0.0, g.workspace_max[k]);
  }
  if (next.attached) {
    // keep the carried cube inside the workspace and above the table
    const auto& off = next.attach_offset;
    const auto& cube = next.object(*next.attached);
    for (int k = 0; k < 2; ++k) {
      target[k] = std::clamp(target[k], std::max(0.0, -off[k]), std::min(g.workspace_max[k], g.workspace_max[k] - off[k]));
    }
    target[2] = std::max(target[2], cube.half_height(g) - off[2]);
  }
  next.gripper = target;
  follow_gripper(next);
  resolve_contacts(next, g);

  if (close && !next.closed) {
    next.closed = true;
    try_grasp(next, g);
  } else if (!close && next.closed) {
    next.closed = false;
    if (next.attached) release(next, g);
  }

  for (std::size_t i = 0; i < next.objects.size(); ++i) {
    const auto& before = state.objects[i];
    const auto& after = next.objects[i];
    next.displacement_ledger[after.id] += norm3(before.position, after.position);
  }
  for (int k = 0; k < 3; ++k) next.last_displacement[k] = next.gripper[k] - state.gripper[k];
  next.prev_action = Action{arm, close ? 1.0 : -1.0};
  next.step_count += 1;

  StepResult out;
  out.reward = reward(state, next, state.task, g);
  out.success = state.task == Task::pick ? pick_success(next, g) : place_success(next, g);
  if (state.task == Task::pick && next.attached && *next.attached == next.target_id) {
    next.grasp_rewarded = true;
  }

  bool displaced = false;
  for (const auto& [id, moved] : next.displacement_ledger) {
    if (id != next.target_id && !is_carried(next, id) && moved > g.displacement_limit) displaced = true;
  }
  out.terminated = out.success || displaced || next.step_count >= config.episode_horizon;
  next.terminated = out.terminated;
  next.succeeded = out.success;
  out.observation = observe(next, config);
  out.state = std::move(next);
  return out;
}

RewardBreakdown reward(const SceneState& prev, const SceneState& next, Task task,
                       const WorldGeometry& g) {
  RewardBreakdown r;
  r.reach = 1.0 * (task_distance(prev, task, g) - task_distance(next, task, g));

  const bool held_before = prev.attached && *prev.attached == prev.target_id;
  const bool held_now = next.attached && *next.attached == next.target_id;
  if (task == Task::pick && held_now && !held_before && !prev.grasp_rewarded) r.grasp_bonus = 0.5;
  if (task == Task::pick && held_now && held_before) {
    r.lift = 2.0 * std::max(0.0, next.gripper[2] - prev.gripper[2]);
  }

  double disturbed = 0.0;
  for (const auto& [id, moved] : next.displacement_ledger) {
    const bool in_hand = (prev.attached && *prev.attached == id) || (next.attached && *next.attached == id);
    if (in_hand) continue;
    const auto it = prev.displacement_ledger.find(id);
    disturbed += moved - (it == prev.displacement_ledger.end() ? 0.0 : it->second);
  }
  r.disturb_penalty = -5.0 * disturbed;

  const bool success = task == Task::pick ? pick_success(next, g) : place_success(next, g);
  r.success_bonus = success ? 10.0 : 0.0;
  r.time_penalty = -0.01;
  r.total = r.reach + r.grasp_bonus + r.lift + r.disturb_penalty + r.success_bonus + r.time_penalty;
  return r;
}

bool pick_success(const SceneState& s, const WorldGeometry& g) {
  if (!s.attached || *s.attached != s.target_id) return false;
  if (s.gripper[2] < g.lift_height) return false;
  for (const auto& [id, moved] : s.displacement_ledger) {
    if (id != s.target_id && moved > g.ledger_tolerance) return false;
  }
  return true;
}

bool place_success(const SceneState& s, const WorldGeometry& g) {
  if (!s.place_cube || s.attached) return false;
  const auto& cube = s.object(*s.place_cube);
  const auto& target = s.object(s.target_id);
  if (hdist(cube.position, target.position) > g.place_tolerance) return false;
  if (std::abs(cube.bottom(g) - target.top(g)) > 1e-9) return false;
  for (const auto& [id, moved] : s.displacement_ledger) {
    if (id != *s.place_cube && moved > g.ledger_tolerance) return false;
  }
  return true;
}

Observation observe(const SceneState& s, const SceneConfig& config) {
  Observation obs;
  obs.base = render_view(s, config, View::base);
  obs.wrist = render_view(s, config, View::wrist);
  const double step_size = config.geometry.step_size;
  obs.proprio = {s.gripper[0],
                 s.gripper[1],
                 s.gripper[2],
                 s.last_displacement[0] / step_size,
                 s.last_displacement[1] / step_size,
                 s.last_displacement[2] / step_size,
                 s.prev_action.arm[0],
                 s.prev_action.arm[1],
                 s.prev_action.arm[2],
                 s.prev_action.gripper,
                 s.attached ? 1.0 : 0.0};
  return obs;
}

SceneConfig ood_recolor(const SceneConfig& config, const Palette& held_out) {
  if (held_out.colors.empty()) throw std::invalid_argument("ood_recolor: empty held-out palette");
  if (!palettes_disjoint(config.palette, held_out)) {
    throw std::invalid_argument("ood_recolor: held-out palette overlaps the training palette");
  }
  SceneConfig out = config;
  out.palette = held_out;
  return out;
}

SceneConfig add_distractors(const SceneConfig& config, int count) {
  if (count < 0) throw std::invalid_argument("add_distractors: negative count");
  SceneConfig out = config;
  out.distractor_count += count;
  return out;
}

Action expert_action(const SceneState& s, const WorldGeometry& g) {
  auto toward = [&](double from, double to) { return std::clamp((to - from) / g.step_size, -1.0, 1.0); };
  Action a;
  if (s.task == Task::pick) {
    const auto& target = s.object(s.target_id);
    if (s.attached && *s.attached == s.target_id) {
      a.arm = {0, 0, 1};
      a.gripper = 1;
      return a;
    }
    if (s.attached) return Action{{0, 0, 1}, -1};
    const double cruise = target.top(g) + 0.06;
    const double d = hdist(s.gripper, target.position);
    if (d > 0.005) {
      a.arm = {toward(s.gripper[0], target.position[0]), toward(s.gripper[1], target.position[1]),
               toward(s.gripper[2], cruise)};
      if (s.gripper[2] < cruise - 1e-9 && d > g.grasp_radius) a.arm[0] = a.arm[1] = 0;
      a.gripper = -1;
      return a;
    }
    const double grip_z = target.position[2];
    if (s.gripper[2] > grip_z + 1e-9 || s.closed) {
      a.arm = {0, 0, toward(s.gripper[2], grip_z)};
      a.gripper = s.gripper[2] <= grip_z + 1e-9 ? 1 : -1;
      if (s.closed && !s.attached) a.gripper = -1;
      return a;
    }
    a.gripper = 1;
    return a;
  }
  // place
  if (!s.place_cube || !s.attached) return Action{{0, 0, 1}, -1};
  const auto& cube = s.object(*s.place_cube);
  const auto& target = s.object(s.target_id);
  const double d = hdist(cube.position, target.position);
  if (d > 0.005) {
    a.arm = {toward(cube.position[0], target.position[0]), toward(cube.position[1], target.position[1]), 0};
    a.gripper = 1;
    return a;
  }
  a.gripper = -1;
  return a;
}

InitStateSet harvest_pick_terminals(const StatePolicy& policy, const SceneConfig& config, int n,
                                    const HarvestOptions& options) {
  if (n < 0) throw std::invalid_argument("harvest: negative count");
  InitStateSet set;
  const long budget = static_cast<long>(n) * options.max_episodes_per_state;
  for (long episode = 0; static_cast<int>(set.states.size()) < n; ++episode) {
    if (episode >= budget) {
      throw std::runtime_error("harvest: only " + std::to_string(set.states.size()) + " of " +
                               std::to_string(n) + " successes after " + std::to_string(budget) +
                               " episodes");
    }
    auto [state, obs] = reset(config, options.seed + static_cast<std::uint64_t>(episode), Task::pick);
    bool done = false;
    while (!done) {
      StepResult r = step(state, policy(obs, state), config);
      done = r.terminated;
      if (r.success) set.states.push_back(r.state);
      state = std::move(r.state);
      obs = std::move(r.observation);
    }
  }
  return set;
}

// ---------------------------------------------------------------- JSON

void to_json(nlohmann::json& j, const Color8& c) { j = nlohmann::json::array({c.r, c.g, c.b}); }
void from_json(const nlohmann::json& j, Color8& c) {
  c = Color8{j.at(0).get<std::uint8_t>(), j.at(1).get<std::uint8_t>(), j.at(2).get<std::uint8_t>()};
}

void to_json(nlohmann::json& j, const Palette& p) { j = {{"name", p.name}, {"colors", p.colors}}; }
void from_json(const nlohmann::json& j, Palette& p) {
  j.at("name").get_to(p.name);
  j.at("colors").get_to(p.colors);
}

void to_json(nlohmann::json& j, const SceneConfig& c) {
  j = {{"n_cubes", c.n_cubes},
       {"n_plates", c.n_plates},
       {"palette", c.palette},
       {"episode_horizon", c.episode_horizon},
       {"variant", to_string(c.variant)},
       {"distractor_count", c.distractor_count},
       {"resolution", c.resolution}};
}

void from_json(const nlohmann::json& j, SceneConfig& c) {
  c = SceneConfig{};
  c.palette = training_palette();
  if (j.contains("n_cubes")) j.at("n_cubes").get_to(c.n_cubes);
  if (j.contains("n_plates")) j.at("n_plates").get_to(c.n_plates);
  if (j.contains("palette")) j.at("palette").get_to(c.palette);
  if (j.contains("episode_horizon")) j.at("episode_horizon").get_to(c.episode_horizon);
  if (j.contains("variant")) c.variant = parse_variant(j.at("variant").get<std::string>());
  if (j.contains("distractor_count")) j.at("distractor_count").get_to(c.distractor_count);
  if (j.contains("resolution")) j.at("resolution").get_to(c.resolution);
}

namespace {

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v[0], v[1], v[2]}); }
Vec3 json_vec(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

void to_json(nlohmann::json& j, const SceneState& s) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : s.objects) {
    objects.push_back({{"id", o.id},
                       {"kind", o.kind == ObjectKind::cube ? "cube" : "plate"},
                       {"position", vec_json(o.position)},
                       {"initial_position", vec_json(o.initial_position)},
                       {"color", o.color},
                       {"distractor", o.distractor}});
  }
  nlohmann::json ledger = nlohmann::json::object();
  for (const auto& [id, moved] : s.displacement_ledger) ledger[std::to_string(id)] = moved;
  j = {{"task", to_string(s.task)},
       {"gripper", vec_json(s.gripper)},
       {"closed", s.closed},
       {"attached", s.attached ? nlohmann::json(*s.attached) : nlohmann::json(nullptr)},
       {"attach_offset", vec_json(s.attach_offset)},
       {"objects", objects},
       {"displacement_ledger", ledger},
       {"step_count", s.step_count},
       {"target_id", s.target_id},
       {"place_cube", s.place_cube ? nlohmann::json(*s.place_cube) : nlohmann::json(nullptr)},
       {"last_displacement", vec_json(s.last_displacement)},
       {"prev_action", {{"arm", vec_json(s.prev_action.arm)}, {"gripper", s.prev_action.gripper}}},
       {"grasp_rewarded", s.grasp_rewarded},
       {"terminated", s.terminated},
       {"succeeded", s.succeeded}};
}

void from_json(const nlohmann::json& j, SceneState& s) {
  s = SceneState{};
  s.task = parse_task(j.at("task").get<std::string>());
  s.gripper = json_vec(j.at("gripper"));
  s.closed = j.at("closed").get<bool>();
  if (!j.at("attached").is_null()) s.attached = j.at("attached").get<InstanceId>();
  s.attach_offset = json_vec(j.at("attach_offset"));
  for (const auto& jo : j.at("objects")) {
    SceneObject o;
    o.id = jo.at("id").get<InstanceId>();
    o.kind = jo.at("kind").get<std::string>() == "cube" ? ObjectKind::cube : ObjectKind::plate;
    o.position = json_vec(jo.at("position"));
    o.initial_position = json_vec(jo.at("initial_position"));
    o.color = jo.at("color").get<Color8>();
    o.distractor = jo.at("distractor").get<bool>();
    s.objects.push_back(o);
  }
  for (const auto& [key, value] : j.at("displacement_ledger").items()) {
    s.displacement_ledger[std::stoi(key)] = value.get<double>();
  }
  s.step_count = j.at("step_count").get<int>();
  s.target_id = j.at("target_id").get<InstanceId>();
  if (!j.at("place_cube").is_null()) s.place_cube = j.at("place_cube").get<InstanceId>();
  s.last_displacement = json_vec(j.at("last_displacement"));
  s.prev_action.arm = json_vec(j.at("prev_action").at("arm"));
  s.prev_action.gripper = j.at("prev_action").at("gripper").get<double>();
  s.grasp_rewarded = j.at("grasp_rewarded").get<bool>();
  s.terminated = j.at("terminated").get<bool>();
  s.succeeded = j.at("succeeded").get<bool>();
}

void to_json(nlohmann::json& j, const InitStateSet& s) { j = {{"states", s.states}}; }
void from_json(const nlohmann::json& j, InitStateSet& s) { j.at("states").get_to(s.states); }

void save_init_states(const std::string& path, const InitStateSet& set) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << nlohmann::json(set).dump() << '\n';
}

InitStateSet load_init_states(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return nlohmann::json::parse(in).get<InitStateSet>();
}

}  // namespace docir
