// Deterministic 2.5-D tabletop world: a point gripper above a table of cubes
// and plates, two orthographic cameras with instance-ID buffers, shaped
// rewards and the Pick / Place skills.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "docir/imaging.hpp"

namespace docir {

using Vec3 = std::array<double, 3>;

enum class Task { pick, place };
enum class TargetVariant { fixed_target, varying_target };
enum class ObjectKind { cube, plate };

std::string to_string(Task task);
std::string to_string(TargetVariant variant);
Task parse_task(const std::string& s);
TargetVariant parse_variant(const std::string& s);

/// Robot link IDs: the two finger bars and the crossbar.
inline constexpr InstanceId kFingerId = 1;
inline constexpr InstanceId kPalmId = 2;
/// Scene objects are numbered from here in creation order.
inline constexpr InstanceId kFirstObjectId = 10;

/// Geometry and tolerance constants; lengths are in workspace units where the
/// table is the unit square.
struct WorldGeometry {
  Vec3 workspace_max{1.0, 1.0, 0.3};
  double cube_half = 0.03;
  double plate_radius = 0.06;
  double plate_height = 0.01;
  double step_size = 0.03;          // gripper displacement per unit action
  double grasp_radius = 0.025;      // horizontal distance for a grasp
  double grasp_z_margin = 0.01;     // gripper may close up to cube-top + margin
  double lift_height = 0.15;
  double min_spacing = 0.12;
  double spawn_margin = 0.1;
  double displacement_limit = 0.05; // terminates the episode
  double ledger_tolerance = 0.01;   // success requires ledgers below this
  double place_tolerance = 0.03;
  double wrist_span = 0.25;
  double gripper_half_width = 0.02; // collision box, horizontal half extent
  double gripper_height = 0.05;     // collision box extends upward from the tip
  Vec3 home{0.5, 0.5, 0.2};
};

struct SceneConfig {
  int n_cubes = 2;
  int n_plates = 1;
  Palette palette;
  int episode_horizon = 100;
  TargetVariant variant = TargetVariant::fixed_target;
  int distractor_count = 0;
  int resolution = 48;
  WorldGeometry geometry;

  int object_count() const { return n_cubes + n_plates + distractor_count; }
  void validate() const;
};

Palette training_palette();
Palette held_out_palette();
/// Default config for one of the standard object counts (3, 5, 7, 9).
SceneConfig scene_config_for_objects(int total_objects, TargetVariant variant);

struct SceneObject {
  InstanceId id = 0;
  ObjectKind kind = ObjectKind::cube;
  Vec3 position{};          // center
  Color8 color;
  Vec3 initial_position{};
  bool distractor = false;

  double half_height(const WorldGeometry& g) const {
    return kind == ObjectKind::cube ? g.cube_half : 0.5 * g.plate_height;
  }
  double bottom(const WorldGeometry& g) const { return position[2] - half_height(g); }
  double top(const WorldGeometry& g) const { return position[2] + half_height(g); }
  /// Horizontal half extent of the collision box.
  double footprint_half(const WorldGeometry& g) const {
    return kind == ObjectKind::cube ? g.cube_half : g.plate_radius;
  }
};

struct Action {
  Vec3 arm{};
  double gripper = -1.0;  // +1 closes, -1 opens

  static constexpr int kDim = 4;
};

struct SceneState {
  Task task = Task::pick;
  Vec3 gripper{};
  bool closed = false;
  std::optional<InstanceId> attached;
  Vec3 attach_offset{};                      // attached center minus gripper
  std::vector<SceneObject> objects;          // ascending ID
  std::map<InstanceId, double> displacement_ledger;
  int step_count = 0;
  InstanceId target_id = 0;
  std::optional<InstanceId> place_cube;      // cube carried into a Place episode
  Vec3 last_displacement{};
  Action prev_action;
  bool grasp_rewarded = false;
  bool terminated = false;
  bool succeeded = false;

  const SceneObject& object(InstanceId id) const;
  SceneObject& object(InstanceId id);
  InstanceRegistry registry() const;
  std::vector<InstanceId> eligible_targets() const;
};

struct Observation {
  Frame base;
  Frame wrist;
  std::vector<double> proprio;  // 11 values for the tabletop world

  static constexpr int kProprioDim = 11;
};

struct RewardBreakdown {
  double reach = 0;
  double grasp_bonus = 0;
  double lift = 0;
  double disturb_penalty = 0;
  double success_bonus = 0;
  double time_penalty = 0;
  double total = 0;
};

struct StepResult {
  SceneState state;
  Observation observation;
  RewardBreakdown reward;
  bool terminated = false;
  bool success = false;
};

/// Pick terminal states used to initialize Place episodes.
struct InitStateSet {
  std::vector<SceneState> states;

  bool empty() const { return states.empty(); }
};

/// Thrown when objects cannot be spaced out in the workspace.
class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Samples a new episode. Place episodes start from a stored Pick terminal
/// state drawn with the seed.
std::pair<SceneState, Observation> reset(const SceneConfig& config, std::uint64_t seed, Task task,
                                         const InitStateSet* init_set = nullptr);

StepResult step(const SceneState& state, const Action& action, const SceneConfig& config);

RewardBreakdown reward(const SceneState& prev, const SceneState& next, Task task,
                       const WorldGeometry& geometry);

bool pick_success(const SceneState& state, const WorldGeometry& geometry);
bool place_success(const SceneState& state, const WorldGeometry& geometry);

Observation observe(const SceneState& state, const SceneConfig& config);
Frame render_view(const SceneState& state, const SceneConfig& config, View view);

SceneConfig ood_recolor(const SceneConfig& config, const Palette& held_out = held_out_palette());
SceneConfig add_distractors(const SceneConfig& config, int count);

/// Scripted controller with access to the full state; used to check the
/// tasks are solvable and to harvest Place initial states in tests.
Action expert_action(const SceneState& state, const WorldGeometry& geometry);

using StatePolicy = std::function<Action(const Observation&, const SceneState&)>;

struct HarvestOptions {
  std::uint64_t seed = 7;
  int max_episodes_per_state = 20;
};

/// Runs deterministic Pick episodes until `n` successful terminal states are
/// stored. Throws std::runtime_error when the episode budget runs out.
InitStateSet harvest_pick_terminals(const StatePolicy& policy, const SceneConfig& config, int n,
                                    const HarvestOptions& options = {});

// JSON
void to_json(nlohmann::json& j, const Color8& c);
void from_json(const nlohmann::json& j, Color8& c);
void to_json(nlohmann::json& j, const Palette& p);
void from_json(const nlohmann::json& j, Palette& p);
void to_json(nlohmann::json& j, const SceneConfig& c);
void from_json(const nlohmann::json& j, SceneConfig& c);
void to_json(nlohmann::json& j, const SceneState& s);
void from_json(const nlohmann::json& j, SceneState& s);
void to_json(nlohmann::json& j, const InitStateSet& s);
void from_json(const nlohmann::json& j, InitStateSet& s);

void save_init_states(const std::string& path, const InitStateSet& set);
InitStateSet load_init_states(const std::string& path);

}  // namespace docir
