// Semantic grouping of a segmented frame into robot / objects-of-interest /
// obstacles, plus the inputs used by the baselines and the two-group
// ablations.
#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "docir/imaging.hpp"

namespace docir {

struct GroupSpec {
  IdSet robot_ids;
  IdSet object_ids;
  IdSet obstacle_ids;

  /// Throws std::invalid_argument unless the three sets are pairwise
  /// disjoint, cover the registry exactly and `object_ids` is nonempty.
  void validate(const InstanceRegistry& registry) const;
};

GroupSpec make_group_spec(const InstanceRegistry& registry, const IdSet& target_ids);

enum class ReprKind { docir, ocr, flat, ablation_a, ablation_b, ablation_c, proprio };
enum class AblationVariant { A, B, C };

std::string to_string(ReprKind kind);
/// Accepts the CLI spellings (`ablation-a`) as well as `ablation_a`.
ReprKind parse_repr_kind(std::string_view name);

struct ReprMode {
  ReprKind kind = ReprKind::docir;
  int slot_count = 0;    // ocr only
  int id_embed_dim = 0;  // ocr and flat only

  /// Default object-ID embedding width for the baselines.
  static constexpr int kDefaultIdEmbedDim = 8;

  /// Builds a mode with the default slot count (max objects + 1) and
  /// embedding width for `kind`.
  static ReprMode make(ReprKind kind, int max_objects);

  int stacks_per_view() const;
  int channels_per_stack() const;
  bool uses_images() const { return kind != ReprKind::proprio; }
  bool uses_id_embedding() const { return id_embed_dim > 0; }
  void validate(int scene_objects) const;
};

std::array<MaskedStack, 3> docir_stacks(const Frame& frame, const GroupSpec& spec);
std::array<MaskedStack, 2> ablation_stacks(const Frame& frame, const GroupSpec& spec,
                                           AblationVariant variant);
/// Slot 0 is the robot, then one slot per object in ascending ID order, then
/// white zero-mask padding.
std::vector<MaskedStack> ocr_slots(const Frame& frame, const InstanceRegistry& registry, int slot_count);
/// Raw RGB re-laid-out channel-major (3×H×W).
std::vector<float> flat_obs(const Frame& frame);

/// Representation input for one camera: `stacks` images of C×H×W, stored
/// contiguously in canonical order.
struct ViewInput {
  int stacks = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;
};

struct ReprInput {
  ViewInput base;
  ViewInput wrist;
  InstanceId target_id = kBackgroundId;
};

/// Writes the per-view input for `mode` into `out` (stacks*channels*H*W
/// floats).
void write_view_input(const Frame& frame, const InstanceRegistry& registry, const GroupSpec& spec,
                      const ReprMode& mode, std::span<float> out);
ViewInput make_view_input(const Frame& frame, const InstanceRegistry& registry,
                          const GroupSpec& spec, const ReprMode& mode);
ReprInput make_repr_input(const Frame& base, const Frame& wrist, const InstanceRegistry& registry,
                          const GroupSpec& spec, const ReprMode& mode);

}  // namespace docir
