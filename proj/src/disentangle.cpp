#include "docir/disentangle.hpp"

#include <algorithm>
#include <stdexcept>

namespace docir {

namespace {

IdSet set_union(const IdSet& a, const IdSet& b) {
  IdSet out = a;
  out.insert(b.begin(), b.end());
  return out;
}

bool disjoint(const IdSet& a, const IdSet& b) {
  return std::none_of(a.begin(), a.end(), [&](InstanceId id) { return b.contains(id); });
}

MaskedStack group_stack(const Frame& frame, const IdSet& group) {
  return apply_mask(frame, binary_mask(frame, group));
}

MaskedStack padding_stack(int height, int width) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  MaskedStack stack{height, width, std::vector<float>(n * 4, 1.0f)};
  std::fill(stack.channels.begin() + 3 * n, stack.channels.end(), 0.0f);
  return stack;
}

}  // namespace

void GroupSpec::validate(const InstanceRegistry& registry) const {
  if (!disjoint(robot_ids, object_ids) || !disjoint(robot_ids, obstacle_ids) ||
      !disjoint(object_ids, obstacle_ids)) {
    throw std::invalid_argument("GroupSpec: groups overlap");
  }
  if (object_ids.empty()) throw std::invalid_argument("GroupSpec: no object of interest");
  if (set_union(set_union(robot_ids, object_ids), obstacle_ids) != registry.all_ids()) {
    throw std::invalid_argument("GroupSpec: groups do not cover the registry");
  }
}

GroupSpec make_group_spec(const InstanceRegistry& registry, const IdSet& target_ids) {
  for (InstanceId id : target_ids) {
    if (registry.robot_ids.contains(id)) {
      throw std::invalid_argument("make_group_spec: target " + std::to_string(id) + " is a robot link");
    }
    if (!registry.object_ids.contains(id)) {
      throw std::invalid_argument("make_group_spec: unknown target id " + std::to_string(id));
    }
  }
  GroupSpec spec;
  spec.robot_ids = registry.robot_ids;
  spec.object_ids = target_ids;
  for (InstanceId id : registry.object_ids) {
    if (!target_ids.contains(id)) spec.obstacle_ids.insert(id);
  }
  return spec;
}

std::string to_string(ReprKind kind) {
  switch (kind) {
    case ReprKind::docir: return "docir";
    case ReprKind::ocr: return "ocr";
    case ReprKind::flat: return "flat";
    case ReprKind::ablation_a: return "ablation-a";
    case ReprKind::ablation_b: return "ablation-b";
    case ReprKind::ablation_c: return "ablation-c";
    case ReprKind::proprio: return "proprio";
  }
  return "?";
}

ReprKind parse_repr_kind(std::string_view name) {
  std::string s(name);
  std::replace(s.begin(), s.end(), '_', '-');
  for (ReprKind k : {ReprKind::docir, ReprKind::ocr, ReprKind::flat, ReprKind::ablation_a,
                     ReprKind::ablation_b, ReprKind::ablation_c, ReprKind::proprio}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown representation '" + std::string(name) + "'");
}

ReprMode ReprMode::make(ReprKind kind, int max_objects) {
  ReprMode mode;
  mode.kind = kind;
  if (kind == ReprKind::ocr) mode.slot_count = max_objects + 1;
  if (kind == ReprKind::ocr || kind == ReprKind::flat) mode.id_embed_dim = kDefaultIdEmbedDim;
  return mode;
}

int ReprMode::stacks_per_view() const {
  switch (kind) {
    case ReprKind::docir: return 3;
    case ReprKind::ablation_a:
    case ReprKind::ablation_b:
    case ReprKind::ablation_c: return 2;
    case ReprKind::ocr: return slot_count;
    case ReprKind::flat: return 1;
    case ReprKind::proprio: return 0;
  }
  return 0;
}

int ReprMode::channels_per_stack() const {
  if (kind == ReprKind::flat) return 3;
  if (kind == ReprKind::proprio) return 0;
  return MaskedStack::kChannels;
}

void ReprMode::validate(int scene_objects) const {
  if (id_embed_dim < 0) throw std::invalid_argument("ReprMode: negative embedding width");
  const bool embeds = kind == ReprKind::ocr || kind == ReprKind::flat;
  if (!embeds && id_embed_dim != 0) {
    throw std::invalid_argument("ReprMode: " + to_string(kind) + " takes no id embedding");
  }
  if (kind == ReprKind::ocr && slot_count < scene_objects + 1) {
    throw std::invalid_argument("ReprMode: ocr slot_count " + std::to_string(slot_count) +
                                " cannot hold " + std::to_string(scene_objects) + " objects");
  }
}

std::array<MaskedStack, 3> docir_stacks(const Frame& frame, const GroupSpec& spec) {
  return {group_stack(frame, spec.robot_ids), group_stack(frame, spec.object_ids),
          group_stack(frame, spec.obstacle_ids)};
}

std::array<MaskedStack, 2> ablation_stacks(const Frame& frame, const GroupSpec& spec,
                                           AblationVariant variant) {
  switch (variant) {
    case AblationVariant::A:
      return {group_stack(frame, set_union(spec.robot_ids, spec.object_ids)),
              group_stack(frame, spec.obstacle_ids)};
    case AblationVariant::B:
      return {group_stack(frame, set_union(spec.robot_ids, spec.obstacle_ids)),
              group_stack(frame, spec.object_ids)};
    case AblationVariant::C:
      return {group_stack(frame, set_union(spec.object_ids, spec.obstacle_ids)),
              group_stack(frame, spec.robot_ids)};
  }
  throw std::invalid_argument("ablation_stacks: bad variant");
}

std::vector<MaskedStack> ocr_slots(const Frame& frame, const InstanceRegistry& registry, int slot_count) {
  const int objects = static_cast<int>(registry.object_ids.size());
  if (objects > slot_count - 1) {
    throw std::invalid_argument("ocr_slots: " + std::to_string(objects) + " objects overflow " +
                                std::to_string(slot_count) + " slots");
  }
  std::vector<MaskedStack> slots;
  slots.reserve(slot_count);
  slots.push_back(group_stack(frame, registry.robot_ids));
  for (InstanceId id : registry.object_ids) slots.push_back(group_stack(frame, IdSet{id}));
  while (static_cast<int>(slots.size()) < slot_count) {
    slots.push_back(padding_stack(frame.height, frame.width));
  }
  return slots;
}

std::vector<float> flat_obs(const Frame& frame) {
  frame.validate();
  const std::size_t n = frame.pixels();
  std::vector<float> out(3 * n);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t c = 0; c < 3; ++c) out[c * n + p] = frame.rgb[3 * p + c];
  }
  return out;
}

void write_view_input(const Frame& frame, const InstanceRegistry& registry, const GroupSpec& spec,
                      const ReprMode& mode, std::span<float> out) {
  const std::size_t n = frame.pixels();
  const std::size_t expected =
      static_cast<std::size_t>(mode.stacks_per_view()) * mode.channels_per_stack() * n;
  if (out.size() != expected) throw std::invalid_argument("write_view_input: output size mismatch");

  auto copy_stacks = [&](auto&& stacks) {
    std::size_t offset = 0;
    for (const MaskedStack& s : stacks) {
      std::copy(s.channels.begin(), s.channels.end(), out.begin() + offset);
      offset += s.channels.size();
    }
  };
  switch (mode.kind) {
    case ReprKind::docir: copy_stacks(docir_stacks(frame, spec)); break;
    case ReprKind::ablation_a: copy_stacks(ablation_stacks(frame, spec, AblationVariant::A)); break;
    case ReprKind::ablation_b: copy_stacks(ablation_stacks(frame, spec, AblationVariant::B)); break;
    case ReprKind::ablation_c: copy_stacks(ablation_stacks(frame, spec, AblationVariant::C)); break;
    case ReprKind::ocr: copy_stacks(ocr_slots(frame, registry, mode.slot_count)); break;
    case ReprKind::flat: {
      const auto flat = flat_obs(frame);
      std::copy(flat.begin(), flat.end(), out.begin());
      break;
    }
    case ReprKind::proprio: break;
  }
}

ViewInput make_view_input(const Frame& frame, const InstanceRegistry& registry,
                          const GroupSpec& spec, const ReprMode& mode) {
  ViewInput v;
  v.stacks = mode.stacks_per_view();
  v.channels = mode.channels_per_stack();
  v.height = frame.height;
  v.width = frame.width;
  v.data.resize(static_cast<std::size_t>(v.stacks) * v.channels * frame.pixels());
  write_view_input(frame, registry, spec, mode, v.data);
  return v;
}

ReprInput make_repr_input(const Frame& base, const Frame& wrist, const InstanceRegistry& registry,
                          const GroupSpec& spec, const ReprMode& mode) {
  ReprInput in;
  in.base = make_view_input(base, registry, spec, mode);
  in.wrist = make_view_input(wrist, registry, spec, mode);
  in.target_id = spec.object_ids.empty() ? kBackgroundId : *spec.object_ids.begin();
  return in;
}

}  // namespace docir
