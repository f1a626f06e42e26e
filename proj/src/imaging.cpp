#include "docir/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace docir {

const char* to_string(View view) { return view == View::base ? "base" : "wrist"; }

bool palettes_disjoint(const Palette& a, const Palette& b) {
  for (const auto& ca : a.colors) {
    if (std::find(b.colors.begin(), b.colors.end(), ca) != b.colors.end()) return false;
  }
  return true;
}

bool InstanceRegistry::contains(InstanceId id) const {
  return robot_ids.contains(id) || object_ids.contains(id);
}

IdSet InstanceRegistry::all_ids() const {
  IdSet all = robot_ids;
  all.insert(object_ids.begin(), object_ids.end());
  return all;
}

Frame::Frame(int h, int w, View v)
    : height(h), width(w), view(v), rgb(static_cast<std::size_t>(h) * w * 3, 0.0f),
      ids(static_cast<std::size_t>(h) * w, kBackgroundId) {
  if (h < 0 || w < 0) throw std::invalid_argument("Frame: negative size");
}

void Frame::validate() const {
  if (height < 0 || width < 0) throw std::invalid_argument("Frame: negative size");
  if (rgb.size() != pixels() * 3) throw std::invalid_argument("Frame: rgb size mismatch");
  if (ids.size() != pixels()) throw std::invalid_argument("Frame: id raster size mismatch");
  for (float v : rgb) {
    if (!(v >= 0.0f && v <= 1.0f)) throw std::invalid_argument("Frame: rgb value outside [0,1]");
  }
  for (InstanceId id : ids) {
    if (id < 0) throw std::invalid_argument("Frame: negative instance id");
  }
}

void Frame::validate(const InstanceRegistry& registry) const {
  validate();
  for (InstanceId id : ids) {
    if (id != kBackgroundId && !registry.contains(id)) {
      throw std::invalid_argument("Frame: unregistered instance id " + std::to_string(id));
    }
  }
}

BinaryMask binary_mask(std::span<const InstanceId> ids, int height, int width, const IdSet& group) {
  if (group.contains(kBackgroundId)) {
    throw std::invalid_argument("binary_mask: background id 0 cannot be part of a group");
  }
  if (ids.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("binary_mask: raster size mismatch");
  }
  BinaryMask mask{height, width, std::vector<std::uint8_t>(ids.size(), 0)};
  if (group.empty()) return mask;

  // IDs are small; a dense lookup beats a set probe per pixel.
  const InstanceId max_id = *group.rbegin();
  std::vector<std::uint8_t> lut(static_cast<std::size_t>(max_id) + 1, 0);
  for (InstanceId id : group) lut[id] = 1;
  for (std::size_t p = 0; p < ids.size(); ++p) {
    const InstanceId id = ids[p];
    mask.bits[p] = (id >= 0 && id <= max_id) ? lut[id] : 0;
  }
  return mask;
}

BinaryMask binary_mask(const Frame& frame, const IdSet& group) {
  return binary_mask(frame.ids, frame.height, frame.width, group);
}

MaskedStack apply_mask(std::span<const float> rgb, int height, int width, const BinaryMask& mask) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (mask.height != height || mask.width != width || mask.bits.size() != n || rgb.size() != n * 3) {
    throw std::invalid_argument("apply_mask: shape mismatch");
  }
  MaskedStack stack{height, width, std::vector<float>(n * 4)};
  float* r = stack.channels.data();
  float* g = r + n;
  float* b = g + n;
  float* m = b + n;
  for (std::size_t p = 0; p < n; ++p) {
    const bool on = mask.bits[p] != 0;
    r[p] = on ? rgb[3 * p + 0] : 1.0f;
    g[p] = on ? rgb[3 * p + 1] : 1.0f;
    b[p] = on ? rgb[3 * p + 2] : 1.0f;
    m[p] = on ? 1.0f : 0.0f;
  }
  return stack;
}

MaskedStack apply_mask(const Frame& frame, const BinaryMask& mask) {
  return apply_mask(frame.rgb, frame.height, frame.width, mask);
}

BinaryMask foreground(const Frame& frame) {
  BinaryMask mask{frame.height, frame.width, std::vector<std::uint8_t>(frame.pixels(), 0)};
  for (std::size_t p = 0; p < frame.ids.size(); ++p) mask.bits[p] = frame.ids[p] != kBackgroundId;
  return mask;
}

PackedFrame PackedFrame::pack(const Frame& frame) {
  PackedFrame packed;
  packed.height = frame.height;
  packed.width = frame.width;
  packed.view = frame.view;
  packed.rgb.resize(frame.rgb.size());
  for (std::size_t i = 0; i < frame.rgb.size(); ++i) {
    const float scaled = frame.rgb[i] * 255.0f;
    const float rounded = std::round(scaled);
    if (std::abs(scaled - rounded) > 1e-3f) {
      throw std::invalid_argument("PackedFrame: color is not an 8-bit value");
    }
    packed.rgb[i] = static_cast<std::uint8_t>(rounded);
  }
  packed.ids.resize(frame.ids.size());
  for (std::size_t i = 0; i < frame.ids.size(); ++i) {
    if (frame.ids[i] < 0 || frame.ids[i] > 0xFFFF) {
      throw std::invalid_argument("PackedFrame: instance id out of range");
    }
    packed.ids[i] = static_cast<std::uint16_t>(frame.ids[i]);
  }
  return packed;
}

Frame PackedFrame::unpack() const {
  Frame frame(height, width, view);
  for (std::size_t i = 0; i < rgb.size(); ++i) frame.rgb[i] = channel_value(rgb[i]);
  for (std::size_t i = 0; i < ids.size(); ++i) frame.ids[i] = ids[i];
  return frame;
}

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write_p6(const std::filesystem::path& path, int width, int height,
              const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path.string());
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const Frame& frame) {
  frame.validate();
  std::vector<std::uint8_t> bytes(frame.rgb.size());
  std::transform(frame.rgb.begin(), frame.rgb.end(), bytes.begin(), to_byte);
  write_p6(path, frame.width, frame.height, bytes);
}

void write_ppm_strip(const std::filesystem::path& path, const Frame& frame,
                     std::span<const MaskedStack> stacks) {
  frame.validate();
  const int panels = 1 + static_cast<int>(stacks.size());
  const int total_width = frame.width * panels;
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(total_width) * frame.height * 3);
  auto put = [&](int panel, int row, int col, float r, float g, float b) {
    const std::size_t o = (static_cast<std::size_t>(row) * total_width + panel * frame.width + col) * 3;
    bytes[o] = to_byte(r);
    bytes[o + 1] = to_byte(g);
    bytes[o + 2] = to_byte(b);
  };
  for (int row = 0; row < frame.height; ++row) {
    for (int col = 0; col < frame.width; ++col) {
      const std::size_t p = static_cast<std::size_t>(row) * frame.width + col;
      put(0, row, col, frame.rgb[3 * p], frame.rgb[3 * p + 1], frame.rgb[3 * p + 2]);
    }
  }
  for (std::size_t s = 0; s < stacks.size(); ++s) {
    const auto& st = stacks[s];
    if (st.height != frame.height || st.width != frame.width) {
      throw std::invalid_argument("write_ppm_strip: stack size mismatch");
    }
    for (int row = 0; row < frame.height; ++row) {
      for (int col = 0; col < frame.width; ++col) {
        put(static_cast<int>(s) + 1, row, col, st.at(0, row, col), st.at(1, row, col), st.at(2, row, col));
      }
    }
  }
  write_p6(path, total_width, frame.height, bytes);
}

}  // namespace docir
