// Raster types and mask algebra shared by the renderer and the disentanglement
// pipeline.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace docir {

enum class View { base, wrist };

const char* to_string(View view);

using InstanceId = std::int32_t;
using IdSet = std::set<InstanceId>;

/// Reserved instance ID for table and void pixels.
inline constexpr InstanceId kBackgroundId = 0;

/// 8-bit color. Renderers only emit colors of this form, so a float raster
/// built from them can be packed back to bytes losslessly.
struct Color8 {
  std::uint8_t r = 0, g = 0, b = 0;

  friend bool operator==(const Color8&, const Color8&) = default;
  friend auto operator<=>(const Color8&, const Color8&) = default;
};

inline float channel_value(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

struct Palette {
  std::string name;
  std::vector<Color8> colors;
};

bool palettes_disjoint(const Palette& a, const Palette& b);

/// Robot links and scene objects known to the world. Background (0) is never
/// registered.
struct InstanceRegistry {
  IdSet robot_ids;
  IdSet object_ids;

  bool contains(InstanceId id) const;
  IdSet all_ids() const;
};

/// Paired RGB and instance-ID rasters from one camera.
struct Frame {
  int height = 0;
  int width = 0;
  View view = View::base;
  std::vector<float> rgb;        // height*width*3, row-major, interleaved
  std::vector<InstanceId> ids;   // height*width, row-major

  Frame() = default;
  Frame(int height, int width, View view);

  std::size_t pixels() const { return static_cast<std::size_t>(height) * width; }
  bool empty() const { return height == 0 || width == 0; }

  /// Throws std::invalid_argument when the rasters disagree in size or carry
  /// out-of-range values.
  void validate() const;
  /// Additionally checks every nonzero ID against the registry.
  void validate(const InstanceRegistry& registry) const;
};

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  std::size_t pixels() const { return bits.size(); }
};

/// 4×H×W channel-major stack: masked R, G, B then the mask itself.
struct MaskedStack {
  static constexpr int kChannels = 4;

  int height = 0;
  int width = 0;
  std::vector<float> channels;

  float at(int channel, int row, int col) const {
    return channels[(static_cast<std::size_t>(channel) * height + row) * width + col];
  }
  std::span<const float> plane(int channel) const {
    const std::size_t n = static_cast<std::size_t>(height) * width;
    return {channels.data() + channel * n, n};
  }
};

BinaryMask binary_mask(std::span<const InstanceId> ids, int height, int width, const IdSet& group);
BinaryMask binary_mask(const Frame& frame, const IdSet& group);

/// Pixels inside the mask keep their color; the rest turn white. The mask is
/// copied verbatim into channel 3.
MaskedStack apply_mask(const Frame& frame, const BinaryMask& mask);
MaskedStack apply_mask(std::span<const float> rgb, int height, int width, const BinaryMask& mask);

/// Indicator of ids != 0.
BinaryMask foreground(const Frame& frame);

/// Lossless byte packing of a renderer-produced frame, used for rollout
/// storage. Colors must be multiples of 1/255.
struct PackedFrame {
  int height = 0;
  int width = 0;
  View view = View::base;
  std::vector<std::uint8_t> rgb;
  std::vector<std::uint16_t> ids;

  static PackedFrame pack(const Frame& frame);
  Frame unpack() const;
  bool empty() const { return height == 0 || width == 0; }
};

// PPM (P6, 8-bit) debug export.
void write_ppm(const std::filesystem::path& path, const Frame& frame);
/// Writes the full frame followed by each stack's masked RGB side by side.
void write_ppm_strip(const std::filesystem::path& path, const Frame& frame,
                     std::span<const MaskedStack> stacks);

}  // namespace docir
