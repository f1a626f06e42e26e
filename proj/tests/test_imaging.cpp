#include <doctest.h>

#include "docir/imaging.hpp"

using namespace docir;

namespace {

// 2x3 frame: robot (1), cube (10), background, plate (11), background, robot (2)
Frame small_frame() {
  Frame f(2, 3, View::base);
  f.ids = {1, 10, 0, 11, 0, 2};
  for (std::size_t p = 0; p < f.pixels(); ++p) {
    f.rgb[3 * p] = channel_value(static_cast<std::uint8_t>(10 * p));
    f.rgb[3 * p + 1] = channel_value(static_cast<std::uint8_t>(100 + p));
    f.rgb[3 * p + 2] = channel_value(static_cast<std::uint8_t>(200 + p));
  }
  return f;
}

}  // namespace

TEST_CASE("binary mask marks exactly the group's pixels") {
  const Frame f = small_frame();
  const BinaryMask m = binary_mask(f, {1, 2});
  CHECK(m.height == 2);
  CHECK(m.width == 3);
  CHECK(m.bits == std::vector<std::uint8_t>{1, 0, 0, 0, 0, 1});
  CHECK(binary_mask(f, {}).bits == std::vector<std::uint8_t>(6, 0));
  CHECK(binary_mask(f, {99}).bits == std::vector<std::uint8_t>(6, 0));
}

TEST_CASE("background cannot be a group member") {
  const Frame f = small_frame();
  CHECK_THROWS_AS(binary_mask(f, {0, 10}), std::invalid_argument);
}

TEST_CASE("masked stack keeps color inside, white outside, mask in channel 3") {
  const Frame f = small_frame();
  const MaskedStack s = apply_mask(f, binary_mask(f, {10, 11}));
  for (int p = 0; p < 6; ++p) {
    const int row = p / 3;
    const int col = p % 3;
    const bool in = f.ids[p] == 10 || f.ids[p] == 11;
    for (int c = 0; c < 3; ++c) CHECK(s.at(c, row, col) == (in ? f.rgb[3 * p + c] : 1.0f));
    CHECK(s.at(3, row, col) == (in ? 1.0f : 0.0f));
  }
}

TEST_CASE("foreground is the nonzero-ID indicator") {
  CHECK(foreground(small_frame()).bits == std::vector<std::uint8_t>{1, 1, 0, 1, 0, 1});
}

TEST_CASE("frame validation") {
  Frame f = small_frame();
  CHECK_NOTHROW(f.validate());
  InstanceRegistry reg{{1, 2}, {10, 11}};
  CHECK_NOTHROW(f.validate(reg));
  InstanceRegistry missing{{1, 2}, {10}};
  CHECK_THROWS_AS(f.validate(missing), std::invalid_argument);
  f.ids.pop_back();
  CHECK_THROWS_AS(f.validate(), std::invalid_argument);
  Frame g = small_frame();
  g.rgb[4] = 1.5f;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("packed frames round-trip exactly") {
  const Frame f = small_frame();
  const PackedFrame p = PackedFrame::pack(f);
  const Frame back = p.unpack();
  CHECK(back.height == f.height);
  CHECK(back.width == f.width);
  CHECK(back.view == f.view);
  CHECK(back.ids == f.ids);
  CHECK(back.rgb == f.rgb);

  Frame odd = small_frame();
  odd.rgb[0] = 0.3337f;
  CHECK_THROWS(PackedFrame::pack(odd));
}

TEST_CASE("palettes") {
  Palette a{"a", {{1, 2, 3}, {4, 5, 6}}};
  Palette b{"b", {{7, 8, 9}}};
  Palette c{"c", {{4, 5, 6}}};
  CHECK(palettes_disjoint(a, b));
  CHECK_FALSE(palettes_disjoint(a, c));
}
