// Orthographic top-down rasterizer with an instance-ID buffer.

#include <algorithm>
#include <cmath>

#include "docir/simworld.hpp"

namespace docir {

namespace {

constexpr Color8 kTableColor{204, 204, 204};
constexpr Color8 kVoidColor{51, 51, 51};
constexpr Color8 kFingerColor{89, 89, 89};
constexpr Color8 kPalmColor{128, 128, 128};

// Finger bars sit this far either side of the gripper axis.
constexpr double kFingerSpreadOpen = 0.045;
constexpr double kFingerSpreadClosed = 0.034;
constexpr double kBarHalfWidth = 0.011;
constexpr double kFingerHalfLength = 0.025;

// Maps pixel centers to world coordinates.
struct Camera {
  double x0, y0, span;
  int res;

  double px(int col) const { return x0 + (col + 0.5) * span / res; }
  double py(int row) const { return y0 + (row + 0.5) * span / res; }
  // Conservative pixel index range touching [lo, hi] on one axis.
  std::pair<int, int> range(double lo, double hi, double origin) const {
    const double scale = res / span;
    const int a = std::max(0, static_cast<int>(std::floor((lo - origin) * scale - 0.5)));
    const int b = std::min(res - 1, static_cast<int>(std::ceil((hi - origin) * scale - 0.5)));
    return {a, b};
  }
};

void put(Frame& f, int row, int col, Color8 c, InstanceId id) {
  const std::size_t p = static_cast<std::size_t>(row) * f.width + col;
  f.rgb[3 * p] = channel_value(c.r);
  f.rgb[3 * p + 1] = channel_value(c.g);
  f.rgb[3 * p + 2] = channel_value(c.b);
  f.ids[p] = id;
}

void paint_rect(Frame& f, const Camera& cam, double cx, double cy, double hx, double hy, Color8 c,
                InstanceId id) {
  const auto [c0, c1] = cam.range(cx - hx, cx + hx, cam.x0);
  const auto [r0, r1] = cam.range(cy - hy, cy + hy, cam.y0);
  for (int row = r0; row <= r1; ++row) {
    if (std::abs(cam.py(row) - cy) > hy) continue;
    for (int col = c0; col <= c1; ++col) {
      if (std::abs(cam.px(col) - cx) <= hx) put(f, row, col, c, id);
    }
  }
}

void paint_disk(Frame& f, const Camera& cam, double cx, double cy, double r, Color8 c, InstanceId id) {
  const auto [c0, c1] = cam.range(cx - r, cx + r, cam.x0);
  const auto [r0, r1] = cam.range(cy - r, cy + r, cam.y0);
  for (int row = r0; row <= r1; ++row) {
    const double dy = cam.py(row) - cy;
    for (int col = c0; col <= c1; ++col) {
      const double dx = cam.px(col) - cx;
      if (dx * dx + dy * dy <= r * r) put(f, row, col, c, id);
    }
  }
}

}  // namespace

Frame render_view(const SceneState& s, const SceneConfig& config, View view) {
  const auto& g = config.geometry;
  const int res = config.resolution;
  Camera cam{0.0, 0.0, 1.0, res};
  if (view == View::wrist) {
    cam = Camera{s.gripper[0] - 0.5 * g.wrist_span, s.gripper[1] - 0.5 * g.wrist_span, g.wrist_span, res};
  }

  Frame f(res, res, view);
  for (int row = 0; row < res; ++row) {
    const double y = cam.py(row);
    for (int col = 0; col < res; ++col) {
      const double x = cam.px(col);
      const bool on_table = x >= 0 && x <= g.workspace_max[0] && y >= 0 && y <= g.workspace_max[1];
      put(f, row, col, on_table ? kTableColor : kVoidColor, kBackgroundId);
    }
  }

  // painter's order: lower tops first, ties by ID
  std::vector<const SceneObject*> order;
  for (const auto& o : s.objects) order.push_back(&o);
  std::stable_sort(order.begin(), order.end(), [&](const SceneObject* a, const SceneObject* b) {
    return a->top(g) < b->top(g);
  });
  for (const SceneObject* o : order) {
    if (o->kind == ObjectKind::cube) {
      paint_rect(f, cam, o->position[0], o->position[1], g.cube_half, g.cube_half, o->color, o->id);
    } else {
      paint_disk(f, cam, o->position[0], o->position[1], g.plate_radius, o->color, o->id);
    }
  }

  const double spread = s.closed ? kFingerSpreadClosed : kFingerSpreadOpen;
  const double gx = s.gripper[0];
  const double gy = s.gripper[1];
  paint_rect(f, cam, gx, gy, spread + kBarHalfWidth, kBarHalfWidth, kPalmColor, kPalmId);
  paint_rect(f, cam, gx - spread, gy, kBarHalfWidth, kFingerHalfLength, kFingerColor, kFingerId);
  paint_rect(f, cam, gx + spread, gy, kBarHalfWidth, kFingerHalfLength, kFingerColor, kFingerId);
  return f;
}

}  // namespace docir
