#include "docir/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace docir::ad {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                              shape_string(b));
}

template <class T>
void check_same_graph(Var<T> a, Var<T> b) {
  if (a.graph != b.graph) throw std::invalid_argument("ops: variables from different graphs");
}

// ------------------------------------------------------------------ conv2d

struct ConvGeometry {
  int batch, channels, height, width, out_channels, kernel, stride, out_h, out_w;
  bool batched;

  std::size_t patch() const { return static_cast<std::size_t>(channels) * kernel * kernel; }
  std::size_t positions() const { return static_cast<std::size_t>(out_h) * out_w; }
  std::size_t image() const { return static_cast<std::size_t>(channels) * height * width; }
};

// Column buffers are processed in chunks of images of about this many
// elements, so one GEMM covers several images.
constexpr std::size_t kChunkElements = std::size_t{1} << 20;

template <class T>
void im2col(const T* image, const ConvGeometry& g, T* cols, std::size_t ld, std::size_t offset) {
  const int k = g.kernel;
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* dst = cols + (static_cast<std::size_t>(c * k + ki) * k + kj) * ld + offset;
        for (int oh = 0; oh < g.out_h; ++oh) {
          const T* src = image + (static_cast<std::size_t>(c) * g.height + oh * g.stride + ki) * g.width + kj;
          T* row = dst + static_cast<std::size_t>(oh) * g.out_w;
          for (int ow = 0; ow < g.out_w; ++ow) row[ow] = src[ow * g.stride];
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, const ConvGeometry& g, std::size_t ld, std::size_t offset, T* image) {
  const int k = g.kernel;
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* src = cols + (static_cast<std::size_t>(c * k + ki) * k + kj) * ld + offset;
        for (int oh = 0; oh < g.out_h; ++oh) {
          T* dst = image + (static_cast<std::size_t>(c) * g.height + oh * g.stride + ki) * g.width + kj;
          const T* row = src + static_cast<std::size_t>(oh) * g.out_w;
          for (int ow = 0; ow < g.out_w; ++ow) dst[ow * g.stride] += row[ow];
        }
      }
    }
  }
}

ConvGeometry conv_geometry(const Shape& xs, const Shape& ws, int stride) {
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be positive");
  if (ws.size() != 4 || ws[2] != ws[3]) {
    throw std::invalid_argument("conv2d: kernels must be [O,C,k,k], got " + shape_string(ws));
  }
  ConvGeometry g{};
  g.batched = xs.size() == 4;
  if (!g.batched && xs.size() != 3) {
    throw std::invalid_argument("conv2d: input must be [B,C,H,W] or [C,H,W], got " + shape_string(xs));
  }
  const int o = g.batched ? 1 : 0;
  g.batch = g.batched ? xs[0] : 1;
  g.channels = xs[o];
  g.height = xs[o + 1];
  g.width = xs[o + 2];
  g.out_channels = ws[0];
  g.kernel = ws[2];
  g.stride = stride;
  if (ws[1] != g.channels) shape_error("conv2d", xs, ws);
  if (g.kernel > g.height || g.kernel > g.width) shape_error("conv2d", xs, ws);
  g.out_h = (g.height - g.kernel) / stride + 1;
  g.out_w = (g.width - g.kernel) / stride + 1;
  return g;
}

template <class T>
std::size_t chunk_images(const ConvGeometry& g) {
  const std::size_t per_image = g.patch() * g.positions();
  return std::clamp<std::size_t>(kChunkElements / std::max<std::size_t>(per_image, 1), 1, g.batch);
}

// ------------------------------------------------------------------ elementwise helpers

template <class T, class Forward, class Derivative>
Var<T> unary(Var<T> x, Forward f, Derivative df) {
  Graph<T>& g = *x.graph;
  const Tensor<T>& xv = x.value();
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  const int xid = x.id;
  return g.record(std::move(y), {xid}, [xid, df](Graph<T>& gr, int self) {
    const auto& xv = gr.value(xid);
    const auto& yv = gr.value(self);
    auto dy = gr.out_grad(self);
    auto dx = gr.in_grad(xid);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * df(xv[i], yv[i]);
  });
}

template <class T>
const Shape& same_shape(const char* op, Var<T> a, Var<T> b) {
  check_same_graph(a, b);
  if (a.shape() != b.shape()) shape_error(op, a.shape(), b.shape());
  return a.shape();
}

}  // namespace

template <class T>
Var<T> conv2d(Var<T> x, Var<T> kernels, int stride) {
  check_same_graph(x, kernels);
  Graph<T>& graph = *x.graph;
  const ConvGeometry geo = conv_geometry(x.shape(), kernels.shape(), stride);
  const std::size_t K = geo.patch();
  const std::size_t P = geo.positions();
  const std::size_t chunk = chunk_images<T>(geo);

  Shape out_shape = geo.batched ? Shape{geo.batch, geo.out_channels, geo.out_h, geo.out_w}
                                : Shape{geo.out_channels, geo.out_h, geo.out_w};
  Tensor<T> out(out_shape);
  const T* xp = x.value().ptr();
  ConstMatMap<T> w(kernels.value().ptr(), geo.out_channels, K);
  Buffer<T> cols(K * chunk * P);
  Buffer<T> y(static_cast<std::size_t>(geo.out_channels) * chunk * P);

  for (std::size_t b0 = 0; b0 < static_cast<std::size_t>(geo.batch); b0 += chunk) {
    const std::size_t nb = std::min(chunk, geo.batch - b0);
    const std::size_t ld = nb * P;
    for (std::size_t bl = 0; bl < nb; ++bl) im2col(xp + (b0 + bl) * geo.image(), geo, cols.data(), ld, bl * P);
    MatMap<T> ym(y.data(), geo.out_channels, ld);
    ym.noalias() = w * ConstMatMap<T>(cols.data(), K, ld);
    for (std::size_t bl = 0; bl < nb; ++bl) {
      for (int o = 0; o < geo.out_channels; ++o) {
        const T* src = y.data() + o * ld + bl * P;
        std::copy(src, src + P, out.ptr() + ((b0 + bl) * geo.out_channels + o) * P);
      }
    }
  }

  const int xid = x.id;
  const int wid = kernels.id;
  return graph.record(std::move(out), {xid, wid}, [geo, xid, wid, chunk](Graph<T>& g, int self) {
    const std::size_t K = geo.patch();
    const std::size_t P = geo.positions();
    const bool want_w = g.needs_grad(wid);
    const bool want_x = g.needs_grad(xid);
    const T* xp = g.value(xid).ptr();
    ConstMatMap<T> w(g.value(wid).ptr(), geo.out_channels, K);
    auto dy = g.out_grad(self);
    T* dwp = want_w ? g.in_grad(wid).data() : nullptr;
    T* dxp = want_x ? g.in_grad(xid).data() : nullptr;

    Buffer<T> cols(K * chunk * P);
    Buffer<T> dyc(static_cast<std::size_t>(geo.out_channels) * chunk * P);
    for (std::size_t b0 = 0; b0 < static_cast<std::size_t>(geo.batch); b0 += chunk) {
      const std::size_t nb = std::min(chunk, geo.batch - b0);
      const std::size_t ld = nb * P;
      for (std::size_t bl = 0; bl < nb; ++bl) {
        for (int o = 0; o < geo.out_channels; ++o) {
          const T* src = dy.data() + ((b0 + bl) * geo.out_channels + o) * P;
          std::copy(src, src + P, dyc.data() + o * ld + bl * P);
        }
      }
      ConstMatMap<T> dym(dyc.data(), geo.out_channels, ld);
      if (want_w) {
        for (std::size_t bl = 0; bl < nb; ++bl) im2col(xp + (b0 + bl) * geo.image(), geo, cols.data(), ld, bl * P);
        MatMap<T> dw(dwp, geo.out_channels, K);
        dw.noalias() += dym * ConstMatMap<T>(cols.data(), K, ld).transpose();
      }
      if (want_x) {
        MatMap<T> dcols(cols.data(), K, ld);
        dcols.noalias() = w.transpose() * dym;
        for (std::size_t bl = 0; bl < nb; ++bl) col2im_add(cols.data(), geo, ld, bl * P, dxp + (b0 + bl) * geo.image());
      }
    }
  });
}

template <class T>
Var<T> add_channel_bias(Var<T> x, Var<T> bias) {
  check_same_graph(x, bias);
  const Shape& xs = x.shape();
  if (xs.size() < 3 || bias.shape().size() != 1) shape_error("add_channel_bias", xs, bias.shape());
  const int ch_axis = static_cast<int>(xs.size()) - 3;
  const int channels = xs[ch_axis];
  if (bias.shape()[0] != channels) shape_error("add_channel_bias", xs, bias.shape());
  const std::size_t plane = static_cast<std::size_t>(xs[ch_axis + 1]) * xs[ch_axis + 2];
  const std::size_t outer = x.size() / (plane * channels);

  Tensor<T> y = x.value();
  y.set_requires_grad(false);
  const T* b = bias.value().ptr();
  for (std::size_t n = 0; n < outer; ++n) {
    for (int c = 0; c < channels; ++c) {
      T* p = y.ptr() + (n * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] += b[c];
    }
  }
  const int xid = x.id;
  const int bid = bias.id;
  return x.graph->record(std::move(y), {xid, bid}, [=](Graph<T>& g, int self) {
    auto dy = g.out_grad(self);
    if (g.needs_grad(xid)) {
      auto dx = g.in_grad(xid);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    }
    if (g.needs_grad(bid)) {
      auto db = g.in_grad(bid);
      for (std::size_t n = 0; n < outer; ++n) {
        for (int c = 0; c < channels; ++c) {
          const T* p = dy.data() + (n * channels + c) * plane;
          T acc = 0;
          for (std::size_t i = 0; i < plane; ++i) acc += p[i];
          db[c] += acc;
        }
      }
    }
  });
}

template <class T>
Var<T> affine(Var<T> x, Var<T> weights, Var<T> bias) {
  check_same_graph(x, weights);
  check_same_graph(x, bias);
  const Shape& xs = x.shape();
  const Shape& ws = weights.shape();
  if (ws.size() != 2 || bias.shape() != Shape{ws[0]}) shape_error("affine", ws, bias.shape());
  const bool batched = xs.size() == 2;
  if (!batched && xs.size() != 1) shape_error("affine", xs, ws);
  const int rows = batched ? xs[0] : 1;
  const int in = batched ? xs[1] : xs[0];
  const int out = ws[0];
  if (in != ws[1]) shape_error("affine", xs, ws);

  Tensor<T> y(batched ? Shape{rows, out} : Shape{out});
  {
    ConstMatMap<T> xm(x.value().ptr(), rows, in);
    ConstMatMap<T> wm(weights.value().ptr(), out, in);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.value().ptr(), out);
    MatMap<T> ym(y.ptr(), rows, out);
    ym.noalias() = xm * wm.transpose();
    ym.rowwise() += b;
  }
  const int xid = x.id;
  const int wid = weights.id;
  const int bid = bias.id;
  return x.graph->record(std::move(y), {xid, wid, bid}, [=](Graph<T>& g, int self) {
    ConstMatMap<T> dy(g.out_grad(self).data(), rows, out);
    if (g.needs_grad(xid)) {
      MatMap<T> dx(g.in_grad(xid).data(), rows, in);
      dx.noalias() += dy * ConstMatMap<T>(g.value(wid).ptr(), out, in);
    }
    if (g.needs_grad(wid)) {
      MatMap<T> dw(g.in_grad(wid).data(), out, in);
      dw.noalias() += dy.transpose() * ConstMatMap<T>(g.value(xid).ptr(), rows, in);
    }
    if (g.needs_grad(bid)) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(g.in_grad(bid).data(), out);
      db += dy.colwise().sum();
    }
  });
}

template <class T>
Var<T> relu(Var<T> x) {
  return unary(x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> tanh(Var<T> x) {
  return unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> sigmoid(Var<T> x) {
  return unary(
      x,
      [](T v) { return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> exp(Var<T> x) {
  return unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <class T>
Var<T> log(Var<T> x) {
  return unary(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <class T>
Var<T> softplus(Var<T> x) {
  return unary(
      x, [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) { return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v)); });
}

template <class T>
Var<T> square(Var<T> x) {
  return unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <class T>
Var<T> scale(Var<T> x, double factor) {
  const T f = static_cast<T>(factor);
  return unary(x, [f](T v) { return f * v; }, [f](T, T) { return f; });
}

template <class T>
Var<T> add_scalar(Var<T> x, double offset) {
  const T c = static_cast<T>(offset);
  return unary(x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <class T>
Var<T> clamp(Var<T> x, double lo, double hi) {
  const T l = static_cast<T>(lo);
  const T h = static_cast<T>(hi);
  return unary(x, [l, h](T v) { return std::clamp(v, l, h); },
               [l, h](T v, T) { return (v > l && v < h) ? T(1) : T(0); });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  const Shape shape = same_shape("add", a, b);
  Tensor<T> y(shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] + b.value()[i];
  const int aid = a.id, bid = b.id;
  return a.graph->record(std::move(y), {aid, bid}, [=](Graph<T>& g, int self) {
    auto dy = g.out_grad(self);
    for (int id : {aid, bid}) {
      if (!g.needs_grad(id)) continue;
      auto d = g.in_grad(id);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
  });
}

template <class T>
Var<T> sub(Var<T> a, Var<T> b) {
  const Shape shape = same_shape("sub", a, b);
  Tensor<T> y(shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] - b.value()[i];
  const int aid = a.id, bid = b.id;
  return a.graph->record(std::move(y), {aid, bid}, [=](Graph<T>& g, int self) {
    auto dy = g.out_grad(self);
    if (g.needs_grad(aid)) {
      auto d = g.in_grad(aid);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i];
    }
    if (g.needs_grad(bid)) {
      auto d = g.in_grad(bid);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= dy[i];
    }
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  const Shape shape = same_shape("mul", a, b);
  Tensor<T> y(shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.value()[i] * b.value()[i];
  const int aid = a.id, bid = b.id;
  return a.graph->record(std::move(y), {aid, bid}, [=](Graph<T>& g, int self) {
    auto dy = g.out_grad(self);
    const auto& av = g.value(aid);
    const auto& bv = g.value(bid);
    if (g.needs_grad(aid)) {
      auto d = g.in_grad(aid);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * bv[i];
    }
    if (g.needs_grad(bid)) {
      auto d = g.in_grad(bid);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy[i] * av[i];
    }
  });
}

template <class T>
Var<T> minimum(Var<T> a, Var<T> b) {
  const Shape shape = same_shape("minimum", a, b);
  Tensor<T> y(shape);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(a.value()[i], b.value()[i]);
  const int aid = a.id, bid = b.id;
  return a.graph->record(std::move(y), {aid, bid}, [=](Graph<T>& g, int self) {
    auto dy = g.out_grad(self);
    const auto& av = g.value(aid);
    const auto& bv = g.value(bid);
    const bool wa = g.needs_grad(aid);
    const bool wb = g.needs_grad(bid);
    std::span<T> da = wa ? g.in_grad(aid) : std::span<T>{};
    std::span<T> db = wb ? g.in_grad(bid) : std::span<T>{};
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if (av[i] <= bv[i]) {
        if (wa) da[i] += dy[i];
      } else if (wb) {
        db[i] += dy[i];
      }
    }
  });
}

template <class T>
Var<T> sum(Var<T> x) {
  T acc = 0;
  for (T v : x.value().data()) acc += v;
  const int xid = x.id;
  return x.graph->record(Tensor<T>(Shape{1}, acc), {xid}, [xid](Graph<T>& g, int self) {
    const T dy = g.out_grad(self)[0];
    for (auto& d : g.in_grad(xid)) d += dy;
  });
}

template <class T>
Var<T> mean(Var<T> x) {
  const std::size_t n = x.size();
  if (n == 0) throw std::invalid_argument("mean: empty tensor");
  T acc = 0;
  for (T v : x.value().data()) acc += v;
  const int xid = x.id;
  return x.graph->record(Tensor<T>(Shape{1}, acc / static_cast<T>(n)), {xid}, [xid, n](Graph<T>& g, int self) {
    const T dy = g.out_grad(self)[0] / static_cast<T>(n);
    for (auto& d : g.in_grad(xid)) d += dy;
  });
}

template <class T>
Var<T> row_sum(Var<T> x) {
  const Shape& xs = x.shape();
  if (xs.size() != 2) throw std::invalid_argument("row_sum: expected [B,d], got " + shape_string(xs));
  const int rows = xs[0], cols = xs[1];
  Tensor<T> y(Shape{rows});
  for (int r = 0; r < rows; ++r) {
    T acc = 0;
    for (int c = 0; c < cols; ++c) acc += x.value()[static_cast<std::size_t>(r) * cols + c];
    y[r] = acc;
  }
  const int xid = x.id;
  return x.graph->record(std::move(y), {xid}, [=](Graph<T>& g, int self) {
    auto dy = g.out_grad(self);
    auto dx = g.in_grad(xid);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) dx[static_cast<std::size_t>(r) * cols + c] += dy[r];
    }
  });
}

template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
  if (numel(shape) != x.size()) shape_error("reshape", x.shape(), shape);
  Tensor<T> y(std::move(shape), std::vector<T>(x.value().data().begin(), x.value().data().end()));
  const int xid = x.id;
  return x.graph->record(std::move(y), {xid}, [xid](Graph<T>& g, int self) {
    auto dy = g.out_grad(self);
    auto dx = g.in_grad(xid);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
  });
}

template <class T>
Var<T> flatten(Var<T> x) {
  const Shape& xs = x.shape();
  if (xs.empty()) throw std::invalid_argument("flatten: scalar input");
  const int rows = xs[0];
  return reshape(x, Shape{rows, rows == 0 ? 0 : static_cast<int>(x.size() / rows)});
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const int rows = parts[0].shape().at(0);
  std::vector<int> widths;
  std::vector<int> ids;
  int total = 0;
  for (const auto& p : parts) {
    check_same_graph(parts[0], p);
    if (p.shape().size() != 2 || p.shape()[0] != rows) shape_error("concat_cols", parts[0].shape(), p.shape());
    widths.push_back(p.shape()[1]);
    ids.push_back(p.id);
    total += p.shape()[1];
  }
  Tensor<T> y(Shape{rows, total});
  int offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const T* src = parts[k].value().ptr();
    for (int r = 0; r < rows; ++r) {
      std::copy(src + static_cast<std::size_t>(r) * widths[k], src + static_cast<std::size_t>(r + 1) * widths[k],
                y.ptr() + static_cast<std::size_t>(r) * total + offset);
    }
    offset += widths[k];
  }
  Graph<T>& graph = *parts[0].graph;
  return graph.record(std::move(y), ids, [=](Graph<T>& g, int self) {
    auto dy = g.out_grad(self);
    int off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (g.needs_grad(ids[k])) {
        auto d = g.in_grad(ids[k]);
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < widths[k]; ++c) {
            d[static_cast<std::size_t>(r) * widths[k] + c] += dy[static_cast<std::size_t>(r) * total + off + c];
          }
        }
      }
      off += widths[k];
    }
  });
}

template <class T>
Var<T> slice_cols(Var<T> x, int begin, int end) {
  const Shape& xs = x.shape();
  if (xs.size() != 2 || begin < 0 || end > xs[1] || begin >= end) {
    throw std::invalid_argument("slice_cols: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                                ") for " + shape_string(xs));
  }
  const int rows = xs[0], cols = xs[1], width = end - begin;
  Tensor<T> y(Shape{rows, width});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < width; ++c) {
      y[static_cast<std::size_t>(r) * width + c] = x.value()[static_cast<std::size_t>(r) * cols + begin + c];
    }
  }
  const int xid = x.id;
  return x.graph->record(std::move(y), {xid}, [=](Graph<T>& g, int self) {
    auto dy = g.out_grad(self);
    auto dx = g.in_grad(xid);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < width; ++c) {
        dx[static_cast<std::size_t>(r) * cols + begin + c] += dy[static_cast<std::size_t>(r) * width + c];
      }
    }
  });
}

template <class T>
Var<T> broadcast_rows(Var<T> v, int rows) {
  if (v.shape().size() != 1) throw std::invalid_argument("broadcast_rows: expected a vector");
  const int d = v.shape()[0];
  Tensor<T> y(Shape{rows, d});
  for (int r = 0; r < rows; ++r) std::copy(v.value().ptr(), v.value().ptr() + d, y.ptr() + static_cast<std::size_t>(r) * d);
  const int vid = v.id;
  return v.graph->record(std::move(y), {vid}, [=](Graph<T>& g, int self) {
    auto dy = g.out_grad(self);
    auto dv = g.in_grad(vid);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < d; ++c) dv[c] += dy[static_cast<std::size_t>(r) * d + c];
    }
  });
}

template <class T>
Var<T> embedding(Var<T> table, const std::vector<int>& ids) {
  const Shape& ts = table.shape();
  if (ts.size() != 2) throw std::invalid_argument("embedding: table must be [V,d]");
  const int vocab = ts[0], d = ts[1];
  const int rows = static_cast<int>(ids.size());
  Tensor<T> y(Shape{rows, d});
  for (int r = 0; r < rows; ++r) {
    if (ids[r] < 0 || ids[r] >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[r]) + " outside table of " + std::to_string(vocab));
    }
    const T* src = table.value().ptr() + static_cast<std::size_t>(ids[r]) * d;
    std::copy(src, src + d, y.ptr() + static_cast<std::size_t>(r) * d);
  }
  const int tid = table.id;
  return table.graph->record(std::move(y), {tid}, [=](Graph<T>& g, int self) {
    auto dy = g.out_grad(self);
    auto dt = g.in_grad(tid);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < d; ++c) dt[static_cast<std::size_t>(ids[r]) * d + c] += dy[static_cast<std::size_t>(r) * d + c];
    }
  });
}

#define DOCIR_INSTANTIATE_OPS(T)                                              \
  template Var<T> conv2d(Var<T>, Var<T>, int);                                \
  template Var<T> add_channel_bias(Var<T>, Var<T>);                           \
  template Var<T> affine(Var<T>, Var<T>, Var<T>);                             \
  template Var<T> relu(Var<T>);                                               \
  template Var<T> tanh(Var<T>);                                               \
  template Var<T> sigmoid(Var<T>);                                            \
  template Var<T> exp(Var<T>);                                                \
  template Var<T> log(Var<T>);                                                \
  template Var<T> softplus(Var<T>);                                           \
  template Var<T> square(Var<T>);                                             \
  template Var<T> scale(Var<T>, double);                                      \
  template Var<T> add_scalar(Var<T>, double);                                 \
  template Var<T> clamp(Var<T>, double, double);                              \
  template Var<T> add(Var<T>, Var<T>);                                        \
  template Var<T> sub(Var<T>, Var<T>);                                        \
  template Var<T> mul(Var<T>, Var<T>);                                        \
  template Var<T> minimum(Var<T>, Var<T>);                                    \
  template Var<T> sum(Var<T>);                                                \
  template Var<T> mean(Var<T>);                                               \
  template Var<T> row_sum(Var<T>);                                            \
  template Var<T> reshape(Var<T>, Shape);                                     \
  template Var<T> flatten(Var<T>);                                            \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                    \
  template Var<T> slice_cols(Var<T>, int, int);                               \
  template Var<T> broadcast_rows(Var<T>, int);                                \
  template Var<T> embedding(Var<T>, const std::vector<int>&);

DOCIR_INSTANTIATE_OPS(float)
DOCIR_INSTANTIATE_OPS(double)

}  // namespace docir::ad
