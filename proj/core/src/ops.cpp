#include "capsroute/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "capsroute/errors.hpp"

namespace capsroute::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(std::span<const double> data, std::size_t rows, std::size_t cols) {
  return ConstMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MutMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::vector<double>& data, std::size_t rows, std::size_t cols) {
  return as_matrix(std::span<double>(data), rows, cols);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + shape_string(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, out_h, out_w;

  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

// cols[(c*k + ky)*k + kx, oy*out_w + ox] = img[c, oy*s + ky, ox*s + kx]
void im2col(const ConvGeometry& g, const double* img, double* cols) {
  const std::size_t n = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * n;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const double* src = img + (c * g.height + oy * g.stride + ky) * g.width + kx;
          double* dst = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) dst[ox] = src[ox * g.stride];
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* img) {
  const std::size_t n = g.cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * n;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          double* dst = img + (c * g.height + oy * g.stride + ky) * g.width + kx;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) dst[ox * g.stride] += src[ox];
        }
      }
    }
  }
}

template <class Forward, class Derivative>
Tensor unary(GradientTape& tape, const Tensor& x, Forward f, Derivative df) {
  Tensor out(x.shape());
  auto in = x.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(in[i]);
  if (tape.needs_grad({&x})) {
    tape.record(out, {x}, [x, out, df](const BackwardContext& ctx) {
      auto gx = ctx.grad_in[0];
      auto xv = x.data();
      auto yv = out.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += ctx.grad_out[i] * df(xv[i], yv[i]);
    });
  }
  return out;
}

}  // namespace

Tensor matmul(GradientTape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out(Shape{m, n});
  as_matrix(out.data(), m, n).noalias() = as_matrix(a.data(), m, k) * as_matrix(b.data(), k, n);
  if (tape.needs_grad({&a, &b})) {
    tape.record(out, {a, b}, [a, b, m, k, n](const BackwardContext& ctx) {
      auto dc = as_matrix(ctx.grad_out, m, n);
      if (!ctx.grad_in[0].empty()) {
        as_matrix(ctx.grad_in[0], m, k).noalias() += dc * as_matrix(b.data(), k, n).transpose();
      }
      if (!ctx.grad_in[1].empty()) {
        as_matrix(ctx.grad_in[1], k, n).noalias() += as_matrix(a.data(), m, k).transpose() * dc;
      }
    });
  }
  return out;
}

Tensor linear(GradientTape& tape, const Tensor& weight, const Tensor& x, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() != 1 || bias.rank() != 1 || weight.dim(1) != x.dim(0) ||
      weight.dim(0) != bias.dim(0)) {
    throw DimensionError("linear: incompatible weight " + shape_string(weight.shape()) +
                         ", input " + shape_string(x.shape()) + ", bias " +
                         shape_string(bias.shape()));
  }
  const std::size_t rows = weight.dim(0), cols = weight.dim(1);
  Tensor out(Shape{rows});
  auto y = as_matrix(out.data(), rows, 1);
  y.noalias() = as_matrix(weight.data(), rows, cols) * as_matrix(x.data(), cols, 1);
  y += as_matrix(bias.data(), rows, 1);
  if (tape.needs_grad({&weight, &x, &bias})) {
    tape.record(out, {weight, x, bias}, [weight, x, rows, cols](const BackwardContext& ctx) {
      auto dy = as_matrix(ctx.grad_out, rows, 1);
      if (!ctx.grad_in[0].empty()) {
        as_matrix(ctx.grad_in[0], rows, cols).noalias() +=
            dy * as_matrix(x.data(), cols, 1).transpose();
      }
      if (!ctx.grad_in[1].empty()) {
        as_matrix(ctx.grad_in[1], cols, 1).noalias() +=
            as_matrix(weight.data(), rows, cols).transpose() * dy;
      }
      if (!ctx.grad_in[2].empty()) as_matrix(ctx.grad_in[2], rows, 1) += dy;
    });
  }
  return out;
}

Tensor conv2d(GradientTape& tape, const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride) {
  require_rank("conv2d input", input, 3);
  require_rank("conv2d kernels", kernels, 4);
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t c_out = kernels.dim(0), k = kernels.dim(2);
  if (kernels.dim(1) != c_in || kernels.dim(3) != k) {
    throw DimensionError("conv2d: kernels " + shape_string(kernels.shape()) +
                         " do not match input " + shape_string(input.shape()));
  }
  if (h < k || w < k) {
    throw DimensionError("conv2d: input " + shape_string(input.shape()) +
                         " is smaller than kernel " + shape_string(kernels.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != c_out) {
    throw DimensionError("conv2d: bias " + shape_string(bias.shape()) + " does not match kernels " +
                         shape_string(kernels.shape()));
  }
  ConvGeometry g{c_in, h, w, k, stride, (h - k) / stride + 1, (w - k) / stride + 1};

  std::vector<double> cols(g.rows() * g.cols());
  im2col(g, input.data().data(), cols.data());

  Tensor out(Shape{c_out, g.out_h, g.out_w});
  auto y = as_matrix(out.data(), c_out, g.cols());
  y.noalias() = as_matrix(kernels.data(), c_out, g.rows()) * as_matrix(cols, g.rows(), g.cols());
  auto bv = bias.data();
  for (std::size_t c = 0; c < c_out; ++c) y.row(static_cast<Eigen::Index>(c)).array() += bv[c];

  if (tape.needs_grad({&input, &kernels, &bias})) {
    tape.record(out, {input, kernels, bias}, [input, kernels, g, c_out](const BackwardContext& ctx) {
      auto dy = as_matrix(ctx.grad_out, c_out, g.cols());
      if (!ctx.grad_in[1].empty()) {
        std::vector<double> cols(g.rows() * g.cols());
        im2col(g, input.data().data(), cols.data());
        as_matrix(ctx.grad_in[1], c_out, g.rows()).noalias() +=
            dy * as_matrix(cols, g.rows(), g.cols()).transpose();
      }
      if (!ctx.grad_in[2].empty()) {
        auto db = ctx.grad_in[2];
        for (std::size_t c = 0; c < c_out; ++c) db[c] += dy.row(static_cast<Eigen::Index>(c)).sum();
      }
      if (!ctx.grad_in[0].empty()) {
        std::vector<double> dcols(g.rows() * g.cols());
        as_matrix(dcols, g.rows(), g.cols()).noalias() =
            as_matrix(kernels.data(), c_out, g.rows()).transpose() * dy;
        col2im_add(g, dcols.data(), ctx.grad_in[0].data());
      }
    });
  }
  return out;
}

Tensor conv_transpose2d(GradientTape& tape, const Tensor& input, const Tensor& kernels,
                        const Tensor& bias, std::size_t stride) {
  require_rank("conv_transpose2d input", input, 3);
  require_rank("conv_transpose2d kernels", kernels, 4);
  if (stride == 0) throw DimensionError("conv_transpose2d: stride must be positive");
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t c_out = kernels.dim(1), k = kernels.dim(2);
  if (kernels.dim(0) != c_in || kernels.dim(3) != k) {
    throw DimensionError("conv_transpose2d: kernels " + shape_string(kernels.shape()) +
                         " do not match input " + shape_string(input.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != c_out) {
    throw DimensionError("conv_transpose2d: bias " + shape_string(bias.shape()) +
                         " does not match kernels " + shape_string(kernels.shape()));
  }
  const std::size_t out_h = (h - 1) * stride + k, out_w = (w - 1) * stride + k;
  // Geometry of the equivalent forward convolution over the output image.
  ConvGeometry g{c_out, out_h, out_w, k, stride, h, w};

  std::vector<double> cols(g.rows() * g.cols());
  as_matrix(cols, g.rows(), g.cols()).noalias() =
      as_matrix(kernels.data(), c_in, g.rows()).transpose() * as_matrix(input.data(), c_in, h * w);

  Tensor out(Shape{c_out, out_h, out_w});
  col2im_add(g, cols.data(), out.data().data());
  auto y = as_matrix(out.data(), c_out, out_h * out_w);
  auto bv = bias.data();
  for (std::size_t c = 0; c < c_out; ++c) y.row(static_cast<Eigen::Index>(c)).array() += bv[c];

  if (tape.needs_grad({&input, &kernels, &bias})) {
    tape.record(out, {input, kernels, bias},
                [input, kernels, g, c_in, c_out](const BackwardContext& ctx) {
                  std::vector<double> dcols(g.rows() * g.cols());
                  im2col(g, ctx.grad_out.data(), dcols.data());
                  auto dc = as_matrix(dcols, g.rows(), g.cols());
                  if (!ctx.grad_in[0].empty()) {
                    as_matrix(ctx.grad_in[0], c_in, g.cols()).noalias() +=
                        as_matrix(kernels.data(), c_in, g.rows()) * dc;
                  }
                  if (!ctx.grad_in[1].empty()) {
                    as_matrix(ctx.grad_in[1], c_in, g.rows()).noalias() +=
                        as_matrix(input.data(), c_in, g.cols()) * dc.transpose();
                  }
                  if (!ctx.grad_in[2].empty()) {
                    auto dy = as_matrix(ctx.grad_out, c_out, g.height * g.width);
                    auto db = ctx.grad_in[2];
                    for (std::size_t c = 0; c < c_out; ++c) {
                      db[c] += dy.row(static_cast<Eigen::Index>(c)).sum();
                    }
                  }
                });
  }
  return out;
}

Tensor crop2d(GradientTape& tape, const Tensor& x, std::size_t top, std::size_t left,
              std::size_t height, std::size_t width) {
  require_rank("crop2d", x, 3);
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (top + height > h || left + width > w) {
    throw DimensionError("crop2d: window exceeds input " + shape_string(x.shape()));
  }
  Tensor out(Shape{c, height, width});
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t xx = 0; xx < width; ++xx) {
        dst[(ch * height + y) * width + xx] = src[(ch * h + top + y) * w + left + xx];
      }
    }
  }
  if (tape.needs_grad({&x})) {
    tape.record(out, {x}, [=](const BackwardContext& ctx) {
      auto gx = ctx.grad_in[0];
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < height; ++y) {
          for (std::size_t xx = 0; xx < width; ++xx) {
            gx[(ch * h + top + y) * w + left + xx] += ctx.grad_out[(ch * height + y) * width + xx];
          }
        }
      }
    });
  }
  return out;
}

Tensor add(GradientTape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  auto y = out.data();
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
  if (tape.needs_grad({&a, &b})) {
    tape.record(out, {a, b}, [](const BackwardContext& ctx) {
      for (auto& g : ctx.grad_in) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += ctx.grad_out[i];
      }
    });
  }
  return out;
}

Tensor sub(GradientTape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  auto y = out.data();
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  if (tape.needs_grad({&a, &b})) {
    tape.record(out, {a, b}, [](const BackwardContext& ctx) {
      auto ga = ctx.grad_in[0], gb = ctx.grad_in[1];
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += ctx.grad_out[i];
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= ctx.grad_out[i];
    });
  }
  return out;
}

Tensor mul(GradientTape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  auto y = out.data();
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  if (tape.needs_grad({&a, &b})) {
    tape.record(out, {a, b}, [a, b](const BackwardContext& ctx) {
      auto ga = ctx.grad_in[0], gb = ctx.grad_in[1];
      auto av = a.data(), bv = b.data();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += ctx.grad_out[i] * bv[i];
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += ctx.grad_out[i] * av[i];
    });
  }
  return out;
}

Tensor scale(GradientTape& tape, const Tensor& x, double factor) {
  return unary(
      tape, x, [factor](double v) { return factor * v; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(GradientTape& tape, const Tensor& x, double value) {
  return unary(
      tape, x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor relu(GradientTape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(GradientTape& tape, const Tensor& x) {
  return unary(
      tape, x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(GradientTape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor log(GradientTape& tape, const Tensor& x, double floor) {
  return unary(
      tape, x, [floor](double v) { return std::log(std::max(v, floor)); },
      [floor](double v, double) { return v > floor ? 1.0 / v : 0.0; });
}

Tensor reshape(GradientTape& tape, const Tensor& x, Shape shape) {
  Tensor out = x.view(std::move(shape));
  if (tape.needs_grad({&x})) {
    tape.record(out, {x}, [](const BackwardContext& ctx) {
      auto g = ctx.grad_in[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += ctx.grad_out[i];
    });
  }
  return out;
}

Tensor concat(GradientTape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape shape = parts.front().shape();
  if (shape.empty()) throw DimensionError("concat: scalar inputs have no axis 0");
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1)) {
      throw DimensionError("concat: cannot join " + shape_string(shape) + " with " +
                           shape_string(p.shape()));
    }
    rows += p.dim(0);
  }
  shape[0] = rows;
  Tensor out(shape);
  auto y = out.data();
  std::size_t offset = 0;
  bool needs = false;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), y.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += p.size();
    needs = needs || tape.needs_grad({&p});
  }
  if (needs) {
    std::vector<std::size_t> sizes;
    for (const auto& p : parts) sizes.push_back(p.size());
    tape.record(out, parts, [sizes](const BackwardContext& ctx) {
      std::size_t offset = 0;
      for (std::size_t p = 0; p < sizes.size(); ++p) {
        auto g = ctx.grad_in[p];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += ctx.grad_out[offset + i];
        offset += sizes[p];
      }
    });
  }
  return out;
}

Tensor slice(GradientTape& tape, const Tensor& x, std::size_t offset, std::size_t length) {
  if (x.rank() == 0) throw DimensionError("slice: scalar has no axis 0");
  if (length == 0 || offset + length > x.dim(0)) {
    throw DimensionError("slice: rows [" + std::to_string(offset) + "," +
                         std::to_string(offset + length) + ") out of range for " +
                         shape_string(x.shape()));
  }
  Shape shape = x.shape();
  shape[0] = length;
  const std::size_t stride = x.size() / x.dim(0);
  Tensor out(shape);
  auto src = x.data().subspan(offset * stride, length * stride);
  std::copy(src.begin(), src.end(), out.data().begin());
  if (tape.needs_grad({&x})) {
    tape.record(out, {x}, [offset, stride](const BackwardContext& ctx) {
      auto g = ctx.grad_in[0].subspan(offset * stride, ctx.grad_out.size());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += ctx.grad_out[i];
    });
  }
  return out;
}

Tensor sum(GradientTape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor out = Tensor::scalar(total);
  if (tape.needs_grad({&x})) {
    tape.record(out, {x}, [](const BackwardContext& ctx) {
      const double g = ctx.grad_out[0];
      for (auto& v : ctx.grad_in[0]) v += g;
    });
  }
  return out;
}

Tensor mean(GradientTape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double n = static_cast<double>(x.size());
  Tensor out = Tensor::scalar(total / n);
  if (tape.needs_grad({&x})) {
    tape.record(out, {x}, [n](const BackwardContext& ctx) {
      const double g = ctx.grad_out[0] / n;
      for (auto& v : ctx.grad_in[0]) v += g;
    });
  }
  return out;
}

Tensor softmax(GradientTape& tape, const Tensor& x) {
  require_rank("softmax", x, 1);
  auto in = x.data();
  Tensor out(x.shape());
  auto y = out.data();
  const double top = *std::max_element(in.begin(), in.end());
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = std::exp(in[i] - top);
    total += y[i];
  }
  for (auto& v : y) v /= total;
  if (tape.needs_grad({&x})) {
    tape.record(out, {x}, [out](const BackwardContext& ctx) {
      auto yv = out.data();
      double dot = 0.0;
      for (std::size_t i = 0; i < yv.size(); ++i) dot += ctx.grad_out[i] * yv[i];
      auto g = ctx.grad_in[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += yv[i] * (ctx.grad_out[i] - dot);
    });
  }
  return out;
}

Tensor l2norm(GradientTape& tape, const Tensor& v) {
  require_rank("l2norm", v, 1);
  double sq = 0.0;
  for (double e : v.data()) sq += e * e;
  const double norm = std::sqrt(sq);
  Tensor out = Tensor::scalar(norm);
  if (tape.needs_grad({&v})) {
    tape.record(out, {v}, [v, norm](const BackwardContext& ctx) {
      if (norm == 0.0) return;
      const double g = ctx.grad_out[0] / norm;
      auto gv = ctx.grad_in[0];
      auto vv = v.data();
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += g * vv[i];
    });
  }
  return out;
}

}  // namespace capsroute::ops

namespace capsroute::ops {

Tensor row_norms(GradientTape& tape, const Tensor& m) {
  require_rank("row_norms", m, 2);
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  Tensor out(Shape{rows});
  auto v = m.data();
  auto y = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sq += v[r * cols + c] * v[r * cols + c];
    y[r] = std::sqrt(sq);
  }
  if (tape.needs_grad({&m})) {
    tape.record(out, {m}, [m, out, rows, cols](const BackwardContext& ctx) {
      auto v = m.data();
      auto y = out.data();
      auto g = ctx.grad_in[0];
      for (std::size_t r = 0; r < rows; ++r) {
        if (y[r] == 0.0) continue;
        const double f = ctx.grad_out[r] / y[r];
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += f * v[r * cols + c];
      }
    });
  }
  return out;
}

}  // namespace capsroute::ops
