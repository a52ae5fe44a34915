#pragma once

#include <cstddef>
#include <vector>

#include "capsroute/tensor.hpp"

/// Differentiable primitives. Every op records itself on the tape when the
/// tape is recording and at least one input requires a gradient.
namespace capsroute::ops {

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(GradientTape& tape, const Tensor& a, const Tensor& b);

/// weight[out,in] * x[in] + bias[out] -> [out]
Tensor linear(GradientTape& tape, const Tensor& weight, const Tensor& x, const Tensor& bias);

/// Valid (unpadded) cross-correlation.
/// input [c_in,h,w], kernels [c_out,c_in,k,k], bias [c_out]
/// -> [c_out, (h-k)/stride+1, (w-k)/stride+1]
Tensor conv2d(GradientTape& tape, const Tensor& input, const Tensor& kernels, const Tensor& bias,
              std::size_t stride);

/// Adjoint of conv2d with respect to its input, plus bias.
/// input [c_in,h,w], kernels [c_in,c_out,k,k], bias [c_out]
/// -> [c_out, (h-1)*stride+k, (w-1)*stride+k]
Tensor conv_transpose2d(GradientTape& tape, const Tensor& input, const Tensor& kernels,
                        const Tensor& bias, std::size_t stride);

/// [c,h,w] -> [c,height,width] window starting at (top,left).
Tensor crop2d(GradientTape& tape, const Tensor& x, std::size_t top, std::size_t left,
              std::size_t height, std::size_t width);

Tensor add(GradientTape& tape, const Tensor& a, const Tensor& b);
Tensor sub(GradientTape& tape, const Tensor& a, const Tensor& b);
Tensor mul(GradientTape& tape, const Tensor& a, const Tensor& b);
Tensor scale(GradientTape& tape, const Tensor& x, double factor);
Tensor add_scalar(GradientTape& tape, const Tensor& x, double value);

Tensor relu(GradientTape& tape, const Tensor& x);
Tensor sigmoid(GradientTape& tape, const Tensor& x);
Tensor tanh(GradientTape& tape, const Tensor& x);

/// Elementwise natural log of max(x, floor). Entries below the floor get a
/// zero gradient.
Tensor log(GradientTape& tape, const Tensor& x, double floor = 0.0);

Tensor reshape(GradientTape& tape, const Tensor& x, Shape shape);

/// Concatenates along axis 0; trailing dimensions must agree.
Tensor concat(GradientTape& tape, const std::vector<Tensor>& parts);

/// Rows [offset, offset+length) along axis 0.
Tensor slice(GradientTape& tape, const Tensor& x, std::size_t offset, std::size_t length);

Tensor sum(GradientTape& tape, const Tensor& x);
Tensor mean(GradientTape& tape, const Tensor& x);

/// Softmax over a 1-D tensor, stabilised by max subtraction.
Tensor softmax(GradientTape& tape, const Tensor& x);

/// Euclidean norm of every row of a [rows,cols] tensor -> [rows]. Zero rows
/// get a zero gradient.
Tensor row_norms(GradientTape& tape, const Tensor& m);

/// Euclidean norm of a 1-D tensor. The gradient at the zero vector is zero.
Tensor l2norm(GradientTape& tape, const Tensor& v);

}  // namespace capsroute::ops
