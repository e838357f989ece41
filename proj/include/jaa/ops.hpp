#pragma once

#include <vector>

#include "jaa/tensor.hpp"

namespace jaa {

struct ConvSpec {
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 1;
  int padding = 1;
  int in_channels = 0;
  int out_channels = 0;
};

int conv_out_size(int in, int kernel, int stride, int padding);

// x: [N,Cin,H,W], w: [Cout,Cin,kh,kw], b: [Cout].  Cross-correlation.
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec);

// 2x2/2/0 max pooling. Strict mode rejects odd spatial dims; allow_odd drops
// the trailing row/column instead. Ties route the gradient to the first
// element in scan order.
Tensor maxpool2(Tape& tape, const Tensor& x, bool allow_odd = false);

Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);

// x: [N,F], w: [out,in], b: [out]
Tensor fully_connected(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b);

// [N,C,H,W] -> [N,C*H*W], channel-major flattening.
Tensor flatten(Tape& tape, const Tensor& x);

Tensor concat_channels(Tape& tape, const std::vector<Tensor>& xs);

// Shapes equal, or b is [N,1,H,W] broadcast across the channels of a.
Tensor elementwise_mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor elementwise_sum(Tape& tape, const Tensor& a, const Tensor& b);

// Output spatial size = round(alpha * input size); half-pixel sampling.
Tensor bilinear_resize(Tape& tape, const Tensor& x, double alpha);

// Centered window of side round(beta * side), beta in (0,1].
Tensor center_crop(Tape& tape, const Tensor& x, double beta);

// Zoom by (side+2*pad_cells)/side then center-crop back to side.
Tensor padding_removal(Tape& tape, const Tensor& x, int pad_cells);

// Forward identity; incoming gradient is multiplied by factor.
Tensor scale_grad(Tape& tape, const Tensor& x, double factor);

// Scalar weighted sum of scalar tensors.
Tensor weighted_sum(Tape& tape, const std::vector<std::pair<double, Tensor>>& terms);

// Per-channel batch normalization over [N,C,H,W].
struct BatchNorm {
  Tensor gamma, beta;
  Tensor running_mean, running_var;  // buffers, not trainable
  double eps = 1e-5;
  double momentum = 0.9;  // decay on the old running value

  BatchNorm() = default;
  explicit BatchNorm(int channels);

  Tensor forward(Tape& tape, const Tensor& x, bool training);
};

}  // namespace jaa
