#pragma once

#include <cstdint>

#include "htr/autodiff.hpp"

namespace htr {

enum class Padding { same, valid };

/// Weights are laid out (kernel_h, kernel_w, in_channels, out_channels).
struct Conv2DSpec {
  Index kernel_h = 3;
  Index kernel_w = 3;
  Index in_channels = 1;
  Index out_channels = 1;
  Index stride_h = 1;
  Index stride_w = 1;
  Padding padding = Padding::same;

  Index out_h(Index h) const;
  Index out_w(Index w) const;
  Shape weight_shape() const { return {kernel_h, kernel_w, in_channels, out_channels}; }
};

// Image ops accept (height, width, channels) or (batch, height, width,
// channels) and return a tensor of the same rank.

/// Cross-correlation (no kernel flip). Same padding splits the zero border
/// evenly, with the odd pixel going to the bottom/right.
Var conv2d(Var x, const Conv2DSpec& spec, Var weights, Var bias);

/// conv(x; feature) * sigmoid(conv(x; gate)).
Var gated_conv2d(Var x, const Conv2DSpec& spec, Var weights_feature, Var weights_gate,
                 Var bias_feature, Var bias_gate);

/// One (kernel_h x kernel_w) filter per channel; weights (kh, kw, C).
/// `spec.out_channels` must equal `spec.in_channels`.
Var depthwise_conv2d(Var x, const Conv2DSpec& spec, Var weights, Var bias);

/// Depthwise stage with `spec`'s kernel and stride followed by a 1x1
/// pointwise conv to spec.out_channels. Normalization and activation are the
/// caller's business.
Var depthwise_separable_conv(Var x, const Conv2DSpec& spec, Var depth_weights,
                             Var point_weights, Var depth_bias, Var point_bias);

/// Non-overlapping max pooling; trailing rows/columns that do not fill a
/// window are dropped.
Var maxpool2d(Var x, Index pool_h, Index pool_w);
inline Var maxpool2x2(Var x) { return maxpool2d(x, 2, 2); }

/// Mean over height and width: (N, H, W, C) -> (N, C), (H, W, C) -> (C).
Var avgpool_global(Var x);

struct BatchNormSpec {
  double momentum = 0.9;
  double epsilon = 1e-9;
};

/// Normalizes over every axis but the last. Training mode uses batch
/// statistics and folds them into the running tensors; inference uses the
/// running tensors as constants.
Var batchnorm(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var,
              bool training, const BatchNormSpec& spec = {});

/// Inverted dropout: in training, zeroes with probability p and scales the
/// survivors by 1/(1-p). Exactly the identity otherwise.
Var dropout(Var x, double p, bool training, std::uint64_t seed);

/// x (..., in) * w (in, out) + b (out).
Var dense(Var x, Var w, Var b);

enum class Direction { forward, backward, bidirectional };

struct LSTMSpec {
  Index input_size = 1;
  Index hidden_size = 1;
  Direction direction = Direction::bidirectional;

  Index output_size() const {
    return direction == Direction::bidirectional ? 2 * hidden_size : hidden_size;
  }
};

/// Gate blocks are ordered (input, forget, cell, output) along the 4H axis.
struct LSTMParams {
  Var input_weights;      // (F, 4H)
  Var recurrent_weights;  // (H, 4H)
  Var bias;               // (4H)
};

/// Single-direction LSTM over (T, F) or (N, T, F) with zero initial state.
/// `reverse` runs from the last step to the first; outputs stay aligned with
/// the input time axis.
Var lstm(Var seq, const LSTMParams& params, bool reverse);

/// Runs `spec.direction`; bidirectional concatenates (forward, backward)
/// along the feature axis. `backward_params` is used only when bidirectional.
Var lstm_forward(Var seq, const LSTMSpec& spec, const LSTMParams& forward_params,
                 const LSTMParams& backward_params);

}  // namespace htr
