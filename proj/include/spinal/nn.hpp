#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spinal/rng.hpp"
#include "spinal/tensor.hpp"

namespace spinal::nn {

enum class Mode { kTrain, kInfer };

using ParamMap = std::map<std::string, Tensor>;

// ---------------------------------------------------------------------------
// Layer primitives. Each forward optionally fills a cache consumed by the
// paired backward.
// ---------------------------------------------------------------------------

struct Conv2dCache {
  std::vector<Index> in_shape;  // NCHW extents of the forward input
  Tensor columns;               // (I*9) x (N*H*W) im2col matrix, rank 2
  mutable Tensor d_columns;     // backward scratch, same shape as columns
};

struct Conv2dGrads {
  Tensor d_input, d_weight, d_bias;
};

// 3x3 convolution, stride 1, zero padding 1 (spatial dims preserved).
// input NCHW, weight (O,I,3,3), bias (O).
Tensor conv2d_forward(const Tensor& input, const Tensor& weight,
                      const Tensor& bias, Conv2dCache* cache = nullptr);
Conv2dGrads conv2d_backward(const Tensor& d_output, const Conv2dCache& cache,
                            const Tensor& weight);

struct Maxpool2Cache {
  std::vector<Index> argmax;   // flat input index per output element
  std::vector<Index> in_shape;
};

// 2x2 max pooling; ties resolved to the first element in row-major scan order.
Tensor maxpool2_forward(const Tensor& input, Maxpool2Cache* cache = nullptr);
Tensor maxpool2_backward(const Tensor& d_output, const Maxpool2Cache& cache);

struct BatchNormCache {
  Tensor x_hat;                // normalized input, NCHW
  Eigen::ArrayXd inv_std;      // per channel
  Tensor gamma;
};

struct BatchNormGrads {
  Tensor d_input, d_gamma, d_beta;
};

// Per-channel batch normalization over N*H*W. Train mode normalizes by batch
// statistics (biased variance) and updates running stats in place:
//   running = momentum * running + (1 - momentum) * batch.
Tensor batchnorm2d_forward(const Tensor& input, const Tensor& gamma,
                           const Tensor& beta, Tensor& running_mean,
                           Tensor& running_var, Mode mode, double eps = 1e-5,
                           double momentum = 0.9,
                           BatchNormCache* cache = nullptr);
BatchNormGrads batchnorm2d_backward(const Tensor& d_output,
                                    const BatchNormCache& cache,
                                    double eps = 1e-5);

struct DropoutCache {
  Tensor mask;  // 0 or 1/(1-rate), same shape as input
};

// Inverted dropout; identity in infer mode.
Tensor dropout_forward(const Tensor& input, double rate, Mode mode, Rng& rng,
                       DropoutCache* cache = nullptr);
Tensor dropout_backward(const Tensor& d_output, const DropoutCache& cache);

struct LeakyReluCache {
  Tensor input;
  double slope = 0.01;
};

// f(v) = v for v > 0, slope*v otherwise; derivative at 0 is slope.
Tensor leaky_relu_forward(const Tensor& input, double slope,
                          LeakyReluCache* cache = nullptr);
Tensor leaky_relu_backward(const Tensor& d_output, const LeakyReluCache& cache);

struct DenseCache {
  Tensor input;  // N x F
};

struct DenseGrads {
  Tensor d_input, d_weight, d_bias;
};

// Affine map: output = input * weight + bias. weight is (F, G), bias (G).
Tensor dense_forward(const Tensor& input, const Tensor& weight,
                     const Tensor& bias, DenseCache* cache = nullptr);
DenseGrads dense_backward(const Tensor& d_output, const DenseCache& cache,
                          const Tensor& weight);

// ---------------------------------------------------------------------------
// Model: five conv blocks (conv3x3 -> leaky -> conv3x3 -> leaky -> maxpool2
// -> batchnorm -> dropout), flatten, dense(512) -> leaky -> dense(512)
// -> leaky -> dense(2n).
// ---------------------------------------------------------------------------

struct ModelConfig {
  Index input_height = 1024;
  Index input_width = 512;
  std::vector<Index> conv_channels = {16, 32, 64, 128, 256};
  std::vector<Index> fc_sizes = {512, 512, 144};
  Index n_landmarks = 72;
  double dropout_rate = 0.25;
  double leaky_slope = 0.01;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;

  void validate() const;
  Index flatten_size() const;
};

// Small preset used throughout the tests and the desk-scale experiments.
ModelConfig desk_config();

struct BlockCache {
  Conv2dCache conv1, conv2;
  LeakyReluCache act1, act2;
  Maxpool2Cache pool;
  BatchNormCache bn;
  DropoutCache drop;
};

struct ForwardCache {
  std::vector<BlockCache> blocks;
  DenseCache fc1, fc2, fc3;
  LeakyReluCache fc_act1, fc_act2;
  std::vector<Index> pre_flatten_shape;
  Mode mode = Mode::kInfer;
};

// Train mode mutates batch-norm running statistics inside `params`.
Tensor model_forward(const ModelConfig& config, ParamMap& params,
                     const Tensor& batch, Mode mode, Rng& rng,
                     ForwardCache* cache = nullptr);

// Gradients for every entry of ParamMap (running stats get zero gradients).
ParamMap model_backward(const ModelConfig& config, const ForwardCache& cache,
                        const ParamMap& params, const Tensor& d_predictions);

// He-style init scaled for leaky-ReLU: std = sqrt(2 / ((1+slope^2) * fan_in)).
ParamMap init_params(const ModelConfig& config, std::uint64_t seed);

// Names of the trainable parameters (excludes running statistics).
bool is_trainable(const std::string& name);

}  // namespace spinal::nn
