#include <cmath>

#include "spinal/nn.hpp"

namespace spinal::nn {

namespace {

std::string block_prefix(size_t k) { return "block" + std::to_string(k + 1); }

const Tensor& get_param(const ParamMap& params, const std::string& name) {
  auto it = params.find(name);
  check(it != params.end(), "missing parameter: " + name);
  return it->second;
}

Tensor& get_param(ParamMap& params, const std::string& name) {
  auto it = params.find(name);
  check(it != params.end(), "missing parameter: " + name);
  return it->second;
}

void check_finite(const Tensor& t, const std::string& layer) {
  if (!t.all_finite())
    throw NumericError("non-finite activation after " + layer);
}

}  // namespace

void ModelConfig::validate() const {
  check(input_height > 0 && input_height % 32 == 0,
        "ModelConfig: input_height must be a positive multiple of 32");
  check(input_width > 0 && input_width % 32 == 0,
        "ModelConfig: input_width must be a positive multiple of 32");
  check(conv_channels.size() == 5, "ModelConfig: conv_channels must have 5 entries");
  check(fc_sizes.size() == 3, "ModelConfig: fc_sizes must have 3 entries");
  check(fc_sizes.back() == 2 * n_landmarks,
        "ModelConfig: last fc size must equal 2*n_landmarks");
  check(dropout_rate >= 0.0 && dropout_rate < 1.0, "ModelConfig: dropout_rate");
}

Index ModelConfig::flatten_size() const {
  return conv_channels.back() * (input_height / 32) * (input_width / 32);
}

ModelConfig desk_config() {
  ModelConfig cfg;
  cfg.input_height = 128;
  cfg.input_width = 64;
  return cfg;
}

ParamMap init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ParamMap params;

  auto he_fill = [&](Tensor& t, Index fan_in) {
    const double stddev =
        std::sqrt(2.0 / ((1.0 + config.leaky_slope * config.leaky_slope) *
                         static_cast<double>(fan_in)));
    for (Index i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  };

  Index in_ch = 1;
  for (size_t k = 0; k < config.conv_channels.size(); ++k) {
    const Index out_ch = config.conv_channels[k];
    const std::string p = block_prefix(k);
    Tensor w1({out_ch, in_ch, 3, 3});
    he_fill(w1, in_ch * 9);
    params[p + ".conv1.weight"] = std::move(w1);
    params[p + ".conv1.bias"] = Tensor({out_ch});
    Tensor w2({out_ch, out_ch, 3, 3});
    he_fill(w2, out_ch * 9);
    params[p + ".conv2.weight"] = std::move(w2);
    params[p + ".conv2.bias"] = Tensor({out_ch});
    Tensor gamma({out_ch});
    gamma.flat() = 1.0;
    params[p + ".bn.gamma"] = std::move(gamma);
    params[p + ".bn.beta"] = Tensor({out_ch});
    params[p + ".bn.running_mean"] = Tensor({out_ch});
    Tensor rv({out_ch});
    rv.flat() = 1.0;
    params[p + ".bn.running_var"] = std::move(rv);
    in_ch = out_ch;
  }

  Index in_features = config.flatten_size();
  for (size_t k = 0; k < config.fc_sizes.size(); ++k) {
    const Index out_features = config.fc_sizes[k];
    const std::string p = "fc" + std::to_string(k + 1);
    Tensor w({in_features, out_features});
    he_fill(w, in_features);
    params[p + ".weight"] = std::move(w);
    params[p + ".bias"] = Tensor({out_features});
    in_features = out_features;
  }
  return params;
}

bool is_trainable(const std::string& name) {
  return name.find(".bn.running_") == std::string::npos;
}

Tensor model_forward(const ModelConfig& config, ParamMap& params,
                     const Tensor& batch, Mode mode, Rng& rng,
                     ForwardCache* cache) {
  config.validate();
  check(batch.rank() == 4 && batch.dim(1) == 1,
        "model_forward: batch must be (N,1,H,W), got " + batch.shape_str());
  check(batch.dim(2) == config.input_height && batch.dim(3) == config.input_width,
        "model_forward: batch spatial dims " + batch.shape_str() +
            " do not match config");

  if (cache) {
    // keep existing per-layer buffers; every field is overwritten below, and
    // re-using the allocations is what makes steady-state training cheap
    if (cache->blocks.size() != config.conv_channels.size())
      cache->blocks.assign(config.conv_channels.size(), BlockCache{});
    cache->mode = mode;
  }

  Tensor x = batch;
  for (size_t k = 0; k < config.conv_channels.size(); ++k) {
    const std::string p = block_prefix(k);
    BlockCache* bc = cache ? &cache->blocks[k] : nullptr;
    x = conv2d_forward(x, get_param(params, p + ".conv1.weight"),
                       get_param(params, p + ".conv1.bias"),
                       bc ? &bc->conv1 : nullptr);
    x = leaky_relu_forward(x, config.leaky_slope, bc ? &bc->act1 : nullptr);
    x = conv2d_forward(x, get_param(params, p + ".conv2.weight"),
                       get_param(params, p + ".conv2.bias"),
                       bc ? &bc->conv2 : nullptr);
    x = leaky_relu_forward(x, config.leaky_slope, bc ? &bc->act2 : nullptr);
    x = maxpool2_forward(x, bc ? &bc->pool : nullptr);
    x = batchnorm2d_forward(x, get_param(params, p + ".bn.gamma"),
                            get_param(params, p + ".bn.beta"),
                            get_param(params, p + ".bn.running_mean"),
                            get_param(params, p + ".bn.running_var"), mode,
                            config.bn_eps, config.bn_momentum,
                            bc ? &bc->bn : nullptr);
    x = dropout_forward(x, config.dropout_rate, mode, rng,
                        bc ? &bc->drop : nullptr);
    check_finite(x, p);
  }

  if (cache) cache->pre_flatten_shape = x.shape();
  Tensor flat = Tensor({x.dim(0), x.size() / x.dim(0)});
  flat.flat() = x.flat();

  Tensor h = dense_forward(flat, get_param(params, "fc1.weight"),
                           get_param(params, "fc1.bias"),
                           cache ? &cache->fc1 : nullptr);
  h = leaky_relu_forward(h, config.leaky_slope, cache ? &cache->fc_act1 : nullptr);
  h = dense_forward(h, get_param(params, "fc2.weight"),
                    get_param(params, "fc2.bias"), cache ? &cache->fc2 : nullptr);
  h = leaky_relu_forward(h, config.leaky_slope, cache ? &cache->fc_act2 : nullptr);
  h = dense_forward(h, get_param(params, "fc3.weight"),
                    get_param(params, "fc3.bias"), cache ? &cache->fc3 : nullptr);
  check_finite(h, "fc3");
  return h;
}

ParamMap model_backward(const ModelConfig& config, const ForwardCache& cache,
                        const ParamMap& params, const Tensor& d_predictions) {
  check(!cache.blocks.empty() && !cache.pre_flatten_shape.empty(),
        "model_backward: cache not produced by a cached forward pass");
  check(cache.blocks.size() == config.conv_channels.size(),
        "model_backward: cache does not match config");

  // every trainable gradient is move-assigned below; only the running
  // statistics need explicit zero entries so the map mirrors the params
  ParamMap grads;
  for (const auto& [name, tensor] : params)
    if (!is_trainable(name)) grads[name] = Tensor(tensor.shape());

  DenseGrads g3 = dense_backward(d_predictions, cache.fc3,
                                 get_param(params, "fc3.weight"));
  grads["fc3.weight"] = std::move(g3.d_weight);
  grads["fc3.bias"] = std::move(g3.d_bias);
  Tensor d = leaky_relu_backward(g3.d_input, cache.fc_act2);
  DenseGrads g2 = dense_backward(d, cache.fc2, get_param(params, "fc2.weight"));
  grads["fc2.weight"] = std::move(g2.d_weight);
  grads["fc2.bias"] = std::move(g2.d_bias);
  d = leaky_relu_backward(g2.d_input, cache.fc_act1);
  DenseGrads g1 = dense_backward(d, cache.fc1, get_param(params, "fc1.weight"));
  grads["fc1.weight"] = std::move(g1.d_weight);
  grads["fc1.bias"] = std::move(g1.d_bias);

  Tensor dx(cache.pre_flatten_shape);
  dx.flat() = g1.d_input.flat();

  for (size_t k = config.conv_channels.size(); k-- > 0;) {
    const std::string p = block_prefix(k);
    const BlockCache& bc = cache.blocks[k];
    dx = dropout_backward(dx, bc.drop);
    BatchNormGrads bg = batchnorm2d_backward(dx, bc.bn, config.bn_eps);
    grads[p + ".bn.gamma"] = std::move(bg.d_gamma);
    grads[p + ".bn.beta"] = std::move(bg.d_beta);
    dx = maxpool2_backward(bg.d_input, bc.pool);
    dx = leaky_relu_backward(dx, bc.act2);
    Conv2dGrads c2 = conv2d_backward(dx, bc.conv2,
                                     get_param(params, p + ".conv2.weight"));
    grads[p + ".conv2.weight"] = std::move(c2.d_weight);
    grads[p + ".conv2.bias"] = std::move(c2.d_bias);
    dx = leaky_relu_backward(c2.d_input, bc.act1);
    Conv2dGrads c1 = conv2d_backward(dx, bc.conv1,
                                     get_param(params, p + ".conv1.weight"));
    grads[p + ".conv1.weight"] = std::move(c1.d_weight);
    grads[p + ".conv1.bias"] = std::move(c1.d_bias);
    dx = std::move(c1.d_input);
  }
  return grads;
}

}  // namespace spinal::nn
