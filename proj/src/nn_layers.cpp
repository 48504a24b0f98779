#include <cmath>

#include "spinal/nn.hpp"

namespace spinal::nn {

namespace {

// Gather 3x3 neighborhoods (zero padded) into a (C*9) x (N*H*W) matrix.
// Column order is n-major, then row-major over (h, w).
void im2col(const Tensor& input, Tensor& columns) {
  const Index n_batch = input.dim(0), channels = input.dim(1);
  const Index height = input.dim(2), width = input.dim(3);
  const Index n_cols = n_batch * height * width;
  // keep the existing allocation when the shape repeats (steady-state training
  // re-uses the cache every batch, and these are the largest buffers around)
  const std::vector<Index> shape = {channels * 9, n_cols};
  if (columns.shape() != shape) columns = Tensor(shape);
  double* out = columns.data();
  const double* in = input.data();
  for (Index c = 0; c < channels; ++c) {
    for (Index kh = 0; kh < 3; ++kh) {
      for (Index kw = 0; kw < 3; ++kw) {
        const Index row = (c * 3 + kh) * 3 + kw;
        double* dst = out + row * n_cols;
        for (Index n = 0; n < n_batch; ++n) {
          const double* src = in + (n * channels + c) * height * width;
          double* d = dst + n * height * width;
          for (Index h = 0; h < height; ++h) {
            const Index ih = h + kh - 1;
            if (ih < 0 || ih >= height) {
              std::fill(d + h * width, d + (h + 1) * width, 0.0);
              continue;
            }
            const double* srow = src + ih * width;
            double* drow = d + h * width;
            const Index shift = kw - 1;  // iw = w + shift
            Index w0 = std::max<Index>(0, -shift);
            Index w1 = std::min<Index>(width, width - shift);
            if (w0 > 0) drow[0] = 0.0;
            for (Index w = w0; w < w1; ++w) drow[w] = srow[w + shift];
            if (w1 < width) drow[width - 1] = 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add of the im2col adjoint back onto the input layout.
void col2im_add(const Tensor& columns, Tensor& d_input) {
  const Index n_batch = d_input.dim(0), channels = d_input.dim(1);
  const Index height = d_input.dim(2), width = d_input.dim(3);
  const Index n_cols = n_batch * height * width;
  const double* in = columns.data();
  double* out = d_input.data();
  for (Index c = 0; c < channels; ++c) {
    for (Index kh = 0; kh < 3; ++kh) {
      for (Index kw = 0; kw < 3; ++kw) {
        const Index row = (c * 3 + kh) * 3 + kw;
        const double* src = in + row * n_cols;
        for (Index n = 0; n < n_batch; ++n) {
          double* dst = out + (n * channels + c) * height * width;
          const double* s = src + n * height * width;
          for (Index h = 0; h < height; ++h) {
            const Index ih = h + kh - 1;
            if (ih < 0 || ih >= height) continue;
            double* drow = dst + ih * width;
            const double* srow = s + h * width;
            const Index shift = kw - 1;
            Index w0 = std::max<Index>(0, -shift);
            Index w1 = std::min<Index>(width, width - shift);
            for (Index w = w0; w < w1; ++w) drow[w + shift] += srow[w];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weight,
                      const Tensor& bias, Conv2dCache* cache) {
  check(input.rank() == 4, "conv2d: input must be NCHW, got " + input.shape_str());
  check(weight.rank() == 4 && weight.dim(2) == 3 && weight.dim(3) == 3,
        "conv2d: weight must be (O,I,3,3), got " + weight.shape_str());
  check(input.dim(1) == weight.dim(1),
        "conv2d: input channels " + std::to_string(input.dim(1)) +
            " != weight input channels " + std::to_string(weight.dim(1)));
  check(bias.rank() == 1 && bias.dim(0) == weight.dim(0),
        "conv2d: bias extent must equal output channels");

  const Index n_batch = input.dim(0), out_ch = weight.dim(0);
  const Index height = input.dim(2), width = input.dim(3);
  const Index k = weight.dim(1) * 9;
  const Index plane = height * width;

  Tensor local_cols;
  Tensor& cols = cache ? cache->columns : local_cols;
  im2col(input, cols);

  // all products run on column-major transposed views: the row-major
  // (O x pixels) blocks are the same memory as column-major (pixels x O)
  // blocks, and pixels-tall operands are the shapes Eigen multiplies fastest
  Tensor output({n_batch, out_ch, height, width});
  ConstMapCM w_t(weight.data(), k, out_ch);               // = weight^T
  ConstMapCM col_t(cols.data(), n_batch * plane, k);      // = columns^T
  const Eigen::Map<const Eigen::RowVectorXd> bias_row(bias.data(), out_ch);
  if (plane < 1024 && n_batch > 1) {
    // small planes make per-image products too skinny; run one batched
    // product into a scratch block and scatter the image slices afterwards
    Eigen::MatrixXd scratch(n_batch * plane, out_ch);
    scratch.noalias() = col_t * w_t;
    for (Index n = 0; n < n_batch; ++n) {
      MapCM out_t(output.data() + n * out_ch * plane, plane, out_ch);
      out_t = scratch.middleRows(n * plane, plane);
      out_t.rowwise() += bias_row;
    }
  } else {
    for (Index n = 0; n < n_batch; ++n) {
      MapCM out_t(output.data() + n * out_ch * plane, plane, out_ch);
      out_t.noalias() = col_t.middleRows(n * plane, plane) * w_t;
      out_t.rowwise() += bias_row;
    }
  }
  if (cache) cache->in_shape = input.shape();
  return output;
}

Conv2dGrads conv2d_backward(const Tensor& d_output, const Conv2dCache& cache,
                            const Tensor& weight) {
  check(cache.columns.size() > 0, "conv2d backward: missing forward cache");
  const Index n_batch = cache.in_shape[0];
  const Index height = cache.in_shape[2], width = cache.in_shape[3];
  const Index out_ch = weight.dim(0);
  const Index k = weight.dim(1) * 9;
  const Index plane = height * width;
  check(d_output.rank() == 4 && d_output.dim(0) == n_batch &&
            d_output.dim(1) == out_ch && d_output.dim(2) == height &&
            d_output.dim(3) == width,
        "conv2d backward: d_output shape mismatch " + d_output.shape_str());

  Conv2dGrads grads;
  grads.d_weight = Tensor(weight.shape());
  grads.d_bias = Tensor({out_ch});
  grads.d_input = Tensor(cache.in_shape);

  // transposed column-major views, as in the forward pass
  ConstMapCM col_t(cache.columns.data(), n_batch * plane, k);
  ConstMapCM w_t(weight.data(), k, out_ch);
  MapCM dw_t(grads.d_weight.data(), k, out_ch);
  // scratch buffer lives in the cache so steady-state training never
  // re-allocates it; every column is overwritten below before use
  Tensor& d_cols = cache.d_columns;
  if (d_cols.shape() != cache.columns.shape())
    d_cols = Tensor(cache.columns.shape());
  MapCM dcol_t(d_cols.data(), n_batch * plane, k);
  Eigen::Map<Eigen::RowVectorXd> db(grads.d_bias.data(), out_ch);
  if (plane < 1024 && n_batch > 1) {
    // gather the image slices into one scratch block so the weight and
    // column gradients are single well-shaped products
    Eigen::MatrixXd dout_all(n_batch * plane, out_ch);
    for (Index n = 0; n < n_batch; ++n)
      dout_all.middleRows(n * plane, plane) =
          ConstMapCM(d_output.data() + n * out_ch * plane, plane, out_ch);
    dw_t.noalias() = col_t.transpose() * dout_all;
    dcol_t.noalias() = dout_all * w_t.transpose();
    db = dout_all.colwise().sum();
  } else {
    for (Index n = 0; n < n_batch; ++n) {
      ConstMapCM dout_t(d_output.data() + n * out_ch * plane, plane, out_ch);
      dw_t.noalias() +=
          col_t.middleRows(n * plane, plane).transpose() * dout_t;
      dcol_t.middleRows(n * plane, plane).noalias() = dout_t * w_t.transpose();
      db += dout_t.colwise().sum();
    }
  }
  col2im_add(d_cols, grads.d_input);
  return grads;
}

Tensor maxpool2_forward(const Tensor& input, Maxpool2Cache* cache) {
  check(input.rank() == 4, "maxpool2: input must be NCHW");
  const Index height = input.dim(2), width = input.dim(3);
  check(height % 2 == 0, "maxpool2: odd height " + std::to_string(height));
  check(width % 2 == 0, "maxpool2: odd width " + std::to_string(width));
  const Index n_batch = input.dim(0), channels = input.dim(1);
  const Index oh = height / 2, ow = width / 2;

  Tensor output({n_batch, channels, oh, ow});
  if (cache) {
    cache->argmax.assign(static_cast<size_t>(output.size()), 0);
    cache->in_shape = input.shape();
  }
  const double* in = input.data();
  double* out = output.data();
  Index oi = 0;
  for (Index nc = 0; nc < n_batch * channels; ++nc) {
    const double* plane = in + nc * height * width;
    for (Index h = 0; h < oh; ++h) {
      for (Index w = 0; w < ow; ++w, ++oi) {
        const Index base = (2 * h) * width + 2 * w;
        Index best = base;
        double v = plane[base];
        const Index cand[3] = {base + 1, base + width, base + width + 1};
        for (Index c : cand) {
          if (plane[c] > v) {
            v = plane[c];
            best = c;
          }
        }
        out[oi] = v;
        if (cache) cache->argmax[static_cast<size_t>(oi)] = nc * height * width + best;
      }
    }
  }
  return output;
}

Tensor maxpool2_backward(const Tensor& d_output, const Maxpool2Cache& cache) {
  check(!cache.in_shape.empty(), "maxpool2 backward: missing forward cache");
  check(static_cast<size_t>(d_output.size()) == cache.argmax.size(),
        "maxpool2 backward: d_output size mismatch");
  Tensor d_input(cache.in_shape);
  const double* d = d_output.data();
  for (size_t i = 0; i < cache.argmax.size(); ++i)
    d_input[cache.argmax[i]] += d[i];
  return d_input;
}

Tensor batchnorm2d_forward(const Tensor& input, const Tensor& gamma,
                           const Tensor& beta, Tensor& running_mean,
                           Tensor& running_var, Mode mode, double eps,
                           double momentum, BatchNormCache* cache) {
  check(input.rank() == 4, "batchnorm2d: input must be NCHW");
  const Index n_batch = input.dim(0), channels = input.dim(1);
  const Index plane = input.dim(2) * input.dim(3);
  check(gamma.size() == channels && beta.size() == channels,
        "batchnorm2d: affine parameter extent must equal channel count");
  const Index m = n_batch * plane;
  if (mode == Mode::kTrain)
    check(m >= 2, "batchnorm2d: train mode needs N*H*W >= 2");

  Eigen::ArrayXd mean(channels), var(channels);
  if (mode == Mode::kTrain) {
    mean.setZero();
    var.setZero();
    for (Index c = 0; c < channels; ++c) {
      double s = 0.0, s2 = 0.0;
      for (Index n = 0; n < n_batch; ++n) {
        const double* p = input.data() + (n * channels + c) * plane;
        for (Index i = 0; i < plane; ++i) {
          s += p[i];
          s2 += p[i] * p[i];
        }
      }
      mean[c] = s / static_cast<double>(m);
      var[c] = s2 / static_cast<double>(m) - mean[c] * mean[c];
      if (var[c] < 0.0) var[c] = 0.0;  // rounding guard
      running_mean[c] = momentum * running_mean[c] + (1.0 - momentum) * mean[c];
      running_var[c] = momentum * running_var[c] + (1.0 - momentum) * var[c];
    }
  } else {
    for (Index c = 0; c < channels; ++c) {
      mean[c] = running_mean[c];
      var[c] = running_var[c];
    }
  }

  Tensor output(input.shape());
  Eigen::ArrayXd inv_std = (var + eps).sqrt().inverse();
  if (cache && !cache->x_hat.same_shape(input))
    cache->x_hat = Tensor(input.shape());
  for (Index n = 0; n < n_batch; ++n) {
    for (Index c = 0; c < channels; ++c) {
      const double* p = input.data() + (n * channels + c) * plane;
      double* o = output.data() + (n * channels + c) * plane;
      double* xh =
          cache ? cache->x_hat.data() + (n * channels + c) * plane : nullptr;
      const double g = gamma[c], b = beta[c], mu = mean[c], is = inv_std[c];
      for (Index i = 0; i < plane; ++i) {
        const double v = (p[i] - mu) * is;
        o[i] = g * v + b;
        if (xh) xh[i] = v;
      }
    }
  }
  if (cache) {
    cache->inv_std = inv_std;
    cache->gamma = gamma;
  }
  return output;
}

BatchNormGrads batchnorm2d_backward(const Tensor& d_output,
                                    const BatchNormCache& cache, double) {
  check(cache.x_hat.size() > 0, "batchnorm2d backward: missing forward cache");
  check(d_output.same_shape(cache.x_hat),
        "batchnorm2d backward: d_output shape mismatch");
  const Index n_batch = d_output.dim(0), channels = d_output.dim(1);
  const Index plane = d_output.dim(2) * d_output.dim(3);
  const double m = static_cast<double>(n_batch * plane);

  BatchNormGrads grads;
  grads.d_input = Tensor(d_output.shape());
  grads.d_gamma = Tensor({channels});
  grads.d_beta = Tensor({channels});

  for (Index c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (Index n = 0; n < n_batch; ++n) {
      const double* dy = d_output.data() + (n * channels + c) * plane;
      const double* xh = cache.x_hat.data() + (n * channels + c) * plane;
      for (Index i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * xh[i];
      }
    }
    grads.d_beta[c] = sum_dy;
    grads.d_gamma[c] = sum_dy_xhat;
    const double scale = cache.gamma[c] * cache.inv_std[c] / m;
    for (Index n = 0; n < n_batch; ++n) {
      const double* dy = d_output.data() + (n * channels + c) * plane;
      const double* xh = cache.x_hat.data() + (n * channels + c) * plane;
      double* dx = grads.d_input.data() + (n * channels + c) * plane;
      for (Index i = 0; i < plane; ++i)
        dx[i] = scale * (m * dy[i] - sum_dy - xh[i] * sum_dy_xhat);
    }
  }
  return grads;
}

Tensor dropout_forward(const Tensor& input, double rate, Mode mode, Rng& rng,
                       DropoutCache* cache) {
  check(rate >= 0.0 && rate < 1.0,
        "dropout: rate must lie in [0,1), got " + std::to_string(rate));
  if (mode == Mode::kInfer || rate == 0.0) {
    if (cache) {
      if (!cache->mask.same_shape(input)) cache->mask = Tensor(input.shape());
      cache->mask.flat() = 1.0;
    }
    return input;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor local_mask;
  Tensor& mask = cache ? cache->mask : local_mask;
  if (!mask.same_shape(input)) mask = Tensor(input.shape());
  for (Index i = 0; i < mask.size(); ++i)
    mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor output(input.shape());
  output.flat() = input.flat() * mask.flat();
  return output;
}

Tensor dropout_backward(const Tensor& d_output, const DropoutCache& cache) {
  check(cache.mask.size() > 0, "dropout backward: missing forward cache");
  check(d_output.same_shape(cache.mask), "dropout backward: shape mismatch");
  Tensor d_input(d_output.shape());
  d_input.flat() = d_output.flat() * cache.mask.flat();
  return d_input;
}

Tensor leaky_relu_forward(const Tensor& input, double slope,
                          LeakyReluCache* cache) {
  Tensor output(input.shape());
  for (Index i = 0; i < input.size(); ++i) {
    const double v = input[i];
    output[i] = v > 0.0 ? v : slope * v;
  }
  if (cache) {
    cache->input = input;
    cache->slope = slope;
  }
  return output;
}

Tensor leaky_relu_backward(const Tensor& d_output, const LeakyReluCache& cache) {
  check(cache.input.size() > 0, "leaky_relu backward: missing forward cache");
  check(d_output.same_shape(cache.input), "leaky_relu backward: shape mismatch");
  Tensor d_input(d_output.shape());
  for (Index i = 0; i < d_output.size(); ++i)
    d_input[i] = cache.input[i] > 0.0 ? d_output[i] : cache.slope * d_output[i];
  return d_input;
}

Tensor dense_forward(const Tensor& input, const Tensor& weight,
                     const Tensor& bias, DenseCache* cache) {
  check(input.rank() == 2, "dense: input must be rank 2");
  check(weight.rank() == 2, "dense: weight must be rank 2");
  check(input.dim(1) == weight.dim(0),
        "dense: inner dimensions disagree, input " + input.shape_str() +
            " vs weight " + weight.shape_str());
  check(bias.size() == weight.dim(1), "dense: bias extent mismatch");
  Tensor output({input.dim(0), weight.dim(1)});
  output.mat().noalias() = input.mat() * weight.mat();
  output.mat().rowwise() +=
      Eigen::Map<const Eigen::RowVectorXd>(bias.data(), bias.size());
  if (cache) cache->input = input;
  return output;
}

DenseGrads dense_backward(const Tensor& d_output, const DenseCache& cache,
                          const Tensor& weight) {
  check(cache.input.size() > 0, "dense backward: missing forward cache");
  check(d_output.dim(0) == cache.input.dim(0) &&
            d_output.dim(1) == weight.dim(1),
        "dense backward: d_output shape mismatch");
  DenseGrads grads;
  grads.d_input = Tensor(cache.input.shape());
  grads.d_weight = Tensor(weight.shape());
  grads.d_bias = Tensor({weight.dim(1)});
  grads.d_input.mat().noalias() = d_output.mat() * weight.mat().transpose();
  grads.d_weight.mat().noalias() = cache.input.mat().transpose() * d_output.mat();
  Eigen::Map<Eigen::RowVectorXd>(grads.d_bias.data(), grads.d_bias.size()) =
      d_output.mat().colwise().sum();
  return grads;
}

}  // namespace spinal::nn
