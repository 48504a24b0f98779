#include <chrono>
#include <cmath>

#include "spinal/gradcheck.hpp"
#include "spinal/loss.hpp"
#include "spinal/nn.hpp"
#include "spinal/rng.hpp"

namespace spinal::gradcheck {

Tensor finite_difference(const std::function<double(const Tensor&)>& f,
                         const Tensor& x, double step) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + step;
    const double hi = f(probe);
    probe[i] = saved - step;
    const double lo = f(probe);
    probe[i] = saved;
    grad[i] = (hi - lo) / (2.0 * step);
  }
  return grad;
}

double max_relative_error(const Tensor& analytic, const Tensor& numeric,
                          double floor) {
  check(analytic.same_shape(numeric), "max_relative_error: shape mismatch");
  double worst = 0.0;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], b = numeric[i];
    double err = std::abs(a - b);
    const double denom = std::max(std::abs(a), std::abs(b));
    if (denom > floor) err /= denom;
    worst = std::max(worst, err);
  }
  return worst;
}

namespace {

using nn::Mode;
using nn::ParamMap;

Tensor random_tensor(std::vector<Index> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Random signs with magnitude in [0.5, 1]; keeps relative errors meaningful
// at the tightest tolerances.
Tensor random_signed_unit(std::vector<Index> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) {
    const double v = rng.uniform(0.5, 1.0);
    t[i] = rng.uniform() < 0.5 ? v : -v;
  }
  return t;
}

// Scalar objective <output, weights> with fixed random weights, so one
// backward pass yields all input gradients at once.
double weighted_sum(const Tensor& out, const Tensor& weights) {
  return (out.flat() * weights.flat()).sum();
}

void add_check(Report& report, const std::string& name, double err,
               double tol) {
  report.checks.push_back({name, err, tol, err < tol});
  if (err >= tol) report.all_pass = false;
}

void check_conv(Report& report, Rng& rng) {
  Tensor input = random_tensor({2, 2, 6, 5}, rng);
  Tensor weight = random_tensor({3, 2, 3, 3}, rng);
  Tensor bias = random_tensor({3}, rng);
  Tensor co = random_tensor({2, 3, 6, 5}, rng);

  nn::Conv2dCache cache;
  nn::conv2d_forward(input, weight, bias, &cache);
  nn::Conv2dGrads grads = nn::conv2d_backward(co, cache, weight);

  auto via_input = [&](const Tensor& x) {
    return weighted_sum(nn::conv2d_forward(x, weight, bias), co);
  };
  auto via_weight = [&](const Tensor& w) {
    return weighted_sum(nn::conv2d_forward(input, w, bias), co);
  };
  auto via_bias = [&](const Tensor& b) {
    return weighted_sum(nn::conv2d_forward(input, weight, b), co);
  };
  add_check(report, "conv2d.d_input",
            max_relative_error(grads.d_input, finite_difference(via_input, input)),
            1e-6);
  add_check(report, "conv2d.d_weight",
            max_relative_error(grads.d_weight, finite_difference(via_weight, weight)),
            1e-6);
  add_check(report, "conv2d.d_bias",
            max_relative_error(grads.d_bias, finite_difference(via_bias, bias)),
            1e-6);
}

void check_maxpool(Report& report, Rng& rng) {
  Tensor input = random_tensor({1, 2, 4, 4}, rng);
  Tensor co = random_tensor({1, 2, 2, 2}, rng);
  nn::Maxpool2Cache cache;
  nn::maxpool2_forward(input, &cache);
  Tensor d_input = nn::maxpool2_backward(co, cache);
  auto f = [&](const Tensor& x) {
    return weighted_sum(nn::maxpool2_forward(x), co);
  };
  add_check(report, "maxpool2.d_input",
            max_relative_error(d_input, finite_difference(f, input)), 1e-6);
}

void check_batchnorm(Report& report, Rng& rng) {
  Tensor input = random_tensor({2, 3, 4, 3}, rng);
  Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
  Tensor beta = random_tensor({3}, rng);
  Tensor co = random_tensor({2, 3, 4, 3}, rng);

  auto forward = [&](const Tensor& x, const Tensor& g, const Tensor& b,
                     nn::BatchNormCache* cache) {
    Tensor rm({3}), rv({3});
    rv.flat() = 1.0;
    return nn::batchnorm2d_forward(x, g, b, rm, rv, Mode::kTrain, 1e-5, 0.9,
                                   cache);
  };
  nn::BatchNormCache cache;
  forward(input, gamma, beta, &cache);
  nn::BatchNormGrads grads = nn::batchnorm2d_backward(co, cache);

  auto via_input = [&](const Tensor& x) {
    return weighted_sum(forward(x, gamma, beta, nullptr), co);
  };
  auto via_gamma = [&](const Tensor& g) {
    return weighted_sum(forward(input, g, beta, nullptr), co);
  };
  auto via_beta = [&](const Tensor& b) {
    return weighted_sum(forward(input, gamma, b, nullptr), co);
  };
  add_check(report, "batchnorm2d.d_input",
            max_relative_error(grads.d_input, finite_difference(via_input, input)),
            1e-5);
  add_check(report, "batchnorm2d.d_gamma",
            max_relative_error(grads.d_gamma, finite_difference(via_gamma, gamma)),
            1e-5);
  add_check(report, "batchnorm2d.d_beta",
            max_relative_error(grads.d_beta, finite_difference(via_beta, beta)),
            1e-5);
}

void check_leaky(Report& report, Rng& rng) {
  // keep inputs away from the kink at 0
  Tensor input({40});
  for (Index i = 0; i < input.size(); ++i) {
    const double v = rng.uniform(0.1, 1.0);
    input[i] = rng.uniform() < 0.5 ? v : -v;
  }
  Tensor co = random_signed_unit({40}, rng);
  nn::LeakyReluCache cache;
  nn::leaky_relu_forward(input, 0.01, &cache);
  Tensor d_input = nn::leaky_relu_backward(co, cache);
  auto f = [&](const Tensor& x) {
    return weighted_sum(nn::leaky_relu_forward(x, 0.01), co);
  };
  add_check(report, "leaky_relu.d_input",
            max_relative_error(d_input, finite_difference(f, input)), 1e-8);
}

void check_dropout(Report& report, Rng& rng) {
  Tensor input = random_tensor({50}, rng);
  Tensor co = random_signed_unit({50}, rng);
  Rng mask_rng(7);
  nn::DropoutCache cache;
  nn::dropout_forward(input, 0.25, Mode::kTrain, mask_rng, &cache);
  Tensor d_input = nn::dropout_backward(co, cache);
  // finite differences through the frozen mask
  auto f = [&](const Tensor& x) {
    Tensor out(x.shape());
    out.flat() = x.flat() * cache.mask.flat();
    return weighted_sum(out, co);
  };
  add_check(report, "dropout.d_input",
            max_relative_error(d_input, finite_difference(f, input)), 1e-8);
}

void check_dense(Report& report, Rng& rng) {
  Tensor input = random_tensor({3, 5}, rng);
  Tensor weight = random_tensor({5, 4}, rng);
  Tensor bias = random_tensor({4}, rng);
  Tensor co = random_signed_unit({3, 4}, rng);
  nn::DenseCache cache;
  nn::dense_forward(input, weight, bias, &cache);
  nn::DenseGrads grads = nn::dense_backward(co, cache, weight);
  auto via_input = [&](const Tensor& x) {
    return weighted_sum(nn::dense_forward(x, weight, bias), co);
  };
  auto via_weight = [&](const Tensor& w) {
    return weighted_sum(nn::dense_forward(input, w, bias), co);
  };
  auto via_bias = [&](const Tensor& b) {
    return weighted_sum(nn::dense_forward(input, weight, b), co);
  };
  add_check(report, "dense.d_input",
            max_relative_error(grads.d_input, finite_difference(via_input, input)),
            1e-8);
  add_check(report, "dense.d_weight",
            max_relative_error(grads.d_weight, finite_difference(via_weight, weight)),
            1e-8);
  add_check(report, "dense.d_bias",
            max_relative_error(grads.d_bias, finite_difference(via_bias, bias)),
            1e-8);
}

Tensor landmarks_as_tensor(const LandmarkBatch& batch) {
  const Index m = static_cast<Index>(batch.size());
  const Index n = batch[0].rows();
  Tensor t({m, 2 * n});
  for (Index i = 0; i < m; ++i)
    landmarks_to_flat(batch[static_cast<size_t>(i)], t.data() + i * 2 * n);
  return t;
}

LandmarkBatch tensor_as_landmarks(const Tensor& t, int n_points) {
  LandmarkBatch batch;
  for (Index i = 0; i < t.dim(0); ++i)
    batch.push_back(landmarks_from_flat(t.data() + i * t.dim(1), n_points));
  return batch;
}

void check_losses(Report& report, Rng& rng, bool corrupt_bpd) {
  const int n_vertebrae = 3;
  const int n_points = 4 * n_vertebrae;
  const int m = 2;
  const BipartiteGraph graph = build_bipartite_graph(n_vertebrae);
  LandmarkBatch gt, pred;
  for (int i = 0; i < m; ++i) {
    LandmarkMatrix g(n_points, 2), p(n_points, 2);
    for (int k = 0; k < n_points; ++k) {
      g(k, 0) = rng.uniform();
      g(k, 1) = rng.uniform();
      p(k, 0) = rng.uniform();
      p(k, 1) = rng.uniform();
    }
    gt.push_back(g);
    pred.push_back(p);
  }
  Tensor pred_t = landmarks_as_tensor(pred);

  {
    LossResult res = mse_loss(pred, gt);
    Tensor analytic = landmarks_as_tensor(res.grad);
    auto f = [&](const Tensor& x) {
      return mse_loss(tensor_as_landmarks(x, n_points), gt).value;
    };
    add_check(report, "mse_loss.grad",
              max_relative_error(analytic, finite_difference(f, pred_t)), 1e-8);
  }
  {
    LossResult res = bpd_loss(pred, gt, graph);
    Tensor analytic = landmarks_as_tensor(res.grad);
    if (corrupt_bpd) analytic[0] += 0.5;  // negative-control hook
    auto f = [&](const Tensor& x) {
      return bpd_loss(tensor_as_landmarks(x, n_points), gt, graph).value;
    };
    add_check(report, "bpd_loss.grad",
              max_relative_error(analytic, finite_difference(f, pred_t)), 1e-6);
  }
  {
    LossResult res = total_loss(pred, gt, graph, 0.01);
    Tensor analytic = landmarks_as_tensor(res.grad);
    auto f = [&](const Tensor& x) {
      return total_loss(tensor_as_landmarks(x, n_points), gt, graph, 0.01).value;
    };
    add_check(report, "total_loss.grad",
              max_relative_error(analytic, finite_difference(f, pred_t)), 1e-6);
  }
}

// Full tiny model, dropout disabled, fixed train-mode batch norm; checks a
// sample of parameters against finite differences.
void check_full_model(Report& report, Rng& rng) {
  nn::ModelConfig cfg;
  cfg.input_height = 32;
  cfg.input_width = 32;
  cfg.conv_channels = {2, 2, 2, 2, 2};
  cfg.n_landmarks = 4;
  cfg.fc_sizes = {8, 8, 8};
  cfg.dropout_rate = 0.0;

  ParamMap params = nn::init_params(cfg, 11);
  Tensor batch = random_tensor({2, 1, 32, 32}, rng, 0.0, 1.0);
  Tensor co = random_tensor({2, 8}, rng);

  auto objective = [&](const ParamMap& p) {
    ParamMap copy = p;  // train-mode forward mutates running stats
    Rng r(0);
    Tensor out = nn::model_forward(cfg, copy, batch, Mode::kTrain, r);
    return weighted_sum(out, co);
  };

  ParamMap forward_params = params;
  nn::ForwardCache cache;
  Rng r(0);
  nn::model_forward(cfg, forward_params, batch, Mode::kTrain, r, &cache);
  ParamMap grads = nn::model_backward(cfg, cache, params, co);

  // >= 50 randomly sampled trainable parameters
  std::vector<std::string> names;
  for (const auto& [name, t] : params)
    if (nn::is_trainable(name)) names.push_back(name);

  double worst = 0.0;
  const double step = 1e-5;
  for (int s = 0; s < 60; ++s) {
    const std::string& name =
        names[static_cast<size_t>(rng.next_u64() % names.size())];
    Tensor& t = params.at(name);
    const Index idx = static_cast<Index>(rng.next_u64() %
                                         static_cast<std::uint64_t>(t.size()));
    const double saved = t[idx];
    t[idx] = saved + step;
    const double hi = objective(params);
    t[idx] = saved - step;
    const double lo = objective(params);
    t[idx] = saved;
    const double numeric = (hi - lo) / (2.0 * step);
    const double analytic = grads.at(name)[idx];
    double err = std::abs(analytic - numeric);
    const double denom = std::max(std::abs(analytic), std::abs(numeric));
    if (denom > 1e-6) err /= denom;
    worst = std::max(worst, err);
  }
  add_check(report, "full_model.params", worst, 1e-4);
}

}  // namespace

Report run_suite(std::uint64_t seed, bool corrupt_bpd) {
  const auto t0 = std::chrono::steady_clock::now();
  Report report;
  Rng rng(seed);
  check_conv(report, rng);
  check_maxpool(report, rng);
  check_batchnorm(report, rng);
  check_leaky(report, rng);
  check_dropout(report, rng);
  check_dense(report, rng);
  check_losses(report, rng, corrupt_bpd);
  check_full_model(report, rng);
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

}  // namespace spinal::gradcheck
