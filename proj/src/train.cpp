#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numeric>
#include <ostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "spinal/train.hpp"

namespace spinal {

namespace {

Tensor make_batch(const std::vector<DatasetSample>& samples,
                  const std::vector<size_t>& order, size_t begin, size_t end,
                  const nn::ModelConfig& cfg) {
  const Index m = static_cast<Index>(end - begin);
  Tensor batch({m, 1, cfg.input_height, cfg.input_width});
  const Index plane = cfg.input_height * cfg.input_width;
  for (Index i = 0; i < m; ++i) {
    const Tensor& img = samples[order[begin + static_cast<size_t>(i)]].image;
    check(img.size() == plane, "train: image resolution does not match model");
    std::copy(img.data(), img.data() + plane, batch.data() + i * plane);
  }
  return batch;
}

LandmarkBatch batch_landmarks(const std::vector<DatasetSample>& samples,
                              const std::vector<size_t>& order, size_t begin,
                              size_t end) {
  LandmarkBatch out;
  for (size_t i = begin; i < end; ++i)
    out.push_back(samples[order[i]].landmarks);
  return out;
}

LandmarkBatch split_predictions(const Tensor& preds, int n_points) {
  LandmarkBatch out;
  for (Index i = 0; i < preds.dim(0); ++i)
    out.push_back(landmarks_from_flat(preds.data() + i * preds.dim(1), n_points));
  return out;
}

// Deterministic Fisher-Yates; std::shuffle's sequence is
// implementation-defined.
void shuffle_order(std::vector<size_t>& order, Rng& rng) {
  for (size_t i = order.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
}

}  // namespace

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["alpha"] = alpha;
  j["lr"] = lr;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["loss_kind"] = loss_kind == LossKind::kMse ? "mse" : "mse-bpd";
  j["model"] = {{"input_height", model.input_height},
                {"input_width", model.input_width},
                {"conv_channels", model.conv_channels},
                {"fc_sizes", model.fc_sizes},
                {"n_landmarks", model.n_landmarks},
                {"dropout_rate", model.dropout_rate},
                {"leaky_slope", model.leaky_slope}};
  return j.dump();
}

TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  std::ostream* log_stream) {
  check(config.batch_size >= 1, "train: batch_size must be >= 1");
  check(config.alpha >= 0.0, "train: alpha must be non-negative");
  config.model.validate();
  check(dataset.height() == config.model.input_height &&
            dataset.width() == config.model.input_width,
        "train: dataset resolution does not match model config");

#if defined(__GLIBC__)
  // the activation and im2col buffers are tens of megabytes; stop glibc from
  // returning them to the kernel after every batch, which otherwise spends
  // more time page-faulting than computing
  mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
#endif

  const std::vector<DatasetSample> train_samples = dataset.load_split("train");
  const std::vector<DatasetSample> val_samples = dataset.load_split("val");
  check(!train_samples.empty(), "train: empty train split");
  const int n_points = static_cast<int>(config.model.n_landmarks);
  const BipartiteGraph graph = build_bipartite_graph(n_points / 4);
  const double alpha = config.loss_kind == LossKind::kMse ? 0.0 : config.alpha;

  nn::ParamMap params = nn::init_params(config.model, config.seed);
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  AdamState state = adam_init(params, adam_cfg);
  Rng dropout_rng = Rng::derive(config.seed, 1);
  Rng shuffle_rng = Rng::derive(config.seed, 2);

  std::vector<size_t> order(train_samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<size_t> val_order(val_samples.size());
  std::iota(val_order.begin(), val_order.end(), 0);

  TrainResult result;
  // hoisted so layer buffers are re-used every batch / every epoch
  nn::ForwardCache cache;
  nn::ForwardCache val_cache;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_order(order, shuffle_rng);
    double loss_sum = 0.0, mse_sum = 0.0, bpd_sum = 0.0;
    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(config.batch_size)) {
      const size_t end =
          std::min(order.size(), begin + static_cast<size_t>(config.batch_size));
      const double m = static_cast<double>(end - begin);
      Tensor batch = make_batch(train_samples, order, begin, end, config.model);
      LandmarkBatch gt = batch_landmarks(train_samples, order, begin, end);

      Tensor preds = nn::model_forward(config.model, params, batch,
                                       nn::Mode::kTrain, dropout_rng, &cache);
      LandmarkBatch pred_lm = split_predictions(preds, n_points);
      LossResult mse = mse_loss(pred_lm, gt);
      LossResult bpd = bpd_loss(pred_lm, gt, graph);
      const double batch_loss = mse.value + alpha * bpd.value;
      if (!std::isfinite(batch_loss))
        throw NumericError("train: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(begin / config.batch_size));
      loss_sum += batch_loss * m;
      mse_sum += mse.value * m;
      bpd_sum += bpd.value * m;

      Tensor d_preds(preds.shape());
      for (Index i = 0; i < d_preds.dim(0); ++i) {
        LandmarkMatrix g = mse.grad[static_cast<size_t>(i)] +
                           alpha * bpd.grad[static_cast<size_t>(i)];
        landmarks_to_flat(g, d_preds.data() + i * d_preds.dim(1));
      }
      nn::ParamMap grads = nn::model_backward(config.model, cache, params,
                                              d_preds);
      adam_step(params, grads, state);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(order.size());
    entry.mse_component = mse_sum / static_cast<double>(order.size());
    entry.bpd_component = bpd_sum / static_cast<double>(order.size());

    if (!val_samples.empty()) {
      Tensor vbatch = make_batch(val_samples, val_order, 0, val_samples.size(),
                                 config.model);
      Tensor vpreds = nn::model_forward(config.model, params, vbatch,
                                        nn::Mode::kInfer, dropout_rng,
                                        &val_cache);
      LandmarkBatch vpred = split_predictions(vpreds, n_points);
      LandmarkBatch vgt = batch_landmarks(val_samples, val_order, 0,
                                          val_samples.size());
      LossResult vmse = mse_loss(vpred, vgt);
      LossResult vbpd = bpd_loss(vpred, vgt, graph);
      entry.val_loss = vmse.value + alpha * vbpd.value;
    }

    if (log_stream) {
      nlohmann::json line;
      line["epoch"] = entry.epoch;
      line["train_loss"] = entry.train_loss;
      line["val_loss"] = entry.val_loss;
      line["mse_component"] = entry.mse_component;
      line["bpd_component"] = entry.bpd_component;
      *log_stream << line.dump() << "\n";
    }
    result.log.push_back(entry);
  }

  result.checkpoint.config = config.model;
  result.checkpoint.train_digest = fnv1a_hex(config.to_json());
  result.checkpoint.params = std::move(params);
  result.checkpoint.adam = std::move(state);
  return result;
}

LandmarkBatch predict(const nn::ModelConfig& config, const nn::ParamMap& params,
                      const std::vector<DatasetSample>& samples,
                      int batch_size) {
  LandmarkBatch out;
  nn::ParamMap params_copy = params;  // infer mode leaves running stats alone
  Rng rng(0);
  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const int n_points = static_cast<int>(config.n_landmarks);
  for (size_t begin = 0; begin < samples.size();
       begin += static_cast<size_t>(batch_size)) {
    const size_t end =
        std::min(samples.size(), begin + static_cast<size_t>(batch_size));
    Tensor batch = make_batch(samples, order, begin, end, config);
    Tensor preds = nn::model_forward(config, params_copy, batch,
                                     nn::Mode::kInfer, rng);
    for (Index i = 0; i < preds.dim(0); ++i)
      out.push_back(landmarks_from_flat(preds.data() + i * preds.dim(1),
                                        n_points));
  }
  return out;
}

EvalReport evaluate_predictions(const LandmarkBatch& pred,
                                const LandmarkBatch& gt, int height,
                                int width) {
  check(!pred.empty() && pred.size() == gt.size(),
        "evaluate: empty or mismatched split");
  std::vector<double> flat_pred, flat_gt;
  for (size_t i = 0; i < pred.size(); ++i) {
    for (Eigen::Index k = 0; k < pred[i].rows(); ++k) {
      flat_pred.push_back(pred[i](k, 0));
      flat_pred.push_back(pred[i](k, 1));
      flat_gt.push_back(gt[i](k, 0));
      flat_gt.push_back(gt[i](k, 1));
    }
  }
  EvalReport report;
  report.pearson_r = pearson_r(flat_pred, flat_gt);
  const AnovaResult anova = anova_oneway(flat_pred, flat_gt);
  report.anova_f = anova.f;
  report.anova_p = anova.p;
  report.mean_radial_error = mean_radial_error(pred, gt, height, width);

  const int n_vertebrae = static_cast<int>(pred[0].rows()) / 4;
  report.per_vertebra.assign(static_cast<size_t>(n_vertebrae), 0.0);
  for (int v = 0; v < n_vertebrae; ++v) {
    double sum = 0.0;
    long count = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
      for (int k = 0; k < 4; ++k) {
        const double dx = (pred[i](4 * v + k, 0) - gt[i](4 * v + k, 0)) * width;
        const double dy = (pred[i](4 * v + k, 1) - gt[i](4 * v + k, 1)) * height;
        sum += std::sqrt(dx * dx + dy * dy);
        ++count;
      }
    }
    report.per_vertebra[static_cast<size_t>(v)] = sum / count;
  }
  return report;
}

EvalReport evaluate(const Checkpoint& ckpt, const Dataset& dataset,
                    const std::string& split) {
  check(dataset.height() == ckpt.config.input_height &&
            dataset.width() == ckpt.config.input_width,
        "evaluate: checkpoint resolution does not match dataset");
  const std::vector<DatasetSample> samples = dataset.load_split(split);
  check(!samples.empty(), "evaluate: split '" + split + "' is empty");
  LandmarkBatch pred = predict(ckpt.config, ckpt.params, samples);
  LandmarkBatch gt;
  for (const auto& s : samples) gt.push_back(s.landmarks);
  return evaluate_predictions(pred, gt, dataset.height(), dataset.width());
}

EvalReport evaluate_oracle(const Dataset& dataset, const std::string& split) {
  const std::vector<DatasetSample> samples = dataset.load_split(split);
  check(!samples.empty(), "evaluate: split '" + split + "' is empty");
  LandmarkBatch gt;
  for (const auto& s : samples) gt.push_back(s.landmarks);
  return evaluate_predictions(gt, gt, dataset.height(), dataset.width());
}

}  // namespace spinal
