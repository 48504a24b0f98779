#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "spinal/checkpoint.hpp"
#include "spinal/dataset.hpp"
#include "spinal/metrics.hpp"
#include "spinal/nn.hpp"

namespace spinal {

enum class LossKind { kMse, kMseBpd };

struct TrainConfig {
  double alpha = 0.01;
  double lr = 1e-4;
  int batch_size = 4;
  int epochs = 200;
  std::uint64_t seed = 0;
  LossKind loss_kind = LossKind::kMseBpd;
  nn::ModelConfig model;

  std::string to_json() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double mse_component = 0.0;  // train split
  double bpd_component = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
};

// Deterministic training over the dataset's train split; validation loss is
// computed in infer mode on the val split each epoch. When `log_stream` is
// set, one JSON line per epoch is written as it completes.
TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  std::ostream* log_stream = nullptr);

// Infer-mode predictions for a list of samples, batched.
LandmarkBatch predict(const nn::ModelConfig& config, const nn::ParamMap& params,
                      const std::vector<DatasetSample>& samples,
                      int batch_size = 4);

// EvalReport over a split. `oracle` substitutes ground truth for the
// predictions, exercising the evaluation path end to end.
EvalReport evaluate(const Checkpoint& ckpt, const Dataset& dataset,
                    const std::string& split);
EvalReport evaluate_oracle(const Dataset& dataset, const std::string& split);
EvalReport evaluate_predictions(const LandmarkBatch& pred,
                                const LandmarkBatch& gt, int height, int width);

}  // namespace spinal
