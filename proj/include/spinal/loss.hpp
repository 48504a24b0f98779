#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "spinal/common.hpp"

namespace spinal {

// Ordered landmark set: one row per point, columns (x, y), normalized to
// [0,1] per axis. Vertebrae top-to-bottom, corners TL, TR, BL, BR.
using LandmarkMatrix = Eigen::Matrix<double, Eigen::Dynamic, 2>;
using LandmarkBatch = std::vector<LandmarkMatrix>;

// Partition of landmark indices into left-side and right-side corners with
// the complete cross edge list.
struct BipartiteGraph {
  std::vector<int> set_a;                     // left corners (TL, BL)
  std::vector<int> set_b;                     // right corners (TR, BR)
  std::vector<std::pair<int, int>> edges;     // all (a, b), a-major order
};

BipartiteGraph build_bipartite_graph(int n_vertebrae);

struct LossResult {
  double value = 0.0;
  LandmarkBatch grad;  // d(value)/d(pred), same layout as the batch
};

// Batch mean of the summed squared coordinate residuals.
LossResult mse_loss(const LandmarkBatch& pred, const LandmarkBatch& gt);

// Batch mean over samples of the summed absolute edge-length differences
// between prediction and ground truth.
LossResult bpd_loss(const LandmarkBatch& pred, const LandmarkBatch& gt,
                    const BipartiteGraph& graph, double eps = 1e-8);

// MSE + alpha * BPD.
LossResult total_loss(const LandmarkBatch& pred, const LandmarkBatch& gt,
                      const BipartiteGraph& graph, double alpha);

// Conversions between the model's flat (2n) row layout and LandmarkMatrix.
LandmarkMatrix landmarks_from_flat(const double* flat, int n_points);
void landmarks_to_flat(const LandmarkMatrix& lm, double* flat);

}  // namespace spinal
