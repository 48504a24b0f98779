#include <cmath>

#include "spinal/loss.hpp"

namespace spinal {

BipartiteGraph build_bipartite_graph(int n_vertebrae) {
  check(n_vertebrae >= 1, "build_bipartite_graph: need at least one vertebra");
  BipartiteGraph g;
  for (int v = 0; v < n_vertebrae; ++v) {
    g.set_a.push_back(4 * v);      // TL
    g.set_a.push_back(4 * v + 2);  // BL
    g.set_b.push_back(4 * v + 1);  // TR
    g.set_b.push_back(4 * v + 3);  // BR
  }
  g.edges.reserve(g.set_a.size() * g.set_b.size());
  for (int a : g.set_a)
    for (int b : g.set_b) g.edges.emplace_back(a, b);
  return g;
}

namespace {

void check_batches(const LandmarkBatch& pred, const LandmarkBatch& gt) {
  check(!pred.empty(), "loss: empty batch");
  check(pred.size() == gt.size(), "loss: batch sizes differ");
  for (size_t i = 0; i < pred.size(); ++i)
    check(pred[i].rows() == gt[i].rows(),
          "loss: landmark counts differ at sample " + std::to_string(i));
}

}  // namespace

// Batch mean of the squared residual norm. The sum runs over all 2n
// coordinates of a sample; only the batch dimension is averaged, keeping the
// relative weight of the BPD term at a given alpha independent of this
// convention choice.
LossResult mse_loss(const LandmarkBatch& pred, const LandmarkBatch& gt) {
  check_batches(pred, gt);
  const double m = static_cast<double>(pred.size());
  LossResult res;
  res.grad.reserve(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    LandmarkMatrix diff = pred[i] - gt[i];
    res.value += diff.squaredNorm();
    res.grad.push_back(2.0 / m * diff);
  }
  res.value /= m;
  return res;
}

LossResult bpd_loss(const LandmarkBatch& pred, const LandmarkBatch& gt,
                    const BipartiteGraph& graph, double eps) {
  check_batches(pred, gt);
  const double m = static_cast<double>(pred.size());
  const int n_points = static_cast<int>(pred[0].rows());
  for (const auto& [a, b] : graph.edges)
    check(a >= 0 && a < n_points && b >= 0 && b < n_points,
          "bpd_loss: edge index out of range");

  LossResult res;
  res.grad.reserve(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) {
    LandmarkMatrix grad = LandmarkMatrix::Zero(n_points, 2);
    for (const auto& [a, b] : graph.edges) {
      const Eigen::RowVector2d delta_gt = gt[i].row(a) - gt[i].row(b);
      const Eigen::RowVector2d delta_pred = pred[i].row(a) - pred[i].row(b);
      const double d = delta_gt.norm();
      const double d_hat = delta_pred.norm();
      res.value += std::abs(d - d_hat);
      const double sign = d > d_hat ? 1.0 : (d < d_hat ? -1.0 : 0.0);
      const Eigen::RowVector2d g =
          (-sign / (m * std::max(d_hat, eps))) * delta_pred;
      grad.row(a) += g;
      grad.row(b) -= g;
    }
    res.grad.push_back(std::move(grad));
  }
  res.value /= m;
  return res;
}

LossResult total_loss(const LandmarkBatch& pred, const LandmarkBatch& gt,
                      const BipartiteGraph& graph, double alpha) {
  check(alpha >= 0.0, "total_loss: alpha must be non-negative");
  LossResult mse = mse_loss(pred, gt);
  if (alpha == 0.0) return mse;
  LossResult bpd = bpd_loss(pred, gt, graph);
  LossResult res;
  res.value = mse.value + alpha * bpd.value;
  res.grad.reserve(pred.size());
  for (size_t i = 0; i < pred.size(); ++i)
    res.grad.push_back(mse.grad[i] + alpha * bpd.grad[i]);
  return res;
}

LandmarkMatrix landmarks_from_flat(const double* flat, int n_points) {
  LandmarkMatrix lm(n_points, 2);
  for (int i = 0; i < n_points; ++i) {
    lm(i, 0) = flat[2 * i];
    lm(i, 1) = flat[2 * i + 1];
  }
  return lm;
}

void landmarks_to_flat(const LandmarkMatrix& lm, double* flat) {
  for (int i = 0; i < lm.rows(); ++i) {
    flat[2 * i] = lm(i, 0);
    flat[2 * i + 1] = lm(i, 1);
  }
}

}  // namespace spinal
