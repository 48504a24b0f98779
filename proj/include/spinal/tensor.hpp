#pragma once

#include <Eigen/Dense>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "spinal/common.hpp"

namespace spinal {

using Index = Eigen::Index;

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;
using MapCM = Eigen::Map<Eigen::MatrixXd>;
using ConstMapCM = Eigen::Map<const Eigen::MatrixXd>;
using MapVec = Eigen::Map<Eigen::ArrayXd>;
using ConstMapVec = Eigen::Map<const Eigen::ArrayXd>;

// Dense row-major n-dimensional array of doubles. Carrier for images,
// activations, parameters, and gradients.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
    Index n = 1;
    for (Index e : shape_) {
      check(e > 0, "Tensor: extent must be positive, got " + std::to_string(e));
      n *= e;
    }
    data_ = Eigen::ArrayXd::Zero(n);
  }

  Tensor(std::initializer_list<Index> shape)
      : Tensor(std::vector<Index>(shape)) {}

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }

  static Tensor from_values(std::vector<Index> shape,
                            const std::vector<double>& values) {
    Tensor t(std::move(shape));
    check(static_cast<Index>(values.size()) == t.size(),
          "Tensor::from_values: value count does not match shape");
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = values[static_cast<size_t>(i)];
    return t;
  }

  const std::vector<Index>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  Index size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](Index i) { return data_[i]; }
  double operator[](Index i) const { return data_[i]; }

  // Flat views
  MapVec flat() { return MapVec(data_.data(), data_.size()); }
  ConstMapVec flat() const { return ConstMapVec(data_.data(), data_.size()); }

  // 2-D view (rank must be 2)
  MapRM mat() {
    check(rank() == 2, "Tensor::mat: rank is not 2");
    return MapRM(data_.data(), dim(0), dim(1));
  }
  ConstMapRM mat() const {
    check(rank() == 2, "Tensor::mat: rank is not 2");
    return ConstMapRM(data_.data(), dim(0), dim(1));
  }

  double& at2(Index i, Index j) { return data_[i * dim(1) + j]; }
  double at2(Index i, Index j) const { return data_[i * dim(1) + j]; }

  double& at4(Index n, Index c, Index h, Index w) {
    return data_[((n * dim(1) + c) * dim(2) + h) * dim(3) + w];
  }
  double at4(Index n, Index c, Index h, Index w) const {
    return data_[((n * dim(1) + c) * dim(2) + h) * dim(3) + w];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const { return data_.isFinite().all(); }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i)
      os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
  }

 private:
  std::vector<Index> shape_;
  Eigen::ArrayXd data_;
};

}  // namespace spinal
