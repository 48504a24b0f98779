#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "spinal/loss.hpp"
#include "spinal/synthgen.hpp"
#include "spinal/tensor.hpp"

namespace spinal {

struct DatasetSample {
  std::string id;
  Tensor image;              // (H, W) in [0,1]
  LandmarkMatrix landmarks;  // normalized
};

// Loaded view of a generated dataset directory.
class Dataset {
 public:
  static Dataset open(const std::filesystem::path& dir);

  int height() const { return height_; }
  int width() const { return width_; }
  int n_landmarks() const { return n_landmarks_; }
  const std::vector<std::string>& split_ids(const std::string& split) const;

  DatasetSample load_sample(const std::string& id) const;
  MaskImage load_mask(const std::string& id) const;
  std::vector<DatasetSample> load_split(const std::string& split) const;

 private:
  std::filesystem::path dir_;
  int height_ = 0, width_ = 0, n_landmarks_ = 0;
  std::vector<std::string> train_, test_, val_;
};

}  // namespace spinal
