#include <fstream>
#include <nlohmann/json.hpp>

#include "spinal/dataset.hpp"
#include "spinal/pgm.hpp"

namespace spinal {

Dataset Dataset::open(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IoError("Dataset: cannot open " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("Dataset: malformed manifest.json: " + std::string(e.what()));
  }
  if (manifest.value("format_version", 0) != 1)
    throw IoError("Dataset: unsupported manifest format_version");

  Dataset ds;
  ds.dir_ = dir;
  ds.height_ = manifest.at("height").get<int>();
  ds.width_ = manifest.at("width").get<int>();
  ds.n_landmarks_ = manifest.at("n_landmarks").get<int>();
  const auto& splits = manifest.at("splits");
  ds.train_ = splits.at("train").get<std::vector<std::string>>();
  ds.test_ = splits.at("test").get<std::vector<std::string>>();
  ds.val_ = splits.at("val").get<std::vector<std::string>>();
  return ds;
}

const std::vector<std::string>& Dataset::split_ids(
    const std::string& split) const {
  if (split == "train") return train_;
  if (split == "test") return test_;
  if (split == "val") return val_;
  throw ContractError("Dataset: unknown split '" + split + "'");
}

DatasetSample Dataset::load_sample(const std::string& id) const {
  DatasetSample sample;
  sample.id = id;
  PgmImage img = read_pgm(dir_ / "images" / (id + ".pgm"));
  if (img.width != width_ || img.height != height_)
    throw IoError("Dataset: image " + id + " does not match manifest dimensions");
  sample.image = Tensor({height_, width_});
  for (Index k = 0; k < sample.image.size(); ++k)
    sample.image[k] = img.pixels[static_cast<size_t>(k)] / 255.0;

  std::ifstream lf(dir_ / "landmarks" / (id + ".json"));
  if (!lf) throw IoError("Dataset: cannot open landmarks for " + id);
  nlohmann::json lm;
  try {
    lf >> lm;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("Dataset: malformed landmarks for " + id + ": " + e.what());
  }
  if (static_cast<int>(lm.size()) != n_landmarks_)
    throw IoError("Dataset: landmark count mismatch for " + id);
  sample.landmarks = LandmarkMatrix(n_landmarks_, 2);
  for (int k = 0; k < n_landmarks_; ++k) {
    sample.landmarks(k, 0) = lm[k][0].get<double>();
    sample.landmarks(k, 1) = lm[k][1].get<double>();
  }
  return sample;
}

MaskImage Dataset::load_mask(const std::string& id) const {
  PgmImage pgm = read_pgm(dir_ / "masks" / (id + ".pgm"));
  MaskImage mask;
  mask.width = pgm.width;
  mask.height = pgm.height;
  mask.labels = std::move(pgm.pixels);
  return mask;
}

std::vector<DatasetSample> Dataset::load_split(const std::string& split) const {
  std::vector<DatasetSample> samples;
  for (const std::string& id : split_ids(split))
    samples.push_back(load_sample(id));
  return samples;
}

}  // namespace spinal
