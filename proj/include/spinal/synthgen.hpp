#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "spinal/loss.hpp"
#include "spinal/rng.hpp"
#include "spinal/tensor.hpp"

namespace spinal {

inline constexpr int kNumVertebrae = 18;
inline constexpr int kNumLandmarks = 4 * kNumVertebrae;  // 72

// Raised when a sampled spine does not fit the image; callers resample.
class GenerationError : public std::runtime_error {
 public:
  explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Parametric scoliotic spine. Centerline in normalized coordinates:
//   x(t) = 0.5 + severity * sin(2*pi*wavelength_count*t + phase),  t in [0,1]
// top to bottom; 18 vertebrae as rotated rectangles along the centerline.
struct SpineSpec {
  double severity = 0.0;            // lateral amplitude, fraction of width
  double wavelength_count = 1.0;    // sinusoid periods along the spine
  double phase = 0.0;               // radians
  double gap_fraction = 0.15;       // inter-vertebral spacing fraction
  std::array<double, kNumVertebrae> vertebra_heights{};
  std::array<double, kNumVertebrae> vertebra_widths{};
  std::array<double, kNumVertebrae> per_vertebra_tilt{};  // radians

  double centerline_x(double t) const;
  double center_t(int vertebra) const;  // slot parameter of vertebra center
};

struct MaskImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> labels;  // 0 background, 1..18 vertebrae

  std::uint8_t at(int y, int x) const {
    return labels[static_cast<size_t>(y) * width + x];
  }
  std::uint8_t& at(int y, int x) {
    return labels[static_cast<size_t>(y) * width + x];
  }
};

struct SpineSample {
  Tensor image;             // (H, W) in [0,1]
  MaskImage mask;
  LandmarkMatrix landmarks;  // 72 x 2, normalized, TL,TR,BL,BR per vertebra
  SpineSpec spec;
  std::string sample_id;
};

// Rendering constants, recorded in the dataset manifest.
inline constexpr double kVertebraIntensity = 0.8;
inline constexpr double kBackgroundIntensity = 0.2;
inline constexpr double kNoiseSigma = 0.05;

SpineSpec sample_spine_spec(Rng& rng, double severity_min, double severity_max);

// Analytic corners of every vertebra, 72 x 2, TL,TR,BL,BR order.
LandmarkMatrix spine_corners(const SpineSpec& spec);

// Rasterizes mask and pseudo-X-ray image; throws GenerationError when a
// vertebra escapes the image bounds.
SpineSample render_sample(const SpineSpec& spec, int height, int width,
                          Rng& rng);

// Spec sampling plus render with deterministic per-sample resampling on
// bound violations.
SpineSample generate_sample(std::uint64_t seed, std::uint64_t sample_index,
                            int height, int width, double severity_min,
                            double severity_max);

struct SplitCounts {
  int train = 80;
  int test = 15;
  int val = 5;
};

// Writes images/<id>.pgm, masks/<id>.pgm, landmarks/<id>.json and
// manifest.json; byte-identical output for identical arguments.
void generate_dataset(std::uint64_t seed, const SplitCounts& counts, int height,
                      int width, double severity_min, double severity_max,
                      const std::filesystem::path& out_dir);

}  // namespace spinal
