#pragma once

#include <string>

#include "spinal/loss.hpp"
#include "spinal/pgm.hpp"
#include "spinal/tensor.hpp"

namespace spinal {

// Draws ground-truth and predicted vertebra quadrilaterals over a grayscale
// image. Ground truth uses pixel value 255, predictions 160 (value bands in
// place of the green/red overlay colors).
inline constexpr std::uint8_t kGtBand = 255;
inline constexpr std::uint8_t kPredBand = 160;

PgmImage render_overlay(const Tensor& image, const LandmarkMatrix& gt,
                        const LandmarkMatrix& pred);

// Color version of the same overlay: green ground-truth boxes, red
// predicted boxes on a grey background.
std::string render_overlay_svg(int height, int width, const LandmarkMatrix& gt,
                               const LandmarkMatrix& pred);

}  // namespace spinal
