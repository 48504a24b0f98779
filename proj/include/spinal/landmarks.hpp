#pragma once

#include <vector>

#include "spinal/loss.hpp"
#include "spinal/synthgen.hpp"
#include "spinal/tensor.hpp"

namespace spinal {

// Raised when a vertebra yields too few corner candidates.
class ExtractionError : public std::runtime_error {
 public:
  explicit ExtractionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct Corner {
  int x = 0;
  int y = 0;
  double score = 0.0;  // maximal threshold at which the segment test passes
};

// FAST segment test on the 16-pixel Bresenham circle of radius 3: a pixel is
// a corner when a contiguous arc of at least arc_length circle pixels is
// uniformly brighter than I(p)+t or darker than I(p)-t.
std::vector<Corner> fast_detect(const Tensor& image, double threshold,
                                int arc_length = 9);

// Greedy suppression by descending score; survivors are pairwise farther
// than `radius` in Chebyshev distance. Ties broken by scan order.
std::vector<Corner> nonmax_suppress(std::vector<Corner> corners,
                                    int radius = 3);

// Per labeled vertebra: binarize, box-blur once, FAST-9 at t = 0.3, suppress,
// then reduce to 4 corners via principal-axis quadrant extremes. Output is
// normalized, TL,TR,BL,BR per vertebra, vertebrae ordered by centroid y.
LandmarkMatrix extract_vertebra_corners(const MaskImage& mask,
                                        int n_vertebrae = kNumVertebrae);

}  // namespace spinal
