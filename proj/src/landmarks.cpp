#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "spinal/landmarks.hpp"

namespace spinal {

namespace {

// 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock.
constexpr int kCircleX[16] = {0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1};
constexpr int kCircleY[16] = {-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3};

// Largest min-margin over any contiguous circular window of `arc` entries.
double best_window(const double margins[16], int arc) {
  double best = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < 16; ++s) {
    double lo = margins[s];
    for (int k = 1; k < arc; ++k) lo = std::min(lo, margins[(s + k) % 16]);
    best = std::max(best, lo);
  }
  return best;
}

}  // namespace

std::vector<Corner> fast_detect(const Tensor& image, double threshold,
                                int arc_length) {
  check(image.rank() == 2, "fast_detect: image must be rank 2");
  check(threshold > 0.0, "fast_detect: threshold must be positive");
  check(arc_length >= 9 && arc_length <= 12,
        "fast_detect: arc_length must lie in 9..12");
  const Index h = image.dim(0), w = image.dim(1);
  check(h >= 7 && w >= 7, "fast_detect: image smaller than 7x7");

  std::vector<Corner> corners;
  double bright[16], dark[16];
  for (Index y = 3; y < h - 3; ++y) {
    for (Index x = 3; x < w - 3; ++x) {
      const double center = image.at2(y, x);
      for (int k = 0; k < 16; ++k) {
        const double v = image.at2(y + kCircleY[k], x + kCircleX[k]);
        bright[k] = v - center;
        dark[k] = center - v;
      }
      const double score = std::max(best_window(bright, arc_length),
                                    best_window(dark, arc_length));
      if (score > threshold)
        corners.push_back({static_cast<int>(x), static_cast<int>(y), score});
    }
  }
  return corners;
}

std::vector<Corner> nonmax_suppress(std::vector<Corner> corners, int radius) {
  std::vector<size_t> order(corners.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t i, size_t j) {
    return corners[i].score > corners[j].score;
  });
  std::vector<Corner> kept;
  for (size_t i : order) {
    const Corner& c = corners[i];
    bool suppressed = false;
    for (const Corner& k : kept) {
      if (std::max(std::abs(k.x - c.x), std::abs(k.y - c.y)) <= radius) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(c);
  }
  return kept;
}

namespace {

// One pass of a separable 3-tap box blur with edge replication.
void box_blur3(Tensor& img) {
  const Index h = img.dim(0), w = img.dim(1);
  constexpr double third = 1.0 / 3.0;
  Tensor tmp({h, w});
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      tmp.at2(y, x) = third * (img.at2(y, std::max<Index>(0, x - 1)) +
                               img.at2(y, x) +
                               img.at2(y, std::min<Index>(w - 1, x + 1)));
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      img.at2(y, x) = third * (tmp.at2(std::max<Index>(0, y - 1), x) +
                               tmp.at2(y, x) +
                               tmp.at2(std::min<Index>(h - 1, y + 1), x));
}

struct VertebraCorners {
  double centroid_y = 0.0;
  Eigen::Matrix<double, 4, 2> points;  // TL, TR, BL, BR in pixel coords
};

}  // namespace

LandmarkMatrix extract_vertebra_corners(const MaskImage& mask,
                                        int n_vertebrae) {
  check(n_vertebrae >= 1, "extract_vertebra_corners: need >= 1 vertebrae");
  const int h = mask.height, w = mask.width;
  check(h >= 7 && w >= 7, "extract_vertebra_corners: mask smaller than 7x7");
  for (std::uint8_t v : mask.labels)
    check(v <= n_vertebrae, "extract_vertebra_corners: label out of range");

  std::vector<VertebraCorners> found;
  Tensor binary({h, w});
  for (int label = 1; label <= n_vertebrae; ++label) {
    // region statistics over pixel centers
    double sx = 0.0, sy = 0.0;
    long count = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const bool in = mask.at(y, x) == label;
        binary.at2(y, x) = in ? 1.0 : 0.0;
        if (in) {
          sx += x;
          sy += y;
          ++count;
        }
      }
    }
    check(count > 0, "extract_vertebra_corners: label " +
                         std::to_string(label) + " is empty");
    const double cx = sx / count, cy = sy / count;
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (mask.at(y, x) != label) continue;
        const double dx = x - cx, dy = y - cy;
        cov(0, 0) += dx * dx;
        cov(0, 1) += dx * dy;
        cov(1, 1) += dy * dy;
      }
    }
    cov(1, 0) = cov(0, 1);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    Eigen::Vector2d major = es.eigenvectors().col(1);  // largest eigenvalue
    if (major.x() < 0 || (major.x() == 0 && major.y() < 0)) major = -major;
    Eigen::Vector2d minor(-major.y(), major.x());
    if (minor.y() < 0) minor = -minor;

    box_blur3(binary);
    // suppression radius 1: the strongest response sits a pixel or two inside
    // the region, and a wider radius would swallow the weaker detection at
    // the true vertex that the quadrant-extreme rule relies on
    std::vector<Corner> candidates =
        nonmax_suppress(fast_detect(binary, 0.3, 9), 1);
    if (candidates.size() < 4)
      throw ExtractionError("extract_vertebra_corners: fewer than 4 corner "
                            "candidates for label " + std::to_string(label));

    // extreme candidate per quadrant of the principal-axis frame
    bool have[4] = {false, false, false, false};
    double extent[4] = {0, 0, 0, 0};
    Eigen::Matrix<double, 4, 2> pts;
    for (const Corner& c : candidates) {
      const Eigen::Vector2d d(c.x - cx, c.y - cy);
      const double u = d.dot(major), v = d.dot(minor);
      const int quad = (u < 0 ? 0 : 1) + (v < 0 ? 0 : 2);  // TL TR BL BR
      const double reach = std::abs(u) + std::abs(v);
      if (!have[quad] || reach > extent[quad]) {
        have[quad] = true;
        extent[quad] = reach;
        pts.row(quad) << c.x, c.y;
      }
    }
    if (!(have[0] && have[1] && have[2] && have[3]))
      throw ExtractionError("extract_vertebra_corners: missing quadrant "
                            "corner for label " + std::to_string(label));
    found.push_back({cy, pts});
  }

  std::stable_sort(found.begin(), found.end(),
                   [](const VertebraCorners& a, const VertebraCorners& b) {
                     return a.centroid_y < b.centroid_y;
                   });

  LandmarkMatrix out(4 * n_vertebrae, 2);
  for (int v = 0; v < n_vertebrae; ++v) {
    for (int k = 0; k < 4; ++k) {
      out(4 * v + k, 0) = (found[v].points(k, 0) + 0.5) / w;
      out(4 * v + k, 1) = (found[v].points(k, 1) + 0.5) / h;
    }
  }
  return out;
}

}  // namespace spinal
