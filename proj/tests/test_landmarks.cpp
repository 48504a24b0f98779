#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "spinal/landmarks.hpp"
#include "spinal/synthgen.hpp"

using namespace spinal;

namespace {

Tensor white_square(int img, int lo, int hi) {
  Tensor t({img, img});
  for (int y = lo; y < hi; ++y)
    for (int x = lo; x < hi; ++x) t.at2(y, x) = 1.0;
  return t;
}

// Mask with one rotated rectangle; rotation in pixel coordinates.
MaskImage rotated_rect_mask(int h, int w, double cx, double cy, double half_w,
                            double half_h, double theta) {
  MaskImage m;
  m.height = h;
  m.width = w;
  m.labels.assign(static_cast<size_t>(h) * w, 0);
  const double c = std::cos(theta), s = std::sin(theta);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = (x + 0.5) - cx, dy = (y + 0.5) - cy;
      const double u = dx * c - dy * s;  // lateral
      const double v = dx * s + dy * c;  // down
      if (std::abs(u) <= half_w && std::abs(v) <= half_h) m.at(y, x) = 1;
    }
  }
  return m;
}

}  // namespace

TEST_CASE("fast_detect trivial contracts") {
  Tensor uniform({32, 32});
  uniform.flat() = 0.5;
  CHECK(fast_detect(uniform, 0.3).empty());

  Tensor tiny({6, 6});
  CHECK_THROWS_AS(fast_detect(tiny, 0.3), ContractError);
  Tensor img({32, 32});
  CHECK_THROWS_AS(fast_detect(img, 0.0), ContractError);
  CHECK_THROWS_AS(fast_detect(img, 0.3, 13), ContractError);
}

TEST_CASE("fast_detect localizes the corners of a white square") {
  Tensor img = white_square(40, 10, 30);
  std::vector<Corner> corners = fast_detect(img, 0.3, 9);
  REQUIRE(!corners.empty());
  // square corner pixels: (10,10), (29,10), (10,29), (29,29)
  const double cx[4] = {10, 29, 10, 29};
  const double cy[4] = {10, 10, 29, 29};
  for (int k = 0; k < 4; ++k) {
    double best = 1e9;
    for (const Corner& c : corners)
      best = std::min(best, std::hypot(c.x - cx[k], c.y - cy[k]));
    CHECK(best <= 2.0);
  }
  // no detection along straight edges farther than 2 px from every corner
  for (const Corner& c : corners) {
    double nearest = 1e9;
    for (int k = 0; k < 4; ++k)
      nearest = std::min(nearest, std::hypot(c.x - cx[k], c.y - cy[k]));
    CHECK(nearest <= 2.0);
  }
}

TEST_CASE("fast_detect threshold monotonicity") {
  // blurred synthetic image gives a spread of scores
  SpineSample s = generate_sample(5, 0, 128, 64, 0.0, 0.2);
  auto key = [](const Corner& c) { return c.y * 10000 + c.x; };
  std::set<int> at_t, at_2t;
  for (const Corner& c : fast_detect(s.image, 0.15, 9)) at_t.insert(key(c));
  for (const Corner& c : fast_detect(s.image, 0.30, 9)) at_2t.insert(key(c));
  CHECK(!at_2t.empty());
  for (int k : at_2t) CHECK(at_t.count(k) == 1);
  CHECK(at_t.size() >= at_2t.size());
}

TEST_CASE("fast_detect bright/dark symmetry under negation") {
  SpineSample s = generate_sample(6, 1, 128, 64, 0.0, 0.2);
  Tensor neg({128, 64});
  neg.flat() = 1.0 - s.image.flat();
  std::vector<Corner> a = fast_detect(s.image, 0.25, 9);
  std::vector<Corner> b = fast_detect(neg, 0.25, 9);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].y == b[i].y);
    CHECK(a[i].score == doctest::Approx(b[i].score).epsilon(1e-12));
  }
}

TEST_CASE("nonmax_suppress rules") {
  std::vector<Corner> one = {{5, 5, 1.0}};
  std::vector<Corner> kept = nonmax_suppress(one, 3);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].x == 5);

  std::vector<Corner> pair = {{5, 5, 5.0}, {6, 5, 7.0}};
  kept = nonmax_suppress(pair, 3);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 7.0);

  // postcondition: all survivors pairwise farther than radius (Chebyshev)
  SpineSample s = generate_sample(7, 2, 128, 64, 0.0, 0.2);
  kept = nonmax_suppress(fast_detect(s.image, 0.2, 9), 3);
  for (size_t i = 0; i < kept.size(); ++i)
    for (size_t j = i + 1; j < kept.size(); ++j)
      CHECK(std::max(std::abs(kept[i].x - kept[j].x),
                     std::abs(kept[i].y - kept[j].y)) > 3);
}

TEST_CASE("extract_vertebra_corners on synthetic masks") {
  int within = 0, total = 0;
  for (int i = 0; i < 10; ++i) {
    SpineSample s = generate_sample(321, i, 128, 64, 0.0, 0.2);
    LandmarkMatrix ext = extract_vertebra_corners(s.mask);
    REQUIRE(ext.rows() == 72);
    for (int k = 0; k < 72; ++k) {
      const double dx = (ext(k, 0) - s.landmarks(k, 0)) * 64;
      const double dy = (ext(k, 1) - s.landmarks(k, 1)) * 128;
      const double err = std::hypot(dx, dy);
      CHECK(err <= 3.0);
      if (err <= 2.0) ++within;
      ++total;
    }
    // vertebrae ordered top to bottom, left corners left of right corners
    for (int v = 0; v < 17; ++v)
      CHECK(ext(4 * v, 1) < ext(4 * (v + 1), 1));
    for (int v = 0; v < 18; ++v) {
      CHECK(ext(4 * v + 0, 0) < ext(4 * v + 1, 0));  // TL < TR
      CHECK(ext(4 * v + 2, 0) < ext(4 * v + 3, 0));  // BL < BR
    }
  }
  CHECK(static_cast<double>(within) / total >= 0.95);
}

TEST_CASE("extract_vertebra_corners on a 15-degree rectangle") {
  const double theta = 15.0 * 3.14159265358979323846 / 180.0;
  MaskImage m = rotated_rect_mask(64, 64, 32.0, 32.0, 18.0, 8.0, theta);
  LandmarkMatrix ext = extract_vertebra_corners(m, 1);
  REQUIRE(ext.rows() == 4);
  // analytic corners (pixel coordinates) in TL,TR,BL,BR order
  const double c = std::cos(theta), s = std::sin(theta);
  const double ux = c, uy = -s, vx = s, vy = c;
  const double gx[4] = {32 - 18 * ux - 8 * vx, 32 + 18 * ux - 8 * vx,
                        32 - 18 * ux + 8 * vx, 32 + 18 * ux + 8 * vx};
  const double gy[4] = {32 - 18 * uy - 8 * vy, 32 + 18 * uy - 8 * vy,
                        32 - 18 * uy + 8 * vy, 32 + 18 * uy + 8 * vy};
  // order is the contract; localization tolerance is looser here because this
  // hand-rolled raster has no sub-pixel slack at the corners
  for (int k = 0; k < 4; ++k) {
    const double ex = ext(k, 0) * 64, ey = ext(k, 1) * 64;
    CHECK(std::hypot(ex - gx[k], ey - gy[k]) <= 2.5);
  }
}

TEST_CASE("extract_vertebra_corners translation equivariance") {
  const double theta = 0.2;
  MaskImage a = rotated_rect_mask(96, 96, 40.0, 44.0, 16.0, 7.0, theta);
  MaskImage b = rotated_rect_mask(96, 96, 43.0, 49.0, 16.0, 7.0, theta);
  LandmarkMatrix ea = extract_vertebra_corners(a, 1);
  LandmarkMatrix eb = extract_vertebra_corners(b, 1);
  for (int k = 0; k < 4; ++k) {
    CHECK(eb(k, 0) - ea(k, 0) == doctest::Approx(3.0 / 96).epsilon(1e-9));
    CHECK(eb(k, 1) - ea(k, 1) == doctest::Approx(5.0 / 96).epsilon(1e-9));
  }
}

TEST_CASE("extract_vertebra_corners failure modes") {
  // 3x3 blob: FAST cannot produce 4 candidates
  MaskImage tiny;
  tiny.height = 32;
  tiny.width = 32;
  tiny.labels.assign(32 * 32, 0);
  for (int y = 14; y < 17; ++y)
    for (int x = 14; x < 17; ++x) tiny.at(y, x) = 1;
  CHECK_THROWS_WITH_AS(extract_vertebra_corners(tiny, 1),
                       doctest::Contains("label 1"), ExtractionError);

  MaskImage empty;
  empty.height = 32;
  empty.width = 32;
  empty.labels.assign(32 * 32, 0);
  CHECK_THROWS_AS(extract_vertebra_corners(empty, 1), ContractError);

  MaskImage bad;
  bad.height = 32;
  bad.width = 32;
  bad.labels.assign(32 * 32, 0);
  bad.at(10, 10) = 5;  // label out of range for n_vertebrae = 2
  CHECK_THROWS_AS(extract_vertebra_corners(bad, 2), ContractError);
}
