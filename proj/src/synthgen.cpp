#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>

#include "spinal/pgm.hpp"
#include "spinal/synthgen.hpp"

namespace spinal {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSpineTop = 0.06;     // normalized y of the first slot
constexpr double kSpineBottom = 0.94;  // normalized y past the last slot
constexpr double kBoundsMargin = 0.02;
// Aspect-space gap between vertebrae: half a pixel at 128x64 so that the
// rasterization slack cannot make adjacent labels touch.
constexpr double kMinSeparation = 0.008;

// Images are portrait 2:1 (H = 2W). Rectangle rotation and overlap tests run
// in aspect-corrected coordinates (x, 2y), which are proportional to pixel
// coordinates; rotating in the unit square instead would shear the rendered
// shapes and double the apparent curvature.
constexpr double kAspect = 2.0;

}  // namespace

double SpineSpec::centerline_x(double t) const {
  return 0.5 + severity * std::sin(2.0 * kPi * wavelength_count * t + phase);
}

double SpineSpec::center_t(int vertebra) const {
  return (static_cast<double>(vertebra) + 0.5) / kNumVertebrae;
}

SpineSpec sample_spine_spec(Rng& rng, double severity_min, double severity_max) {
  check(0.0 <= severity_min && severity_min <= severity_max &&
            severity_max <= 0.25,
        "sample_spine_spec: severity range must lie within [0, 0.25]");
  SpineSpec spec;
  spec.severity = rng.uniform(severity_min, severity_max);
  spec.wavelength_count = rng.uniform(0.5, 1.5);
  spec.phase = rng.uniform(0.0, 2.0 * kPi);
  spec.gap_fraction = rng.uniform(0.12, 0.2);
  const double slot = (kSpineBottom - kSpineTop) / kNumVertebrae;
  for (int v = 0; v < kNumVertebrae; ++v) {
    spec.vertebra_heights[v] =
        slot * (1.0 - spec.gap_fraction) * rng.uniform(0.92, 1.0);
    spec.vertebra_widths[v] = rng.uniform(0.16, 0.24);
    const double t = spec.center_t(v);
    // dx/dy slope of the centerline in aspect-corrected coordinates
    const double tangent = spec.severity * 2.0 * kPi * spec.wavelength_count *
                           std::cos(2.0 * kPi * spec.wavelength_count * t +
                                    spec.phase) /
                           ((kSpineBottom - kSpineTop) * kAspect);
    spec.per_vertebra_tilt[v] = std::atan(tangent) + rng.uniform(-0.03, 0.03);
  }
  return spec;
}

LandmarkMatrix spine_corners(const SpineSpec& spec) {
  LandmarkMatrix corners(kNumLandmarks, 2);
  for (int v = 0; v < kNumVertebrae; ++v) {
    const double t = spec.center_t(v);
    const double cx = spec.centerline_x(t);
    const double cy = kSpineTop + (kSpineBottom - kSpineTop) * t;
    const double theta = spec.per_vertebra_tilt[v];
    // lateral and down-spine unit axes in aspect-corrected (x, 2y) space
    const Eigen::RowVector2d lat(std::cos(theta), -std::sin(theta));
    const Eigen::RowVector2d down(std::sin(theta), std::cos(theta));
    const Eigen::RowVector2d c(cx, cy * kAspect);
    const double hw = spec.vertebra_widths[v] / 2.0;
    const double hh = spec.vertebra_heights[v] * kAspect / 2.0;
    Eigen::Matrix<double, 4, 2> quad;
    quad.row(0) = c - hw * lat - hh * down;  // TL
    quad.row(1) = c + hw * lat - hh * down;  // TR
    quad.row(2) = c - hw * lat + hh * down;  // BL
    quad.row(3) = c + hw * lat + hh * down;  // BR
    quad.col(1) /= kAspect;  // back to normalized coordinates
    corners.block<4, 2>(4 * v, 0) = quad;
  }
  return corners;
}

namespace {

// Separable 3-tap blur [0.25, 0.5, 0.25] with edge replication.
void blur3(Tensor& img) {
  const Index h = img.dim(0), w = img.dim(1);
  Tensor tmp({h, w});
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const double l = img.at2(y, std::max<Index>(0, x - 1));
      const double r = img.at2(y, std::min<Index>(w - 1, x + 1));
      tmp.at2(y, x) = 0.25 * l + 0.5 * img.at2(y, x) + 0.25 * r;
    }
  }
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const double u = tmp.at2(std::max<Index>(0, y - 1), x);
      const double d = tmp.at2(std::min<Index>(h - 1, y + 1), x);
      img.at2(y, x) = 0.25 * u + 0.5 * tmp.at2(y, x) + 0.25 * d;
    }
  }
}

// Separating-axis test: true when the two convex quads (rows of `a` and `b`)
// are at least `margin` apart along some edge normal of either quad.
bool quads_separated(const Eigen::Matrix<double, 4, 2>& a,
                     const Eigen::Matrix<double, 4, 2>& b, double margin) {
  const Eigen::Matrix<double, 4, 2>* quads[2] = {&a, &b};
  for (const auto* q : quads) {
    // edge directions of the TL,TR,BL,BR rectangle: top edge and left edge
    const Eigen::RowVector2d edges[2] = {q->row(1) - q->row(0),
                                         q->row(2) - q->row(0)};
    for (const auto& e : edges) {
      const Eigen::RowVector2d axis(-e.y(), e.x());
      const double norm = axis.norm();
      double a_lo = std::numeric_limits<double>::infinity(), a_hi = -a_lo;
      double b_lo = a_lo, b_hi = a_hi;
      for (int k = 0; k < 4; ++k) {
        const double pa = axis.dot(a.row(k)) / norm;
        const double pb = axis.dot(b.row(k)) / norm;
        a_lo = std::min(a_lo, pa);
        a_hi = std::max(a_hi, pa);
        b_lo = std::min(b_lo, pb);
        b_hi = std::max(b_hi, pb);
      }
      if (a_hi + margin <= b_lo || b_hi + margin <= a_lo) return true;
    }
  }
  return false;
}

// Point-in-convex-quad in pixel coordinates, with every edge pushed outward
// by `slack` pixels so the pixel under each analytic corner is covered even
// when its center falls just outside the exact quad.
bool inside_quad(const Eigen::RowVector2d& p, const Eigen::RowVector2d& tl,
                 const Eigen::RowVector2d& tr, const Eigen::RowVector2d& br,
                 const Eigen::RowVector2d& bl, double slack) {
  auto side = [&](const Eigen::RowVector2d& a, const Eigen::RowVector2d& b) {
    const Eigen::RowVector2d ab = b - a, ap = p - a;
    return (ab.x() * ap.y() - ab.y() * ap.x()) / ab.norm();
  };
  const double s1 = side(tl, tr), s2 = side(tr, br), s3 = side(br, bl),
               s4 = side(bl, tl);
  return s1 >= -slack && s2 >= -slack && s3 >= -slack && s4 >= -slack;
}

}  // namespace

SpineSample render_sample(const SpineSpec& spec, int height, int width,
                          Rng& rng) {
  check(height > 0 && height % 32 == 0, "render_sample: height must be a multiple of 32");
  check(width > 0 && width % 32 == 0, "render_sample: width must be a multiple of 32");
  check(height == static_cast<int>(kAspect) * width,
        "render_sample: expected portrait 2:1 images (height == 2 * width)");

  SpineSample sample;
  sample.spec = spec;
  sample.landmarks = spine_corners(spec);
  for (int i = 0; i < kNumLandmarks; ++i) {
    const double x = sample.landmarks(i, 0), y = sample.landmarks(i, 1);
    if (x < kBoundsMargin || x > 1.0 - kBoundsMargin || y < kBoundsMargin ||
        y > 1.0 - kBoundsMargin)
      throw GenerationError("vertebra " + std::to_string(i / 4 + 1) +
                            " escapes image bounds");
  }
  // overlapping vertebrae would overwrite each other's mask corners; test in
  // aspect-corrected coordinates where the quads are true rectangles
  for (int v = 0; v < kNumVertebrae; ++v) {
    Eigen::Matrix<double, 4, 2> qa = sample.landmarks.block<4, 2>(4 * v, 0);
    qa.col(1) *= kAspect;
    for (int u = v + 1; u < kNumVertebrae; ++u) {
      Eigen::Matrix<double, 4, 2> qb = sample.landmarks.block<4, 2>(4 * u, 0);
      qb.col(1) *= kAspect;
      if (!quads_separated(qa, qb, kMinSeparation))
        throw GenerationError("vertebrae " + std::to_string(v + 1) + " and " +
                              std::to_string(u + 1) + " overlap");
    }
  }

  sample.mask.height = height;
  sample.mask.width = width;
  sample.mask.labels.assign(static_cast<size_t>(height) * width, 0);
  const Eigen::RowVector2d px_scale(width, height);
  constexpr double kRasterSlack = 0.25;  // pixels
  for (int v = 0; v < kNumVertebrae; ++v) {
    const Eigen::RowVector2d tl =
        sample.landmarks.row(4 * v + 0).cwiseProduct(px_scale);
    const Eigen::RowVector2d tr =
        sample.landmarks.row(4 * v + 1).cwiseProduct(px_scale);
    const Eigen::RowVector2d bl =
        sample.landmarks.row(4 * v + 2).cwiseProduct(px_scale);
    const Eigen::RowVector2d br =
        sample.landmarks.row(4 * v + 3).cwiseProduct(px_scale);
    const double min_x = std::min({tl.x(), tr.x(), bl.x(), br.x()});
    const double max_x = std::max({tl.x(), tr.x(), bl.x(), br.x()});
    const double min_y = std::min({tl.y(), tr.y(), bl.y(), br.y()});
    const double max_y = std::max({tl.y(), tr.y(), bl.y(), br.y()});
    const int x0 = std::max(0, static_cast<int>(std::floor(min_x)) - 1);
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(max_x)) + 1);
    const int y0 = std::max(0, static_cast<int>(std::floor(min_y)) - 1);
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(max_y)) + 1);
    for (int py = y0; py <= y1; ++py) {
      for (int px = x0; px <= x1; ++px) {
        const Eigen::RowVector2d p(px + 0.5, py + 0.5);
        if (inside_quad(p, tl, tr, br, bl, kRasterSlack))
          sample.mask.at(py, px) = static_cast<std::uint8_t>(v + 1);
      }
    }
  }

  Tensor img({height, width});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      img.at2(y, x) =
          sample.mask.at(y, x) ? kVertebraIntensity : kBackgroundIntensity;
  blur3(img);
  blur3(img);
  for (Index i = 0; i < img.size(); ++i)
    img[i] = std::clamp(img[i] + rng.normal(0.0, kNoiseSigma), 0.0, 1.0);
  sample.image = std::move(img);
  return sample;
}

SpineSample generate_sample(std::uint64_t seed, std::uint64_t sample_index,
                            int height, int width, double severity_min,
                            double severity_max) {
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    Rng rng = Rng::derive(seed, (sample_index << 16) | attempt);
    SpineSpec spec = sample_spine_spec(rng, severity_min, severity_max);
    try {
      return render_sample(spec, height, width, rng);
    } catch (const GenerationError&) {
      continue;
    }
  }
  throw GenerationError("generate_sample: no in-bounds spine after 64 attempts");
}

void generate_dataset(std::uint64_t seed, const SplitCounts& counts, int height,
                      int width, double severity_min, double severity_max,
                      const std::filesystem::path& out_dir) {
  check(counts.train > 0 && counts.test > 0 && counts.val > 0,
        "generate_dataset: counts must be positive");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "masks", ec);
  fs::create_directories(out_dir / "landmarks", ec);
  if (!fs::is_directory(out_dir / "images"))
    throw IoError("generate_dataset: cannot create " + out_dir.string());

  const int total = counts.train + counts.test + counts.val;
  nlohmann::json splits;
  splits["train"] = nlohmann::json::array();
  splits["test"] = nlohmann::json::array();
  splits["val"] = nlohmann::json::array();

  for (int i = 0; i < total; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "s%04d", i);
    SpineSample sample = generate_sample(seed, static_cast<std::uint64_t>(i),
                                         height, width, severity_min,
                                         severity_max);
    sample.sample_id = id;

    PgmImage img;
    img.width = width;
    img.height = height;
    img.pixels.resize(static_cast<size_t>(width) * height);
    for (Index k = 0; k < sample.image.size(); ++k)
      img.pixels[static_cast<size_t>(k)] =
          static_cast<std::uint8_t>(std::lround(sample.image[k] * 255.0));
    write_pgm(out_dir / "images" / (std::string(id) + ".pgm"), img);

    PgmImage mask;
    mask.width = width;
    mask.height = height;
    mask.pixels = sample.mask.labels;
    write_pgm(out_dir / "masks" / (std::string(id) + ".pgm"), mask);

    nlohmann::json lm = nlohmann::json::array();
    for (int k = 0; k < kNumLandmarks; ++k)
      lm.push_back({sample.landmarks(k, 0), sample.landmarks(k, 1)});
    std::ofstream lf(out_dir / "landmarks" / (std::string(id) + ".json"));
    if (!lf) throw IoError("generate_dataset: cannot write landmarks for " +
                           std::string(id));
    lf << lm.dump(2) << "\n";

    const char* split = i < counts.train              ? "train"
                        : i < counts.train + counts.test ? "test"
                                                         : "val";
    splits[split].push_back(id);
  }

  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["seed"] = seed;
  manifest["height"] = height;
  manifest["width"] = width;
  manifest["severity_min"] = severity_min;
  manifest["severity_max"] = severity_max;
  manifest["n_vertebrae"] = kNumVertebrae;
  manifest["n_landmarks"] = kNumLandmarks;
  manifest["vertebra_intensity"] = kVertebraIntensity;
  manifest["background_intensity"] = kBackgroundIntensity;
  manifest["noise_sigma"] = kNoiseSigma;
  manifest["splits"] = splits;
  std::ofstream mf(out_dir / "manifest.json");
  if (!mf) throw IoError("generate_dataset: cannot write manifest.json");
  mf << manifest.dump(2) << "\n";
}

}  // namespace spinal
