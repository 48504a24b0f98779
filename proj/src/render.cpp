#include <cmath>
#include <sstream>

#include "spinal/render.hpp"

namespace spinal {

namespace {

void draw_line(PgmImage& img, int x0, int y0, int x1, int y1,
               std::uint8_t value) {
  // Bresenham
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    if (x0 >= 0 && x0 < img.width && y0 >= 0 && y0 < img.height)
      img.pixels[static_cast<size_t>(y0) * img.width + x0] = value;
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void draw_quads(PgmImage& img, const LandmarkMatrix& lm, std::uint8_t value) {
  const int n_vertebrae = static_cast<int>(lm.rows()) / 4;
  auto px = [&](int i) {
    return static_cast<int>(std::lround(lm(i, 0) * img.width - 0.5));
  };
  auto py = [&](int i) {
    return static_cast<int>(std::lround(lm(i, 1) * img.height - 0.5));
  };
  for (int v = 0; v < n_vertebrae; ++v) {
    const int tl = 4 * v, tr = 4 * v + 1, bl = 4 * v + 2, br = 4 * v + 3;
    draw_line(img, px(tl), py(tl), px(tr), py(tr), value);
    draw_line(img, px(tr), py(tr), px(br), py(br), value);
    draw_line(img, px(br), py(br), px(bl), py(bl), value);
    draw_line(img, px(bl), py(bl), px(tl), py(tl), value);
  }
}

}  // namespace

PgmImage render_overlay(const Tensor& image, const LandmarkMatrix& gt,
                        const LandmarkMatrix& pred) {
  check(image.rank() == 2, "render_overlay: image must be rank 2");
  check(gt.rows() == pred.rows() && gt.rows() % 4 == 0,
        "render_overlay: landmark counts must match and be a multiple of 4");
  PgmImage out;
  out.height = static_cast<int>(image.dim(0));
  out.width = static_cast<int>(image.dim(1));
  out.pixels.resize(static_cast<size_t>(out.width) * out.height);
  // Background squeezed below the overlay bands.
  for (Index k = 0; k < image.size(); ++k)
    out.pixels[static_cast<size_t>(k)] = static_cast<std::uint8_t>(
        std::lround(std::clamp(image[k], 0.0, 1.0) * 140.0));
  draw_quads(out, pred, kPredBand);
  draw_quads(out, gt, kGtBand);
  return out;
}

std::string render_overlay_svg(int height, int width, const LandmarkMatrix& gt,
                               const LandmarkMatrix& pred) {
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  svg << "  <rect width=\"" << width << "\" height=\"" << height
      << "\" fill=\"#404040\"/>\n";
  auto polygon = [&](const LandmarkMatrix& lm, int v, const char* color) {
    const int order[4] = {0, 1, 3, 2};  // TL, TR, BR, BL outline
    svg << "  <polygon points=\"";
    for (int k = 0; k < 4; ++k) {
      const int i = 4 * v + order[k];
      svg << lm(i, 0) * width << "," << lm(i, 1) * height
          << (k < 3 ? " " : "");
    }
    svg << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"0.5\"/>\n";
  };
  const int n_vertebrae = static_cast<int>(gt.rows()) / 4;
  for (int v = 0; v < n_vertebrae; ++v) polygon(gt, v, "#00c000");
  for (int v = 0; v < n_vertebrae; ++v) polygon(pred, v, "#e00000");
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace spinal
