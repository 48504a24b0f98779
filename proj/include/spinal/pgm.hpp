#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "spinal/common.hpp"

namespace spinal {

// 8-bit grayscale raster, row-major from the top-left pixel.
struct PgmImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<std::uint8_t> pixels;
};

// Binary (P5) PGM with a fixed header layout, so identical images produce
// identical bytes.
void write_pgm(const std::filesystem::path& path, const PgmImage& image);
PgmImage read_pgm(const std::filesystem::path& path);

}  // namespace spinal
