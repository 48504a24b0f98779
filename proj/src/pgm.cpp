#include <fstream>
#include <sstream>

#include "spinal/pgm.hpp"

namespace spinal {

void write_pgm(const std::filesystem::path& path, const PgmImage& image) {
  check(image.width > 0 && image.height > 0, "write_pgm: empty image");
  check(image.maxval > 0 && image.maxval <= 255, "write_pgm: maxval out of range");
  check(image.pixels.size() ==
            static_cast<size_t>(image.width) * static_cast<size_t>(image.height),
        "write_pgm: pixel count does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pgm: cannot open " + path.string());
  out << "P5\n" << image.width << " " << image.height << "\n" << image.maxval
      << "\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("write_pgm: write failed for " + path.string());
}

namespace {

// Next whitespace/comment-delimited token of the PNM header.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_pgm: cannot open " + path.string());
  if (next_token(in) != "P5")
    throw IoError("read_pgm: not a binary PGM (P5): " + path.string());
  PgmImage image;
  try {
    image.width = std::stoi(next_token(in));
    image.height = std::stoi(next_token(in));
    image.maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw IoError("read_pgm: malformed header in " + path.string());
  }
  if (image.width <= 0 || image.height <= 0 || image.maxval <= 0 ||
      image.maxval > 255)
    throw IoError("read_pgm: invalid dimensions in " + path.string());
  image.pixels.resize(static_cast<size_t>(image.width) *
                      static_cast<size_t>(image.height));
  in.read(reinterpret_cast<char*>(image.pixels.data()),
          static_cast<std::streamsize>(image.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.pixels.size()))
    throw IoError("read_pgm: truncated pixel data in " + path.string());
  return image;
}

}  // namespace spinal
