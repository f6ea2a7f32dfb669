#pragma once

// Binary PGM (P5) images: "P5\n<width> <height>\n255\n" followed by
// width*height bytes, row-major, 0 = black, 255 = white.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "satvq/io.hpp"

namespace satvq::pgm {

struct Canvas {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;  // row-major, [0,1]

  Canvas(int w, int h, float fill = 1.0f) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  /// Copies a side*side panel with its top-left corner at (x, y).
  void paste(std::span<const float> panel, int side, int x, int y) {
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c)
        if (y + r < height && x + c < width)
          pixels[static_cast<std::size_t>(y + r) * width + x + c] = panel[static_cast<std::size_t>(r) * side + c];
  }
};

inline std::string encode(const Canvas& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.pixels.size());
  for (float v : img.pixels) {
    const float c = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
  }
  return out;
}

inline void write(const std::filesystem::path& path, const Canvas& img) { io::write_file(path, encode(img)); }

}  // namespace satvq::pgm
