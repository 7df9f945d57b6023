#pragma once

#include <cstdint>
#include <vector>

#include "navdiff/error.hpp"

namespace navdiff {

// Grayscale raster. Pixels are stored quantized (uint8) so frame files are
// bit-exact across runs; value01() exposes the [0, 1] view encoders consume.
struct Frame {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> px;  // row-major, height rows of width

  Frame() = default;
  Frame(std::size_t w, std::size_t h) : width(w), height(h), px(w * h, 0) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return px[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const {
    return px[y * width + x];
  }

  double value01(std::size_t x, std::size_t y) const {
    return static_cast<double>(px[y * width + x]) / 255.0;
  }

  bool same_size(const Frame& o) const {
    return width == o.width && height == o.height;
  }
};

using Video = std::vector<Frame>;

}  // namespace navdiff
