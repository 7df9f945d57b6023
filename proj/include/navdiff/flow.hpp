#pragma once

#include <cstddef>
#include <vector>

#include "navdiff/frame.hpp"

namespace navdiff {

// Dense displacement field between two frames, in pixels per frame step.
// Values are estimated per block and replicated across the block's pixels;
// |u|, |v| never exceed the estimator's search radius.
struct FlowField {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t block = 0;  // block size the values were estimated at
  std::vector<double> u;  // horizontal displacement per pixel
  std::vector<double> v;  // vertical displacement per pixel

  FlowField() = default;
  FlowField(std::size_t w, std::size_t h, std::size_t b)
      : width(w), height(h), block(b), u(w * h, 0.0), v(w * h, 0.0) {}

  double u_at(std::size_t x, std::size_t y) const { return u[y * width + x]; }
  double v_at(std::size_t x, std::size_t y) const { return v[y * width + x]; }

  std::size_t grid_w() const { return width / block; }
  std::size_t grid_h() const { return height / block; }

  // Block-grid views (one value per block).
  std::vector<double> grid_u() const;
  std::vector<double> grid_v() const;
};

// Block-matching flow from f1 to f2: for each block of f1, the displacement
// within +/- radius minimizing the sum of absolute differences against f2.
// Ties break toward the smallest displacement magnitude, then lexicographic
// (du, dv). Candidate windows that leave f2 are skipped.
FlowField estimate_flow(const Frame& f1, const Frame& f2, std::size_t block,
                        std::size_t radius);

}  // namespace navdiff
