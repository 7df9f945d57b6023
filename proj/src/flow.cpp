#include "navdiff/flow.hpp"

#include <cstdlib>
#include <limits>

#include "navdiff/error.hpp"

namespace navdiff {

std::vector<double> FlowField::grid_u() const {
  std::vector<double> g(grid_w() * grid_h());
  for (std::size_t by = 0; by < grid_h(); ++by)
    for (std::size_t bx = 0; bx < grid_w(); ++bx)
      g[by * grid_w() + bx] = u_at(bx * block, by * block);
  return g;
}

std::vector<double> FlowField::grid_v() const {
  std::vector<double> g(grid_w() * grid_h());
  for (std::size_t by = 0; by < grid_h(); ++by)
    for (std::size_t bx = 0; bx < grid_w(); ++bx)
      g[by * grid_w() + bx] = v_at(bx * block, by * block);
  return g;
}

namespace {

long sad_block(const Frame& f1, std::size_t x1, std::size_t y1,
               const Frame& f2, std::size_t x2, std::size_t y2,
               std::size_t block) {
  long acc = 0;
  for (std::size_t dy = 0; dy < block; ++dy) {
    const std::uint8_t* r1 = f1.px.data() + (y1 + dy) * f1.width + x1;
    const std::uint8_t* r2 = f2.px.data() + (y2 + dy) * f2.width + x2;
    for (std::size_t dx = 0; dx < block; ++dx)
      acc += std::labs(static_cast<long>(r1[dx]) - static_cast<long>(r2[dx]));
  }
  return acc;
}

}  // namespace

FlowField estimate_flow(const Frame& f1, const Frame& f2, std::size_t block,
                        std::size_t radius) {
  if (!f1.same_size(f2)) {
    throw ContractError("estimate_flow: frame sizes differ");
  }
  if (block == 0 || block > f1.width || block > f1.height) {
    throw ConfigError("estimate_flow: block " + std::to_string(block) +
                      " larger than frame " + std::to_string(f1.width) + "x" +
                      std::to_string(f1.height));
  }
  const int r = static_cast<int>(radius);
  FlowField field(f1.width, f1.height, block);
  const std::size_t gw = f1.width / block, gh = f1.height / block;

  for (std::size_t by = 0; by < gh; ++by) {
    for (std::size_t bx = 0; bx < gw; ++bx) {
      const std::size_t x0 = bx * block, y0 = by * block;
      long best = std::numeric_limits<long>::max();
      int best_du = 0, best_dv = 0;
      long best_mag = 0;
      for (int dv = -r; dv <= r; ++dv) {
        const long y2 = static_cast<long>(y0) + dv;
        if (y2 < 0 || y2 + static_cast<long>(block) > static_cast<long>(f2.height))
          continue;
        for (int du = -r; du <= r; ++du) {
          const long x2 = static_cast<long>(x0) + du;
          if (x2 < 0 ||
              x2 + static_cast<long>(block) > static_cast<long>(f2.width))
            continue;
          const long err = sad_block(f1, x0, y0, f2, static_cast<std::size_t>(x2),
                                     static_cast<std::size_t>(y2), block);
          const long mag = static_cast<long>(du) * du + static_cast<long>(dv) * dv;
          const bool better =
              err < best ||
              (err == best &&
               (mag < best_mag ||
                (mag == best_mag &&
                 (du < best_du || (du == best_du && dv < best_dv)))));
          if (better) {
            best = err;
            best_du = du;
            best_dv = dv;
            best_mag = mag;
          }
        }
      }
      for (std::size_t py = y0; py < y0 + block; ++py) {
        for (std::size_t px = x0; px < x0 + block; ++px) {
          field.u[py * field.width + px] = best_du;
          field.v[py * field.width + px] = best_dv;
        }
      }
    }
  }
  return field;
}

}  // namespace navdiff
