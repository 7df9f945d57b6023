#pragma once

#include <cstddef>
#include <vector>

#include "navdiff/error.hpp"

namespace navdiff {

// A horizon-H block of normalized body-frame velocity commands. Row t holds
// (vx, vy, omega); after normalization every entry lies in [-1, 1].
struct ActionBlock {
  std::size_t horizon = 0;
  std::vector<double> v;  // horizon x 3, row-major

  ActionBlock() = default;
  explicit ActionBlock(std::size_t h) : horizon(h), v(h * 3, 0.0) {}

  static ActionBlock zeros(std::size_t h) { return ActionBlock(h); }

  double& at(std::size_t t, std::size_t k) { return v[t * 3 + k]; }
  double at(std::size_t t, std::size_t k) const { return v[t * 3 + k]; }

  std::size_t size() const { return v.size(); }

  void check_same_shape(const ActionBlock& other, const char* op) const {
    if (horizon != other.horizon) {
      throw ContractError(std::string(op) + ": horizons " +
                          std::to_string(horizon) + " and " +
                          std::to_string(other.horizon) + " differ");
    }
  }

  ActionBlock clamped(double lo = -1.0, double hi = 1.0) const {
    ActionBlock out = *this;
    for (double& x : out.v) x = x < lo ? lo : (x > hi ? hi : x);
    return out;
  }
};

// One executed command.
struct Action {
  double vx = 0.0;
  double vy = 0.0;
  double omega = 0.0;

  double max_abs() const {
    double m = vx < 0 ? -vx : vx;
    double a = vy < 0 ? -vy : vy;
    double o = omega < 0 ? -omega : omega;
    if (a > m) m = a;
    if (o > m) m = o;
    return m;
  }
};

}  // namespace navdiff
