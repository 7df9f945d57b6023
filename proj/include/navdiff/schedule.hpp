#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "navdiff/action.hpp"

namespace navdiff {

// Precomputed diffusion schedule tables: beta_t, alpha_t = 1 - beta_t, and
// alpha_bar_t, the running product of alpha. Schedules are always computed
// and stored in double precision.
struct NoiseSchedule {
  int steps = 0;                  // T
  std::vector<double> beta;       // length T
  std::vector<double> alpha;      // length T
  std::vector<double> alpha_bar;  // length T
};

// Linear beta ramp inclusive of both endpoints. Requires
// 0 < beta_1 <= beta_T < 1 and T >= 2.
NoiseSchedule build_linear_schedule(int steps, double beta_1, double beta_T);

// Forward noising: sqrt(abar_t) * a0 + sqrt(1 - abar_t) * eps.
ActionBlock forward_noise(const ActionBlock& a0, int t, const ActionBlock& eps,
                          const NoiseSchedule& sched);

// Mean squared error over all H x 3 entries.
double ddpm_loss(const ActionBlock& eps_pred, const ActionBlock& eps_true);

// Noise predictor interface: (a_t, t, condition-opaque) -> predicted noise.
// The condition is bound by the caller; samplers only see the closure.
using Denoiser = std::function<ActionBlock(const ActionBlock& a_t, int t)>;

// The ascending timestep subset DDIM traverses: n evenly spaced indices over
// [0, T-1] including both endpoints (a single step uses {T-1}).
std::vector<int> ddim_timesteps(int steps_total, int n_steps);

// The seeded Gaussian start state ddim_sample uses; exposed so reproduction
// scripts and closed-form oracles can regenerate it.
ActionBlock ddim_initial_noise(std::size_t horizon, std::uint64_t seed);

// Deterministic DDIM sampling (eta = 0) from a seeded Gaussian start.
// The final output (only) is clamped to [-1, 1]. Bit-identical across runs
// with the same seed, weights, and condition.
ActionBlock ddim_sample(const Denoiser& model, const NoiseSchedule& sched,
                        std::size_t horizon, int n_steps, std::uint64_t seed);

}  // namespace navdiff
