#include "navdiff/schedule.hpp"

#include <cmath>

#include "navdiff/error.hpp"
#include "navdiff/rng.hpp"

namespace navdiff {

NoiseSchedule build_linear_schedule(int steps, double beta_1, double beta_T) {
  if (steps < 2) {
    throw ConfigError("schedule: T must be >= 2, got " + std::to_string(steps));
  }
  if (!(beta_1 > 0.0) || !(beta_1 <= beta_T) || !(beta_T < 1.0)) {
    throw ConfigError("schedule: need 0 < beta_1 <= beta_T < 1, got beta_1=" +
                      std::to_string(beta_1) + " beta_T=" +
                      std::to_string(beta_T));
  }
  NoiseSchedule s;
  s.steps = steps;
  s.beta.resize(steps);
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  double prod = 1.0;
  for (int t = 0; t < steps; ++t) {
    s.beta[t] = beta_1 + (beta_T - beta_1) * static_cast<double>(t) /
                             static_cast<double>(steps - 1);
    s.alpha[t] = 1.0 - s.beta[t];
    prod *= s.alpha[t];
    s.alpha_bar[t] = prod;
  }
  return s;
}

ActionBlock forward_noise(const ActionBlock& a0, int t, const ActionBlock& eps,
                          const NoiseSchedule& sched) {
  if (t < 0 || t >= sched.steps) {
    throw IndexError("forward_noise: t=" + std::to_string(t) +
                     " outside [0, " + std::to_string(sched.steps) + ")");
  }
  a0.check_same_shape(eps, "forward_noise");
  const double sa = std::sqrt(sched.alpha_bar[t]);
  const double sb = std::sqrt(1.0 - sched.alpha_bar[t]);
  ActionBlock out(a0.horizon);
  for (std::size_t i = 0; i < a0.size(); ++i)
    out.v[i] = sa * a0.v[i] + sb * eps.v[i];
  return out;
}

double ddpm_loss(const ActionBlock& eps_pred, const ActionBlock& eps_true) {
  eps_pred.check_same_shape(eps_true, "ddpm_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < eps_pred.size(); ++i) {
    const double d = eps_pred.v[i] - eps_true.v[i];
    acc += d * d;
  }
  return acc / static_cast<double>(eps_pred.size());
}

std::vector<int> ddim_timesteps(int steps_total, int n_steps) {
  if (n_steps < 1 || n_steps > steps_total) {
    throw ConfigError("ddim: n_steps=" + std::to_string(n_steps) +
                      " outside [1, T=" + std::to_string(steps_total) + "]");
  }
  std::vector<int> ts;
  ts.reserve(n_steps);
  if (n_steps == 1) {
    ts.push_back(steps_total - 1);
    return ts;
  }
  for (int i = 0; i < n_steps; ++i) {
    const double pos = static_cast<double>(i) *
                       static_cast<double>(steps_total - 1) /
                       static_cast<double>(n_steps - 1);
    int t = static_cast<int>(std::lround(pos));
    if (!ts.empty() && t <= ts.back()) t = ts.back() + 1;
    ts.push_back(t);
  }
  return ts;
}

ActionBlock ddim_initial_noise(std::size_t horizon, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 0x6464696dULL);  // "ddim" stream
  ActionBlock x(horizon);
  for (double& v : x.v) v = rng.normal();
  return x;
}

ActionBlock ddim_sample(const Denoiser& model, const NoiseSchedule& sched,
                        std::size_t horizon, int n_steps, std::uint64_t seed) {
  const std::vector<int> ts = ddim_timesteps(sched.steps, n_steps);
  ActionBlock x = ddim_initial_noise(horizon, seed);

  for (int k = static_cast<int>(ts.size()) - 1; k >= 0; --k) {
    const int t = ts[k];
    const double abar_t = sched.alpha_bar[t];
    const double abar_prev = k > 0 ? sched.alpha_bar[ts[k - 1]] : 1.0;
    const ActionBlock eps = model(x, t);
    eps.check_same_shape(x, "ddim_sample");
    const double sa = std::sqrt(abar_t);
    const double sb = std::sqrt(1.0 - abar_t);
    const double sa_p = std::sqrt(abar_prev);
    const double sb_p = std::sqrt(1.0 - abar_prev);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double x0 = (x.v[i] - sb * eps.v[i]) / sa;
      x.v[i] = sa_p * x0 + sb_p * eps.v[i];
    }
  }
  return x.clamped();
}

}  // namespace navdiff
