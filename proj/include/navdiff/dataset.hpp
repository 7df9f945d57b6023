#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "navdiff/sim.hpp"

namespace navdiff {

// Task-category weights for procedural generation. The standard mix mirrors
// the 15/16/10/9 straight/obstacle/path/turn task-suite ratios; the
// symmetric category (equal left/right expert variants around a centered
// obstacle) is its own split used by the multi-modality study.
struct TaskMix {
  int straight = 15;
  int obstacle = 16;
  int path = 10;
  int turn = 9;
  int symmetric = 0;

  int denom() const { return straight + obstacle + path + turn + symmetric; }

  static TaskMix standard() { return {}; }
  static TaskMix straight_only() { return {1, 0, 0, 0, 0}; }
  static TaskMix symmetric_only() { return {0, 0, 0, 0, 1}; }
  static TaskMix parse(const std::string& name);
  std::string name() const;
};

struct GenStats {
  std::size_t placement_retries = 0;
};

// Procedural, fully seeded dataset generation: worlds sampled per category,
// oracle rollouts recorded as episodes, instructions templated from landmark
// labels. Episodes are split train/val by deterministic hash of episode id
// (val fraction 41/203). Pure function of (mix, n, seed).
std::vector<Episode> generate_dataset(const TaskMix& mix, std::size_t n,
                                      std::uint64_t seed,
                                      GenStats* stats = nullptr);

// Category counts by largest-remainder apportionment; exact proportions
// whenever n is divisible by the mix denominator.
std::map<std::string, std::size_t> category_counts(const TaskMix& mix,
                                                   std::size_t n);

// On-disk layout: one directory per episode under the dataset root:
//   <root>/manifest          text key-value summary
//   <root>/<id>/meta         instruction, category, world geometry, seed
//   <root>/<id>/frames.bin   u32 count, u32 W, u32 H, then count*W*H bytes
//   <root>/<id>/poses.csv    x,y,theta,stopped,collided
//   <root>/<id>/actions.csv  vx,vy,omega
void save_episode(const std::string& dir, const Episode& ep);
Episode load_episode(const std::string& dir);

void save_dataset(const std::string& root, const std::vector<Episode>& eps,
                  const TaskMix& mix, std::uint64_t seed);
std::vector<Episode> load_dataset(const std::string& root);

// Trajectory metrics.
struct MetricParams {
  std::size_t stop_dwell = 5;
  double stop_eps = 2e-3;       // per-step displacement regarded as still
  double stationary_eps = 1e-4; // DA: below this a step has no direction
  double omega_eps = 1e-9;
};

struct Metrics {
  bool success = false;
  double ate = 0.0;
  double da = 0.0;
  bool collided = false;
};

// SR: final pose inside the goal radius, still for the dwell window, and no
// collision anywhere. ATE: mean Euclidean error between time-aligned poses,
// the shorter trajectory end-padded with its final pose. DA: fraction of
// steps whose 45-degree velocity-direction sector and heading-change sign
// both match the reference.
Metrics compute_metrics(const std::vector<RobotState>& pred,
                        const std::vector<RobotState>& ref, const World& w,
                        const MetricParams& mp = {});

}  // namespace navdiff
