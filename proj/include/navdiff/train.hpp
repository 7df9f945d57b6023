#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "navdiff/dataset.hpp"
#include "navdiff/policy.hpp"

namespace navdiff {

struct TrainConfig {
  std::size_t steps = 8000;
  std::size_t batch = 8;
  double lr = 1e-4;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  double open_loop_prob = 0.5;  // observation-slot substitution mix
  std::size_t log_every = 200;
  std::size_t checkpoint_every = 0;  // 0 = final only
  std::string out_dir;               // where checkpoints land
};

struct TrainResult {
  double initial_loss = 0.0;  // mean over the first logging window
  double final_loss = 0.0;    // mean over the last logging window
  std::size_t steps_done = 0;
  std::string checkpoint_path;
  bool aborted_nan = false;
};

// Behavior-cloning diffusion training: sample an episode window, build the
// condition (closed-loop observation or open-loop substitution), sample a
// timestep, noise the action block, and regress the injected noise. In MSE
// mode the model instead regresses the clean block directly from a zero
// input at t=0.
TrainResult train_policy(PolicyModel<float>& model,
                         const std::vector<Episode>& episodes,
                         const TrainConfig& cfg, std::ostream* log = nullptr);

}  // namespace navdiff
