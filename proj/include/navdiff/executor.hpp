#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "navdiff/action.hpp"
#include "navdiff/dataset.hpp"
#include "navdiff/encoders.hpp"
#include "navdiff/policy.hpp"
#include "navdiff/sim.hpp"

namespace navdiff {

struct ExecutionConfig {
  LoopMode mode = LoopMode::kClosed;
  double ema_alpha = 0.7;
  double v_clamp = 1.0;
  double w_clamp = 1.0;
  double yaw_scale = 1.0;
  std::size_t max_steps = 300;
  int n_ddim = 10;
  std::size_t stop_dwell = 5;
  double stop_speed = 0.05;
  std::uint64_t seed = 0;  // per-step sampling seeds derive from this

  void validate() const {
    if (!(ema_alpha > 0.0) || ema_alpha > 1.0) {
      throw ConfigError("executor: ema_alpha must be in (0, 1]");
    }
    if (v_clamp <= 0.0 || w_clamp <= 0.0) {
      throw ConfigError("executor: clamps must be positive");
    }
  }
};

// EMA smoothing against the previous smoothed action, componentwise clamp,
// then yaw scaling with an omega re-clamp.
Action postprocess(const Action& raw, const Action& prev,
                   const ExecutionConfig& cfg);

struct TraceStep {
  std::size_t step = 0;
  std::uint64_t cond_hash = 0;
  std::uint64_t seg_hashes[4] = {0, 0, 0, 0};
  ActionBlock raw_block;
  Action executed;
  RobotState pose;  // after executing the action
  std::int64_t latency_us = 0;
};

struct RolloutTrace {
  std::vector<TraceStep> steps;
  std::vector<RobotState> poses;  // length steps + 1 (leading start pose)
  bool stopped = false;
  bool collided = false;
  bool hit_max_steps = false;
  std::optional<Metrics> metrics;  // against the reference, when given
};

// The two policy-facing hooks a rollout needs: condition assembly for the
// current observation, and block prediction from a condition.
struct PolicyHooks {
  std::function<ConditionVector(LoopMode, const Frame*)> assemble;
  std::function<ActionBlock(const ConditionVector&, std::uint64_t)> predict;
  std::size_t horizon = 8;
};

// Receding-horizon execution: assemble condition, predict a block, post-
// process, execute only the first action, advance. Ends on a stop dwell,
// collision, or max_steps. When a reference trajectory is supplied the
// trace carries SR/ATE/DA against it.
RolloutTrace run_rollout(const PolicyHooks& policy, const World& world,
                         const RobotState& start, const DynamicsParams& dyn,
                         const ExecutionConfig& cfg,
                         const std::vector<RobotState>* reference = nullptr);

// Hooks for a trained model: closed/open-loop conditioning via the frozen
// encoders plus the model's flow encoder. Optional segment zeroing applies
// at inference (ablations).
struct AblationFlags {
  bool zero_flow = false;
  bool zero_language = false;
  bool zero_obs = false;
};

PolicyHooks make_model_hooks(const PolicyModel<float>& model,
                             const Conditioner<float>& cond,
                             const GoalParts& goal, int n_ddim,
                             const AblationFlags& ablate = {});

// Replays recorded expert actions as blocks (self-consistency oracle).
PolicyHooks make_replay_hooks(const Episode& ep, const ConditionLayout& layout);

// Always predicts the zero block.
PolicyHooks make_zero_hooks(const ConditionLayout& layout, std::size_t horizon);

struct LatencyStats {
  double median_us = 0;
  double p95_us = 0;
  double mean_us = 0;
  std::size_t trials = 0;
};

// Median/p95 microseconds for one predict+postprocess step on a warmed-up
// policy.
LatencyStats measure_latency(const PolicyHooks& policy, LoopMode mode,
                             const Frame* obs, const ExecutionConfig& cfg,
                             std::size_t n_trials);

// Open-loop batch export: one post-processed waypoint per goal-video frame,
// with the observation slot walked along the reference frames.
std::vector<Action> export_waypoints(const PolicyModel<float>& model,
                                     const Conditioner<float>& cond,
                                     const Video& goal_video,
                                     const std::string& instruction,
                                     const ExecutionConfig& cfg);

// CSV trace export: step,vx,vy,omega,x,y,theta,latency_us plus a summary
// line. Latency is a measurement, not part of the deterministic record;
// pass include_latency=false for byte-reproducible traces.
std::string trace_to_csv(const RolloutTrace& trace, bool include_latency);

}  // namespace navdiff
