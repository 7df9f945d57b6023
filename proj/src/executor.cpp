#include "navdiff/executor.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "navdiff/rng.hpp"

namespace navdiff {

namespace {

double clamp_sym(double v, double lim) {
  return v < -lim ? -lim : (v > lim ? lim : v);
}

std::uint64_t step_seed(std::uint64_t episode_seed, std::size_t step) {
  return Rng::derive(episode_seed, step, 0x73746570ULL).next();  // "step"
}

}  // namespace

Action postprocess(const Action& raw, const Action& prev,
                   const ExecutionConfig& cfg) {
  const double a = cfg.ema_alpha;
  Action out;
  out.vx = clamp_sym(a * raw.vx + (1.0 - a) * prev.vx, cfg.v_clamp);
  out.vy = clamp_sym(a * raw.vy + (1.0 - a) * prev.vy, cfg.v_clamp);
  out.omega = clamp_sym(a * raw.omega + (1.0 - a) * prev.omega, cfg.w_clamp);
  out.omega = clamp_sym(out.omega * cfg.yaw_scale, cfg.w_clamp);
  return out;
}

RolloutTrace run_rollout(const PolicyHooks& policy, const World& world,
                         const RobotState& start, const DynamicsParams& dyn,
                         const ExecutionConfig& cfg,
                         const std::vector<RobotState>* reference) {
  cfg.validate();
  RolloutTrace trace;
  trace.poses.push_back(start);
  Action prev{0, 0, 0};
  std::size_t dwell = 0;

  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    const RobotState& s = trace.poses.back();
    const auto t0 = std::chrono::steady_clock::now();

    Frame obs;
    const Frame* obs_ptr = nullptr;
    if (cfg.mode == LoopMode::kClosed) {
      obs = render_observation(world, s);
      obs_ptr = &obs;
    }
    ConditionVector c = policy.assemble(cfg.mode, obs_ptr);
    ActionBlock block = policy.predict(c, step_seed(cfg.seed, step));
    Action raw{block.at(0, 0), block.at(0, 1), block.at(0, 2)};
    Action act = postprocess(raw, prev, cfg);
    prev = act;

    const auto t1 = std::chrono::steady_clock::now();

    RobotState next = step_dynamics(world, s, act, dyn);

    TraceStep ts;
    ts.step = step;
    ts.cond_hash = c.hash();
    ts.seg_hashes[0] = c.segment_hash(ConditionSegment::kGoalVision);
    ts.seg_hashes[1] = c.segment_hash(ConditionSegment::kGoalFlow);
    ts.seg_hashes[2] = c.segment_hash(ConditionSegment::kObsVision);
    ts.seg_hashes[3] = c.segment_hash(ConditionSegment::kLanguage);
    ts.raw_block = block;
    ts.executed = act;
    ts.pose = next;
    ts.latency_us = std::chrono::duration_cast<std::chrono::microseconds>(
                        t1 - t0)
                        .count();
    trace.steps.push_back(std::move(ts));
    trace.poses.push_back(next);

    if (next.collided) {
      trace.collided = true;
      break;
    }
    if (act.max_abs() < cfg.stop_speed) {
      if (++dwell >= cfg.stop_dwell) {
        trace.stopped = true;
        trace.poses.back().stopped = true;
        break;
      }
    } else {
      dwell = 0;
    }
  }
  if (!trace.stopped && !trace.collided) trace.hit_max_steps = true;

  if (reference != nullptr) {
    trace.metrics = compute_metrics(trace.poses, *reference, world);
  }
  return trace;
}

PolicyHooks make_model_hooks(const PolicyModel<float>& model,
                             const Conditioner<float>& cond,
                             const GoalParts& goal, int n_ddim,
                             const AblationFlags& ablate) {
  PolicyHooks hooks;
  hooks.horizon = model.config().dit.horizon;
  hooks.assemble = [&model, &cond, goal, ablate](LoopMode mode,
                                                 const Frame* obs) {
    ConditionVector c = cond.assemble(goal, mode, obs);
    if (ablate.zero_flow) c.zero_segment(ConditionSegment::kGoalFlow);
    if (ablate.zero_language) c.zero_segment(ConditionSegment::kLanguage);
    if (ablate.zero_obs) c.zero_segment(ConditionSegment::kObsVision);
    return c;
  };
  hooks.predict = [&model, n_ddim](const ConditionVector& c,
                                   std::uint64_t seed) {
    return model.predict(c, n_ddim, seed);
  };
  return hooks;
}

PolicyHooks make_replay_hooks(const Episode& ep,
                              const ConditionLayout& layout) {
  PolicyHooks hooks;
  hooks.horizon = 8;
  auto cursor = std::make_shared<std::size_t>(0);
  hooks.assemble = [layout](LoopMode, const Frame*) {
    ConditionVector c;
    c.layout = layout;
    c.values.assign(layout.total(), 0.0);
    return c;
  };
  hooks.predict = [ep, cursor](const ConditionVector&, std::uint64_t) {
    ActionBlock block(8);
    for (std::size_t k = 0; k < 8; ++k) {
      const std::size_t idx = *cursor + k;
      if (idx < ep.actions.size()) {
        block.at(k, 0) = ep.actions[idx].vx;
        block.at(k, 1) = ep.actions[idx].vy;
        block.at(k, 2) = ep.actions[idx].omega;
      }
    }
    ++*cursor;
    return block;
  };
  return hooks;
}

PolicyHooks make_zero_hooks(const ConditionLayout& layout,
                            std::size_t horizon) {
  PolicyHooks hooks;
  hooks.horizon = horizon;
  hooks.assemble = [layout](LoopMode, const Frame*) {
    ConditionVector c;
    c.layout = layout;
    c.values.assign(layout.total(), 0.0);
    return c;
  };
  hooks.predict = [horizon](const ConditionVector&, std::uint64_t) {
    return ActionBlock(horizon);
  };
  return hooks;
}

LatencyStats measure_latency(const PolicyHooks& policy, LoopMode mode,
                             const Frame* obs, const ExecutionConfig& cfg,
                             std::size_t n_trials) {
  if (n_trials == 0) throw ContractError("latency: need at least one trial");
  // Warmup.
  Action prev{0, 0, 0};
  for (int i = 0; i < 3; ++i) {
    ConditionVector c = policy.assemble(mode, obs);
    ActionBlock b = policy.predict(c, step_seed(cfg.seed, 1000 + i));
    prev = postprocess({b.at(0, 0), b.at(0, 1), b.at(0, 2)}, prev, cfg);
  }
  std::vector<double> samples;
  samples.reserve(n_trials);
  for (std::size_t i = 0; i < n_trials; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    ConditionVector c = policy.assemble(mode, obs);
    ActionBlock b = policy.predict(c, step_seed(cfg.seed, i));
    prev = postprocess({b.at(0, 0), b.at(0, 1), b.at(0, 2)}, prev, cfg);
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(static_cast<double>(
        std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0)
            .count()));
  }
  std::sort(samples.begin(), samples.end());
  LatencyStats st;
  st.trials = n_trials;
  st.median_us = samples[samples.size() / 2];
  st.p95_us = samples[std::min(samples.size() - 1,
                               static_cast<std::size_t>(
                                   std::ceil(samples.size() * 0.95)) -
                                   (samples.size() > 1 ? 1 : 0))];
  double acc = 0;
  for (double v : samples) acc += v;
  st.mean_us = acc / samples.size();
  if (st.p95_us < st.median_us) st.p95_us = st.median_us;
  return st;
}

std::vector<Action> export_waypoints(const PolicyModel<float>& model,
                                     const Conditioner<float>& cond,
                                     const Video& goal_video,
                                     const std::string& instruction,
                                     const ExecutionConfig& cfg) {
  if (goal_video.empty()) {
    throw ContractError("waypoints: empty goal video");
  }
  GoalParts parts = cond.prepare_goal(goal_video, instruction);
  std::vector<Action> waypoints;
  waypoints.reserve(goal_video.size());
  Action prev{0, 0, 0};
  for (std::size_t j = 0; j < goal_video.size(); ++j) {
    // Walk the observation slot along the reference frames, one waypoint
    // per frame window.
    ConditionVector c = cond.assemble(parts, LoopMode::kClosed,
                                      &goal_video[j]);
    ActionBlock block = model.predict(c, cfg.n_ddim, step_seed(cfg.seed, j));
    Action act = postprocess({block.at(0, 0), block.at(0, 1), block.at(0, 2)},
                             prev, cfg);
    prev = act;
    waypoints.push_back(act);
  }
  return waypoints;
}

std::string trace_to_csv(const RolloutTrace& trace, bool include_latency) {
  std::ostringstream os;
  os << "step,vx,vy,omega,x,y,theta";
  if (include_latency) os << ",latency_us";
  os << "\n";
  char buf[160];
  for (const TraceStep& ts : trace.steps) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                  ts.step, ts.executed.vx, ts.executed.vy, ts.executed.omega,
                  ts.pose.x, ts.pose.y, ts.pose.theta);
    os << buf;
    if (include_latency) os << "," << ts.latency_us;
    os << "\n";
  }
  os << "# summary";
  if (trace.metrics) {
    std::snprintf(buf, sizeof(buf), " SR=%d ATE=%.6f DA=%.6f",
                  trace.metrics->success ? 1 : 0, trace.metrics->ate,
                  trace.metrics->da);
    os << buf;
  }
  os << " stopped=" << (trace.stopped ? 1 : 0)
     << " collided=" << (trace.collided ? 1 : 0) << "\n";
  return os.str();
}

}  // namespace navdiff
