#include "navdiff/sim_backends.hpp"

#include <algorithm>
#include <cmath>

#include "navdiff/error.hpp"
#include "navdiff/flow.hpp"
#include "navdiff/rng.hpp"

namespace navdiff {

namespace {

bool any_contains(const std::vector<std::string>& list,
                  const std::string& needle) {
  for (const std::string& s : list)
    if (s.find(needle) != std::string::npos) return true;
  return false;
}

std::string preferred_generator(const std::string& embodiment) {
  return embodiment == "drone" ? kKeyframeGenerator : kSingleImageGenerator;
}

constexpr std::size_t kFlowBlock = 8;
constexpr std::size_t kFlowRadius = 4;

}  // namespace

// ---------------------------------------------------------------------------
// SimGenerator
// ---------------------------------------------------------------------------

Video SimGenerator::generate(const PromptStrategy& prompt,
                             const RehearsalTask& task) {
  if (!task.world || !task.start) {
    throw ContractError("sim generator: task carries no grounding world");
  }
  const World& w = *task.world;
  const bool avoids = any_contains(prompt.negative, "solid obstacles");
  const bool completes = any_contains(prompt.motion, "target") ||
                         any_contains(prompt.motion, "terminates");
  const bool stable = any_contains(prompt.camera, "stabilized") ||
                      any_contains(prompt.camera, "smooth");
  const bool matched = prompt.generator == preferred_generator(task.embodiment);

  DynamicsParams dp = DynamicsParams::for_embodiment(task.embodiment);
  std::vector<RobotState> poses;

  if (avoids) {
    OracleParams op;
    op.allow_lateral = dp.allow_lateral;
    RolloutLimits lim;
    OracleRollout roll = roll_oracle(w, *task.start, dp, op, lim);
    poses = roll.poses;
  } else {
    // Hallucinated straight-line march; obstacles are ignored entirely.
    RobotState s = *task.start;
    poses.push_back(s);
    for (int step = 0; step < 200; ++step) {
      const double gx = w.goal.x - s.x, gy = w.goal.y - s.y;
      const double d = std::hypot(gx, gy);
      if (d < w.goal.radius * 0.5) break;
      const double v = std::min(1.0, d) * dp.v_max * dp.dt;
      s.x += v * gx / d;
      s.y += v * gy / d;
      s.theta = std::atan2(gy, gx);
      poses.push_back(s);
    }
  }

  if (!completes && poses.size() > 4) {
    poses.resize(std::max<std::size_t>(4, poses.size() * 11 / 20));
  }

  if (!stable || !matched) {
    const double amp = (!stable ? 0.30 : 0.0) + (!matched ? 0.12 : 0.0);
    Rng rng = Rng::derive(task.seed ^ prompt.hash(), 0x6a697474ULL);  // "jitt"
    for (std::size_t i = 2; i < poses.size(); i += 3) {
      poses[i].x += rng.uniform(-amp, amp);
      poses[i].y += rng.uniform(-amp, amp);
      poses[i].theta = wrap_angle(poses[i].theta + rng.uniform(-amp, amp));
    }
  }

  return render_rollout(w, poses);
}

// ---------------------------------------------------------------------------
// SimEvaluator
// ---------------------------------------------------------------------------

namespace {

// Flow statistics of one frame pair: mean horizontal shift (rotation proxy)
// and mean divergence from the image center (forward-motion proxy).
struct FlowStats {
  double mean_u = 0.0;
  double divergence = 0.0;
};

FlowStats flow_stats(const Frame& a, const Frame& b) {
  const FlowField f = estimate_flow(a, b, kFlowBlock, kFlowRadius);
  FlowStats st;
  const std::size_t gw = f.grid_w(), gh = f.grid_h();
  const double cx = (static_cast<double>(gw) - 1.0) / 2.0;
  const double cy = (static_cast<double>(gh) - 1.0) / 2.0;
  const std::vector<double> gu = f.grid_u();
  const std::vector<double> gv = f.grid_v();
  double norm = 0.0;
  for (std::size_t y = 0; y < gh; ++y) {
    for (std::size_t x = 0; x < gw; ++x) {
      const double u = gu[y * gw + x], v = gv[y * gw + x];
      st.mean_u += u;
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const double r = std::hypot(dx, dy);
      if (r > 0.5) {
        st.divergence += (u * dx + v * dy) / r;
        norm += 1.0;
      }
    }
  }
  st.mean_u /= static_cast<double>(gw * gh);
  if (norm > 0) st.divergence /= norm;
  return st;
}

struct FlowCalibration {
  double rad_per_meanu = 0.0;    // heading change per unit mean_u
  double meters_per_div = 0.0;   // forward motion per unit divergence
};

// One-time calibration against known probe motions in an empty scene.
const FlowCalibration& flow_calibration() {
  static const FlowCalibration calib = [] {
    World w;
    w.xmin = -20;
    w.ymin = -20;
    w.xmax = 20;
    w.ymax = 20;
    w.goal = {10, 0, 0.5};
    // A textured scene: a ring of landmarks around the probe.
    Rng rng(4242);
    for (int i = 0; i < 14; ++i) {
      const double a = 2.0 * 3.14159265358979323846 * i / 14.0;
      const double r = 3.0 + 0.8 * rng.uniform(0.0, 1.0);
      w.landmarks.push_back({r * std::cos(a), r * std::sin(a), 0.25,
                             0.5 + 0.45 * rng.uniform(0.0, 1.0),
                             "calib"});
    }
    RobotState s{0, 0, 0, false, false};
    const Frame base = render_observation(w, s);

    RobotState rot = s;
    rot.theta = 0.08;
    const FlowStats sr = flow_stats(base, render_observation(w, rot));

    RobotState fwd = s;
    fwd.x = 0.12;
    const FlowStats sf = flow_stats(base, render_observation(w, fwd));

    FlowCalibration c;
    c.rad_per_meanu = std::fabs(sr.mean_u) > 1e-9 ? 0.08 / sr.mean_u : 0.0;
    c.meters_per_div =
        std::fabs(sf.divergence) > 1e-9 ? 0.12 / sf.divergence : 0.0;
    return c;
  }();
  return calib;
}

double frame_correlation(const Frame& a, const Frame& b) {
  if (!a.same_size(b)) return 0.0;
  const std::size_t n = a.px.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a.px[i];
    mb += b.px[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a.px[i] - ma, db = b.px[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va < 1e-9 || vb < 1e-9) return 0.0;
  return cov / std::sqrt(va * vb);
}

double mean_abs_diff(const Frame& a, const Frame& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.px.size(); ++i)
    acc += std::fabs(static_cast<double>(a.px[i]) - b.px[i]);
  return acc / (255.0 * a.px.size());
}

}  // namespace

std::vector<RobotState> SimEvaluator::decode_trajectory(
    const Video& video, const RobotState& start, const World& world) const {
  const FlowCalibration& calib = flow_calibration();
  std::vector<RobotState> path{start};
  RobotState s = start;
  for (std::size_t i = 0; i + 1 < video.size(); ++i) {
    // Flow proposes the increment.
    const FlowStats st = flow_stats(video[i], video[i + 1]);
    const double dth =
        std::clamp(calib.rad_per_meanu * st.mean_u, -0.15, 0.15);
    const double fwd =
        std::clamp(calib.meters_per_div * st.divergence, -0.15, 0.15);
    RobotState c = s;
    c.theta = wrap_angle(s.theta + dth);
    c.x += fwd * std::cos(c.theta);
    c.y += fwd * std::sin(c.theta);

    // Local render-matching refinement against the observed frame.
    const Frame& target = video[i + 1];
    auto score_pose = [&](const RobotState& p) {
      return frame_correlation(render_observation(world, p), target);
    };
    double best = score_pose(c);
    for (int pass = 0; pass < 2; ++pass) {
      for (int axis = 0; axis < 3; ++axis) {
        RobotState pick = c;
        for (int k = -2; k <= 2; ++k) {
          if (k == 0) continue;
          RobotState trial = c;
          const double off = 0.04 * k;
          if (axis == 0) trial.x += off;
          if (axis == 1) trial.y += off;
          if (axis == 2) trial.theta = wrap_angle(trial.theta + off);
          const double sc = score_pose(trial);
          if (sc > best) {
            best = sc;
            pick = trial;
          }
        }
        c = pick;
      }
    }
    s = c;
    path.push_back(s);
  }
  return path;
}

RubricScore SimEvaluator::evaluate(const Video& video,
                                   const RehearsalTask& task) {
  if (video.empty()) throw ContractError("sim evaluator: empty video");
  if (!task.world || !task.start) {
    throw ContractError("sim evaluator: task carries no grounding world");
  }
  const World& w = *task.world;
  RubricScore score;

  // --- PP: collision checks on the decoded trajectory plus matchability.
  // A frame that no legal nearby pose can render (tracking correlation
  // collapses) is a view from inside geometry.
  const std::vector<RobotState> path =
      decode_trajectory(video, *task.start, w);
  double worst_penetration = 0.0;
  for (const RobotState& p : path) {
    const double clearance = w.obstacle_clearance(p.x, p.y);
    const double pen = -(clearance + 0.10);
    worst_penetration = std::max(worst_penetration, pen);
  }
  std::size_t unmatched = 0;
  for (std::size_t i = 0; i < path.size() && i < video.size(); ++i) {
    if (frame_correlation(render_observation(w, path[i]), video[i]) < 0.55)
      ++unmatched;
  }
  const double unmatched_frac =
      static_cast<double>(unmatched) / static_cast<double>(path.size());
  const double pp_pen = 100.0 - 320.0 * worst_penetration;
  const double pp_match = 100.0 - 300.0 * unmatched_frac;
  score.pp = std::clamp(std::min(pp_pen, pp_match), 5.0, 100.0);

  // --- PA: terminal proximity of the decoded path to the instructed goal
  // (0.35 m of slack absorbs decode drift).
  const RobotState& fin = path.back();
  const double dist_final = std::hypot(fin.x - w.goal.x, fin.y - w.goal.y);
  score.pa = std::clamp(
      100.0 - 55.0 * std::max(0.0, dist_final - w.goal.radius - 0.35), 5.0,
      100.0);

  // --- VQ: temporal coherence; teleports spike the frame difference far
  // above normal ego motion (normal steps stay under ~0.06 at 64x64).
  if (video.size() >= 3) {
    std::vector<double> diffs;
    for (std::size_t i = 0; i + 1 < video.size(); ++i)
      diffs.push_back(mean_abs_diff(video[i], video[i + 1]));
    std::size_t spikes = 0;
    for (double d : diffs)
      if (d > 0.075) ++spikes;
    const double frac = static_cast<double>(spikes) / diffs.size();
    score.vq = std::clamp(100.0 - 300.0 * frac, 5.0, 100.0);
  } else {
    score.vq = 60.0;
  }

  // Critique: dominant failure mode from the weakest component.
  const RubricComponent b = identify_bottleneck(score);
  if (score.mean() >= 95.0) {
    score.critique = {FailureTag::kNone, "clean trajectory"};
  } else if (b == RubricComponent::kPP) {
    const bool scale_issue = worst_penetration > 0.0 &&
                             score.vq < 70.0;
    score.critique = {scale_issue ? FailureTag::kScaleMismatch
                                  : FailureTag::kObstacleFixation,
                      "implied path intersects obstacle geometry"};
  } else if (b == RubricComponent::kPA) {
    score.critique = {FailureTag::kInstructionDrift,
                      "clip does not end at the instructed goal"};
  } else {
    score.critique = {FailureTag::kTemporalIncoherence,
                      "frame-to-frame teleports detected"};
  }
  return score;
}

BackendPool make_sim_backends() {
  BackendPool pool;
  pool.generators.push_back(
      std::make_shared<SimGenerator>(kSingleImageGenerator));
  pool.generators.push_back(std::make_shared<SimGenerator>(kKeyframeGenerator));
  pool.evaluator = std::make_shared<SimEvaluator>();
  return pool;
}

// ---------------------------------------------------------------------------
// Scripted backends
// ---------------------------------------------------------------------------

Video ScriptedGenerator::generate(const PromptStrategy& prompt,
                                  const RehearsalTask& task) {
  (void)task;
  // The prompt text rides inside the pixels so scripted evaluators can see
  // which edits were applied.
  const std::string text = prompt.serialize();
  const std::size_t w = 64;
  const std::size_t h = (text.size() + w - 1) / w + 1;
  Frame carrier(w, h);
  for (std::size_t i = 0; i < text.size(); ++i)
    carrier.px[i] = static_cast<std::uint8_t>(text[i]);
  Frame pad(w, h);
  return {carrier, pad};
}

std::string ScriptedGenerator::decode_prompt_text(const Video& video) {
  if (video.empty()) return "";
  std::string text;
  for (std::uint8_t b : video.front().px) {
    if (b == 0) break;
    text.push_back(static_cast<char>(b));
  }
  return text;
}

RubricScore RequiredEditEvaluator::evaluate(const Video& video,
                                            const RehearsalTask& task) {
  (void)task;
  const std::string text = ScriptedGenerator::decode_prompt_text(video);
  RubricScore s;
  if (text.find(required_) != std::string::npos) {
    s.pa = 92.3;
    s.pp = 91.5;
    s.vq = 93.1;
    s.critique = {FailureTag::kNone, "required constraint present"};
    return s;
  }
  // Count applied negative prompts to keep scores drifting upward while PP
  // stays the bottleneck.
  std::size_t negatives = 0;
  std::size_t pos = 0;
  while ((pos = text.find("negative: ", pos)) != std::string::npos) {
    ++negatives;
    pos += 10;
  }
  s.pa = 85.0;
  s.pp = 50.0 + 5.0 * static_cast<double>(negatives);
  s.vq = 88.0;
  s.critique = {FailureTag::kObstacleFixation,
                "physical constraint still missing"};
  return s;
}

RubricScore LadderEvaluator::evaluate(const Video& video,
                                      const RehearsalTask& task) {
  (void)video;
  (void)task;
  static constexpr double kLadder[5][3] = {
      {70.0, 55.0, 70.0},   // mean 65.0
      {76.0, 59.5, 76.0},   // mean 70.5
      {80.0, 62.0, 80.0},   // mean 74.0
      {84.0, 67.5, 84.0},   // mean 78.5
      {89.0, 84.0, 88.0},   // mean 87.0
  };
  const std::size_t idx = std::min<std::size_t>(calls_, 4);
  ++calls_;
  RubricScore s;
  s.pa = kLadder[idx][0];
  s.pp = kLadder[idx][1];
  s.vq = kLadder[idx][2];
  s.critique = {idx < 4 ? FailureTag::kObstacleFixation : FailureTag::kNone,
                "scripted ladder"};
  return s;
}

BackendPool make_scripted_backends(std::shared_ptr<EvaluatorBackend> eval) {
  BackendPool pool;
  pool.generators.push_back(
      std::make_shared<ScriptedGenerator>(kSingleImageGenerator));
  pool.generators.push_back(
      std::make_shared<ScriptedGenerator>(kKeyframeGenerator));
  pool.evaluator = std::move(eval);
  return pool;
}

}  // namespace navdiff
