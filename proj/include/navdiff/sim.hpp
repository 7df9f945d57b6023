#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "navdiff/action.hpp"
#include "navdiff/frame.hpp"

namespace navdiff {

struct Circle {
  double x = 0, y = 0, r = 0;
};

struct AxisBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

using Obstacle = std::variant<Circle, AxisBox>;

struct Landmark {
  double x = 0, y = 0;
  double radius = 0.2;
  double brightness = 0.9;  // rendered shade in [0, 1]
  std::string label;
};

struct GoalRegion {
  double x = 0, y = 0;
  double radius = 0.5;
};

// Rectangular world in meters with static obstacles and labeled landmarks.
struct World {
  double xmin = 0, ymin = 0, xmax = 10, ymax = 10;
  std::vector<Obstacle> obstacles;
  std::vector<Landmark> landmarks;
  GoalRegion goal;

  bool inside_bounds(double x, double y, double margin = 0.0) const {
    return x >= xmin + margin && x <= xmax - margin && y >= ymin + margin &&
           y <= ymax - margin;
  }

  // Distance from a point to the nearest obstacle surface (negative inside).
  double obstacle_clearance(double x, double y) const;

  bool collides(double x, double y, double robot_radius) const {
    if (!inside_bounds(x, y, robot_radius)) return true;
    return obstacle_clearance(x, y) < robot_radius;
  }
};

struct RobotState {
  double x = 0, y = 0;
  double theta = 0;  // wrapped to (-pi, pi]
  bool stopped = false;
  bool collided = false;
};

double wrap_angle(double a);

struct DynamicsParams {
  double dt = 0.1;        // seconds
  double v_max = 1.0;     // m/s
  double w_max = 1.0;     // rad/s
  double robot_radius = 0.15;
  bool allow_lateral = true;  // the wheeled preset forces vy = 0

  static DynamicsParams humanoid() { return {}; }
  static DynamicsParams drone() { return {}; }
  static DynamicsParams wheeled() {
    DynamicsParams p;
    p.allow_lateral = false;
    return p;
  }
  static DynamicsParams for_embodiment(const std::string& tag);
};

// Forward-Euler integration of normalized body-frame velocities. Inputs are
// clamped to [-1, 1]; a collision freezes the pose and latches collided.
RobotState step_dynamics(const World& w, const RobotState& s, Action a,
                         const DynamicsParams& p);

struct RenderParams {
  std::size_t width = 64;
  std::size_t height = 64;
  double fov = 1.57079632679489662;  // pi/2
  double max_depth = 8.0;
};

// Deterministic first-person raster: an analytic depth scan over the field
// of view expanded to distance-shaded columns, with landmark brightness
// coding. Identical (world, state) gives identical pixels.
Frame render_observation(const World& w, const RobotState& s,
                         const RenderParams& rp = {});

struct OracleParams {
  double k_att = 1.0;
  double k_rep = 0.35;
  double influence = 1.0;   // obstacle influence distance beyond the surface
  double k_w = 1.5;         // heading gain
  double slow_radius = 0.8; // attraction tapers inside this distance
  double robot_radius = 0.15;
  bool allow_lateral = true;
};

// Potential-field expert: attraction toward the goal, repulsion from
// obstacles inside the influence radius, emitted as normalized body-frame
// velocities. Emits (0,0,0) inside the goal radius. A trapped state (net
// field near zero outside the goal) escapes tangentially; when the repulsive
// field is exactly anti-parallel to the attraction the tie breaks to the
// left.
Action oracle_controller(const World& w, const RobotState& s,
                         const OracleParams& p);

// A recorded rollout. |frames| == |poses| == |actions| + 1.
struct Episode {
  std::string id;
  World world;
  std::string instruction;
  std::string category;
  std::string embodiment = "humanoid";
  std::uint64_t seed = 0;
  std::string split;  // "train" or "val"
  Video frames;
  std::vector<RobotState> poses;
  std::vector<Action> actions;

  const RobotState& start() const { return poses.front(); }
};

struct RolloutLimits {
  std::size_t max_steps = 300;
  std::size_t stop_dwell = 5;
  double stop_speed = 0.05;  // max-norm threshold for a "stop" action
};

// Rolls the oracle out in a world; returns poses/actions/frames and whether
// the run ended with a stable stop inside the goal.
struct OracleRollout {
  std::vector<RobotState> poses;
  std::vector<Action> actions;
  bool reached = false;
};

OracleRollout roll_oracle(const World& w, const RobotState& start,
                          const DynamicsParams& dp, const OracleParams& op,
                          const RolloutLimits& lim);

Video render_rollout(const World& w, const std::vector<RobotState>& poses,
                     const RenderParams& rp = {});

}  // namespace navdiff
