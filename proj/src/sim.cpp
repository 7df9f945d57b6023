#include "navdiff/sim.hpp"

#include <algorithm>
#include <cmath>

#include "navdiff/error.hpp"

namespace navdiff {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

double clamp_sym(double v, double lim) {
  return v < -lim ? -lim : (v > lim ? lim : v);
}

double circle_distance(const Circle& c, double x, double y) {
  return std::hypot(x - c.x, y - c.y) - c.r;
}

double box_distance(const AxisBox& b, double x, double y) {
  const double dx = std::max({b.x0 - x, 0.0, x - b.x1});
  const double dy = std::max({b.y0 - y, 0.0, y - b.y1});
  if (dx > 0.0 || dy > 0.0) return std::hypot(dx, dy);
  // Inside: negative distance to the nearest face.
  const double inside =
      std::min(std::min(x - b.x0, b.x1 - x), std::min(y - b.y0, b.y1 - y));
  return -inside;
}

// Ray-circle intersection; returns the smallest positive t or nullopt.
std::optional<double> ray_circle(double ox, double oy, double dx, double dy,
                                 const Circle& c) {
  const double fx = ox - c.x, fy = oy - c.y;
  const double b = fx * dx + fy * dy;
  const double q = fx * fx + fy * fy - c.r * c.r;
  const double disc = b * b - q;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  const double t1 = -b - sq, t2 = -b + sq;
  if (t1 > 1e-9) return t1;
  if (t2 > 1e-9) return t2;
  return std::nullopt;
}

std::optional<double> ray_box(double ox, double oy, double dx, double dy,
                              const AxisBox& b) {
  double tmin = -1e30, tmax = 1e30;
  if (std::fabs(dx) < 1e-12) {
    if (ox < b.x0 || ox > b.x1) return std::nullopt;
  } else {
    double t1 = (b.x0 - ox) / dx, t2 = (b.x1 - ox) / dx;
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
  }
  if (std::fabs(dy) < 1e-12) {
    if (oy < b.y0 || oy > b.y1) return std::nullopt;
  } else {
    double t1 = (b.y0 - oy) / dy, t2 = (b.y1 - oy) / dy;
    if (t1 > t2) std::swap(t1, t2);
    tmin = std::max(tmin, t1);
    tmax = std::min(tmax, t2);
  }
  if (tmax < tmin) return std::nullopt;
  if (tmin > 1e-9) return tmin;
  if (tmax > 1e-9) return tmax;
  return std::nullopt;
}

struct Hit {
  double depth;
  double brightness;
};

Hit cast_ray(const World& w, double ox, double oy, double angle,
             double max_depth) {
  const double dx = std::cos(angle), dy = std::sin(angle);
  Hit hit{max_depth, 0.30};  // bounds wall default

  // Bounds walls.
  double best = max_depth;
  auto wall = [&](double t) {
    if (t > 1e-9 && t < best) best = t;
  };
  if (dx > 1e-12) wall((w.xmax - ox) / dx);
  if (dx < -1e-12) wall((w.xmin - ox) / dx);
  if (dy > 1e-12) wall((w.ymax - oy) / dy);
  if (dy < -1e-12) wall((w.ymin - oy) / dy);
  hit.depth = best;
  hit.brightness = 0.30;

  for (const Obstacle& ob : w.obstacles) {
    std::optional<double> t;
    if (std::holds_alternative<Circle>(ob)) {
      t = ray_circle(ox, oy, dx, dy, std::get<Circle>(ob));
    } else {
      t = ray_box(ox, oy, dx, dy, std::get<AxisBox>(ob));
    }
    if (t && *t < hit.depth) hit = {*t, 0.55};
  }
  for (const Landmark& lm : w.landmarks) {
    Circle c{lm.x, lm.y, lm.radius};
    auto t = ray_circle(ox, oy, dx, dy, c);
    if (t && *t < hit.depth) hit = {*t, lm.brightness};
  }
  if (hit.depth > max_depth) hit = {max_depth, 0.0};
  return hit;
}

}  // namespace

double wrap_angle(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a <= -kPi) a += 2.0 * kPi;
  return a;
}

double World::obstacle_clearance(double x, double y) const {
  double best = 1e30;
  for (const Obstacle& ob : obstacles) {
    double d;
    if (std::holds_alternative<Circle>(ob)) {
      d = circle_distance(std::get<Circle>(ob), x, y);
    } else {
      d = box_distance(std::get<AxisBox>(ob), x, y);
    }
    best = std::min(best, d);
  }
  return best;
}

DynamicsParams DynamicsParams::for_embodiment(const std::string& tag) {
  if (tag == "wheeled") return wheeled();
  if (tag == "drone") return drone();
  if (tag == "humanoid") return humanoid();
  throw ConfigError("dynamics: unknown embodiment '" + tag + "'");
}

RobotState step_dynamics(const World& w, const RobotState& s, Action a,
                         const DynamicsParams& p) {
  if (s.collided) return s;  // collision freezes the pose for good
  a.vx = clamp_sym(a.vx, 1.0);
  a.vy = clamp_sym(p.allow_lateral ? a.vy : 0.0, 1.0);
  a.omega = clamp_sym(a.omega, 1.0);

  const double vx = a.vx * p.v_max;
  const double vy = a.vy * p.v_max;
  const double wz = a.omega * p.w_max;

  RobotState n = s;
  const double c = std::cos(s.theta), sn = std::sin(s.theta);
  n.x = s.x + (vx * c - vy * sn) * p.dt;
  n.y = s.y + (vx * sn + vy * c) * p.dt;
  n.theta = wrap_angle(s.theta + wz * p.dt);

  if (w.collides(n.x, n.y, p.robot_radius)) {
    RobotState frozen = s;
    frozen.stopped = true;
    frozen.collided = true;
    return frozen;
  }
  return n;
}

Frame render_observation(const World& w, const RobotState& s,
                         const RenderParams& rp) {
  Frame frame(rp.width, rp.height);
  const double horizon = static_cast<double>(rp.height) / 2.0;
  for (std::size_t col = 0; col < rp.width; ++col) {
    const double frac =
        (static_cast<double>(col) + 0.5) / static_cast<double>(rp.width);
    // Leftmost column looks left of heading.
    const double angle = s.theta + rp.fov / 2.0 - frac * rp.fov;
    const Hit hit = cast_ray(w, s.x, s.y, angle, rp.max_depth);

    const double dshade = 1.0 - 0.85 * clamp01(hit.depth / rp.max_depth);
    const double shade = clamp01(hit.brightness * dshade);
    const double half_h =
        std::min(horizon, horizon / (0.35 * hit.depth + 0.35));
    const std::size_t top =
        static_cast<std::size_t>(std::max(0.0, horizon - half_h));
    const std::size_t bot = static_cast<std::size_t>(
        std::min(static_cast<double>(rp.height), horizon + half_h));

    for (std::size_t row = 0; row < rp.height; ++row) {
      double v;
      if (row >= top && row < bot) {
        v = shade;
      } else if (row < top) {
        v = 0.08;  // sky band
      } else {
        // Floor gradient: nearer rows brighter.
        const double f = (static_cast<double>(row) - horizon) / horizon;
        v = 0.10 + 0.12 * f;
      }
      frame.at(col, row) = static_cast<std::uint8_t>(
          std::lround(clamp01(v) * 255.0));
    }
  }
  return frame;
}

Action oracle_controller(const World& w, const RobotState& s,
                         const OracleParams& p) {
  const double gx = w.goal.x - s.x, gy = w.goal.y - s.y;
  const double dist = std::hypot(gx, gy);
  if (dist <= w.goal.radius) return {0.0, 0.0, 0.0};

  // Attraction, tapered near the goal for a smooth stop.
  const double att = p.k_att * std::min(1.0, dist / p.slow_radius);
  double fx = att * gx / dist, fy = att * gy / dist;

  // Repulsion from obstacle surfaces inside the influence band.
  double rx = 0.0, ry = 0.0;
  auto add_repulsion = [&](double sx, double sy, double surf_dist) {
    const double d = std::max(surf_dist - p.robot_radius, 1e-3);
    if (d >= p.influence) return;
    const double mag =
        p.k_rep * (1.0 / d - 1.0 / p.influence) / (d * d);
    const double len = std::hypot(sx, sy);
    if (len < 1e-9) return;
    rx += std::min(mag, 3.0) * sx / len;
    ry += std::min(mag, 3.0) * sy / len;
  };
  for (const Obstacle& ob : w.obstacles) {
    if (std::holds_alternative<Circle>(ob)) {
      const Circle& c = std::get<Circle>(ob);
      add_repulsion(s.x - c.x, s.y - c.y, circle_distance(c, s.x, s.y));
    } else {
      const AxisBox& b = std::get<AxisBox>(ob);
      const double cx = std::clamp(s.x, b.x0, b.x1);
      const double cy = std::clamp(s.y, b.y0, b.y1);
      add_repulsion(s.x - cx, s.y - cy, box_distance(b, s.x, s.y));
    }
  }

  // Anti-parallel repulsion (obstacle dead on the goal ray): break the tie
  // to the left of the attraction direction.
  const double rlen = std::hypot(rx, ry);
  if (rlen > 1e-6) {
    const double cross = fx * ry - fy * rx;
    const double dot = fx * rx + fy * ry;
    if (std::fabs(cross) < 1e-6 * rlen && dot < 0.0) {
      const double push = 0.5 * rlen;
      rx += -fy / std::hypot(fx, fy) * push;
      ry += fx / std::hypot(fx, fy) * push;
    }
  }

  double tx = fx + rx, ty = fy + ry;
  const double tlen = std::hypot(tx, ty);
  if (tlen < 0.05) {
    // Trapped: deterministic tangential escape along the side with more
    // clearance 0.8 m out; ties go left of the attraction.
    const double flen = std::hypot(fx, fy);
    const double lx = -fy / flen, ly = fx / flen;
    const double left_clear = std::min(
        w.obstacle_clearance(s.x + 0.8 * lx, s.y + 0.8 * ly),
        std::min(std::min(s.x + 0.8 * lx - w.xmin, w.xmax - s.x - 0.8 * lx),
                 std::min(s.y + 0.8 * ly - w.ymin, w.ymax - s.y - 0.8 * ly)));
    const double right_clear = std::min(
        w.obstacle_clearance(s.x - 0.8 * lx, s.y - 0.8 * ly),
        std::min(std::min(s.x - 0.8 * lx - w.xmin, w.xmax - s.x + 0.8 * lx),
                 std::min(s.y - 0.8 * ly - w.ymin, w.ymax - s.y + 0.8 * ly)));
    const double dir = right_clear > left_clear ? -1.0 : 1.0;
    tx = dir * lx;
    ty = dir * ly;
  }

  // Into the body frame.
  const double c = std::cos(-s.theta), sn = std::sin(-s.theta);
  const double bx = tx * c - ty * sn;
  const double by = tx * sn + ty * c;
  const double heading_err = wrap_angle(std::atan2(ty, tx) - s.theta);

  Action a;
  a.omega = clamp_sym(p.k_w * heading_err, 1.0);
  if (p.allow_lateral) {
    a.vx = clamp_sym(bx, 1.0);
    a.vy = clamp_sym(by, 1.0);
  } else {
    // Differential drive: advance along the body axis only when roughly
    // facing the field direction.
    a.vx = clamp_sym(bx, 1.0) * std::max(0.0, std::cos(heading_err));
    a.vy = 0.0;
  }
  return a;
}

OracleRollout roll_oracle(const World& w, const RobotState& start,
                          const DynamicsParams& dp, const OracleParams& op,
                          const RolloutLimits& lim) {
  OracleRollout out;
  out.poses.push_back(start);
  std::size_t dwell = 0;
  for (std::size_t step = 0; step < lim.max_steps; ++step) {
    const RobotState& s = out.poses.back();
    const Action a = oracle_controller(w, s, op);
    out.actions.push_back(a);
    RobotState n = step_dynamics(w, s, a, dp);
    const double gd = std::hypot(n.x - w.goal.x, n.y - w.goal.y);
    if (a.max_abs() < lim.stop_speed && gd <= w.goal.radius) {
      ++dwell;
      if (dwell >= lim.stop_dwell) {
        n.stopped = true;
        out.poses.push_back(n);
        out.reached = !n.collided;
        return out;
      }
    } else {
      dwell = 0;
    }
    out.poses.push_back(n);
    if (n.collided) return out;
  }
  return out;
}

Video render_rollout(const World& w, const std::vector<RobotState>& poses,
                     const RenderParams& rp) {
  Video frames;
  frames.reserve(poses.size());
  for (const RobotState& s : poses) frames.push_back(render_observation(w, s, rp));
  return frames;
}

}  // namespace navdiff
