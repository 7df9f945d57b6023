#include "navdiff/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "navdiff/error.hpp"
#include "navdiff/rng.hpp"

namespace navdiff {

namespace fs = std::filesystem;

namespace {

constexpr double kValNumer = 41.0;
constexpr double kValDenom = 203.0;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct LandmarkKind {
  const char* adjective;
  double brightness;
};
struct LandmarkShape {
  const char* noun;
  double radius;
};

constexpr LandmarkKind kKinds[] = {
    {"bright", 0.95}, {"pale", 0.75}, {"gray", 0.55}, {"dark", 0.38}};
constexpr LandmarkShape kShapes[] = {
    {"pillar", 0.22}, {"beacon", 0.14}, {"post", 0.10}, {"marker", 0.16}};

Landmark sample_landmark(double x, double y, Rng& rng) {
  const LandmarkKind& k = kKinds[rng.below(4)];
  const LandmarkShape& s = kShapes[rng.below(4)];
  Landmark lm;
  lm.x = x;
  lm.y = y;
  lm.radius = s.radius;
  lm.brightness = k.brightness;
  lm.label = std::string(k.adjective) + " " + s.noun;
  return lm;
}

struct WorldDraw {
  World world;
  RobotState start;
  std::string instruction;
  bool mirrored_variant = false;  // symmetric category: emit the mirror too
};

World base_world() {
  World w;
  w.xmin = 0;
  w.ymin = 0;
  w.xmax = 10;
  w.ymax = 10;
  return w;
}

WorldDraw draw_straight(Rng& rng) {
  WorldDraw d;
  d.world = base_world();
  d.start = {2.0, 5.0 + rng.uniform(-1.0, 1.0), rng.uniform(-0.3, 0.3)};
  const double dist = rng.uniform(3.0, 5.0);
  const double lateral = rng.uniform(-0.8, 0.8);
  d.world.goal = {d.start.x + dist, d.start.y + lateral, 0.5};
  Landmark lm = sample_landmark(d.world.goal.x, d.world.goal.y, rng);
  d.world.landmarks.push_back(lm);
  d.instruction = rng.coin() ? "go straight to the " + lm.label + " and stop"
                             : "walk forward to the " + lm.label + " and stop";
  return d;
}

WorldDraw draw_obstacle(Rng& rng) {
  WorldDraw d;
  d.world = base_world();
  d.start = {2.0, 5.0 + rng.uniform(-0.8, 0.8), rng.uniform(-0.2, 0.2)};
  const double dist = rng.uniform(4.0, 6.0);
  d.world.goal = {d.start.x + dist, d.start.y + rng.uniform(-1.0, 1.0), 0.5};
  const int n_obs = 1 + static_cast<int>(rng.below(2));
  for (int i = 0; i < n_obs; ++i) {
    const double frac = rng.uniform(0.35, 0.7);
    const double ox = d.start.x + frac * (d.world.goal.x - d.start.x);
    const double oy = d.start.y + frac * (d.world.goal.y - d.start.y) +
                      rng.uniform(-0.9, 0.9);
    if (rng.coin(0.7)) {
      d.world.obstacles.push_back(Circle{ox, oy, rng.uniform(0.3, 0.55)});
    } else {
      const double hw = rng.uniform(0.25, 0.5);
      d.world.obstacles.push_back(AxisBox{ox - hw, oy - hw, ox + hw, oy + hw});
    }
  }
  Landmark lm = sample_landmark(d.world.goal.x, d.world.goal.y, rng);
  d.world.landmarks.push_back(lm);
  d.instruction = rng.coin()
                      ? "go to the " + lm.label + " avoiding the obstacle"
                      : "reach the " + lm.label + " without hitting anything";
  return d;
}

WorldDraw draw_path(Rng& rng) {
  // A wall with a gap forces a curved route to the goal behind it.
  WorldDraw d;
  d.world = base_world();
  d.start = {2.0, 5.0 + rng.uniform(-0.5, 0.5), rng.uniform(-0.2, 0.2)};
  const double wall_x = d.start.x + rng.uniform(1.8, 2.6);
  const bool gap_up = rng.coin();
  const double gap_center = d.start.y + (gap_up ? 1.8 : -1.8);
  const double gap_half = rng.uniform(0.8, 1.1);
  // Two wall segments leaving the gap open.
  d.world.obstacles.push_back(
      AxisBox{wall_x - 0.15, std::max(0.5, gap_center - 5.0), wall_x + 0.15,
              gap_center - gap_half});
  d.world.obstacles.push_back(
      AxisBox{wall_x - 0.15, gap_center + gap_half, wall_x + 0.15,
              std::min(9.5, gap_center + 5.0)});
  d.world.goal = {wall_x + rng.uniform(2.0, 3.0),
                  d.start.y + rng.uniform(-0.6, 0.6), 0.5};
  Landmark lm = sample_landmark(d.world.goal.x, d.world.goal.y, rng);
  d.world.landmarks.push_back(lm);
  d.instruction = rng.coin()
                      ? "follow the open path to the " + lm.label + " and stop"
                      : "go through the gap to the " + lm.label;
  return d;
}

WorldDraw draw_turn(Rng& rng) {
  WorldDraw d;
  d.world = base_world();
  d.start = {5.0 + rng.uniform(-0.5, 0.5), 5.0 + rng.uniform(-0.5, 0.5), 0.0};
  const bool left = rng.coin();
  const double bearing = (left ? 1.0 : -1.0) * rng.uniform(1.6, 2.4);
  const double dist = rng.uniform(2.2, 3.2);
  d.world.goal = {d.start.x + dist * std::cos(bearing),
                  d.start.y + dist * std::sin(bearing), 0.5};
  Landmark lm = sample_landmark(d.world.goal.x, d.world.goal.y, rng);
  d.world.landmarks.push_back(lm);
  d.instruction = std::string("turn ") + (left ? "left" : "right") +
                  " toward the " + lm.label + " and stop";
  return d;
}

WorldDraw draw_symmetric(Rng& rng) {
  // Obstacle dead on the start-to-goal ray; mirror-symmetric world about
  // the ray, so left and right passes are equally valid.
  WorldDraw d;
  d.world = base_world();
  const double y0 = 5.0;
  d.start = {2.0, y0, 0.0};
  const double goal_x = 2.0 + rng.uniform(4.2, 5.0);
  d.world.goal = {goal_x, y0, 0.5};
  const double obs_x = 2.0 + rng.uniform(1.9, 2.5);
  d.world.obstacles.push_back(Circle{obs_x, y0, rng.uniform(0.42, 0.55)});
  Landmark lm = sample_landmark(d.world.goal.x, y0, rng);
  d.world.landmarks.push_back(lm);
  d.instruction = "pass the obstacle and stop at the " + lm.label;
  d.mirrored_variant = true;
  return d;
}

WorldDraw draw_category(const std::string& category, Rng& rng) {
  if (category == "straight") return draw_straight(rng);
  if (category == "obstacle") return draw_obstacle(rng);
  if (category == "path") return draw_path(rng);
  if (category == "turn") return draw_turn(rng);
  if (category == "symmetric") return draw_symmetric(rng);
  throw ConfigError("dataset: unknown category '" + category + "'");
}

// Mirror a rollout across the horizontal axis y = y0 (valid only for worlds
// symmetric about that axis).
void mirror_rollout(double y0, std::vector<RobotState>& poses,
                    std::vector<Action>& actions) {
  for (RobotState& s : poses) {
    s.y = 2.0 * y0 - s.y;
    s.theta = wrap_angle(-s.theta);
  }
  for (Action& a : actions) {
    a.vy = -a.vy;
    a.omega = -a.omega;
  }
}

}  // namespace

TaskMix TaskMix::parse(const std::string& name) {
  if (name == "standard") return standard();
  if (name == "straight-only") return straight_only();
  if (name == "symmetric-only") return symmetric_only();
  throw ConfigError("dataset: unknown mix '" + name + "'");
}

std::string TaskMix::name() const {
  if (straight == 15 && obstacle == 16 && path == 10 && turn == 9 &&
      symmetric == 0)
    return "standard";
  if (straight > 0 && obstacle == 0 && path == 0 && turn == 0 &&
      symmetric == 0)
    return "straight-only";
  if (symmetric > 0 && straight == 0 && obstacle == 0 && path == 0 &&
      turn == 0)
    return "symmetric-only";
  return "custom";
}

std::map<std::string, std::size_t> category_counts(const TaskMix& mix,
                                                   std::size_t n) {
  struct Entry {
    const char* name;
    int weight;
  };
  const Entry entries[] = {{"straight", mix.straight},
                           {"obstacle", mix.obstacle},
                           {"path", mix.path},
                           {"turn", mix.turn},
                           {"symmetric", mix.symmetric}};
  const int denom = mix.denom();
  if (denom <= 0) throw ConfigError("dataset: empty task mix");

  std::map<std::string, std::size_t> counts;
  std::vector<std::pair<double, const char*>> remainders;
  std::size_t assigned = 0;
  for (const Entry& e : entries) {
    if (e.weight <= 0) continue;
    const double exact =
        static_cast<double>(n) * e.weight / static_cast<double>(denom);
    const std::size_t base = static_cast<std::size_t>(exact);
    counts[e.name] = base;
    assigned += base;
    remainders.push_back({exact - static_cast<double>(base), e.name});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < n; ++i) {
    counts[remainders[i % remainders.size()].second] += 1;
    ++assigned;
  }
  return counts;
}

std::vector<Episode> generate_dataset(const TaskMix& mix, std::size_t n,
                                      std::uint64_t seed, GenStats* stats) {
  if (n < 1) throw ConfigError("dataset: n must be >= 1");
  const auto counts = category_counts(mix, n);

  DynamicsParams dp;  // humanoid preset
  OracleParams op;
  RolloutLimits lim;
  RenderParams rp;

  std::vector<Episode> episodes;
  episodes.reserve(n);

  // Category schedule: interleave deterministically by repeating the counts
  // map in order until exhausted.
  std::vector<std::string> schedule;
  for (const auto& [cat, cnt] : counts)
    for (std::size_t i = 0; i < cnt; ++i) schedule.push_back(cat);

  bool mirror_next = false;
  WorldDraw shared_draw;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& cat = schedule[i];
    Episode ep;
    ep.category = cat;
    ep.seed = seed;

    if (mirror_next && cat == "symmetric") {
      // Right-passing variant of the previous symmetric world.
      ep.world = shared_draw.world;
      ep.instruction = shared_draw.instruction;
      OracleRollout roll =
          roll_oracle(ep.world, shared_draw.start, dp, op, lim);
      mirror_rollout(shared_draw.start.y, roll.poses, roll.actions);
      ep.poses = roll.poses;
      ep.actions = roll.actions;
      mirror_next = false;
    } else {
      for (std::size_t attempt = 0;; ++attempt) {
        Rng rng = Rng::derive(seed, i * 1000 + attempt, 0x776f726cULL);
        WorldDraw d = draw_category(cat, rng);
        if (d.world.collides(d.start.x, d.start.y, dp.robot_radius) ||
            d.world.collides(d.world.goal.x, d.world.goal.y, 0.0)) {
          if (stats) ++stats->placement_retries;
          continue;
        }
        OracleRollout roll = roll_oracle(d.world, d.start, dp, op, lim);
        if (!roll.reached) {
          if (stats) ++stats->placement_retries;
          if (attempt > 200) {
            throw Error("dataset: could not generate a reachable '" + cat +
                        "' world after 200 attempts");
          }
          continue;
        }
        ep.world = d.world;
        ep.instruction = d.instruction;
        ep.poses = roll.poses;
        ep.actions = roll.actions;
        if (d.mirrored_variant && cat == "symmetric") {
          shared_draw = d;
          mirror_next = true;
        }
        break;
      }
    }
    ep.frames = render_rollout(ep.world, ep.poses, rp);
    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "ep%05zu", i);
    ep.id = idbuf;
    episodes.push_back(std::move(ep));
  }

  // Deterministic split by hash of episode id: order ids by (hash, id) and
  // take the first n_val as validation (val fraction 41/203).
  const std::size_t n_val = static_cast<std::size_t>(
      std::lround(static_cast<double>(n) * kValNumer / kValDenom));
  std::vector<std::pair<std::uint64_t, std::size_t>> order;
  for (std::size_t i = 0; i < n; ++i)
    order.push_back({fnv1a(episodes[i].id.data(), episodes[i].id.size()), i});
  std::sort(order.begin(), order.end());
  for (std::size_t r = 0; r < n; ++r)
    episodes[order[r].second].split = r < n_val ? "val" : "train";

  return episodes;
}

// ---------------------------------------------------------------------------
// Disk I/O
// ---------------------------------------------------------------------------

namespace {

void write_meta(const std::string& path, const Episode& ep) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("dataset: cannot write '" + path + "'");
  f << "id = " << ep.id << "\n";
  f << "instruction = " << ep.instruction << "\n";
  f << "category = " << ep.category << "\n";
  f << "embodiment = " << ep.embodiment << "\n";
  f << "seed = " << ep.seed << "\n";
  f << "split = " << ep.split << "\n";
  f << "bounds = " << fmt_double(ep.world.xmin) << " "
    << fmt_double(ep.world.ymin) << " " << fmt_double(ep.world.xmax) << " "
    << fmt_double(ep.world.ymax) << "\n";
  f << "goal = " << fmt_double(ep.world.goal.x) << " "
    << fmt_double(ep.world.goal.y) << " " << fmt_double(ep.world.goal.radius)
    << "\n";
  for (const Obstacle& ob : ep.world.obstacles) {
    if (std::holds_alternative<Circle>(ob)) {
      const Circle& c = std::get<Circle>(ob);
      f << "obstacle = circle " << fmt_double(c.x) << " " << fmt_double(c.y)
        << " " << fmt_double(c.r) << "\n";
    } else {
      const AxisBox& b = std::get<AxisBox>(ob);
      f << "obstacle = box " << fmt_double(b.x0) << " " << fmt_double(b.y0)
        << " " << fmt_double(b.x1) << " " << fmt_double(b.y1) << "\n";
    }
  }
  for (const Landmark& lm : ep.world.landmarks) {
    f << "landmark = " << fmt_double(lm.x) << " " << fmt_double(lm.y) << " "
      << fmt_double(lm.radius) << " " << fmt_double(lm.brightness) << " "
      << lm.label << "\n";
  }
}

void parse_meta(const std::string& path, Episode& ep) {
  std::ifstream f(path);
  if (!f) throw FormatError("dataset: cannot read '" + path + "'");
  std::string line;
  while (std::getline(f, line)) {
    const std::size_t eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 3);
    std::istringstream is(val);
    if (key == "id") {
      ep.id = val;
    } else if (key == "instruction") {
      ep.instruction = val;
    } else if (key == "category") {
      ep.category = val;
    } else if (key == "embodiment") {
      ep.embodiment = val;
    } else if (key == "seed") {
      ep.seed = std::stoull(val);
    } else if (key == "split") {
      ep.split = val;
    } else if (key == "bounds") {
      is >> ep.world.xmin >> ep.world.ymin >> ep.world.xmax >> ep.world.ymax;
    } else if (key == "goal") {
      is >> ep.world.goal.x >> ep.world.goal.y >> ep.world.goal.radius;
    } else if (key == "obstacle") {
      std::string kind;
      is >> kind;
      if (kind == "circle") {
        Circle c;
        is >> c.x >> c.y >> c.r;
        ep.world.obstacles.push_back(c);
      } else if (kind == "box") {
        AxisBox b;
        is >> b.x0 >> b.y0 >> b.x1 >> b.y1;
        ep.world.obstacles.push_back(b);
      } else {
        throw FormatError("dataset: unknown obstacle kind '" + kind + "'");
      }
    } else if (key == "landmark") {
      Landmark lm;
      is >> lm.x >> lm.y >> lm.radius >> lm.brightness;
      std::getline(is, lm.label);
      if (!lm.label.empty() && lm.label.front() == ' ')
        lm.label.erase(lm.label.begin());
      ep.world.landmarks.push_back(lm);
    }
  }
}

void write_frames(const std::string& path, const Video& frames) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("dataset: cannot write '" + path + "'");
  auto put_u32 = [&](std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
    f.write(reinterpret_cast<char*>(b), 4);
  };
  put_u32(static_cast<std::uint32_t>(frames.size()));
  put_u32(frames.empty() ? 0 : static_cast<std::uint32_t>(frames[0].width));
  put_u32(frames.empty() ? 0 : static_cast<std::uint32_t>(frames[0].height));
  for (const Frame& fr : frames)
    f.write(reinterpret_cast<const char*>(fr.px.data()),
            static_cast<std::streamsize>(fr.px.size()));
}

Video read_frames(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("dataset: cannot read '" + path + "'");
  auto get_u32 = [&]() {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (!f) throw FormatError("dataset: truncated frames file '" + path + "'");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
  };
  const std::uint32_t count = get_u32();
  const std::uint32_t w = get_u32();
  const std::uint32_t h = get_u32();
  Video frames;
  frames.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Frame fr(w, h);
    f.read(reinterpret_cast<char*>(fr.px.data()),
           static_cast<std::streamsize>(fr.px.size()));
    if (!f) throw FormatError("dataset: truncated frames file '" + path + "'");
    frames.push_back(std::move(fr));
  }
  return frames;
}

}  // namespace

void save_episode(const std::string& dir, const Episode& ep) {
  fs::create_directories(dir);
  write_meta(dir + "/meta", ep);
  write_frames(dir + "/frames.bin", ep.frames);

  std::ofstream pf(dir + "/poses.csv", std::ios::trunc);
  pf << "x,y,theta,stopped,collided\n";
  for (const RobotState& s : ep.poses)
    pf << fmt_double(s.x) << "," << fmt_double(s.y) << ","
       << fmt_double(s.theta) << "," << (s.stopped ? 1 : 0) << ","
       << (s.collided ? 1 : 0) << "\n";

  std::ofstream af(dir + "/actions.csv", std::ios::trunc);
  af << "vx,vy,omega\n";
  for (const Action& a : ep.actions)
    af << fmt_double(a.vx) << "," << fmt_double(a.vy) << ","
       << fmt_double(a.omega) << "\n";
}

Episode load_episode(const std::string& dir) {
  Episode ep;
  parse_meta(dir + "/meta", ep);
  ep.frames = read_frames(dir + "/frames.bin");

  auto read_csv = [&](const std::string& path, auto fn) {
    std::ifstream f(path);
    if (!f) throw FormatError("dataset: cannot read '" + path + "'");
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      for (char& c : line)
        if (c == ',') c = ' ';
      std::istringstream is(line);
      fn(is);
    }
  };
  read_csv(dir + "/poses.csv", [&](std::istringstream& is) {
    RobotState s;
    int stopped = 0, collided = 0;
    is >> s.x >> s.y >> s.theta >> stopped >> collided;
    s.stopped = stopped != 0;
    s.collided = collided != 0;
    ep.poses.push_back(s);
  });
  read_csv(dir + "/actions.csv", [&](std::istringstream& is) {
    Action a;
    is >> a.vx >> a.vy >> a.omega;
    ep.actions.push_back(a);
  });
  return ep;
}

void save_dataset(const std::string& root, const std::vector<Episode>& eps,
                  const TaskMix& mix, std::uint64_t seed) {
  fs::create_directories(root);
  std::map<std::string, std::size_t> cat_counts;
  std::size_t n_train = 0, n_val = 0;
  for (const Episode& ep : eps) {
    ++cat_counts[ep.category];
    (ep.split == "val" ? n_val : n_train) += 1;
    save_episode(root + "/" + ep.id, ep);
  }
  std::ofstream mf(root + "/manifest", std::ios::trunc);
  mf << "version = 1\n";
  mf << "episodes = " << eps.size() << "\n";
  mf << "seed = " << seed << "\n";
  mf << "mix = " << mix.name() << "\n";
  mf << "train = " << n_train << "\n";
  mf << "val = " << n_val << "\n";
  for (const auto& [cat, cnt] : cat_counts)
    mf << "category." << cat << " = " << cnt << "\n";
}

std::vector<Episode> load_dataset(const std::string& root) {
  if (!fs::exists(root + "/manifest")) {
    throw FormatError("dataset: no manifest under '" + root + "'");
  }
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) ids.push_back(entry.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  std::vector<Episode> eps;
  eps.reserve(ids.size());
  for (const std::string& id : ids) eps.push_back(load_episode(root + "/" + id));
  return eps;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

namespace {

int direction_sector(double dx, double dy, double stationary_eps) {
  if (std::hypot(dx, dy) < stationary_eps) return -1;
  const double angle = std::atan2(dy, dx);  // (-pi, pi]
  int sector = static_cast<int>(
      std::floor((angle + 3.14159265358979323846) / (3.14159265358979323846 / 4.0)));
  if (sector == 8) sector = 7;
  return sector;
}

int sign_eps(double v, double eps) { return v > eps ? 1 : (v < -eps ? -1 : 0); }

}  // namespace

Metrics compute_metrics(const std::vector<RobotState>& pred,
                        const std::vector<RobotState>& ref, const World& w,
                        const MetricParams& mp) {
  if (pred.empty() || ref.empty()) {
    throw ContractError("metrics: empty trajectory");
  }
  Metrics m;

  for (const RobotState& s : pred) {
    if (s.collided) {
      m.collided = true;
      break;
    }
  }

  // ATE over time-aligned poses, shorter end-padded with its final pose.
  const std::size_t len = std::max(pred.size(), ref.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    const RobotState& a = pred[std::min(i, pred.size() - 1)];
    const RobotState& b = ref[std::min(i, ref.size() - 1)];
    acc += std::hypot(a.x - b.x, a.y - b.y);
  }
  m.ate = acc / static_cast<double>(len);

  // DA over the common transitions.
  const std::size_t steps = std::min(pred.size(), ref.size());
  if (steps >= 2) {
    std::size_t match = 0;
    for (std::size_t i = 0; i + 1 < steps; ++i) {
      const int sp = direction_sector(pred[i + 1].x - pred[i].x,
                                      pred[i + 1].y - pred[i].y,
                                      mp.stationary_eps);
      const int sr = direction_sector(ref[i + 1].x - ref[i].x,
                                      ref[i + 1].y - ref[i].y,
                                      mp.stationary_eps);
      const int wp = sign_eps(wrap_angle(pred[i + 1].theta - pred[i].theta),
                              mp.omega_eps);
      const int wr = sign_eps(wrap_angle(ref[i + 1].theta - ref[i].theta),
                              mp.omega_eps);
      if (sp == sr && wp == wr) ++match;
    }
    m.da = static_cast<double>(match) / static_cast<double>(steps - 1);
  } else {
    m.da = 1.0;
  }

  // SR: inside the goal, still for the dwell window, no collision.
  const RobotState& last = pred.back();
  const bool in_goal =
      std::hypot(last.x - w.goal.x, last.y - w.goal.y) <= w.goal.radius;
  bool dwelled = pred.size() > mp.stop_dwell;
  if (dwelled) {
    for (std::size_t k = pred.size() - mp.stop_dwell; k < pred.size(); ++k) {
      const double d = std::hypot(pred[k].x - pred[k - 1].x,
                                  pred[k].y - pred[k - 1].y);
      if (d > mp.stop_eps) {
        dwelled = false;
        break;
      }
    }
  }
  m.success = in_goal && dwelled && !m.collided;
  return m;
}

}  // namespace navdiff
