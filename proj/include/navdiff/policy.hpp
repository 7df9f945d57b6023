#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "navdiff/checkpoint.hpp"
#include "navdiff/dit.hpp"
#include "navdiff/encoders.hpp"
#include "navdiff/flow_encoder.hpp"
#include "navdiff/schedule.hpp"
#include "navdiff/version.hpp"

namespace navdiff {

enum class LoopMode { kClosed, kOpen };

inline const char* loop_mode_name(LoopMode m) {
  return m == LoopMode::kClosed ? "closed" : "open";
}

// The full trainable stack: the denoising transformer plus the flow encoder
// that feeds its condition, with the frozen encoders alongside.
template <typename T>
class PolicyModel {
 public:
  struct Config {
    DiTConfig dit = DiTConfig::desk();
    FlowEncoderConfig flow = {};
    ConditionLayout layout = ConditionLayout::desk();
    int sched_steps = 100;
    double beta_1 = 1e-4;
    double beta_T = 2e-2;
    std::uint64_t init_seed = 1;
    bool mse_baseline = false;  // regression head instead of diffusion
    std::size_t flow_block = 8;
    std::size_t flow_radius = 4;

    void validate() const {
      if (layout.total() != dit.cond_dim) {
        throw ConfigError("policy: layout total " +
                          std::to_string(layout.total()) +
                          " != dit cond_dim " + std::to_string(dit.cond_dim));
      }
      if (flow.out_dim != layout.d_flow) {
        throw ConfigError("policy: flow encoder out_dim " +
                          std::to_string(flow.out_dim) + " != layout d_flow " +
                          std::to_string(layout.d_flow));
      }
    }

    static Config desk() {
      Config c;
      c.flow.out_dim = c.layout.d_flow;
      c.flow.norm_radius = static_cast<double>(c.flow_radius);
      return c;
    }

    static Config reference() {
      Config c;
      c.dit = DiTConfig::reference();
      c.layout = ConditionLayout::reference();
      c.flow.channels = {6, 64, 128, 256, 512, 512};
      c.flow.out_dim = c.layout.d_flow;
      c.flow.norm_radius = static_cast<double>(c.flow_radius);
      return c;
    }
  };

  void init(const Config& config) {
    config.validate();
    cfg_ = config;
    params_ = ParamList<T>();
    Rng rng = Rng::derive(config.init_seed, 0x696e6974ULL);  // "init"
    dit_.init(params_, config.dit, rng);
    flow_enc_.init(params_, "flow", config.flow, rng);
    sched_ = build_linear_schedule(config.sched_steps, config.beta_1,
                                   config.beta_T);
  }

  const Config& config() const { return cfg_; }
  const DiT<T>& dit() const { return dit_; }
  const FlowEncoder<T>& flow_encoder() const { return flow_enc_; }
  const NoiseSchedule& schedule() const { return sched_; }
  ParamList<T>& params() { return params_; }
  const ParamList<T>& params() const { return params_; }
  std::size_t param_count() const { return params_.count(); }

  Tensor<T> condition_tensor(const ConditionVector& c) const {
    if (c.layout != cfg_.layout) {
      throw ContractError("policy: condition layout mismatch");
    }
    std::vector<T> vals(c.values.begin(), c.values.end());
    const std::size_t n = vals.size();
    return Tensor<T>::from({n}, std::move(vals));
  }

  Tensor<T> action_tensor(const ActionBlock& a) const {
    std::vector<T> vals(a.v.begin(), a.v.end());
    return Tensor<T>::from({a.horizon, 3}, std::move(vals));
  }

  ActionBlock block_from_tensor(const Tensor<T>& t) const {
    ActionBlock b(t.shape[0]);
    for (std::size_t i = 0; i < b.v.size(); ++i)
      b.v[i] = static_cast<double>((*t.data)[i]);
    return b;
  }

  // Noise prediction for a double-typed action block (inference plumbing).
  ActionBlock predict_noise(const ActionBlock& a_t, int t,
                            const Tensor<T>& cond) const {
    return block_from_tensor(dit_.forward(action_tensor(a_t), t, cond));
  }

  // DDIM sample (diffusion) or single regression pass (MSE baseline).
  ActionBlock predict(const ConditionVector& c, int n_ddim,
                      std::uint64_t seed) const {
    NoGradGuard ng;
    Tensor<T> cond = condition_tensor(c);
    if (cfg_.mse_baseline) {
      ActionBlock zero(cfg_.dit.horizon);
      return predict_noise(zero, 0, cond).clamped();
    }
    Denoiser fn = [&](const ActionBlock& a_t, int t) {
      return predict_noise(a_t, t, cond);
    };
    return ddim_sample(fn, sched_, cfg_.dit.horizon, n_ddim, seed);
  }

  void save(const std::string& path,
            const std::vector<std::pair<std::string, std::string>>& extra = {})
      const {
    CheckpointWriter w;
    w.set_meta("encoder_version", kEncoderVersion);
    w.set_meta("dit.depth", std::to_string(cfg_.dit.depth));
    w.set_meta("dit.hidden", std::to_string(cfg_.dit.hidden));
    w.set_meta("dit.heads", std::to_string(cfg_.dit.heads));
    w.set_meta("dit.horizon", std::to_string(cfg_.dit.horizon));
    w.set_meta("dit.cond_dim", std::to_string(cfg_.dit.cond_dim));
    w.set_meta("dit.mlp_ratio", std::to_string(cfg_.dit.mlp_ratio));
    w.set_meta("layout.d_vision", std::to_string(cfg_.layout.d_vision));
    w.set_meta("layout.d_flow", std::to_string(cfg_.layout.d_flow));
    w.set_meta("layout.d_lang", std::to_string(cfg_.layout.d_lang));
    w.set_meta("flow.out_dim", std::to_string(cfg_.flow.out_dim));
    w.set_meta("flow.block", std::to_string(cfg_.flow_block));
    w.set_meta("flow.radius", std::to_string(cfg_.flow_radius));
    std::string chans;
    for (std::size_t c : cfg_.flow.channels)
      chans += (chans.empty() ? "" : ",") + std::to_string(c);
    w.set_meta("flow.channels", chans);
    w.set_meta("sched.steps", std::to_string(cfg_.sched_steps));
    w.set_meta("sched.beta_1", std::to_string(cfg_.beta_1));
    w.set_meta("sched.beta_T", std::to_string(cfg_.beta_T));
    w.set_meta("mse_baseline", cfg_.mse_baseline ? "1" : "0");
    for (const auto& [k, v] : extra) w.set_meta(k, v);
    for (const auto& p : params_.items()) w.add(p.name, p.value);
    w.save(path);
  }

  static PolicyModel load(const std::string& path) {
    CheckpointReader r(path);
    const auto& meta = r.meta();
    auto get = [&](const std::string& k) -> std::string {
      auto it = meta.find(k);
      if (it == meta.end()) {
        throw FormatError("checkpoint: missing metadata key '" + k + "'");
      }
      return it->second;
    };
    if (get("encoder_version") != kEncoderVersion) {
      throw FormatError("checkpoint: encoder version '" +
                        get("encoder_version") + "' incompatible with " +
                        kEncoderVersion);
    }
    Config c;
    c.dit.depth = std::stoul(get("dit.depth"));
    c.dit.hidden = std::stoul(get("dit.hidden"));
    c.dit.heads = std::stoul(get("dit.heads"));
    c.dit.horizon = std::stoul(get("dit.horizon"));
    c.dit.cond_dim = std::stoul(get("dit.cond_dim"));
    c.dit.mlp_ratio = std::stoul(get("dit.mlp_ratio"));
    c.layout.d_vision = std::stoul(get("layout.d_vision"));
    c.layout.d_flow = std::stoul(get("layout.d_flow"));
    c.layout.d_lang = std::stoul(get("layout.d_lang"));
    c.flow.out_dim = std::stoul(get("flow.out_dim"));
    c.flow_block = std::stoul(get("flow.block"));
    c.flow_radius = std::stoul(get("flow.radius"));
    c.flow.norm_radius = static_cast<double>(c.flow_radius);
    c.flow.channels.clear();
    std::string chans = get("flow.channels");
    std::size_t pos = 0;
    while (pos < chans.size()) {
      std::size_t comma = chans.find(',', pos);
      if (comma == std::string::npos) comma = chans.size();
      c.flow.channels.push_back(std::stoul(chans.substr(pos, comma - pos)));
      pos = comma + 1;
    }
    c.sched_steps = std::stoi(get("sched.steps"));
    c.beta_1 = std::stod(get("sched.beta_1"));
    c.beta_T = std::stod(get("sched.beta_T"));
    c.mse_baseline = get("mse_baseline") == "1";

    PolicyModel m;
    m.init(c);
    for (auto& p : m.params_.items()) {
      Tensor<T> stored = r.read_tensor<T>(p.name);
      if (stored.shape != p.value.shape) {
        throw FormatError("checkpoint: '" + p.name + "' stored as " +
                          shape_str(stored.shape) + ", model expects " +
                          shape_str(p.value.shape));
      }
      *p.value.data = *stored.data;
    }
    return m;
  }

 private:
  Config cfg_;
  DiT<T> dit_;
  FlowEncoder<T> flow_enc_;
  NoiseSchedule sched_;
  ParamList<T> params_;
};

// Goal-video material prepared once per episode/reference.
struct GoalParts {
  std::vector<double> vision;        // anchor-frame embedding
  std::vector<FlowField> flows;      // anchor flow fields
  std::vector<double> flow_emb;      // flow embedding via the policy encoder
  std::vector<double> last_frame;    // encoding of the final goal frame
  std::vector<double> lang;
};

// Assembles condition vectors from goal material and (in closed loop) the
// live observation; the open-loop observation slot repeats the encoding of
// the last goal frame.
template <typename T>
class Conditioner {
 public:
  Conditioner(const ConditionLayout& layout, const FlowEncoder<T>* flow_enc,
              std::size_t flow_block, std::size_t flow_radius)
      : layout_(layout),
        vision_(layout.d_vision),
        flow_enc_(flow_enc),
        flow_block_(flow_block),
        flow_radius_(flow_radius) {}

  const VisionEncoder& vision() const { return vision_; }

  GoalParts prepare_goal(const Video& goal,
                         const std::string& instruction) const {
    if (goal.empty()) throw ContractError("conditioner: empty goal video");
    GoalParts parts;
    std::vector<Frame> anchors;
    for (std::size_t i : goal_anchor_indices(goal.size()))
      anchors.push_back(goal[i]);
    parts.vision = vision_.encode(anchors);
    parts.flows = goal_anchor_flows(goal, flow_block_, flow_radius_);
    parts.flow_emb = flow_enc_->encode_values(parts.flows);
    parts.last_frame = vision_.encode({goal.back()});
    parts.lang = encode_language(instruction, layout_.d_lang);
    return parts;
  }

  ConditionVector assemble(const GoalParts& parts, LoopMode mode,
                           const Frame* live_obs) const {
    std::vector<double> obs;
    if (mode == LoopMode::kClosed) {
      if (live_obs == nullptr) {
        throw ContractError("conditioner: closed loop requires an observation");
      }
      obs = vision_.encode({*live_obs});
    } else {
      obs = parts.last_frame;
    }
    return assemble_condition(layout_, parts.vision, parts.flow_emb, obs,
                              parts.lang);
  }

 private:
  ConditionLayout layout_;
  VisionEncoder vision_;
  const FlowEncoder<T>* flow_enc_;
  std::size_t flow_block_;
  std::size_t flow_radius_;
};

}  // namespace navdiff
