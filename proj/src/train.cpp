#include "navdiff/train.hpp"

#include <cmath>
#include <filesystem>

#include "navdiff/rng.hpp"

namespace navdiff {

namespace {

struct EpisodeMaterial {
  std::vector<float> goal_vision;
  std::vector<Tensor<float>> flow_stacks;
  std::vector<float> last_frame_obs;
  std::vector<float> lang;
  std::vector<std::vector<float>> obs_per_frame;
};

std::vector<float> to_f32(const std::vector<double>& v) {
  return std::vector<float>(v.begin(), v.end());
}

Tensor<float> const_tensor(const std::vector<float>& v) {
  std::vector<float> copy = v;
  const std::size_t n = copy.size();
  return Tensor<float>::from({n}, std::move(copy));
}

}  // namespace

TrainResult train_policy(PolicyModel<float>& model,
                         const std::vector<Episode>& episodes,
                         const TrainConfig& cfg, std::ostream* log) {
  if (episodes.empty()) throw ContractError("train: no episodes");
  const auto& pcfg = model.config();
  const std::size_t H = pcfg.dit.horizon;

  Conditioner<float> cond(pcfg.layout, &model.flow_encoder(), pcfg.flow_block,
                          pcfg.flow_radius);

  // Precompute the frozen parts of every episode's condition; only the flow
  // embedding stays live in the graph.
  std::vector<EpisodeMaterial> material;
  material.reserve(episodes.size());
  for (const Episode& ep : episodes) {
    if (ep.frames.empty()) throw ContractError("train: episode without frames");
    EpisodeMaterial m;
    std::vector<Frame> anchors;
    for (std::size_t i : goal_anchor_indices(ep.frames.size()))
      anchors.push_back(ep.frames[i]);
    m.goal_vision = to_f32(cond.vision().encode(anchors));
    m.flow_stacks = model.flow_encoder().make_stacks(
        goal_anchor_flows(ep.frames, pcfg.flow_block, pcfg.flow_radius));
    m.last_frame_obs = to_f32(cond.vision().encode({ep.frames.back()}));
    m.lang = to_f32(encode_language(ep.instruction, pcfg.layout.d_lang));
    m.obs_per_frame.reserve(ep.frames.size());
    for (const Frame& f : ep.frames)
      m.obs_per_frame.push_back(to_f32(cond.vision().encode({f})));
    material.push_back(std::move(m));
  }

  AdamW<float> opt(static_cast<float>(cfg.lr), 0.9f, 0.999f, 1e-8f,
                   static_cast<float>(cfg.weight_decay));
  const NoiseSchedule& sched = model.schedule();

  TrainResult result;
  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);
  result.checkpoint_path =
      cfg.out_dir.empty() ? "" : cfg.out_dir + "/policy.ckpt";

  double window_acc = 0.0;
  std::size_t window_n = 0;
  bool first_window_done = false;
  const std::size_t window = std::max<std::size_t>(1, cfg.log_every);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Rng rng = Rng::derive(cfg.seed, step, 0x7472616eULL);  // "tran"

    model.params().zero_grad();
    Tensor<float> total_loss;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const std::size_t ei = rng.below(episodes.size());
      const Episode& ep = episodes[ei];
      const EpisodeMaterial& m = material[ei];
      const std::size_t start =
          ep.actions.empty() ? 0 : rng.below(ep.actions.size());

      ActionBlock a0(H);
      for (std::size_t k = 0; k < H; ++k) {
        const std::size_t idx = start + k;
        if (idx < ep.actions.size()) {
          a0.at(k, 0) = ep.actions[idx].vx;
          a0.at(k, 1) = ep.actions[idx].vy;
          a0.at(k, 2) = ep.actions[idx].omega;
        }
      }

      const bool open_loop = rng.coin(cfg.open_loop_prob);
      const std::vector<float>& obs =
          open_loop ? m.last_frame_obs : m.obs_per_frame[start];

      // Flow embedding through the live graph; frozen segments as constants.
      Tensor<float> flow_emb = model.flow_encoder().forward(m.flow_stacks[0]);
      for (std::size_t s = 1; s < m.flow_stacks.size(); ++s)
        flow_emb = add(flow_emb, model.flow_encoder().forward(m.flow_stacks[s]));
      if (m.flow_stacks.size() > 1)
        flow_emb = mul_scalar(flow_emb,
                              1.0f / static_cast<float>(m.flow_stacks.size()));
      Tensor<float> c = concat1d<float>({const_tensor(m.goal_vision), flow_emb,
                                         const_tensor(obs),
                                         const_tensor(m.lang)});

      Tensor<float> loss_b;
      if (pcfg.mse_baseline) {
        Tensor<float> pred =
            model.dit().forward(Tensor<float>::zeros({H, 3}), 0, c);
        Tensor<float> diff = sub(pred, model.action_tensor(a0));
        loss_b = mean(mul(diff, diff));
      } else {
        const int t = static_cast<int>(rng.below(sched.steps));
        ActionBlock eps(H);
        for (auto& v : eps.v) v = rng.normal();
        ActionBlock a_t = forward_noise(a0, t, eps, sched);
        Tensor<float> pred = model.dit().forward(model.action_tensor(a_t), t, c);
        Tensor<float> diff = sub(pred, model.action_tensor(eps));
        loss_b = mean(mul(diff, diff));
      }
      total_loss = b == 0 ? loss_b : add(total_loss, loss_b);
    }
    total_loss = mul_scalar(total_loss, 1.0f / static_cast<float>(cfg.batch));
    const double loss_val = static_cast<double>(total_loss.item());

    if (!std::isfinite(loss_val)) {
      if (log) *log << "step " << step << ": non-finite loss, aborting\n";
      result.aborted_nan = true;
      break;
    }

    backward(total_loss);
    try {
      opt.step(model.params().items());
    } catch (const NumericError& e) {
      if (log) *log << "step " << step << ": " << e.what() << "\n";
      result.aborted_nan = true;
      break;
    }

    window_acc += loss_val;
    ++window_n;
    if (window_n == window || step + 1 == cfg.steps) {
      const double mean_loss = window_acc / static_cast<double>(window_n);
      if (!first_window_done) {
        result.initial_loss = mean_loss;
        first_window_done = true;
      }
      result.final_loss = mean_loss;
      if (log) {
        *log << "step " << (step + 1) << "/" << cfg.steps
             << " loss " << mean_loss << "\n";
      }
      window_acc = 0.0;
      window_n = 0;
    }

    if (cfg.checkpoint_every > 0 && !result.checkpoint_path.empty() &&
        (step + 1) % cfg.checkpoint_every == 0) {
      model.save(result.checkpoint_path,
                 {{"train.step", std::to_string(step + 1)}});
    }
    result.steps_done = step + 1;
  }

  if (!result.checkpoint_path.empty() && !result.aborted_nan) {
    model.save(result.checkpoint_path,
               {{"train.step", std::to_string(result.steps_done)},
                {"train.seed", std::to_string(cfg.seed)}});
  }
  return result;
}

}  // namespace navdiff
