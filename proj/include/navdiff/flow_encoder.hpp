#pragma once

#include <string>
#include <vector>

#include "navdiff/flow.hpp"
#include "navdiff/nn.hpp"
#include "navdiff/tensor.hpp"

namespace navdiff {

// Trainable convolutional encoder over stacked optical-flow channels.
// Consumes the (U, V) grids of three consecutive frame pairs as a 6-channel
// stack; longer sequences are chunked into triplets whose embeddings are
// averaged. Trains jointly with the policy.
struct FlowEncoderConfig {
  std::vector<std::size_t> channels = {6, 8, 16};  // conv channel widths
  std::size_t out_dim = 32;                        // D_f
  double norm_radius = 4.0;  // flow values divided by the search radius
};

template <typename T>
class FlowEncoder {
 public:
  FlowEncoderConfig cfg;

  void init(ParamList<T>& params, const std::string& prefix,
            const FlowEncoderConfig& config, Rng& rng) {
    cfg = config;
    convs_.clear();
    for (std::size_t i = 0; i + 1 < cfg.channels.size(); ++i) {
      Conv2d<T> conv;
      conv.init(params, prefix + ".conv" + std::to_string(i), cfg.channels[i],
                cfg.channels[i + 1], 3, rng);
      convs_.push_back(conv);
    }
    proj_.init(params, prefix + ".proj", cfg.channels.back(), cfg.out_dim, rng,
               T(1) / std::sqrt(static_cast<T>(cfg.channels.back())));
  }

  // One 6-channel stack [6, gh, gw] -> [out_dim].
  Tensor<T> forward(const Tensor<T>& stack) const {
    Tensor<T> h = stack;
    for (const auto& conv : convs_) h = silu(conv.forward(h));
    return proj_.forward_vec(mean_spatial(h));
  }

  // Normalized stacks from a flow-field sequence: pairs grouped in threes,
  // short sequences padded by repeating the last field.
  std::vector<Tensor<T>> make_stacks(const std::vector<FlowField>& fields) const {
    if (fields.empty()) {
      throw ContractError("flow encoder: no flow fields");
    }
    const std::size_t gw = fields[0].grid_w(), gh = fields[0].grid_h();
    std::vector<Tensor<T>> stacks;
    for (std::size_t base = 0; base < fields.size(); base += 3) {
      Tensor<T> stack = Tensor<T>::zeros({6, gh, gw});
      for (std::size_t k = 0; k < 3; ++k) {
        const std::size_t idx = std::min(base + k, fields.size() - 1);
        const std::vector<double> gu = fields[idx].grid_u();
        const std::vector<double> gv = fields[idx].grid_v();
        for (std::size_t i = 0; i < gh * gw; ++i) {
          (*stack.data)[(2 * k) * gh * gw + i] =
              static_cast<T>(gu[i] / cfg.norm_radius);
          (*stack.data)[(2 * k + 1) * gh * gw + i] =
              static_cast<T>(gv[i] / cfg.norm_radius);
        }
      }
      stacks.push_back(stack);
    }
    return stacks;
  }

  // Full pipeline with temporal averaging, as a graph node when grads are on.
  Tensor<T> encode(const std::vector<FlowField>& fields) const {
    const std::vector<Tensor<T>> stacks = make_stacks(fields);
    Tensor<T> acc = forward(stacks[0]);
    for (std::size_t i = 1; i < stacks.size(); ++i)
      acc = add(acc, forward(stacks[i]));
    if (stacks.size() > 1)
      acc = mul_scalar(acc, T(1) / static_cast<T>(stacks.size()));
    return acc;
  }

  std::vector<double> encode_values(const std::vector<FlowField>& fields) const {
    NoGradGuard ng;
    const Tensor<T> e = encode(fields);
    return std::vector<double>(e.data->begin(), e.data->end());
  }

 private:
  std::vector<Conv2d<T>> convs_;
  Linear<T> proj_;
};

}  // namespace navdiff
