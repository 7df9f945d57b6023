#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "navdiff/rng.hpp"
#include "navdiff/tensor.hpp"

namespace navdiff {

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
};

// Collects named parameters from modules into one flat registry for the
// optimizer and the checkpoint writer. Names are dotted paths.
template <typename T>
class ParamList {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    t.set_requires_grad(true);
    params_.push_back({name, std::move(t)});
    return params_.back().value;
  }

  std::vector<Param<T>>& items() { return params_; }
  const std::vector<Param<T>>& items() const { return params_; }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

  Tensor<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p.value;
    return nullptr;
  }

 private:
  std::vector<Param<T>> params_;
};

// ---------------------------------------------------------------------------
// Initializers
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> randn_tensor(const Shape& shape, Rng& rng, T stddev) {
  Tensor<T> t = Tensor<T>::zeros(shape);
  for (auto& v : *t.data) v = static_cast<T>(rng.normal()) * stddev;
  return t;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  void init(ParamList<T>& params, const std::string& name, std::size_t in,
            std::size_t out, Rng& rng, T w_std, bool zero = false) {
    Tensor<T> w = zero ? Tensor<T>::zeros({in, out})
                       : randn_tensor<T>({in, out}, rng, w_std);
    weight = params.add(name + ".weight", w);
    bias = params.add(name + ".bias", Tensor<T>::zeros({out}));
  }

  // [r, in] -> [r, out]
  Tensor<T> forward(const Tensor<T>& x) const {
    return add_rowvec(matmul(x, weight), bias);
  }

  // [in] -> [out]
  Tensor<T> forward_vec(const Tensor<T>& x) const {
    Tensor<T> row = reshape(x, {1, x.shape[0]});
    return reshape(forward(row), {weight.shape[1]});
  }
};

template <typename T>
struct Conv2d {
  Tensor<T> weight;  // [out_ch, in_ch, k, k]
  Tensor<T> bias;    // [out_ch]
  std::size_t pad = 1;

  void init(ParamList<T>& params, const std::string& name, std::size_t in_ch,
            std::size_t out_ch, std::size_t k, Rng& rng) {
    const T fan_in = static_cast<T>(in_ch * k * k);
    weight = params.add(name + ".weight",
                        randn_tensor<T>({out_ch, in_ch, k, k}, rng,
                                        T(1) / std::sqrt(fan_in)));
    bias = params.add(name + ".bias", Tensor<T>::zeros({out_ch}));
    pad = k / 2;
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    return conv2d(x, weight, bias, pad);
  }
};

// ---------------------------------------------------------------------------
// Timestep embedding
// ---------------------------------------------------------------------------

// Sinusoidal embedding of an integer timestep, period base 1e4.
template <typename T>
Tensor<T> sinusoidal_embedding(int t, std::size_t dim) {
  Tensor<T> out = Tensor<T>::zeros({dim});
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(i) /
                 static_cast<double>(half));
    (*out.data)[2 * i] = static_cast<T>(std::sin(t * freq));
    (*out.data)[2 * i + 1] = static_cast<T>(std::cos(t * freq));
  }
  return out;
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

// Decoupled weight decay with bias-corrected moments. A NaN/Inf anywhere in
// the gradients rejects the whole update before any parameter is touched.
template <typename T>
class AdamW {
 public:
  AdamW(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8),
        T weight_decay = T(0))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {}

  void step(std::vector<Param<T>>& params) {
    for (const auto& p : params) {
      if (!p.value.grad) continue;
      for (T g : *p.value.grad) {
        if (!std::isfinite(static_cast<double>(g))) {
          throw NumericError("adamw: non-finite gradient in parameter '" +
                             p.name + "', update rejected");
        }
      }
    }
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (auto& p : params) {
      State& st = state_[p.name];
      const std::size_t n = p.value.numel();
      if (st.m.size() != n) {
        st.m.assign(n, T(0));
        st.v.assign(n, T(0));
      }
      std::vector<T>& w = *p.value.data;
      const std::vector<T>* g = p.value.grad ? p.value.grad.get() : nullptr;
      for (std::size_t i = 0; i < n; ++i) {
        const T gi = g ? (*g)[i] : T(0);
        st.m[i] = beta1_ * st.m[i] + (T(1) - beta1_) * gi;
        st.v[i] = beta2_ * st.v[i] + (T(1) - beta2_) * gi * gi;
        const T mhat = st.m[i] / bc1;
        const T vhat = st.v[i] / bc2;
        w[i] -= lr_ * wd_ * w[i];
        w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  void set_lr(T lr) { lr_ = lr; }
  T lr() const { return lr_; }
  std::int64_t steps_taken() const { return t_; }

 private:
  struct State {
    std::vector<T> m, v;
  };
  T lr_, beta1_, beta2_, eps_, wd_;
  std::int64_t t_ = 0;
  std::unordered_map<std::string, State> state_;
};

// Global-norm gradient clip; returns the pre-clip norm.
template <typename T>
double clip_grad_norm(std::vector<Param<T>>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.value.grad) continue;
    for (T g : *p.value.grad) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& p : params) {
      if (!p.value.grad) continue;
      for (T& g : *p.value.grad) g *= scale;
    }
  }
  return norm;
}

}  // namespace navdiff
