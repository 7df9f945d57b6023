#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "navdiff/error.hpp"

namespace navdiff {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Thread-local autograd switch; sampling and evaluation run under NoGradGuard
// so inference never grows a graph.
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool is_grad_enabled() { return grad_mode_flag(); }

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
class Tensor;

// One recorded operation: parent tensors plus the rule that routes the output
// gradient into them. The graph of nodes reachable from a loss is the tape;
// backward() replays it in reverse topological order exactly once.
template <typename T>
struct Node {
  std::vector<Tensor<T>> parents;
  std::function<void(Tensor<T>&)> backward;
};

template <typename T>
class Tensor {
 public:
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  std::shared_ptr<std::vector<T>> grad;
  bool requires_grad = false;
  std::shared_ptr<Node<T>> node;

  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false) {
    Tensor t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<T>>(shape_numel(shape), T(0));
    if (requires_grad && is_grad_enabled()) t.set_requires_grad(true);
    return t;
  }

  static Tensor full(const Shape& shape, T value, bool requires_grad = false) {
    Tensor t = zeros(shape, requires_grad);
    std::fill(t.data->begin(), t.data->end(), value);
    return t;
  }

  static Tensor from(const Shape& shape, std::vector<T> values,
                     bool requires_grad = false) {
    if (values.size() != shape_numel(shape)) {
      throw ShapeError("tensor: " + std::to_string(values.size()) +
                       " values do not fill shape " + shape_str(shape));
    }
    Tensor t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<T>>(std::move(values));
    if (requires_grad && is_grad_enabled()) t.set_requires_grad(true);
    return t;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from({}, {value}, requires_grad);
  }

  std::size_t numel() const { return shape_numel(shape); }
  std::size_t rank() const { return shape.size(); }

  T& at(std::size_t i) { return (*data)[i]; }
  T at(std::size_t i) const { return (*data)[i]; }
  T item() const {
    if (numel() != 1) {
      throw ContractError("item: tensor " + shape_str(shape) +
                          " is not a scalar");
    }
    return (*data)[0];
  }

  // The grad buffer is allocated the moment requires_grad is set so that
  // every value-copy of this tensor (including the copies stored on graph
  // nodes) shares one accumulation buffer.
  void set_requires_grad(bool rq) {
    requires_grad = rq;
    if (rq && !grad) grad = std::make_shared<std::vector<T>>(numel(), T(0));
  }

  void ensure_grad() {
    if (!grad) grad = std::make_shared<std::vector<T>>(numel(), T(0));
  }

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), T(0));
  }

  // Drop the recorded history, keeping values (and grads) in place.
  Tensor detached() const {
    Tensor t = *this;
    t.node = nullptr;
    t.requires_grad = false;
    t.grad = nullptr;
    return t;
  }
};

namespace detail {

template <typename T>
bool want_grad(const Tensor<T>& t) {
  return is_grad_enabled() && t.requires_grad;
}

template <typename T>
void attach(Tensor<T>& out, std::vector<Tensor<T>> parents,
            std::function<void(Tensor<T>&)> fn) {
  out.node = std::make_shared<Node<T>>();
  out.node->parents = std::move(parents);
  out.node->backward = std::move(fn);
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape != b.shape) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape) +
                     " and " + shape_str(b.shape) + " differ");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<T> out = Tensor<T>::zeros(a.shape, a.requires_grad || b.requires_grad);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a, b}, [](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      Tensor<T>& pb = o.node->parents[1];
      const std::size_t m = o.numel();
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) (*pa.grad)[i] += (*o.grad)[i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) (*pb.grad)[i] += (*o.grad)[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<T> out = Tensor<T>::zeros(a.shape, a.requires_grad || b.requires_grad);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] - (*b.data)[i];
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a, b}, [](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      Tensor<T>& pb = o.node->parents[1];
      const std::size_t m = o.numel();
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) (*pa.grad)[i] += (*o.grad)[i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) (*pb.grad)[i] -= (*o.grad)[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<T> out = Tensor<T>::zeros(a.shape, a.requires_grad || b.requires_grad);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a, b}, [](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      Tensor<T>& pb = o.node->parents[1];
      const std::size_t m = o.numel();
      if (pa.requires_grad) {
        pa.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          (*pa.grad)[i] += (*o.grad)[i] * (*pb.data)[i];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          (*pb.grad)[i] += (*o.grad)[i] * (*pa.data)[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  Tensor<T> out = Tensor<T>::zeros(a.shape, a.requires_grad);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * s;
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a}, [s](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      const std::size_t m = o.numel();
      for (std::size_t i = 0; i < m; ++i) (*pa.grad)[i] += (*o.grad)[i] * s;
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  Tensor<T> out = Tensor<T>::zeros(a.shape, a.requires_grad);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + s;
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a}, [](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      const std::size_t m = o.numel();
      for (std::size_t i = 0; i < m; ++i) (*pa.grad)[i] += (*o.grad)[i];
    });
  }
  return out;
}

// Broadcast add of a length-c vector to every row of an [r x c] matrix.
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  if (x.rank() != 2 || v.rank() != 1 || x.shape[1] != v.shape[0]) {
    throw ShapeError("add_rowvec: shapes " + shape_str(x.shape) + " and " +
                     shape_str(v.shape) + " are not [r x c] + [c]");
  }
  const std::size_t r = x.shape[0], c = x.shape[1];
  Tensor<T> out = Tensor<T>::zeros(x.shape, x.requires_grad || v.requires_grad);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      (*out.data)[i * c + j] = (*x.data)[i * c + j] + (*v.data)[j];
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {x, v}, [r, c](Tensor<T>& o) {
      Tensor<T>& px = o.node->parents[0];
      Tensor<T>& pv = o.node->parents[1];
      if (px.requires_grad) {
        px.ensure_grad();
        const std::size_t m = o.numel();
        for (std::size_t i = 0; i < m; ++i) (*px.grad)[i] += (*o.grad)[i];
      }
      if (pv.requires_grad) {
        pv.ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            (*pv.grad)[j] += (*o.grad)[i * c + j];
      }
    });
  }
  return out;
}

// Broadcast multiply of a length-c vector into every row of an [r x c] matrix.
template <typename T>
Tensor<T> mul_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  if (x.rank() != 2 || v.rank() != 1 || x.shape[1] != v.shape[0]) {
    throw ShapeError("mul_rowvec: shapes " + shape_str(x.shape) + " and " +
                     shape_str(v.shape) + " are not [r x c] * [c]");
  }
  const std::size_t r = x.shape[0], c = x.shape[1];
  Tensor<T> out = Tensor<T>::zeros(x.shape, x.requires_grad || v.requires_grad);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      (*out.data)[i * c + j] = (*x.data)[i * c + j] * (*v.data)[j];
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {x, v}, [r, c](Tensor<T>& o) {
      Tensor<T>& px = o.node->parents[0];
      Tensor<T>& pv = o.node->parents[1];
      if (px.requires_grad) {
        px.ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            (*px.grad)[i * c + j] += (*o.grad)[i * c + j] * (*pv.data)[j];
      }
      if (pv.requires_grad) {
        pv.ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j)
            (*pv.grad)[j] += (*o.grad)[i * c + j] * (*px.data)[i * c + j];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

namespace detail {

// C[m x n] += A[m x k] * B[k x n], optionally transposing either input view.
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
              std::size_t n, bool ta, bool tb) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ta ? a[p * m + i] : a[i * k + p];
      if (av == T(0)) continue;
      const T* brow = tb ? nullptr : b + p * n;
      T* crow = c + i * n;
      if (tb) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0]) {
    throw ShapeError("matmul: inner dimensions disagree between " +
                     shape_str(a.shape) + " and " + shape_str(b.shape));
  }
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor<T> out =
      Tensor<T>::zeros({m, n}, a.requires_grad || b.requires_grad);
  detail::gemm_acc(a.data->data(), b.data->data(), out.data->data(), m, k, n,
                   false, false);
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a, b}, [m, k, n](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      Tensor<T>& pb = o.node->parents[1];
      if (pa.requires_grad) {
        pa.ensure_grad();
        // dA = dC * B^T
        detail::gemm_acc(o.grad->data(), pb.data->data(), pa.grad->data(), m,
                         n, k, false, true);
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        // dB = A^T * dC
        detail::gemm_acc(pa.data->data(), o.grad->data(), pb.grad->data(), k,
                         m, n, true, false);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) {
    throw ShapeError("transpose: expected rank-2, got " + shape_str(a.shape));
  }
  const std::size_t r = a.shape[0], c = a.shape[1];
  Tensor<T> out = Tensor<T>::zeros({c, r}, a.requires_grad);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      (*out.data)[j * r + i] = (*a.data)[i * c + j];
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a}, [r, c](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          (*pa.grad)[i * c + j] += (*o.grad)[j * r + i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape) + " as " +
                     shape_str(shape));
  }
  Tensor<T> out = Tensor<T>::zeros(shape, a.requires_grad);
  std::copy(a.data->begin(), a.data->end(), out.data->begin());
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a}, [](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      const std::size_t m = o.numel();
      for (std::size_t i = 0; i < m; ++i) (*pa.grad)[i] += (*o.grad)[i];
    });
  }
  return out;
}

// Column slice of an [r x c] matrix.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t start, std::size_t len) {
  if (a.rank() != 2) {
    throw ShapeError("slice_cols: expected rank-2, got " + shape_str(a.shape));
  }
  const std::size_t r = a.shape[0], c = a.shape[1];
  if (start + len > c) {
    throw IndexError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") exceeds " +
                     std::to_string(c) + " columns");
  }
  Tensor<T> out = Tensor<T>::zeros({r, len}, a.requires_grad);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < len; ++j)
      (*out.data)[i * len + j] = (*a.data)[i * c + start + j];
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a}, [r, c, start, len](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < len; ++j)
          (*pa.grad)[i * c + start + j] += (*o.grad)[i * len + j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t r = parts[0].shape[0];
  std::size_t total = 0;
  bool rq = false;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.shape[0] != r) {
      throw ShapeError("concat_cols: row counts disagree at " +
                       shape_str(p.shape));
    }
    total += p.shape[1];
    rq = rq || p.requires_grad;
  }
  Tensor<T> out = Tensor<T>::zeros({r, total}, rq);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.shape[1];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        (*out.data)[i * total + off + j] = (*p.data)[i * c + j];
    off += c;
  }
  if (detail::want_grad(out)) {
    detail::attach<T>(out, parts, [r, total](Tensor<T>& o) {
      std::size_t off2 = 0;
      for (Tensor<T>& p : o.node->parents) {
        const std::size_t c = p.shape[1];
        if (p.requires_grad) {
          p.ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
              (*p.grad)[i * c + j] += (*o.grad)[i * total + off2 + j];
        }
        off2 += c;
      }
    });
  }
  return out;
}

// 1-D slice and concatenation (condition-vector segments).
template <typename T>
Tensor<T> slice1d(const Tensor<T>& a, std::size_t start, std::size_t len) {
  if (a.rank() != 1) {
    throw ShapeError("slice1d: expected rank-1, got " + shape_str(a.shape));
  }
  if (start + len > a.shape[0]) {
    throw IndexError("slice1d: range exceeds length " +
                     std::to_string(a.shape[0]));
  }
  Tensor<T> out = Tensor<T>::zeros({len}, a.requires_grad);
  for (std::size_t i = 0; i < len; ++i) (*out.data)[i] = (*a.data)[start + i];
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a}, [start, len](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      for (std::size_t i = 0; i < len; ++i)
        (*pa.grad)[start + i] += (*o.grad)[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat1d(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ContractError("concat1d: no inputs");
  std::size_t total = 0;
  bool rq = false;
  for (const auto& p : parts) {
    if (p.rank() != 1) {
      throw ShapeError("concat1d: expected rank-1, got " + shape_str(p.shape));
    }
    total += p.shape[0];
    rq = rq || p.requires_grad;
  }
  Tensor<T> out = Tensor<T>::zeros({total}, rq);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data->begin(), p.data->end(), out.data->begin() + off);
    off += p.shape[0];
  }
  if (detail::want_grad(out)) {
    detail::attach<T>(out, parts, [](Tensor<T>& o) {
      std::size_t off2 = 0;
      for (Tensor<T>& p : o.node->parents) {
        const std::size_t c = p.shape[0];
        if (p.requires_grad) {
          p.ensure_grad();
          for (std::size_t i = 0; i < c; ++i)
            (*p.grad)[i] += (*o.grad)[off2 + i];
        }
        off2 += c;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros({}, a.requires_grad);
  T acc = T(0);
  for (T v : *a.data) acc += v;
  (*out.data)[0] = acc;
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a}, [](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      const T g = (*o.grad)[0];
      for (auto& v : *pa.grad) v += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  const std::size_t n = a.numel();
  if (n == 0) throw ContractError("mean: empty tensor");
  Tensor<T> out = Tensor<T>::zeros({}, a.requires_grad);
  T acc = T(0);
  for (T v : *a.data) acc += v;
  (*out.data)[0] = acc / static_cast<T>(n);
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a}, [n](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      const T g = (*o.grad)[0] / static_cast<T>(n);
      for (auto& v : *pa.grad) v += g;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinearities and normalization
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.shape, a.requires_grad);
  const std::size_t n = out.numel();
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));
  for (std::size_t i = 0; i < n; ++i) {
    const T x = (*a.data)[i];
    (*out.data)[i] = T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2));
  }
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a}, [inv_sqrt2](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      const T c = std::sqrt(T(2) / T(3.14159265358979323846));
      const std::size_t m = o.numel();
      for (std::size_t i = 0; i < m; ++i) {
        const T x = (*pa.data)[i];
        const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
        const T pdf = T(0.5) * c * std::exp(T(-0.5) * x * x);
        (*pa.grad)[i] += (*o.grad)[i] * (cdf + x * pdf);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> silu(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.shape, a.requires_grad);
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) {
    const T x = (*a.data)[i];
    (*out.data)[i] = x / (T(1) + std::exp(-x));
  }
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a}, [](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      const std::size_t m = o.numel();
      for (std::size_t i = 0; i < m; ++i) {
        const T x = (*pa.data)[i];
        const T s = T(1) / (T(1) + std::exp(-x));
        (*pa.grad)[i] += (*o.grad)[i] * (s * (T(1) + x * (T(1) - s)));
      }
    });
  }
  return out;
}

// Row-wise normalization over the last dimension: (x - mean) / sqrt(var + eps)
// with population variance. No affine parameters; modulation supplies those.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, T eps) {
  if (a.rank() < 1 || a.shape.back() < 1) {
    throw ShapeError("layer_norm: needs a last dimension, got " +
                     shape_str(a.shape));
  }
  const std::size_t d = a.shape.back();
  const std::size_t rows = a.numel() / d;
  Tensor<T> out = Tensor<T>::zeros(a.shape, a.requires_grad);
  std::vector<T> inv_sigma(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = a.data->data() + r * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += x[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    inv_sigma[r] = is;
    T* y = out.data->data() + r * d;
    for (std::size_t j = 0; j < d; ++j) y[j] = (x[j] - mu) * is;
  }
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a}, [d, rows, inv_sigma](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = o.data->data() + r * d;   // normalized values
        const T* dy = o.grad->data() + r * d;
        T* dx = pa.grad->data() + r * d;
        T mean_dy = T(0), mean_dyy = T(0);
        for (std::size_t j = 0; j < d; ++j) {
          mean_dy += dy[j];
          mean_dyy += dy[j] * y[j];
        }
        mean_dy /= static_cast<T>(d);
        mean_dyy /= static_cast<T>(d);
        const T is = inv_sigma[r];
        for (std::size_t j = 0; j < d; ++j)
          dx[j] += is * (dy[j] - mean_dy - y[j] * mean_dyy);
      }
    });
  }
  return out;
}

// Row-wise softmax over the last dimension, max-subtracted for stability.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  if (a.rank() < 1) throw ShapeError("softmax: scalar input");
  const std::size_t d = a.shape.back();
  const std::size_t rows = a.numel() / d;
  Tensor<T> out = Tensor<T>::zeros(a.shape, a.requires_grad);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = a.data->data() + r * d;
    T* y = out.data->data() + r * d;
    T mx = x[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, x[j]);
    T z = T(0);
    for (std::size_t j = 0; j < d; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < d; ++j) y[j] /= z;
  }
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {a}, [d, rows](Tensor<T>& o) {
      Tensor<T>& pa = o.node->parents[0];
      if (!pa.requires_grad) return;
      pa.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = o.data->data() + r * d;
        const T* dy = o.grad->data() + r * d;
        T* dx = pa.grad->data() + r * d;
        T dot = T(0);
        for (std::size_t j = 0; j < d; ++j) dot += dy[j] * y[j];
        for (std::size_t j = 0; j < d; ++j) dx[j] += y[j] * (dy[j] - dot);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding lookup
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<std::size_t>& idx) {
  if (table.rank() != 2) {
    throw ShapeError("embedding: table must be rank-2, got " +
                     shape_str(table.shape));
  }
  const std::size_t v = table.shape[0], d = table.shape[1];
  for (std::size_t i : idx) {
    if (i >= v) throw IndexError("embedding: index " + std::to_string(i) +
                                 " out of " + std::to_string(v) + " rows");
  }
  Tensor<T> out = Tensor<T>::zeros({idx.size(), d}, table.requires_grad);
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy(table.data->begin() + idx[r] * d,
              table.data->begin() + (idx[r] + 1) * d,
              out.data->begin() + r * d);
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {table}, [idx, d](Tensor<T>& o) {
      Tensor<T>& pt = o.node->parents[0];
      if (!pt.requires_grad) return;
      pt.ensure_grad();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < d; ++j)
          (*pt.grad)[idx[r] * d + j] += (*o.grad)[r * d + j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convolution and pooling (flow projector)
// ---------------------------------------------------------------------------

// 2D convolution, stride 1, symmetric zero padding. x: [C,H,W],
// w: [O,C,kh,kw], b: [O] -> [O, H-kh+1+2p, W-kw+1+2p].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 std::size_t pad) {
  if (x.rank() != 3 || w.rank() != 4 || b.rank() != 1 ||
      x.shape[0] != w.shape[1] || w.shape[0] != b.shape[0]) {
    throw ShapeError("conv2d: incompatible shapes " + shape_str(x.shape) +
                     ", " + shape_str(w.shape) + ", " + shape_str(b.shape));
  }
  const std::size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
  const std::size_t O = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  if (H + 2 * pad < kh || W + 2 * pad < kw) {
    throw ShapeError("conv2d: kernel " + shape_str(w.shape) +
                     " larger than padded input " + shape_str(x.shape));
  }
  const std::size_t OH = H + 2 * pad - kh + 1, OW = W + 2 * pad - kw + 1;
  Tensor<T> out = Tensor<T>::zeros(
      {O, OH, OW}, x.requires_grad || w.requires_grad || b.requires_grad);
  const T* xd = x.data->data();
  const T* wd = w.data->data();
  T* od = out.data->data();
  for (std::size_t o = 0; o < O; ++o) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        T acc = (*b.data)[o];
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
              acc += xd[(c * H + iy) * W + ix] *
                     wd[((o * C + c) * kh + ky) * kw + kx];
            }
          }
        }
        od[(o * OH + oy) * OW + ox] = acc;
      }
    }
  }
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {x, w, b}, [C, H, W, O, kh, kw, OH, OW,
                                       pad](Tensor<T>& o) {
      Tensor<T>& px = o.node->parents[0];
      Tensor<T>& pw = o.node->parents[1];
      Tensor<T>& pb = o.node->parents[2];
      const T* god = o.grad->data();
      if (px.requires_grad) px.ensure_grad();
      if (pw.requires_grad) pw.ensure_grad();
      if (pb.requires_grad) pb.ensure_grad();
      for (std::size_t oc = 0; oc < O; ++oc) {
        for (std::size_t oy = 0; oy < OH; ++oy) {
          for (std::size_t ox = 0; ox < OW; ++ox) {
            const T g = god[(oc * OH + oy) * OW + ox];
            if (g == T(0)) continue;
            if (pb.requires_grad) (*pb.grad)[oc] += g;
            for (std::size_t c = 0; c < C; ++c) {
              for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t iy =
                    static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const std::ptrdiff_t ix =
                      static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(pad);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
                  const std::size_t xi = (c * H + iy) * W + ix;
                  const std::size_t wi = ((oc * C + c) * kh + ky) * kw + kx;
                  if (px.requires_grad)
                    (*px.grad)[xi] += g * (*pw.data)[wi];
                  if (pw.requires_grad)
                    (*pw.grad)[wi] += g * (*px.data)[xi];
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// Average pooling with kernel k, stride k. x: [C,H,W]; H and W must divide.
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t k) {
  if (x.rank() != 3) {
    throw ShapeError("avg_pool2d: expected [C,H,W], got " + shape_str(x.shape));
  }
  const std::size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
  if (k == 0 || H % k != 0 || W % k != 0) {
    throw ShapeError("avg_pool2d: kernel " + std::to_string(k) +
                     " does not divide " + shape_str(x.shape));
  }
  const std::size_t OH = H / k, OW = W / k;
  Tensor<T> out = Tensor<T>::zeros({C, OH, OW}, x.requires_grad);
  const T scale = T(1) / static_cast<T>(k * k);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        T acc = T(0);
        for (std::size_t dy = 0; dy < k; ++dy)
          for (std::size_t dx = 0; dx < k; ++dx)
            acc += (*x.data)[(c * H + oy * k + dy) * W + ox * k + dx];
        (*out.data)[(c * OH + oy) * OW + ox] = acc * scale;
      }
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {x}, [C, H, W, OH, OW, k, scale](Tensor<T>& o) {
      Tensor<T>& px = o.node->parents[0];
      if (!px.requires_grad) return;
      px.ensure_grad();
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t oy = 0; oy < OH; ++oy)
          for (std::size_t ox = 0; ox < OW; ++ox) {
            const T g = (*o.grad)[(c * OH + oy) * OW + ox] * scale;
            for (std::size_t dy = 0; dy < k; ++dy)
              for (std::size_t dx = 0; dx < k; ++dx)
                (*px.grad)[(c * H + oy * k + dy) * W + ox * k + dx] += g;
          }
    });
  }
  return out;
}

// Mean over the spatial dimensions: [C,H,W] -> [C].
template <typename T>
Tensor<T> mean_spatial(const Tensor<T>& x) {
  if (x.rank() != 3) {
    throw ShapeError("mean_spatial: expected [C,H,W], got " +
                     shape_str(x.shape));
  }
  const std::size_t C = x.shape[0], HW = x.shape[1] * x.shape[2];
  Tensor<T> out = Tensor<T>::zeros({C}, x.requires_grad);
  for (std::size_t c = 0; c < C; ++c) {
    T acc = T(0);
    for (std::size_t i = 0; i < HW; ++i) acc += (*x.data)[c * HW + i];
    (*out.data)[c] = acc / static_cast<T>(HW);
  }
  if (detail::want_grad(out)) {
    detail::attach<T>(out, {x}, [C, HW](Tensor<T>& o) {
      Tensor<T>& px = o.node->parents[0];
      if (!px.requires_grad) return;
      px.ensure_grad();
      for (std::size_t c = 0; c < C; ++c) {
        const T g = (*o.grad)[c] / static_cast<T>(HW);
        for (std::size_t i = 0; i < HW; ++i) (*px.grad)[c * HW + i] += g;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void topo_visit(const Tensor<T>& t, std::unordered_set<Node<T>*>& seen,
                std::vector<Tensor<T>>& order) {
  if (!t.node || seen.count(t.node.get())) return;
  seen.insert(t.node.get());
  for (const auto& p : t.node->parents) topo_visit(p, seen, order);
  order.push_back(t);
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
// calls (callers zero them between optimizer steps); interior grads are
// scratch space reset at the start of each sweep.
template <typename T>
void backward(Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be scalar, got " +
                        shape_str(loss.shape));
  }
  std::unordered_set<Node<T>*> seen;
  std::vector<Tensor<T>> order;
  detail::topo_visit(loss, seen, order);
  for (auto& t : order) t.zero_grad();
  loss.ensure_grad();
  (*loss.grad)[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (it->node && it->node->backward) it->node->backward(*it);
  }
}

}  // namespace navdiff
