#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "navdiff/nn.hpp"
#include "navdiff/rng.hpp"
#include "navdiff/tensor.hpp"

using namespace navdiff;

namespace {

using Vec = std::vector<double>;

// Central-difference gradient of a scalar-valued function of one tensor's
// flat data. Independent of the autodiff path it checks.
Vec numeric_grad(const std::function<double(const Vec&)>& f, Vec x,
                 double h = 1e-5) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f(x);
    x[i] = keep - h;
    const double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double rel_err(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / scale;
}

void check_grads_close(const Vec& autodiff, const Vec& numeric, double tol) {
  REQUIRE(autodiff.size() == numeric.size());
  for (std::size_t i = 0; i < autodiff.size(); ++i) {
    CAPTURE(i);
    CHECK(rel_err(autodiff[i], numeric[i]) < tol);
  }
}

}  // namespace

TEST_CASE("matmul identity and hand arithmetic") {
  auto I = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  auto B = Tensor<double>::from({2, 2}, {3, 4, 5, 6});
  auto C = matmul(I, B);
  CHECK(*C.data == Vec{3, 4, 5, 6});

  auto a = Tensor<double>::from({1, 2}, {1, 2});
  auto b = Tensor<double>::from({2, 1}, {3, 4});
  CHECK(matmul(a, b).item() == doctest::Approx(11.0));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({2, 3});
  CHECK_THROWS_WITH_AS(matmul(a, b),
                       doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(11);
  auto A = randn_tensor<double>({4, 5}, rng, 1.0);
  auto B = randn_tensor<double>({5, 3}, rng, 1.0);
  A.set_requires_grad(true);
  B.set_requires_grad(true);

  auto loss = sum(mul(matmul(A, B), matmul(A, B)));
  backward(loss);

  auto fa = [&](const Vec& v) {
    NoGradGuard ng;
    auto A2 = Tensor<double>::from({4, 5}, v);
    auto P = matmul(A2, B);
    return sum(mul(P, P)).item();
  };
  check_grads_close(*A.grad, numeric_grad(fa, *A.data), 1e-4);

  auto fb = [&](const Vec& v) {
    NoGradGuard ng;
    auto B2 = Tensor<double>::from({5, 3}, v);
    auto P = matmul(A, B2);
    return sum(mul(P, P)).item();
  };
  check_grads_close(*B.grad, numeric_grad(fb, *B.data), 1e-4);
}

TEST_CASE("layer_norm basic rows") {
  auto c = layer_norm(Tensor<double>::from({4}, {1, 1, 1, 1}), 1e-5);
  for (double v : *c.data) CHECK(v == doctest::Approx(0.0));

  auto r = layer_norm(Tensor<double>::from({2}, {1, -1}), 1e-12);
  CHECK((*r.data)[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK((*r.data)[1] == doctest::Approx(-1.0).epsilon(1e-5));
}

TEST_CASE("layer_norm output statistics") {
  Rng rng(7);
  auto x = randn_tensor<double>({3, 8}, rng, 2.0);
  auto y = layer_norm(x, 1e-10);
  for (std::size_t r = 0; r < 3; ++r) {
    double mu = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 8; ++j) mu += (*y.data)[r * 8 + j];
    mu /= 8.0;
    for (std::size_t j = 0; j < 8; ++j) {
      const double d = (*y.data)[r * 8 + j] - mu;
      var += d * d;
    }
    var /= 8.0;
    CHECK(std::fabs(mu) < 1e-9);
    CHECK(std::fabs(var - 1.0) < 1e-6);
  }
}

TEST_CASE("layer_norm gradients match finite differences") {
  Rng rng(13);
  auto x = randn_tensor<double>({3, 6}, rng, 1.5);
  auto w = randn_tensor<double>({3, 6}, rng, 1.0);
  x.set_requires_grad(true);
  auto loss = sum(mul(layer_norm(x, 1e-6), w));
  backward(loss);
  auto f = [&](const Vec& v) {
    NoGradGuard ng;
    auto x2 = Tensor<double>::from({3, 6}, v);
    return sum(mul(layer_norm(x2, 1e-6), w)).item();
  };
  check_grads_close(*x.grad, numeric_grad(f, *x.data), 1e-4);
}

TEST_CASE("softmax symmetry, stability, row sums") {
  auto s = softmax(Tensor<double>::from({2}, {0, 0}));
  CHECK((*s.data)[0] == doctest::Approx(0.5));

  auto big = softmax(Tensor<double>::from({2}, {1000, 0}));
  CHECK((*big.data)[0] == doctest::Approx(1.0));
  CHECK(std::isfinite((*big.data)[1]));

  Rng rng(3);
  auto x = randn_tensor<double>({5, 7}, rng, 3.0);
  auto y = softmax(x);
  for (std::size_t r = 0; r < 5; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < 7; ++j) acc += (*y.data)[r * 7 + j];
    CHECK(std::fabs(acc - 1.0) < 1e-12);
  }
}

TEST_CASE("softmax gradients match finite differences") {
  Rng rng(5);
  auto x = randn_tensor<double>({2, 5}, rng, 1.0);
  auto w = randn_tensor<double>({2, 5}, rng, 1.0);
  x.set_requires_grad(true);
  auto loss = sum(mul(softmax(x), w));
  backward(loss);
  auto f = [&](const Vec& v) {
    NoGradGuard ng;
    auto x2 = Tensor<double>::from({2, 5}, v);
    return sum(mul(softmax(x2), w)).item();
  };
  check_grads_close(*x.grad, numeric_grad(f, *x.data), 1e-4);
}

TEST_CASE("activation gradients match finite differences") {
  Rng rng(17);
  for (auto kind : {0, 1}) {
    auto x = randn_tensor<double>({11}, rng, 1.3);
    x.set_requires_grad(true);
    auto y = kind == 0 ? gelu(x) : silu(x);
    auto loss = sum(mul(y, y));
    backward(loss);
    auto f = [&](const Vec& v) {
      NoGradGuard ng;
      auto x2 = Tensor<double>::from({11}, v);
      auto y2 = kind == 0 ? gelu(x2) : silu(x2);
      return sum(mul(y2, y2)).item();
    };
    check_grads_close(*x.grad, numeric_grad(f, *x.data), 1e-4);
  }
}

TEST_CASE("conv2d and pooling gradients match finite differences") {
  Rng rng(23);
  auto x = randn_tensor<double>({2, 4, 4}, rng, 1.0);
  auto w = randn_tensor<double>({3, 2, 3, 3}, rng, 0.5);
  auto b = randn_tensor<double>({3}, rng, 0.5);
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  b.set_requires_grad(true);

  auto run = [&](const Tensor<double>& xx, const Tensor<double>& ww,
                 const Tensor<double>& bb) {
    auto y = conv2d(xx, ww, bb, 1);
    auto p = avg_pool2d(y, 2);
    auto m = mean_spatial(p);
    return sum(mul(m, m));
  };
  auto loss = run(x, w, b);
  backward(loss);

  auto fx = [&](const Vec& v) {
    NoGradGuard ng;
    return run(Tensor<double>::from({2, 4, 4}, v), w, b).item();
  };
  check_grads_close(*x.grad, numeric_grad(fx, *x.data), 1e-4);
  auto fw = [&](const Vec& v) {
    NoGradGuard ng;
    return run(x, Tensor<double>::from({3, 2, 3, 3}, v), b).item();
  };
  check_grads_close(*w.grad, numeric_grad(fw, *w.data), 1e-4);
  auto fb = [&](const Vec& v) {
    NoGradGuard ng;
    return run(x, w, Tensor<double>::from({3}, v)).item();
  };
  check_grads_close(*b.grad, numeric_grad(fb, *b.data), 1e-4);
}

TEST_CASE("slice/concat/rowvec ops route gradients") {
  Rng rng(29);
  auto x = randn_tensor<double>({3, 6}, rng, 1.0);
  auto v = randn_tensor<double>({6}, rng, 1.0);
  x.set_requires_grad(true);
  v.set_requires_grad(true);

  auto run = [&](const Tensor<double>& xx, const Tensor<double>& vv) {
    auto y = add_rowvec(mul_rowvec(xx, vv), vv);
    auto left = slice_cols(y, 0, 3);
    auto right = slice_cols(y, 3, 3);
    auto z = concat_cols<double>({right, left});
    return mean(mul(z, z));
  };
  auto loss = run(x, v);
  backward(loss);

  auto fx = [&](const Vec& d) {
    NoGradGuard ng;
    return run(Tensor<double>::from({3, 6}, d), v).item();
  };
  check_grads_close(*x.grad, numeric_grad(fx, *x.data), 1e-4);
  auto fv = [&](const Vec& d) {
    NoGradGuard ng;
    return run(x, Tensor<double>::from({6}, d)).item();
  };
  check_grads_close(*v.grad, numeric_grad(fv, *v.data), 1e-4);
}

TEST_CASE("embedding lookup gathers rows and scatters gradients") {
  auto table = Tensor<double>::from({3, 2}, {1, 2, 3, 4, 5, 6});
  table.set_requires_grad(true);
  auto got = embedding(table, {2, 0, 2});
  CHECK(*got.data == Vec{5, 6, 1, 2, 5, 6});
  auto loss = sum(got);
  backward(loss);
  CHECK(*table.grad == Vec{1, 1, 0, 0, 2, 2});
  CHECK_THROWS_AS(embedding(table, {3}), IndexError);
}

TEST_CASE("backward contract and simple propagation") {
  auto x = Tensor<double>::from({4}, {1, 2, 3, 4}, true);
  auto s = sum(x);
  backward(s);
  CHECK(*x.grad == Vec{1, 1, 1, 1});

  auto p = Tensor<double>::scalar(3.0, true);
  auto sq = mul(p, p);
  backward(sq);
  CHECK((*p.grad)[0] == doctest::Approx(6.0));

  auto vecloss = add(x, x);
  CHECK_THROWS_AS(backward(vecloss), ContractError);
}

TEST_CASE("tape replay is idempotent when grads are zeroed between calls") {
  Rng rng(31);
  auto x = randn_tensor<double>({5}, rng, 1.0);
  x.set_requires_grad(true);
  auto make_loss = [&] { return mean(mul(silu(x), silu(x))); };

  auto l1 = make_loss();
  backward(l1);
  Vec first = *x.grad;

  x.zero_grad();
  auto l2 = make_loss();
  backward(l2);
  CHECK(*x.grad == first);
}

TEST_CASE("gradients accumulate across backward calls") {
  auto x = Tensor<double>::from({3}, {1, 2, 3}, true);
  auto l1 = sum(x);
  backward(l1);
  auto l2 = sum(x);
  backward(l2);
  CHECK(*x.grad == Vec{2, 2, 2});
}

TEST_CASE("forward is deterministic for identical seeds") {
  auto run = [] {
    Rng rng(77);
    auto a = randn_tensor<double>({4, 4}, rng, 1.0);
    auto b = randn_tensor<double>({4, 4}, rng, 1.0);
    return *softmax(matmul(gelu(a), b)).data;
  };
  CHECK(run() == run());
}

TEST_CASE("no-grad mode builds no graph") {
  auto x = Tensor<double>::from({2}, {1, 2}, true);
  NoGradGuard ng;
  auto y = mul(x, x);
  CHECK(y.node == nullptr);
  CHECK_FALSE(y.requires_grad);
}

TEST_CASE("adamw zero grads and zero decay leave params unchanged") {
  ParamList<double> params;
  auto& p = params.add("p", Tensor<double>::from({2}, {1.5, -0.5}));
  p.ensure_grad();
  AdamW<double> opt(0.1, 0.9, 0.999, 1e-8, 0.0);
  opt.step(params.items());
  CHECK(*p.data == Vec{1.5, -0.5});
}

TEST_CASE("adamw first step moves by about lr in the gradient direction") {
  // Hand-executed recurrence: m=0.1, v=1e-3, mhat=1, vhat=1 ->
  // p = 1 - 0.1 * 1/(1+eps) ~= 0.9.
  ParamList<double> params;
  auto& p = params.add("p", Tensor<double>::scalar(1.0));
  p.ensure_grad();
  (*p.grad)[0] = 1.0;
  AdamW<double> opt(0.1, 0.9, 0.999, 1e-8, 0.0);
  opt.step(params.items());
  CHECK((*p.data)[0] == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adamw decay-only step multiplies by (1 - lr*wd)") {
  ParamList<double> params;
  auto& p = params.add("p", Tensor<double>::scalar(1.0));
  p.ensure_grad();
  AdamW<double> opt(0.1, 0.9, 0.999, 1e-8, 0.1);
  opt.step(params.items());
  CHECK((*p.data)[0] == doctest::Approx(0.99));
}

TEST_CASE("adamw rejects NaN gradients with a diagnostic") {
  ParamList<double> params;
  auto& p = params.add("layer.weight", Tensor<double>::scalar(1.0));
  p.ensure_grad();
  (*p.grad)[0] = std::nan("");
  AdamW<double> opt(0.1);
  CHECK_THROWS_WITH_AS(opt.step(params.items()),
                       doctest::Contains("layer.weight"), NumericError);
  CHECK((*p.data)[0] == 1.0);  // update rejected, parameter untouched
}

TEST_CASE("float32 instantiation works end to end") {
  Rng rng(41);
  auto a = randn_tensor<float>({3, 3}, rng, 1.0f);
  a.set_requires_grad(true);
  auto loss = mean(mul(matmul(a, a), matmul(a, a)));
  backward(loss);
  CHECK(a.grad != nullptr);
  double mag = 0.0;
  for (float g : *a.grad) mag += std::fabs(g);
  CHECK(mag > 0.0);
}
