#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "navdiff/dit.hpp"
#include "navdiff/policy.hpp"
#include "navdiff/rng.hpp"
#include "navdiff/schedule.hpp"

using namespace navdiff;

namespace {

Tensor<double> random_actions(std::size_t h, Rng& rng) {
  Tensor<double> a = Tensor<double>::zeros({h, 3});
  for (auto& v : *a.data) v = rng.uniform(-1.0, 1.0);
  return a;
}

std::vector<double> random_cond(std::size_t d, Rng& rng) {
  std::vector<double> c(d);
  for (auto& v : c) v = rng.normal() * 0.5;
  return c;
}

DiTConfig tiny_config() {
  DiTConfig c;
  c.depth = 1;
  c.hidden = 8;
  c.heads = 2;
  c.horizon = 3;
  c.cond_dim = 12;
  c.mlp_ratio = 2;
  return c;
}

}  // namespace

TEST_CASE("embed_actions produces one token per timestep") {
  ParamList<double> params;
  DiT<double> net;
  Rng rng(1);
  net.init(params, DiTConfig::desk(), rng);
  Tensor<double> a = random_actions(8, rng);
  Tensor<double> tokens = net.embed_actions(a);
  CHECK(tokens.shape == Shape{8, 64});

  Tensor<double> bad = Tensor<double>::zeros({4, 3});
  CHECK_THROWS_AS(net.embed_actions(bad), ContractError);
}

TEST_CASE("zero actions with zero projection leave positional embeddings") {
  ParamList<double> params;
  DiT<double> net;
  Rng rng(2);
  net.init(params, DiTConfig::desk(), rng);
  std::fill(params.find("embed.in.weight")->data->begin(),
            params.find("embed.in.weight")->data->end(), 0.0);
  Tensor<double> tokens = net.embed_actions(Tensor<double>::zeros({8, 3}));
  CHECK(*tokens.data == *params.find("embed.pos")->data);
}

TEST_CASE("with positional embeddings zeroed token order follows timesteps") {
  ParamList<double> params;
  DiT<double> net;
  Rng rng(3);
  net.init(params, DiTConfig::desk(), rng);
  std::fill(params.find("embed.pos")->data->begin(),
            params.find("embed.pos")->data->end(), 0.0);

  Tensor<double> a = random_actions(8, rng);
  Tensor<double> tokens = net.embed_actions(a);

  // Reverse the timesteps; tokens must be reversed identically.
  Tensor<double> rev = Tensor<double>::zeros({8, 3});
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t k = 0; k < 3; ++k)
      (*rev.data)[t * 3 + k] = (*a.data)[(7 - t) * 3 + k];
  Tensor<double> rtokens = net.embed_actions(rev);
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t j = 0; j < 64; ++j)
      CHECK((*rtokens.data)[t * 64 + j] ==
            doctest::Approx((*tokens.data)[(7 - t) * 64 + j]));
}

TEST_CASE("adaln_modulate is exactly zero for a fresh block") {
  ParamList<double> params;
  DiT<double> net;
  Rng rng(4);
  net.init(params, DiTConfig::desk(), rng);
  Tensor<double> h = random_actions(8, rng);
  Tensor<double> tokens = net.embed_actions(h);

  Tensor<double> u = Tensor<double>::zeros({64});
  for (auto& v : *u.data) v = rng.normal();
  auto [ma, mm] = net.blocks()[0].modulations(u);
  for (double g : *ma.gamma.data) CHECK(g == 0.0);
  for (double g : *ma.gate.data) CHECK(g == 0.0);

  Tensor<double> out = adaln_modulate(tokens, ma);
  for (double v : *out.data) CHECK(v == 0.0);
}

TEST_CASE("adaln_modulate identity settings reduce to plain layer norm") {
  Rng rng(5);
  Tensor<double> h = Tensor<double>::zeros({4, 6});
  for (auto& v : *h.data) v = rng.normal();
  Modulation<double> m;
  m.gamma = Tensor<double>::full({6}, 1.0);
  m.beta = Tensor<double>::zeros({6});
  m.gate = Tensor<double>::full({6}, 1.0);
  Tensor<double> got = adaln_modulate(h, m, 1e-5);
  Tensor<double> want = layer_norm(h, 1e-5);
  for (std::size_t i = 0; i < got.numel(); ++i)
    CHECK((*got.data)[i] == doctest::Approx((*want.data)[i]));
}

TEST_CASE("adaln_modulate matches the hand-composed expression") {
  Rng rng(6);
  Tensor<double> h = Tensor<double>::zeros({4, 6});
  for (auto& v : *h.data) v = rng.normal();
  Modulation<double> m;
  m.gamma = Tensor<double>::zeros({6});
  m.beta = Tensor<double>::zeros({6});
  m.gate = Tensor<double>::zeros({6});
  for (auto& v : *m.gamma.data) v = rng.normal();
  for (auto& v : *m.beta.data) v = rng.normal();
  for (auto& v : *m.gate.data) v = rng.normal();

  Tensor<double> got = adaln_modulate(h, m, 1e-5);
  Tensor<double> ln = layer_norm(h, 1e-5);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      const double want =
          (*m.gate.data)[j] *
          ((*m.gamma.data)[j] * (*ln.data)[i * 6 + j] + (*m.beta.data)[j]);
      CHECK(std::fabs((*got.data)[i * 6 + j] - want) < 1e-9);
    }
  }
}

TEST_CASE("freshly initialized network is the zero function") {
  ParamList<double> params;
  DiT<double> net;
  Rng rng(7);
  net.init(params, DiTConfig::desk(), rng);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor<double> a = random_actions(8, rng);
    Tensor<double> c =
        Tensor<double>::from({288}, random_cond(288, rng));
    const int t = static_cast<int>(rng.below(100));
    Tensor<double> out = net.forward(a, t, c);
    CHECK(out.shape == Shape{8, 3});
    for (double v : *out.data) CHECK(v == 0.0);
  }
}

TEST_CASE("initial DDPM loss sits near one per coordinate") {
  ParamList<double> params;
  DiT<double> net;
  Rng rng(8);
  net.init(params, DiTConfig::desk(), rng);
  const NoiseSchedule sched = build_linear_schedule(100, 1e-4, 2e-2);

  double acc = 0.0;
  const int batches = 100;
  for (int i = 0; i < batches; ++i) {
    ActionBlock a0(8);
    for (auto& v : a0.v) v = rng.uniform(-1.0, 1.0);
    ActionBlock eps(8);
    for (auto& v : eps.v) v = rng.normal();
    const int t = static_cast<int>(rng.below(100));
    ActionBlock a_t = forward_noise(a0, t, eps, sched);
    // Zero prediction at init: loss = E||eps||^2.
    ActionBlock pred(8);
    acc += ddpm_loss(pred, eps);
    (void)a_t;
  }
  const double mean_loss = acc / batches;
  CHECK(mean_loss > 0.9);
  CHECK(mean_loss < 1.1);
}

TEST_CASE("condition width mismatch is rejected") {
  ParamList<double> params;
  DiT<double> net;
  Rng rng(9);
  net.init(params, DiTConfig::desk(), rng);
  Tensor<double> a = random_actions(8, rng);
  Tensor<double> bad = Tensor<double>::zeros({100});
  CHECK_THROWS_AS(net.forward(a, 0, bad), ContractError);
}

TEST_CASE("condition reaches the output once training begins") {
  ParamList<double> params;
  DiT<double> net;
  Rng rng(10);
  net.init(params, DiTConfig::desk(), rng);

  // Training steps on a nonzero target: the zero-initialized head receives
  // gradient first, the modulation gates the step after, at which point the
  // condition pathway is live.
  Tensor<double> a = random_actions(8, rng);
  Tensor<double> c = Tensor<double>::from({288}, random_cond(288, rng));
  Tensor<double> target = random_actions(8, rng);
  AdamW<double> opt(1e-2);
  for (int step = 0; step < 2; ++step) {
    params.zero_grad();
    Tensor<double> d = sub(net.forward(a, 5, c), target);
    Tensor<double> loss = mean(mul(d, d));
    backward(loss);
    opt.step(params.items());
  }

  // Sensitivity: gradient of the output wrt the condition must be nonzero.
  params.zero_grad();
  Tensor<double> c2 = Tensor<double>::from({288}, random_cond(288, rng));
  c2.set_requires_grad(true);
  Tensor<double> out = net.forward(a, 5, c2);
  Tensor<double> probe = sum(out);
  backward(probe);
  double norm = 0.0;
  for (double g : *c2.grad) norm += g * g;
  CHECK(norm > 0.0);
}

TEST_CASE("zeroed modulation weights make the output independent of c") {
  ParamList<double> params;
  DiT<double> net;
  Rng rng(11);
  net.init(params, DiTConfig::desk(), rng);
  // Randomize everything, then zero only the modulation MLPs.
  for (auto& p : params.items())
    for (auto& v : *p.value.data) v = rng.normal() * 0.05;
  for (auto& p : params.items()) {
    if (p.name.find(".mod.") != std::string::npos)
      std::fill(p.value.data->begin(), p.value.data->end(), 0.0);
  }
  Tensor<double> a = random_actions(8, rng);
  Tensor<double> c1 = Tensor<double>::from({288}, random_cond(288, rng));
  Tensor<double> c2 = Tensor<double>::from({288}, random_cond(288, rng));
  Tensor<double> o1 = net.forward(a, 3, c1);
  Tensor<double> o2 = net.forward(a, 3, c2);
  CHECK(*o1.data == *o2.data);
}

TEST_CASE("full-network gradients match finite differences at tiny scale") {
  ParamList<double> params;
  DiT<double> net;
  Rng rng(12);
  net.init(params, tiny_config(), rng);
  REQUIRE(params.count() <= 5000);

  // Randomize all parameters (including the zero-initialized ones) so every
  // gradient path is exercised.
  Rng prng(13);
  for (auto& p : params.items())
    for (auto& v : *p.value.data) v = prng.normal() * 0.2;

  Tensor<double> a = random_actions(3, rng);
  Tensor<double> c = Tensor<double>::from({12}, random_cond(12, rng));
  Tensor<double> target = random_actions(3, rng);

  auto loss_value = [&] {
    NoGradGuard ng;
    Tensor<double> d = sub(net.forward(a, 4, c), target);
    return mean(mul(d, d)).item();
  };

  params.zero_grad();
  Tensor<double> d = sub(net.forward(a, 4, c), target);
  Tensor<double> loss = mean(mul(d, d));
  backward(loss);

  const double h = 1e-5;
  int checked = 0;
  for (auto& p : params.items()) {
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double keep = (*p.value.data)[i];
      (*p.value.data)[i] = keep + h;
      const double fp = loss_value();
      (*p.value.data)[i] = keep - h;
      const double fm = loss_value();
      (*p.value.data)[i] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = (*p.value.grad)[i];
      const double scale = std::max({std::fabs(fd), std::fabs(ad), 1e-6});
      CAPTURE(p.name);
      CAPTURE(i);
      CHECK(std::fabs(fd - ad) / scale < 1e-3);
      ++checked;
    }
  }
  CHECK(checked == static_cast<int>(params.count()));
}

TEST_CASE("reference configuration parameter count is within 15% of 43M") {
  PolicyModel<float> model;
  model.init(PolicyModel<float>::Config::reference());
  const double count = static_cast<double>(model.param_count());
  MESSAGE("reference trainable parameter count: ", count);
  CHECK(count > 43e6 * 0.85);
  CHECK(count < 43e6 * 1.15);
}

TEST_CASE("policy checkpoint round-trips weights and config") {
  PolicyModel<float> model;
  auto cfg = PolicyModel<float>::Config::desk();
  cfg.init_seed = 99;
  model.init(cfg);
  // Nudge some weights so the round trip is non-trivial.
  Rng rng(14);
  for (auto& p : model.params().items())
    for (auto& v : *p.value.data) v += static_cast<float>(rng.normal()) * 0.01f;

  const std::string path = "/tmp/navdiff_test_policy.ckpt";
  model.save(path, {{"note", "unit-test"}});
  PolicyModel<float> back = PolicyModel<float>::load(path);
  CHECK(back.config().dit.hidden == cfg.dit.hidden);
  CHECK(back.param_count() == model.param_count());
  for (std::size_t i = 0; i < model.params().items().size(); ++i) {
    const auto& a = model.params().items()[i];
    const auto& b = back.params().items()[i];
    CHECK(a.name == b.name);
    CHECK(*a.value.data == *b.value.data);
  }

  // Same condition, same seed: identical prediction bits through the bundle.
  Rng crng(15);
  ConditionVector c = assemble_condition(
      cfg.layout, random_cond(cfg.layout.d_vision, crng),
      random_cond(cfg.layout.d_flow, crng),
      random_cond(cfg.layout.d_vision, crng),
      random_cond(cfg.layout.d_lang, crng));
  ActionBlock p1 = model.predict(c, 10, 7);
  ActionBlock p2 = back.predict(c, 10, 7);
  CHECK(p1.v == p2.v);
}
