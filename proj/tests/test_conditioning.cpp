#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "navdiff/encoders.hpp"
#include "navdiff/flow.hpp"
#include "navdiff/flow_encoder.hpp"
#include "navdiff/policy.hpp"
#include "navdiff/rng.hpp"

using namespace navdiff;

namespace {

Frame noise_frame(std::size_t w, std::size_t h, Rng& rng) {
  Frame f(w, h);
  for (auto& p : f.px) p = static_cast<std::uint8_t>(rng.below(256));
  return f;
}

Frame shifted_right(const Frame& f, std::size_t shift) {
  Frame out(f.width, f.height);
  for (std::size_t y = 0; y < f.height; ++y)
    for (std::size_t x = 0; x < f.width; ++x)
      out.at(x, y) = f.at((x + f.width - shift) % f.width, y);
  return out;
}

}  // namespace

TEST_CASE("vision encoder is deterministic and bias-anchored") {
  VisionEncoder enc(96);
  Rng rng(1);
  Frame f = noise_frame(64, 64, rng);
  auto a = enc.encode({f, f});
  auto b = enc.encode({f, f});
  CHECK(a == b);

  // All-zero frames map to the projection's bias vector.
  Frame zero(64, 64);
  auto z = enc.encode({zero});
  VisionEncoder enc2(96);
  auto z2 = enc2.encode({zero, zero, zero});
  for (std::size_t i = 0; i < z.size(); ++i)
    CHECK(z[i] == doctest::Approx(z2[i]).epsilon(1e-12));
  double mag = 0.0;
  for (double v : z) mag += std::fabs(v);
  CHECK(mag > 0.0);  // the bias is nonzero

  CHECK_THROWS_AS(enc.encode({}), ContractError);
}

TEST_CASE("vision encoder separates distinct scenes") {
  VisionEncoder enc(96);
  Rng rng(2);
  Frame a = noise_frame(64, 64, rng);
  Frame b = noise_frame(64, 64, rng);
  auto ea = enc.encode({a});
  auto eb = enc.encode({b});
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    dot += ea[i] * eb[i];
    na += ea[i] * ea[i];
    nb += eb[i] * eb[i];
  }
  CHECK(dot / std::sqrt(na * nb) < 0.99);
}

TEST_CASE("block flow is zero for a static scene") {
  Rng rng(3);
  Frame f = noise_frame(64, 64, rng);
  FlowField field = estimate_flow(f, f, 8, 4);
  for (double u : field.u) CHECK(u == 0.0);
  for (double v : field.v) CHECK(v == 0.0);
}

TEST_CASE("block flow recovers a synthetic translation") {
  Rng rng(4);
  Frame f = noise_frame(64, 64, rng);
  Frame g = shifted_right(f, 2);
  FlowField field = estimate_flow(f, g, 8, 4);
  // Interior blocks (wrap-around pollutes the edge columns).
  std::size_t hits = 0, total = 0;
  for (std::size_t by = 0; by < field.grid_h(); ++by) {
    for (std::size_t bx = 1; bx + 1 < field.grid_w(); ++bx) {
      ++total;
      if (field.u_at(bx * 8, by * 8) == 2.0 &&
          field.v_at(bx * 8, by * 8) == 0.0)
        ++hits;
    }
  }
  CHECK(hits == total);
}

TEST_CASE("textureless frames give a zero field by tie-breaking") {
  Frame a(64, 64), b(64, 64);
  std::fill(a.px.begin(), a.px.end(), 100);
  std::fill(b.px.begin(), b.px.end(), 100);
  FlowField field = estimate_flow(a, b, 8, 4);
  for (double u : field.u) CHECK(u == 0.0);
  for (double v : field.v) CHECK(v == 0.0);
}

TEST_CASE("flow is equivariant to common translation on interior blocks") {
  Rng rng(5);
  Frame f1 = noise_frame(64, 64, rng);
  Frame f2 = shifted_right(f1, 1);
  Frame g1 = shifted_right(f1, 3);
  Frame g2 = shifted_right(f2, 3);
  FlowField a = estimate_flow(f1, f2, 8, 4);
  FlowField b = estimate_flow(g1, g2, 8, 4);
  for (std::size_t by = 1; by + 1 < a.grid_h(); ++by)
    for (std::size_t bx = 1; bx + 1 < a.grid_w(); ++bx) {
      CHECK(a.u_at(bx * 8, by * 8) == b.u_at(bx * 8, by * 8));
      CHECK(a.v_at(bx * 8, by * 8) == b.v_at(bx * 8, by * 8));
    }
}

TEST_CASE("flow rejects oversized blocks") {
  Frame f(16, 16);
  CHECK_THROWS_AS(estimate_flow(f, f, 32, 2), ConfigError);
}

TEST_CASE("flow encoder zero input with zero-initialized biases gives zero") {
  ParamList<float> params;
  FlowEncoder<float> enc;
  Rng rng(6);
  FlowEncoderConfig cfg;
  cfg.out_dim = 32;
  enc.init(params, "flow", cfg, rng);
  std::vector<FlowField> zeros(3, FlowField(64, 64, 8));
  auto emb = enc.encode_values(zeros);
  CHECK(emb.size() == 32);
  for (double v : emb) CHECK(v == 0.0);
}

TEST_CASE("flow encoder output width is fixed for any sequence length") {
  ParamList<float> params;
  FlowEncoder<float> enc;
  Rng rng(7);
  FlowEncoderConfig cfg;
  cfg.out_dim = 32;
  enc.init(params, "flow", cfg, rng);
  Rng frng(8);
  for (std::size_t n : {1u, 2u, 3u, 5u, 9u}) {
    std::vector<FlowField> fields;
    for (std::size_t i = 0; i < n; ++i) {
      FlowField f(64, 64, 8);
      for (auto& u : f.u) u = frng.uniform(-4.0, 4.0);
      for (auto& v : f.v) v = frng.uniform(-4.0, 4.0);
      fields.push_back(f);
    }
    CHECK(enc.encode_values(fields).size() == 32);
  }
  CHECK_THROWS_AS(enc.encode_values({}), ContractError);
}

TEST_CASE("language encoder is deterministic, unit norm, injective on toys") {
  auto a = encode_language("go to the red box", 64);
  auto b = encode_language("go to the red box", 64);
  CHECK(a == b);

  auto c = encode_language("go to the blue sphere", 64);
  CHECK(a != c);

  for (const auto& v : {a, c}) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    CHECK(std::fabs(std::sqrt(norm) - 1.0) < 1e-9);
  }

  CHECK_THROWS_AS(encode_language("", 64), ContractError);
  CHECK_THROWS_AS(encode_language("   ", 64), ContractError);
}

TEST_CASE("reference layout assembles to width 2304") {
  ConditionLayout ref = ConditionLayout::reference();
  CHECK(ref.total() == 2304);
  std::vector<double> gv(768, 0.1), gf(256, 0.2), ob(768, 0.3), lg(512, 0.4);
  ConditionVector c = assemble_condition(ref, gv, gf, ob, lg);
  CHECK(c.values.size() == 2304);
  CHECK(c.segment(ConditionSegment::kGoalFlow) == gf);
  CHECK(c.segment(ConditionSegment::kLanguage) == lg);
}

TEST_CASE("segment layout round-trips and rejects bad widths") {
  ConditionLayout desk = ConditionLayout::desk();
  CHECK(desk.total() == 288);
  Rng rng(9);
  std::vector<double> gv(96), gf(32), ob(96), lg(64);
  for (auto* seg : {&gv, &gf, &ob, &lg})
    for (auto& v : *seg) v = rng.normal();
  ConditionVector c = assemble_condition(desk, gv, gf, ob, lg);
  CHECK(c.segment(ConditionSegment::kGoalVision) == gv);
  CHECK(c.segment(ConditionSegment::kGoalFlow) == gf);
  CHECK(c.segment(ConditionSegment::kObsVision) == ob);
  CHECK(c.segment(ConditionSegment::kLanguage) == lg);

  std::vector<double> wrong(31);
  CHECK_THROWS_AS(assemble_condition(desk, gv, wrong, ob, lg), ContractError);
  CHECK_THROWS_AS(c.set_segment(ConditionSegment::kGoalFlow, wrong),
                  ContractError);
}

TEST_CASE("open and closed loop conditions differ only in the obs slot") {
  PolicyModel<float> model;
  model.init(PolicyModel<float>::Config::desk());
  Conditioner<float> cond(model.config().layout, &model.flow_encoder(),
                          model.config().flow_block,
                          model.config().flow_radius);
  Rng rng(10);
  Video goal;
  for (int i = 0; i < 12; ++i) goal.push_back(noise_frame(64, 64, rng));
  GoalParts parts = cond.prepare_goal(goal, "go to the far pillar and stop");

  Frame live = noise_frame(64, 64, rng);
  ConditionVector closed = cond.assemble(parts, LoopMode::kClosed, &live);
  ConditionVector open = cond.assemble(parts, LoopMode::kOpen, nullptr);

  CHECK(closed.segment_hash(ConditionSegment::kGoalVision) ==
        open.segment_hash(ConditionSegment::kGoalVision));
  CHECK(closed.segment_hash(ConditionSegment::kGoalFlow) ==
        open.segment_hash(ConditionSegment::kGoalFlow));
  CHECK(closed.segment_hash(ConditionSegment::kLanguage) ==
        open.segment_hash(ConditionSegment::kLanguage));
  CHECK(closed.segment_hash(ConditionSegment::kObsVision) !=
        open.segment_hash(ConditionSegment::kObsVision));

  // Open-loop obs slot equals the encoding of the last goal frame; with a
  // single-frame goal video it equals the goal slot too.
  CHECK(open.segment(ConditionSegment::kObsVision) == parts.last_frame);
  Video single{goal.front()};
  GoalParts sp = cond.prepare_goal(single, "hold position");
  ConditionVector so = cond.assemble(sp, LoopMode::kOpen, nullptr);
  const auto obs_seg = so.segment(ConditionSegment::kObsVision);
  const auto goal_seg = so.segment(ConditionSegment::kGoalVision);
  for (std::size_t i = 0; i < obs_seg.size(); ++i)
    CHECK(obs_seg[i] == doctest::Approx(goal_seg[i]).epsilon(1e-12));

  CHECK_THROWS_AS(cond.assemble(parts, LoopMode::kClosed, nullptr),
                  ContractError);
}

TEST_CASE("condition round-trip through segment edits") {
  ConditionLayout desk = ConditionLayout::desk();
  Rng rng(11);
  std::vector<double> gv(96), gf(32), ob(96), lg(64);
  for (auto* seg : {&gv, &gf, &ob, &lg})
    for (auto& v : *seg) v = rng.normal();
  ConditionVector c = assemble_condition(desk, gv, gf, ob, lg);
  const auto h0 = c.hash();
  c.zero_segment(ConditionSegment::kGoalFlow);
  CHECK(c.segment(ConditionSegment::kGoalFlow) == std::vector<double>(32, 0.0));
  CHECK(c.hash() != h0);
  c.set_segment(ConditionSegment::kGoalFlow, gf);
  CHECK(c.hash() == h0);
}
