#include "navdiff/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "navdiff/error.hpp"
#include "navdiff/rng.hpp"
#include "navdiff/version.hpp"

namespace navdiff {

std::size_t ConditionVector::segment_offset(ConditionSegment s) const {
  switch (s) {
    case ConditionSegment::kGoalVision: return 0;
    case ConditionSegment::kGoalFlow: return layout.d_vision;
    case ConditionSegment::kObsVision: return layout.d_vision + layout.d_flow;
    case ConditionSegment::kLanguage:
      return 2 * layout.d_vision + layout.d_flow;
  }
  return 0;
}

std::size_t ConditionVector::segment_width(ConditionSegment s) const {
  switch (s) {
    case ConditionSegment::kGoalVision:
    case ConditionSegment::kObsVision: return layout.d_vision;
    case ConditionSegment::kGoalFlow: return layout.d_flow;
    case ConditionSegment::kLanguage: return layout.d_lang;
  }
  return 0;
}

std::vector<double> ConditionVector::segment(ConditionSegment s) const {
  const std::size_t off = segment_offset(s), w = segment_width(s);
  return {values.begin() + off, values.begin() + off + w};
}

void ConditionVector::set_segment(ConditionSegment s,
                                  const std::vector<double>& v) {
  const std::size_t off = segment_offset(s), w = segment_width(s);
  if (v.size() != w) {
    throw ContractError("condition: segment width " + std::to_string(v.size()) +
                        " does not match layout width " + std::to_string(w));
  }
  std::copy(v.begin(), v.end(), values.begin() + off);
}

void ConditionVector::zero_segment(ConditionSegment s) {
  const std::size_t off = segment_offset(s), w = segment_width(s);
  std::fill(values.begin() + off, values.begin() + off + w, 0.0);
}

std::uint64_t ConditionVector::hash() const {
  return fnv1a(values.data(), values.size() * sizeof(double));
}

std::uint64_t ConditionVector::segment_hash(ConditionSegment s) const {
  const std::size_t off = segment_offset(s), w = segment_width(s);
  return fnv1a(values.data() + off, w * sizeof(double));
}

VisionEncoder::VisionEncoder(std::size_t dim) : dim_(dim) {
  const std::size_t in = kGrid * kGrid;
  weight_.resize(in * dim);
  bias_.resize(dim);
  Rng rng = Rng::derive(kVisionEncoderSeed, dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& w : weight_) w = rng.normal() * scale;
  for (auto& b : bias_) b = rng.normal() * 0.01;
}

std::vector<double> VisionEncoder::encode_one(const Frame& frame) const {
  if (frame.width < kGrid || frame.height < kGrid) {
    throw ContractError("vision encoder: frame smaller than " +
                        std::to_string(kGrid) + "x" + std::to_string(kGrid));
  }
  // Box-average onto the fixed grid.
  std::vector<double> cells(kGrid * kGrid, 0.0);
  for (std::size_t gy = 0; gy < kGrid; ++gy) {
    const std::size_t y0 = gy * frame.height / kGrid;
    const std::size_t y1 = (gy + 1) * frame.height / kGrid;
    for (std::size_t gx = 0; gx < kGrid; ++gx) {
      const std::size_t x0 = gx * frame.width / kGrid;
      const std::size_t x1 = (gx + 1) * frame.width / kGrid;
      double acc = 0.0;
      for (std::size_t y = y0; y < y1; ++y)
        for (std::size_t x = x0; x < x1; ++x) acc += frame.value01(x, y);
      cells[gy * kGrid + gx] =
          acc / static_cast<double>((y1 - y0) * (x1 - x0));
    }
  }
  std::vector<double> out(bias_);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i] == 0.0) continue;
    const double* wrow = weight_.data() + i * dim_;
    for (std::size_t j = 0; j < dim_; ++j) out[j] += cells[i] * wrow[j];
  }
  return out;
}

std::vector<double> VisionEncoder::encode(
    const std::vector<Frame>& frames) const {
  if (frames.empty()) {
    throw ContractError("vision encoder: empty frame list");
  }
  std::vector<double> acc(dim_, 0.0);
  for (const Frame& f : frames) {
    const std::vector<double> e = encode_one(f);
    for (std::size_t j = 0; j < dim_; ++j) acc[j] += e[j];
  }
  for (double& v : acc) v /= static_cast<double>(frames.size());
  return acc;
}

std::vector<double> encode_language(const std::string& instruction,
                                    std::size_t dim) {
  if (instruction.empty()) {
    throw ContractError("language encoder: empty instruction");
  }
  std::vector<double> out(dim, 0.0);
  std::string token;
  bool any = false;
  auto flush = [&] {
    if (token.empty()) return;
    const std::uint64_t h =
        fnv1a(token.data(), token.size(), kLanguageHashSeed);
    const std::size_t bucket = h % dim;
    out[bucket] += (h >> 63) ? 1.0 : -1.0;
    token.clear();
    any = true;
  };
  for (char c : instruction) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      token.push_back(
          static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  if (!any) {
    throw ContractError("language encoder: instruction has no tokens");
  }
  double norm = 0.0;
  for (double v : out) norm += v * v;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (double& v : out) v /= norm;
  return out;
}

std::vector<std::size_t> goal_anchor_indices(std::size_t frame_count) {
  if (frame_count == 0) {
    throw ContractError("goal anchors: empty video");
  }
  return {0, frame_count / 2, frame_count - 1};
}

std::vector<FlowField> goal_anchor_flows(const Video& video, std::size_t block,
                                         std::size_t radius) {
  if (video.empty()) {
    throw ContractError("goal flows: empty video");
  }
  std::vector<FlowField> fields;
  if (video.size() < 2) {
    // Single frame: no motion, three zero fields.
    for (int i = 0; i < 3; ++i)
      fields.emplace_back(video[0].width, video[0].height, block);
    return fields;
  }
  const std::size_t last_pair = video.size() - 2;
  std::size_t starts[3] = {0, std::min(video.size() / 2, last_pair),
                           last_pair};
  for (std::size_t s : starts)
    fields.push_back(estimate_flow(video[s], video[s + 1], block, radius));
  return fields;
}

ConditionVector assemble_condition(const ConditionLayout& layout,
                                   const std::vector<double>& goal_vision,
                                   const std::vector<double>& goal_flow,
                                   const std::vector<double>& obs_vision,
                                   const std::vector<double>& language) {
  auto check = [](const std::vector<double>& v, std::size_t w,
                  const char* name) {
    if (v.size() != w) {
      throw ContractError(std::string("condition: ") + name + " width " +
                          std::to_string(v.size()) + " != layout width " +
                          std::to_string(w));
    }
  };
  check(goal_vision, layout.d_vision, "goal_vision");
  check(goal_flow, layout.d_flow, "goal_flow");
  check(obs_vision, layout.d_vision, "obs_vision");
  check(language, layout.d_lang, "language");

  ConditionVector c;
  c.layout = layout;
  c.values.reserve(layout.total());
  c.values.insert(c.values.end(), goal_vision.begin(), goal_vision.end());
  c.values.insert(c.values.end(), goal_flow.begin(), goal_flow.end());
  c.values.insert(c.values.end(), obs_vision.begin(), obs_vision.end());
  c.values.insert(c.values.end(), language.begin(), language.end());
  return c;
}

}  // namespace navdiff
