#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "navdiff/flow.hpp"
#include "navdiff/frame.hpp"

namespace navdiff {

// Widths of the four condition segments. The observation slot reuses the
// vision width, so the total is 2*d_vision + d_flow + d_lang.
struct ConditionLayout {
  std::size_t d_vision = 96;
  std::size_t d_flow = 32;
  std::size_t d_lang = 64;

  std::size_t total() const { return 2 * d_vision + d_flow + d_lang; }

  static ConditionLayout desk() { return {96, 32, 64}; }       // 288
  static ConditionLayout reference() { return {768, 256, 512}; }  // 2304

  bool operator==(const ConditionLayout&) const = default;
};

enum class ConditionSegment { kGoalVision = 0, kGoalFlow, kObsVision, kLanguage };

// The assembled conditioning vector, laid out as
// [goal_vision || goal_flow || obs_vision || language].
struct ConditionVector {
  ConditionLayout layout;
  std::vector<double> values;

  std::size_t segment_offset(ConditionSegment s) const;
  std::size_t segment_width(ConditionSegment s) const;
  std::vector<double> segment(ConditionSegment s) const;
  void set_segment(ConditionSegment s, const std::vector<double>& v);
  void zero_segment(ConditionSegment s);

  std::uint64_t hash() const;
  std::uint64_t segment_hash(ConditionSegment s) const;
};

// Frozen deterministic vision encoder: frames are box-averaged onto a 16x16
// grid, projected through a fixed seeded random matrix plus bias, and
// mean-pooled across frames. Stands in for a pretrained image backbone.
class VisionEncoder {
 public:
  static constexpr std::size_t kGrid = 16;

  explicit VisionEncoder(std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::vector<double> encode(const std::vector<Frame>& frames) const;
  std::vector<double> encode_one(const Frame& frame) const;

 private:
  std::size_t dim_;
  std::vector<double> weight_;  // [kGrid*kGrid x dim]
  std::vector<double> bias_;    // [dim]
};

// Frozen deterministic language encoder: lowercase, whitespace-tokenize,
// hash each token into dim buckets with +/-1 signs, L2-normalize.
std::vector<double> encode_language(const std::string& instruction,
                                    std::size_t dim);

// Frame anchor selection from a goal video: first, middle, last.
std::vector<std::size_t> goal_anchor_indices(std::size_t frame_count);

// Consecutive frame pairs around the anchors; always returns three fields
// (short videos repeat the last available pair).
std::vector<FlowField> goal_anchor_flows(const Video& video, std::size_t block,
                                         std::size_t radius);

// Concatenates the four segments with width checks against the layout.
ConditionVector assemble_condition(const ConditionLayout& layout,
                                   const std::vector<double>& goal_vision,
                                   const std::vector<double>& goal_flow,
                                   const std::vector<double>& obs_vision,
                                   const std::vector<double>& language);

}  // namespace navdiff
