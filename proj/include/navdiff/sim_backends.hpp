#pragma once

#include <cstdint>
#include <vector>

#include "navdiff/rehearsal.hpp"
#include "navdiff/sim.hpp"

namespace navdiff {

// ---------------------------------------------------------------------------
// Simulator-grounded backends (the "sim" backend of the CLI)
// ---------------------------------------------------------------------------

// Generates first-person clips by rolling a controller in the task's world.
// Prompt quality maps onto concrete artifacts: without the no-clip negative
// the trajectory ignores obstacles; without goal-directed motion wording the
// clip truncates early; without stabilization wording the camera teleports.
// An embodiment-mismatched generator id adds extra camera jitter.
class SimGenerator : public GeneratorBackend {
 public:
  explicit SimGenerator(std::string id) : id_(std::move(id)) {}
  std::string id() const override { return id_; }
  Video generate(const PromptStrategy& prompt,
                 const RehearsalTask& task) override;

 private:
  std::string id_;
};

// Scores candidates against simulator ground truth. The trajectory implied
// by the video is decoded step by step: frame-to-frame optical flow proposes
// the ego-motion increment, then a local render-matching search against the
// known world refines the pose. PP runs collision checks on that decoded
// path, PA measures terminal goal proximity, VQ measures frame-to-frame
// coherence.
class SimEvaluator : public EvaluatorBackend {
 public:
  RubricScore evaluate(const Video& video, const RehearsalTask& task) override;

  // Flow-seeded, render-refined trajectory decode (exposed for tests).
  std::vector<RobotState> decode_trajectory(const Video& video,
                                            const RobotState& start,
                                            const World& world) const;
};

BackendPool make_sim_backends();

// ---------------------------------------------------------------------------
// Scripted backends (deterministic test families)
// ---------------------------------------------------------------------------

// Carries the prompt text verbatim in the emitted frames so scripted
// evaluators can judge which edits were applied.
class ScriptedGenerator : public GeneratorBackend {
 public:
  explicit ScriptedGenerator(std::string id) : id_(std::move(id)) {}
  std::string id() const override { return id_; }
  Video generate(const PromptStrategy& prompt,
                 const RehearsalTask& task) override;

  static std::string decode_prompt_text(const Video& video);

 private:
  std::string id_;
};

// Keeps PP the bottleneck until the required negative-prompt text appears,
// then scores above the gate.
class RequiredEditEvaluator : public EvaluatorBackend {
 public:
  explicit RequiredEditEvaluator(std::string required_text)
      : required_(std::move(required_text)) {}
  RubricScore evaluate(const Video& video, const RehearsalTask& task) override;

 private:
  std::string required_;
};

// Prescribed monotone score ladder over iterations:
// means 65.0, 70.5, 74.0, 78.5, 87.0 (accepts on the fifth).
class LadderEvaluator : public EvaluatorBackend {
 public:
  RubricScore evaluate(const Video& video, const RehearsalTask& task) override;
  void reset() { calls_ = 0; }

 private:
  std::size_t calls_ = 0;
};

BackendPool make_scripted_backends(std::shared_ptr<EvaluatorBackend> eval);

}  // namespace navdiff
