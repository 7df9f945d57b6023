#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "navdiff/frame.hpp"
#include "navdiff/sim.hpp"

namespace navdiff {

// ---------------------------------------------------------------------------
// Rubric
// ---------------------------------------------------------------------------

enum class FailureTag {
  kNone,
  kObstacleFixation,
  kScaleMismatch,
  kInstructionDrift,
  kTemporalIncoherence,
};

const char* failure_tag_name(FailureTag tag);
FailureTag failure_tag_parse(const std::string& name);

struct Critique {
  FailureTag tag = FailureTag::kNone;
  std::string text;
};

// Prompt Adherence, Physical Plausibility, Visual Quality, each in [0, 100].
struct RubricScore {
  double pa = 0.0;
  double pp = 0.0;
  double vq = 0.0;
  Critique critique;

  double mean() const { return (pa + pp + vq) / 3.0; }
};

// Accept iff mean(PA, PP, VQ) >= tau (boundary inclusive).
bool gate(const RubricScore& score, double tau);

enum class RubricComponent { kPA, kPP, kVQ };
const char* component_name(RubricComponent c);

// Lowest-scoring component; ties break by fixed priority PP > PA > VQ.
RubricComponent identify_bottleneck(const RubricScore& score);

// ---------------------------------------------------------------------------
// Tasks and prompt strategies
// ---------------------------------------------------------------------------

struct RehearsalTask {
  std::string instruction;
  Frame initial_frame;
  std::optional<Frame> goal_frame;
  std::string embodiment = "humanoid";  // humanoid | drone | wheeled
  std::uint64_t seed = 0;

  // Grounding for the simulated backends (absent for remote services).
  std::optional<World> world;
  std::optional<RobotState> start;

  void validate() const;
};

struct PromptStrategy {
  std::string base;                    // instruction + embodiment framing
  std::vector<std::string> motion;     // motion descriptors
  std::vector<std::string> camera;     // camera-dynamics descriptors
  std::vector<std::string> negative;   // negative prompts
  std::string generator;               // id from the registered pool

  std::string serialize() const;       // canonical text form
  std::uint64_t hash() const;
};

// ---------------------------------------------------------------------------
// Three-tier memory
// ---------------------------------------------------------------------------

struct PairingStats {
  std::size_t successes = 0;
  std::size_t attempts = 0;
  double ratio() const {
    return attempts == 0 ? 0.0
                         : static_cast<double>(successes) /
                               static_cast<double>(attempts);
  }
};

struct NegativeTemplate {
  std::string context;  // single keyword matched against the instruction
  std::string text;
};

struct ShortTermEntry {
  PromptStrategy prompt;
  RubricComponent bottleneck = RubricComponent::kPP;
  Critique critique;
  std::string edit_id;
};

// rules: immutable text loaded from the rules file. Long-term memory holds
// model-embodiment pairing stats, negative-prompt templates, and recovery
// notes; new records append only when a video is accepted (pairing attempt
// counters update at task end so routing ratios stay meaningful). The
// short-term buffer is cleared at task start.
struct MemoryStore {
  std::string rules;
  std::uint64_t rules_checksum = 0;

  std::map<std::pair<std::string, std::string>, PairingStats> pairings;
  std::vector<NegativeTemplate> neg_templates;
  std::vector<std::string> recovery_notes;

  std::vector<ShortTermEntry> short_term;
  std::unordered_set<std::uint64_t> tried_prompts;

  void clear_short_term() {
    short_term.clear();
    tried_prompts.clear();
  }

  bool has_template(const std::string& context, const std::string& text) const;
  std::size_t record_count() const {
    return pairings.size() + neg_templates.size() + recovery_notes.size();
  }
};

void load_rules(MemoryStore& memory, const std::string& path);

// Long-term store persistence: line-delimited records under a versioned
// header ("NAVDIFF-MLT v1"). Writes are atomic (temp file + rename) so
// concurrent readers see a consistent snapshot. A corrupt file fails with a
// versioned-format diagnostic, never a silent reset.
void memory_save(const MemoryStore& memory, const std::string& path);
MemoryStore memory_load(const std::string& path);

// ---------------------------------------------------------------------------
// Edit tables
// ---------------------------------------------------------------------------

enum class EditKind { kMotion, kCamera, kNegative, kGeneratorSwitch };

struct EditEntry {
  RubricComponent category;
  std::string id;
  EditKind kind;
  std::string text;  // descriptor payload (unused for generator switches)
};

// The concrete modifiers per rubric category, in application order.
std::vector<EditEntry> default_edit_tables();
std::vector<EditEntry> load_edit_tables(const std::string& path);

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

// Generator pool ids.
inline constexpr const char* kSingleImageGenerator = "single-image";
inline constexpr const char* kKeyframeGenerator = "keyframe-interp";

class GeneratorBackend {
 public:
  virtual ~GeneratorBackend() = default;
  virtual std::string id() const = 0;
  virtual Video generate(const PromptStrategy& prompt,
                         const RehearsalTask& task) = 0;
};

class EvaluatorBackend {
 public:
  virtual ~EvaluatorBackend() = default;
  virtual RubricScore evaluate(const Video& video,
                               const RehearsalTask& task) = 0;
};

struct BackendPool {
  std::vector<std::shared_ptr<GeneratorBackend>> generators;
  std::shared_ptr<EvaluatorBackend> evaluator;

  std::vector<std::string> ids() const;
  GeneratorBackend& by_id(const std::string& id) const;
};

// ---------------------------------------------------------------------------
// Loop operations
// ---------------------------------------------------------------------------

// Deterministic routing: a goal frame selects the keyframe-interpolation
// backend, otherwise the single-image backend; a long-term pairing with at
// least three recorded successes and a strictly higher success ratio
// overrides the default.
std::string route_model(const RehearsalTask& task, const MemoryStore& memory,
                        const std::vector<std::string>& pool);

// Deterministic prompt templating: instruction and embodiment verbatim,
// per-embodiment ego-motion descriptors only (static scene content is never
// re-described), negative prompts seeded from matching long-term templates.
PromptStrategy construct_prompt(const RehearsalTask& task,
                                const std::string& generator,
                                const MemoryStore& memory);

// One edit from the category mapped to the bottleneck (PA -> motion,
// PP -> negative prompts / camera, VQ -> generator switch / camera). Never
// re-emits a strategy already tried this task; an exhausted category falls
// through to the next by tie priority. Returns nullopt when every edit is
// exhausted.
struct RefineOutcome {
  PromptStrategy prompt;
  std::string edit_id;
};
std::optional<RefineOutcome> refine_prompt(const PromptStrategy& prompt,
                                           RubricComponent bottleneck,
                                           const Critique& critique,
                                           const MemoryStore& memory,
                                           const std::vector<EditEntry>& table,
                                           const std::vector<std::string>& pool);

struct IterationRecord {
  int iteration = 0;
  PromptStrategy prompt;
  RubricScore score;
  bool valid = true;     // false when the evaluator backend failed
  bool accepted = false;
  std::optional<RubricComponent> bottleneck;
  std::string edit_id;   // edit applied to produce the next iteration
};

struct RehearsalResult {
  bool accepted = false;
  Video video;  // accepted video, or the best-found candidate
  RubricScore best_score;
  std::vector<IterationRecord> history;
  std::size_t generate_calls = 0;
  std::string routed_generator;
};

// The full per-task optimization loop: memory init, routing, then at most
// k_max iterations of construct/generate/evaluate/gate/refine. Acceptance
// updates long-term memory; exhaustion returns the highest-mean candidate
// with its score history.
RehearsalResult run_rehearsal(const RehearsalTask& task,
                              const BackendPool& backends,
                              MemoryStore& memory, double tau, int k_max,
                              const std::vector<EditEntry>& table =
                                  default_edit_tables());

}  // namespace navdiff
