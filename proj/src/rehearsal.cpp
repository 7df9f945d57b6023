#include "navdiff/rehearsal.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "navdiff/error.hpp"
#include "navdiff/rng.hpp"

namespace navdiff {

const char* failure_tag_name(FailureTag tag) {
  switch (tag) {
    case FailureTag::kNone: return "none";
    case FailureTag::kObstacleFixation: return "obstacle-fixation";
    case FailureTag::kScaleMismatch: return "scale-mismatch";
    case FailureTag::kInstructionDrift: return "instruction-drift";
    case FailureTag::kTemporalIncoherence: return "temporal-incoherence";
  }
  return "none";
}

FailureTag failure_tag_parse(const std::string& name) {
  for (FailureTag t : {FailureTag::kNone, FailureTag::kObstacleFixation,
                       FailureTag::kScaleMismatch, FailureTag::kInstructionDrift,
                       FailureTag::kTemporalIncoherence}) {
    if (name == failure_tag_name(t)) return t;
  }
  throw FormatError("rubric: unknown failure tag '" + name + "'");
}

bool gate(const RubricScore& score, double tau) { return score.mean() >= tau; }

const char* component_name(RubricComponent c) {
  switch (c) {
    case RubricComponent::kPA: return "PA";
    case RubricComponent::kPP: return "PP";
    case RubricComponent::kVQ: return "VQ";
  }
  return "PP";
}

RubricComponent identify_bottleneck(const RubricScore& s) {
  // Fixed tie priority PP > PA > VQ: safety first.
  RubricComponent best = RubricComponent::kPP;
  double best_val = s.pp;
  if (s.pa < best_val) {
    best = RubricComponent::kPA;
    best_val = s.pa;
  }
  if (s.vq < best_val) {
    best = RubricComponent::kVQ;
    best_val = s.vq;
  }
  return best;
}

void RehearsalTask::validate() const {
  if (instruction.empty()) {
    throw ContractError("rehearsal: task instruction must be nonempty");
  }
}

std::string PromptStrategy::serialize() const {
  std::ostringstream os;
  os << "base: " << base << "\n";
  os << "generator: " << generator << "\n";
  for (const auto& m : motion) os << "motion: " << m << "\n";
  for (const auto& c : camera) os << "camera: " << c << "\n";
  for (const auto& n : negative) os << "negative: " << n << "\n";
  return os.str();
}

std::uint64_t PromptStrategy::hash() const {
  const std::string s = serialize();
  return fnv1a(s.data(), s.size());
}

bool MemoryStore::has_template(const std::string& context,
                               const std::string& text) const {
  for (const auto& t : neg_templates)
    if (t.context == context && t.text == text) return true;
  return false;
}

void load_rules(MemoryStore& memory, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("rules: cannot read '" + path + "'");
  memory.rules.assign((std::istreambuf_iterator<char>(f)),
                      std::istreambuf_iterator<char>());
  memory.rules_checksum = fnv1a(memory.rules.data(), memory.rules.size());
}

// ---------------------------------------------------------------------------
// Long-term store persistence
// ---------------------------------------------------------------------------

namespace {
constexpr const char* kMltHeader = "NAVDIFF-MLT v1";
}

void memory_save(const MemoryStore& memory, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw FormatError("memory: cannot write '" + tmp + "'");
    f << kMltHeader << "\n";
    for (const auto& [key, stats] : memory.pairings)
      f << "pairing " << key.first << " " << key.second << " "
        << stats.successes << " " << stats.attempts << "\n";
    for (const auto& t : memory.neg_templates)
      f << "neg_template " << t.context << " " << t.text << "\n";
    for (const auto& r : memory.recovery_notes) f << "recovery " << r << "\n";
  }
  std::filesystem::rename(tmp, path);
}

MemoryStore memory_load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("memory: cannot read '" + path + "'");
  std::string line;
  if (!std::getline(f, line) || line != kMltHeader) {
    throw FormatError("memory: '" + path + "' is not a " +
                      std::string(kMltHeader) + " store");
  }
  MemoryStore m;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    if (kind == "pairing") {
      std::string emb, gen;
      PairingStats st;
      if (!(is >> emb >> gen >> st.successes >> st.attempts)) {
        throw FormatError("memory: malformed pairing at line " +
                          std::to_string(lineno) + " (" + kMltHeader + ")");
      }
      m.pairings[{emb, gen}] = st;
    } else if (kind == "neg_template") {
      NegativeTemplate t;
      if (!(is >> t.context)) {
        throw FormatError("memory: malformed neg_template at line " +
                          std::to_string(lineno) + " (" + kMltHeader + ")");
      }
      std::getline(is, t.text);
      if (!t.text.empty() && t.text.front() == ' ') t.text.erase(t.text.begin());
      m.neg_templates.push_back(std::move(t));
    } else if (kind == "recovery") {
      std::string r;
      std::getline(is, r);
      if (!r.empty() && r.front() == ' ') r.erase(r.begin());
      m.recovery_notes.push_back(std::move(r));
    } else {
      throw FormatError("memory: unknown record '" + kind + "' at line " +
                        std::to_string(lineno) + " (" + kMltHeader + ")");
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Edit tables
// ---------------------------------------------------------------------------

std::vector<EditEntry> default_edit_tables() {
  using C = RubricComponent;
  using K = EditKind;
  return {
      {C::kPA, "pa-forward-progress", K::kMotion,
       "steady forward progress toward the instructed target"},
      {C::kPA, "pa-terminate-at-goal", K::kMotion,
       "motion terminates at the instructed landmark"},
      {C::kPA, "pa-deliberate-pace", K::kMotion,
       "slow deliberate pace matching the instruction"},
      {C::kPP, "pp-no-clip", K::kNegative,
       "passing through solid obstacles"},
      {C::kPP, "pp-ground-contact", K::kNegative,
       "floating or sliding above the ground"},
      {C::kPP, "pp-scale-consistency", K::kNegative,
       "unrealistic displacement per step"},
      {C::kPP, "pp-stable-camera", K::kCamera,
       "stabilized ego camera with minimal sway"},
      {C::kVQ, "vq-switch-generator", K::kGeneratorSwitch, ""},
      {C::kVQ, "vq-smooth-path", K::kCamera,
       "smooth continuous camera path"},
      {C::kVQ, "vq-consistent-exposure", K::kCamera,
       "consistent exposure and sharp frames"},
  };
}

std::vector<EditEntry> load_edit_tables(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("edits: cannot read '" + path + "'");
  std::vector<EditEntry> table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string cat, id, kind;
    if (!(is >> cat >> id >> kind)) {
      throw FormatError("edits: malformed line " + std::to_string(lineno));
    }
    EditEntry e;
    if (cat == "PA") e.category = RubricComponent::kPA;
    else if (cat == "PP") e.category = RubricComponent::kPP;
    else if (cat == "VQ") e.category = RubricComponent::kVQ;
    else throw FormatError("edits: unknown category '" + cat + "'");
    e.id = id;
    if (kind == "motion") e.kind = EditKind::kMotion;
    else if (kind == "camera") e.kind = EditKind::kCamera;
    else if (kind == "negative") e.kind = EditKind::kNegative;
    else if (kind == "switch") e.kind = EditKind::kGeneratorSwitch;
    else throw FormatError("edits: unknown kind '" + kind + "'");
    std::getline(is, e.text);
    if (!e.text.empty() && e.text.front() == ' ') e.text.erase(e.text.begin());
    table.push_back(std::move(e));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Backend pool
// ---------------------------------------------------------------------------

std::vector<std::string> BackendPool::ids() const {
  std::vector<std::string> out;
  for (const auto& g : generators) out.push_back(g->id());
  return out;
}

GeneratorBackend& BackendPool::by_id(const std::string& id) const {
  for (const auto& g : generators)
    if (g->id() == id) return *g;
  throw ConfigError("backends: no generator with id '" + id + "'");
}

// ---------------------------------------------------------------------------
// Routing and prompting
// ---------------------------------------------------------------------------

std::string route_model(const RehearsalTask& task, const MemoryStore& memory,
                        const std::vector<std::string>& pool) {
  if (pool.empty()) throw ConfigError("route: empty generator pool");
  auto in_pool = [&](const std::string& id) {
    return std::find(pool.begin(), pool.end(), id) != pool.end();
  };
  std::string choice =
      task.goal_frame.has_value() && in_pool(kKeyframeGenerator)
          ? kKeyframeGenerator
          : (in_pool(kSingleImageGenerator) ? kSingleImageGenerator : pool[0]);

  // Experience override: a pairing with >= 3 recorded successes and a
  // strictly better success ratio than the default wins.
  double default_ratio = 0.0;
  auto it = memory.pairings.find({task.embodiment, choice});
  if (it != memory.pairings.end()) default_ratio = it->second.ratio();
  std::string best = choice;
  double best_ratio = default_ratio;
  for (const std::string& id : pool) {
    auto pit = memory.pairings.find({task.embodiment, id});
    if (pit == memory.pairings.end()) continue;
    if (pit->second.successes >= 3 && pit->second.ratio() > best_ratio) {
      best = id;
      best_ratio = pit->second.ratio();
    }
  }
  return best;
}

namespace {

std::string lowercase(std::string s) {
  for (char& c : s)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> embodiment_motion(const std::string& tag) {
  if (tag == "drone")
    return {"smooth banked ego flight", "constant altitude unless instructed"};
  if (tag == "wheeled")
    return {"planar gliding ego motion", "no lateral sliding"};
  return {"steady walking pace", "head-height ego viewpoint"};
}

}  // namespace

PromptStrategy construct_prompt(const RehearsalTask& task,
                                const std::string& generator,
                                const MemoryStore& memory) {
  task.validate();
  PromptStrategy p;
  // Ego-motion framing only; static scene content is never re-described.
  p.base = task.embodiment + " first-person view: " + task.instruction;
  p.motion = embodiment_motion(task.embodiment);
  p.generator = generator;

  const std::string instr = lowercase(task.instruction);
  for (const NegativeTemplate& t : memory.neg_templates) {
    const bool match = instr.find(lowercase(t.context)) != std::string::npos ||
                       t.context == task.embodiment;
    if (match &&
        std::find(p.negative.begin(), p.negative.end(), t.text) ==
            p.negative.end()) {
      p.negative.push_back(t.text);
    }
  }
  return p;
}

std::optional<RefineOutcome> refine_prompt(
    const PromptStrategy& prompt, RubricComponent bottleneck,
    const Critique& critique, const MemoryStore& memory,
    const std::vector<EditEntry>& table, const std::vector<std::string>& pool) {
  (void)critique;
  // Categories in tie-priority order starting from the bottleneck.
  std::vector<RubricComponent> cats{bottleneck};
  for (RubricComponent c :
       {RubricComponent::kPP, RubricComponent::kPA, RubricComponent::kVQ}) {
    if (c != bottleneck) cats.push_back(c);
  }

  for (RubricComponent cat : cats) {
    for (const EditEntry& e : table) {
      if (e.category != cat) continue;
      std::vector<PromptStrategy> candidates;
      if (e.kind == EditKind::kGeneratorSwitch) {
        for (const std::string& id : pool) {
          if (id == prompt.generator) continue;
          PromptStrategy c = prompt;
          c.generator = id;
          candidates.push_back(std::move(c));
        }
      } else {
        PromptStrategy c = prompt;
        std::vector<std::string>& list =
            e.kind == EditKind::kMotion
                ? c.motion
                : (e.kind == EditKind::kCamera ? c.camera : c.negative);
        if (std::find(list.begin(), list.end(), e.text) != list.end())
          continue;  // descriptor already present
        list.push_back(e.text);
        candidates.push_back(std::move(c));
      }
      for (PromptStrategy& c : candidates) {
        if (memory.tried_prompts.count(c.hash())) continue;  // anti-cycling
        return RefineOutcome{std::move(c), e.id};
      }
    }
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// The per-task loop
// ---------------------------------------------------------------------------

RehearsalResult run_rehearsal(const RehearsalTask& task,
                              const BackendPool& backends, MemoryStore& memory,
                              double tau, int k_max,
                              const std::vector<EditEntry>& table) {
  task.validate();
  if (backends.generators.empty() || !backends.evaluator) {
    throw ConfigError("rehearsal: backends not registered");
  }

  memory.clear_short_term();
  const std::vector<std::string> pool = backends.ids();
  const std::string routed = route_model(task, memory, pool);
  PromptStrategy prompt = construct_prompt(task, routed, memory);
  const std::vector<std::string> seeded_negatives = prompt.negative;

  RehearsalResult result;
  result.routed_generator = routed;
  double best_mean = -1.0;

  for (int iter = 1; iter <= k_max; ++iter) {
    IterationRecord rec;
    rec.iteration = iter;
    rec.prompt = prompt;
    memory.tried_prompts.insert(prompt.hash());

    Video video = backends.by_id(prompt.generator).generate(prompt, task);
    ++result.generate_calls;

    RubricScore score;
    bool valid = true;
    try {
      score = backends.evaluator->evaluate(video, task);
    } catch (const Error& e) {
      valid = false;
      score.critique.text = std::string("evaluator failed: ") + e.what();
    }
    rec.valid = valid;
    rec.score = score;

    if (valid && score.mean() > best_mean) {
      best_mean = score.mean();
      result.video = video;
      result.best_score = score;
    }

    if (valid && gate(score, tau)) {
      rec.accepted = true;
      result.history.push_back(std::move(rec));
      result.accepted = true;

      // Long-term updates on acceptance: pairing outcome plus any negative
      // prompts learned by refinement during this task.
      PairingStats& st = memory.pairings[{task.embodiment, prompt.generator}];
      ++st.successes;
      ++st.attempts;
      const std::string context = task.embodiment;
      for (const std::string& neg : prompt.negative) {
        const bool seeded =
            std::find(seeded_negatives.begin(), seeded_negatives.end(), neg) !=
            seeded_negatives.end();
        if (!seeded && !memory.has_template(context, neg)) {
          memory.neg_templates.push_back({context, neg});
        }
      }
      return result;
    }

    if (iter == k_max) {
      result.history.push_back(std::move(rec));
      break;
    }

    if (!valid) {
      // Evaluator failure: the iteration is consumed and the same strategy
      // is retried (no score to refine against).
      result.history.push_back(std::move(rec));
      continue;
    }

    const RubricComponent b = identify_bottleneck(score);
    rec.bottleneck = b;
    std::optional<RefineOutcome> refined =
        refine_prompt(prompt, b, score.critique, memory, table, pool);
    if (!refined) {
      result.history.push_back(std::move(rec));
      break;  // every edit exhausted; stop early rather than repeat a prompt
    }
    rec.edit_id = refined->edit_id;
    memory.short_term.push_back({prompt, b, score.critique, refined->edit_id});
    result.history.push_back(std::move(rec));
    prompt = std::move(refined->prompt);
  }

  // Exhaustion: no new long-term records. Attempt counters update only on
  // pairings that prior acceptances already created, keeping routing ratios
  // honest.
  auto it = memory.pairings.find({task.embodiment, routed});
  if (it != memory.pairings.end()) ++it->second.attempts;
  return result;
}

}  // namespace navdiff
