#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "navdiff/rehearsal.hpp"

namespace navdiff::wire {

using Json = nlohmann::json;

// Backend wire contract. Every message is a single JSON object with a
// "type" discriminator; frames travel as base-64 rasters.
//
//   frame          {"w": u32, "h": u32, "px_b64": string}
//   prompt         {"base": s, "motion": [s], "camera": [s],
//                   "negative": [s], "generator": s}
//   task           {"instruction": s, "embodiment": s, "seed": u64,
//                   "initial_frame": frame, "goal_frame": frame|null}
//                  (grounding world state is local-only and never leaves
//                   the process)
//   score          {"pa": f, "pp": f, "vq": f, "tag": s, "critique": s}
//
//   generate request   {"type": "generate", "prompt": prompt, "task": task}
//   generate response  {"type": "generate_result", "ok": bool,
//                       "frames": [frame], "error": s|null}
//   evaluate request   {"type": "evaluate", "frames": [frame], "task": task}
//   evaluate response  {"type": "evaluate_result", "ok": bool,
//                       "score": score, "error": s|null}
//
// The in-process loopback and the HTTP client speak exactly this schema.

std::string base64_encode(const std::uint8_t* data, std::size_t len);
std::vector<std::uint8_t> base64_decode(const std::string& text);

Json frame_to_json(const Frame& f);
Frame frame_from_json(const Json& j);
Json prompt_to_json(const PromptStrategy& p);
PromptStrategy prompt_from_json(const Json& j);
Json task_to_json(const RehearsalTask& t);
RehearsalTask task_from_json(const Json& j);
Json score_to_json(const RubricScore& s);
RubricScore score_from_json(const Json& j);

// Server-side dispatch shared by the loopback transport and the HTTP
// server: routes a request to the pool and wraps the response.
Json dispatch_request(const BackendPool& pool, const Json& request);

class Transport {
 public:
  virtual ~Transport() = default;
  virtual Json roundtrip(const Json& request) = 0;
};

// In-process mock: requests serialize through the schema and dispatch to a
// local pool, exercising the exact bytes a remote service would see.
class LoopbackTransport : public Transport {
 public:
  explicit LoopbackTransport(const BackendPool& pool) : pool_(pool) {}
  Json roundtrip(const Json& request) override;

 private:
  const BackendPool& pool_;
};

// HTTP client posting JSON to <host>:<port>/rehearsal with bounded retries;
// persistent failures surface as TransportError.
class HttpTransport : public Transport {
 public:
  HttpTransport(std::string host, int port, int retries = 3)
      : host_(std::move(host)), port_(port), retries_(retries) {}
  Json roundtrip(const Json& request) override;

 private:
  std::string host_;
  int port_;
  int retries_;
};

class RemoteGeneratorBackend : public GeneratorBackend {
 public:
  RemoteGeneratorBackend(std::shared_ptr<Transport> transport, std::string id)
      : transport_(std::move(transport)), id_(std::move(id)) {}
  std::string id() const override { return id_; }
  Video generate(const PromptStrategy& prompt,
                 const RehearsalTask& task) override;

 private:
  std::shared_ptr<Transport> transport_;
  std::string id_;
};

class RemoteEvaluatorBackend : public EvaluatorBackend {
 public:
  explicit RemoteEvaluatorBackend(std::shared_ptr<Transport> transport)
      : transport_(std::move(transport)) {}
  RubricScore evaluate(const Video& video, const RehearsalTask& task) override;

 private:
  std::shared_ptr<Transport> transport_;
};

// A remote pool presenting the generator ids plus evaluator over one
// transport.
BackendPool make_remote_backends(std::shared_ptr<Transport> transport,
                                 const std::vector<std::string>& generator_ids);

}  // namespace navdiff::wire
