#include "navdiff/wire.hpp"

#include <httplib.h>

#include "navdiff/error.hpp"

namespace navdiff::wire {

namespace {
constexpr char kB64Chars[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const std::uint8_t* data, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    std::uint32_t chunk = std::uint32_t(data[i]) << 16;
    if (i + 1 < len) chunk |= std::uint32_t(data[i + 1]) << 8;
    if (i + 2 < len) chunk |= std::uint32_t(data[i + 2]);
    out.push_back(kB64Chars[(chunk >> 18) & 63]);
    out.push_back(kB64Chars[(chunk >> 12) & 63]);
    out.push_back(i + 1 < len ? kB64Chars[(chunk >> 6) & 63] : '=');
    out.push_back(i + 2 < len ? kB64Chars[chunk & 63] : '=');
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    if (c == '=') return -1;
    throw FormatError("wire: invalid base64 character");
  };
  if (text.size() % 4 != 0) throw FormatError("wire: base64 length not 4-aligned");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    for (int k = 0; k < 4; ++k) v[k] = value(text[i + k]);
    const std::uint32_t chunk = (std::uint32_t(v[0]) << 18) |
                                (std::uint32_t(v[1]) << 12) |
                                ((v[2] < 0 ? 0u : std::uint32_t(v[2])) << 6) |
                                (v[3] < 0 ? 0u : std::uint32_t(v[3]));
    out.push_back((chunk >> 16) & 0xff);
    if (v[2] >= 0) out.push_back((chunk >> 8) & 0xff);
    if (v[3] >= 0) out.push_back(chunk & 0xff);
  }
  return out;
}

Json frame_to_json(const Frame& f) {
  return Json{{"w", f.width},
              {"h", f.height},
              {"px_b64", base64_encode(f.px.data(), f.px.size())}};
}

Frame frame_from_json(const Json& j) {
  Frame f(j.at("w").get<std::size_t>(), j.at("h").get<std::size_t>());
  std::vector<std::uint8_t> px = base64_decode(j.at("px_b64").get<std::string>());
  if (px.size() != f.px.size()) {
    throw FormatError("wire: frame payload size mismatch");
  }
  f.px = std::move(px);
  return f;
}

Json prompt_to_json(const PromptStrategy& p) {
  return Json{{"base", p.base},
              {"motion", p.motion},
              {"camera", p.camera},
              {"negative", p.negative},
              {"generator", p.generator}};
}

PromptStrategy prompt_from_json(const Json& j) {
  PromptStrategy p;
  p.base = j.at("base").get<std::string>();
  p.motion = j.at("motion").get<std::vector<std::string>>();
  p.camera = j.at("camera").get<std::vector<std::string>>();
  p.negative = j.at("negative").get<std::vector<std::string>>();
  p.generator = j.at("generator").get<std::string>();
  return p;
}

Json task_to_json(const RehearsalTask& t) {
  Json j{{"instruction", t.instruction},
         {"embodiment", t.embodiment},
         {"seed", t.seed},
         {"initial_frame", frame_to_json(t.initial_frame)}};
  j["goal_frame"] = t.goal_frame ? frame_to_json(*t.goal_frame) : Json();
  return j;
}

RehearsalTask task_from_json(const Json& j) {
  RehearsalTask t;
  t.instruction = j.at("instruction").get<std::string>();
  t.embodiment = j.at("embodiment").get<std::string>();
  t.seed = j.at("seed").get<std::uint64_t>();
  t.initial_frame = frame_from_json(j.at("initial_frame"));
  if (!j.at("goal_frame").is_null()) {
    t.goal_frame = frame_from_json(j.at("goal_frame"));
  }
  return t;
}

Json score_to_json(const RubricScore& s) {
  return Json{{"pa", s.pa},
              {"pp", s.pp},
              {"vq", s.vq},
              {"tag", failure_tag_name(s.critique.tag)},
              {"critique", s.critique.text}};
}

RubricScore score_from_json(const Json& j) {
  RubricScore s;
  s.pa = j.at("pa").get<double>();
  s.pp = j.at("pp").get<double>();
  s.vq = j.at("vq").get<double>();
  s.critique.tag = failure_tag_parse(j.at("tag").get<std::string>());
  s.critique.text = j.at("critique").get<std::string>();
  return s;
}

Json dispatch_request(const BackendPool& pool, const Json& request) {
  try {
    const std::string type = request.at("type").get<std::string>();
    if (type == "generate") {
      const PromptStrategy prompt = prompt_from_json(request.at("prompt"));
      const RehearsalTask task = task_from_json(request.at("task"));
      Video frames = pool.by_id(prompt.generator).generate(prompt, task);
      Json jf = Json::array();
      for (const Frame& f : frames) jf.push_back(frame_to_json(f));
      return Json{{"type", "generate_result"},
                  {"ok", true},
                  {"frames", jf},
                  {"error", Json()}};
    }
    if (type == "evaluate") {
      const RehearsalTask task = task_from_json(request.at("task"));
      Video frames;
      for (const Json& jf : request.at("frames"))
        frames.push_back(frame_from_json(jf));
      const RubricScore score = pool.evaluator->evaluate(frames, task);
      return Json{{"type", "evaluate_result"},
                  {"ok", true},
                  {"score", score_to_json(score)},
                  {"error", Json()}};
    }
    return Json{{"type", "error"},
                {"ok", false},
                {"error", "unknown request type '" + type + "'"}};
  } catch (const std::exception& e) {
    return Json{{"type", "error"}, {"ok", false}, {"error", e.what()}};
  }
}

Json LoopbackTransport::roundtrip(const Json& request) {
  // Serialize through text so the loopback exercises the exact wire bytes.
  const std::string body = request.dump();
  const Json parsed = Json::parse(body);
  return Json::parse(dispatch_request(pool_, parsed).dump());
}

Json HttpTransport::roundtrip(const Json& request) {
  const std::string body = request.dump();
  std::string last_error = "no attempts made";
  for (int attempt = 0; attempt < retries_; ++attempt) {
    httplib::Client client(host_, port_);
    client.set_connection_timeout(2, 0);
    client.set_read_timeout(10, 0);
    auto res = client.Post("/rehearsal", body, "application/json");
    if (res && res->status == 200) {
      try {
        return Json::parse(res->body);
      } catch (const std::exception& e) {
        last_error = std::string("bad response JSON: ") + e.what();
        continue;
      }
    }
    last_error = res ? "HTTP status " + std::to_string(res->status)
                     : "connection failed";
  }
  throw TransportError("wire: " + host_ + ":" + std::to_string(port_) +
                       " unreachable after " + std::to_string(retries_) +
                       " attempts (" + last_error + ")");
}

namespace {

Json expect_ok(const Json& response, const char* want_type) {
  if (!response.value("ok", false)) {
    const std::string err = response.value("error", Json()).is_string()
                                ? response["error"].get<std::string>()
                                : "unspecified backend error";
    throw TransportError("wire: backend error: " + err);
  }
  if (response.value("type", "") != want_type) {
    throw TransportError("wire: unexpected response type '" +
                         response.value("type", "") + "'");
  }
  return response;
}

}  // namespace

Video RemoteGeneratorBackend::generate(const PromptStrategy& prompt,
                                       const RehearsalTask& task) {
  PromptStrategy p = prompt;
  p.generator = id_;
  const Json request{{"type", "generate"},
                     {"prompt", prompt_to_json(p)},
                     {"task", task_to_json(task)}};
  const Json response =
      expect_ok(transport_->roundtrip(request), "generate_result");
  Video frames;
  for (const Json& jf : response.at("frames"))
    frames.push_back(frame_from_json(jf));
  return frames;
}

RubricScore RemoteEvaluatorBackend::evaluate(const Video& video,
                                             const RehearsalTask& task) {
  Json jf = Json::array();
  for (const Frame& f : video) jf.push_back(frame_to_json(f));
  const Json request{{"type", "evaluate"},
                     {"frames", jf},
                     {"task", task_to_json(task)}};
  const Json response =
      expect_ok(transport_->roundtrip(request), "evaluate_result");
  return score_from_json(response.at("score"));
}

BackendPool make_remote_backends(
    std::shared_ptr<Transport> transport,
    const std::vector<std::string>& generator_ids) {
  BackendPool pool;
  for (const std::string& id : generator_ids)
    pool.generators.push_back(
        std::make_shared<RemoteGeneratorBackend>(transport, id));
  pool.evaluator = std::make_shared<RemoteEvaluatorBackend>(transport);
  return pool;
}

}  // namespace navdiff::wire
