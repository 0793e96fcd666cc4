#include "egoassist/mock_providers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "egoassist/error.hpp"
#include "egoassist/prompts.hpp"

namespace egoassist {

using nlohmann::json;

namespace {

ExhaustionPolicy exhaustion_from_string(const std::string& s) {
  if (s == "repeat_last") return ExhaustionPolicy::repeat_last;
  if (s == "fail") return ExhaustionPolicy::fail;
  throw Error(ErrorCode::UsageError, "unknown exhaustion policy '" + s + "'");
}

// Index of the next scripted item, or nullopt when the script is exhausted
// under the fail policy.
std::optional<std::size_t> advance(std::size_t& cursor, std::size_t size, ExhaustionPolicy policy) {
  if (cursor < size) return cursor++;
  if (policy == ExhaustionPolicy::fail || size == 0) return std::nullopt;
  return size - 1;
}

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t size, std::uint64_t h) {
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string render_echo(const EchoResponse& echo, const VlmRequest& request) {
  std::string body = extract_prompt_section(request.prompt, echo.section);
  if (body.empty()) body = echo.fallback;
  if (echo.json_key.empty()) return body;
  return json{{echo.json_key, body}}.dump();
}

}  // namespace

MockScript MockScript::from_json(const json& j) {
  MockScript script;
  script.exhaustion = exhaustion_from_string(j.value("exhaustion", "repeat_last"));
  if (!j.contains("responses")) return script;
  for (const auto& [kind_name, items] : j.at("responses").items()) {
    const auto kind = vlm_call_kind_from_string(kind_name);
    auto& list = script.responses[kind];
    for (const auto& item : items) {
      if (item.is_string()) {
        list.emplace_back(item.get<std::string>());
      } else if (item.is_object() && item.contains("echo")) {
        list.emplace_back(EchoResponse{item.at("echo").get<std::string>(), item.value("json_key", ""),
                                       item.value("fallback", "")});
      } else {
        list.emplace_back(item.dump());
      }
    }
    if (list.empty()) {
      throw Error(ErrorCode::UsageError, "mock script for kind '" + kind_name + "' is empty");
    }
  }
  return script;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedLine, path.string() + ": " + e.what());
  }
}

MockVlm::MockVlm(MockScript script) : script_(std::move(script)) {}

std::string MockVlm::complete(const VlmRequest& request) {
  std::lock_guard lock(mutex_);
  calls_.push_back({request.kind, request.prompt, request.images.size()});
  const auto it = script_.responses.find(request.kind);
  if (it == script_.responses.end()) return default_response(request);
  const auto index = advance(cursor_[request.kind], it->second.size(), script_.exhaustion);
  if (!index) throw Error(ErrorCode::ProviderFailure, "script exhausted");
  const auto& response = it->second[*index];
  if (const auto* text = std::get_if<std::string>(&response)) return *text;
  return render_echo(std::get<EchoResponse>(response), request);
}

std::vector<MockVlm::Call> MockVlm::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::size_t MockVlm::call_count() const {
  std::lock_guard lock(mutex_);
  return calls_.size();
}

std::string MockVlm::default_response(const VlmRequest& request) {
  switch (request.kind) {
    case VlmCallKind::intent:
      return "The user is performing the demonstrated task.";
    case VlmCallKind::keyframes: {
      const int n = static_cast<int>(request.images.size());
      std::vector<int> picks;
      for (const int p : {0, n / 2, n - 1}) {
        if (p >= 0 && std::find(picks.begin(), picks.end(), p) == picks.end()) picks.push_back(p);
      }
      std::string description = "Demonstration segment shown in " + std::to_string(n) + " frames.";
      const auto speech = extract_prompt_section(request.prompt, "Speech Utterance");
      if (!speech.empty()) description += " The user said: " + speech;
      json frames = json::array();
      for (const int p : picks) {
        frames.push_back({{"frame_number", p},
                          {"reason", "Representative moment at frame " + std::to_string(p) + "."},
                          {"description", description}});
      }
      return json{{"task_segment_description", description},
                  {"key_frames", frames},
                  {"is_segment_important", true}}
          .dump();
    }
    case VlmCallKind::summary: {
      auto body = extract_prompt_section(request.prompt, "Segments");
      return body.empty() ? "The demonstration." : body;
    }
    case VlmCallKind::caption:
      return "An egocentric view.";
    case VlmCallKind::answer: {
      auto body = extract_prompt_section(request.prompt, "Expert Experience");
      return json{{"answer", body.empty() ? "I do not have enough context to answer that." : body}}.dump();
    }
    case VlmCallKind::judge:
      return "1";
    case VlmCallKind::generic:
      return "OK";
  }
  return "OK";
}

MockPointSegmenter::MockPointSegmenter(double disc_radius) : radius_(disc_radius) {}

void MockPointSegmenter::script_mask(int frame_index, Mask mask) {
  std::lock_guard lock(mutex_);
  scripted_[frame_index] = std::move(mask);
}

MaskProposal MockPointSegmenter::point_segment(const Image& image, const GazePoint2D& point) {
  if (!(point.u >= 0 && point.v >= 0 && point.u < image.width() && point.v < image.height())) {
    throw Error(ErrorCode::OutOfBounds, "prompt point outside the image");
  }
  std::lock_guard lock(mutex_);
  MaskProposal out;
  out.frame_index = point.frame_index;
  out.source_gaze = point;
  const auto it = scripted_.find(point.frame_index);
  out.mask = it != scripted_.end() ? it->second
                                   : Mask::disc(image.width(), image.height(), point.u, point.v, radius_);
  return out;
}

std::shared_ptr<MockPointSegmenter> MockPointSegmenter::from_json(const json& j) {
  auto seg = std::make_shared<MockPointSegmenter>(j.value("disc_radius", 5.0));
  if (j.contains("masks")) {
    for (const auto& m : j["masks"]) seg->script_mask(m.at("frame_index").get<int>(), mask_from_json(m));
  }
  return seg;
}

void MockMaskPropagator::script_offset(int frame_index, int dx, int dy) {
  std::lock_guard lock(mutex_);
  offsets_[frame_index] = {dx, dy};
}

void MockMaskPropagator::script_lost(int object_id, int from_frame, int to_frame) {
  std::lock_guard lock(mutex_);
  for (int f = from_frame; f <= to_frame; ++f) lost_[f].insert(object_id);
}

std::map<int, std::optional<Mask>> MockMaskPropagator::propagate_masks(
    const Image& prev_frame, const Image& next_frame, const std::map<int, Mask>& masks,
    int next_frame_index) {
  if (prev_frame.width() != next_frame.width() || prev_frame.height() != next_frame.height()) {
    throw Error(ErrorCode::DimensionMismatch, "frames differ in size");
  }
  std::lock_guard lock(mutex_);
  const auto off = offsets_.count(next_frame_index) ? offsets_.at(next_frame_index)
                                                    : std::pair<int, int>{0, 0};
  const auto lost_it = lost_.find(next_frame_index);
  std::map<int, std::optional<Mask>> out;
  for (const auto& [id, mask] : masks) {
    if (lost_it != lost_.end() && lost_it->second.count(id)) {
      out[id] = std::nullopt;
      continue;
    }
    Mask moved = mask.translated(off.first, off.second);
    if (moved.empty()) {
      out[id] = std::nullopt;
    } else {
      out[id] = std::move(moved);
    }
  }
  return out;
}

std::shared_ptr<MockMaskPropagator> MockMaskPropagator::from_json(const json& j) {
  auto prop = std::make_shared<MockMaskPropagator>();
  if (j.contains("offsets")) {
    for (const auto& o : j["offsets"]) {
      prop->script_offset(o.at("frame_index").get<int>(), o.value("dx", 0), o.value("dy", 0));
    }
  }
  if (j.contains("lost")) {
    for (const auto& l : j["lost"]) {
      prop->script_lost(l.at("object_id").get<int>(), l.at("from").get<int>(), l.at("to").get<int>());
    }
  }
  return prop;
}

std::vector<float> hashed_unit_vector(const std::uint8_t* data, std::size_t size, int dim,
                                      std::uint64_t seed) {
  if (dim < 1) throw Error(ErrorCode::UsageError, "embedding dim must be >= 1");
  std::uint64_t state = fnv1a(data, size, 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL));
  std::vector<double> raw(static_cast<std::size_t>(dim));
  double norm2 = 0;
  do {
    norm2 = 0;
    for (auto& v : raw) {
      // 53 random bits mapped to [-1, 1).
      v = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
      norm2 += v * v;
    }
  } while (norm2 == 0);
  const double norm = std::sqrt(norm2);
  std::vector<float> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(),
                 [norm](double v) { return static_cast<float>(v / norm); });
  return out;
}

HashingTextEmbedder::HashingTextEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}

EmbeddingVector HashingTextEmbedder::embed_text(std::string_view text) {
  if (text.empty()) throw Error(ErrorCode::ProviderFailure, "empty text to embed");
  return EmbeddingVector{hashed_unit_vector(reinterpret_cast<const std::uint8_t*>(text.data()),
                                            text.size(), dim_, seed_),
                         Modality::text};
}

HashingImageEmbedder::HashingImageEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {}

EmbeddingVector HashingImageEmbedder::embed_image(const Image& image) {
  if (image.empty()) throw Error(ErrorCode::ProviderFailure, "empty image to embed");
  // Mix the shape in so equal byte payloads of different sizes differ.
  std::vector<std::uint8_t> bytes = image.bytes();
  for (const int v : {image.width(), image.height()}) {
    for (int s = 0; s < 32; s += 8) bytes.push_back(static_cast<std::uint8_t>((v >> s) & 0xff));
  }
  return EmbeddingVector{hashed_unit_vector(bytes.data(), bytes.size(), dim_, seed_), Modality::visual};
}

MockCaptioner::MockCaptioner(std::vector<std::string> captions, ExhaustionPolicy exhaustion)
    : captions_(std::move(captions)), exhaustion_(exhaustion) {}

std::string MockCaptioner::caption(const Image& image) {
  std::lock_guard lock(mutex_);
  if (captions_.empty()) {
    const auto h = fnv1a(image.bytes().data(), image.bytes().size(), 0xcbf29ce484222325ULL);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return std::string("Egocentric view ") + hex;
  }
  const auto index = advance(cursor_, captions_.size(), exhaustion_);
  if (!index) throw Error(ErrorCode::ProviderFailure, "script exhausted");
  return captions_[*index];
}

MockJudge MockJudge::scripted(std::vector<int> scores, ExhaustionPolicy exhaustion) {
  for (const int s : scores) {
    if (s < 1 || s > 3) throw Error(ErrorCode::InvalidSigma, "scripted score " + std::to_string(s));
  }
  MockJudge judge;
  judge.scores_ = std::move(scores);
  judge.exhaustion_ = exhaustion;
  return judge;
}

MockJudge MockJudge::containment() {
  MockJudge judge;
  judge.containment_ = true;
  return judge;
}

MockJudge::MockJudge(const MockJudge& other)
    : containment_(other.containment_),
      scores_(other.scores_),
      exhaustion_(other.exhaustion_),
      cursor_(other.cursor_) {}

int MockJudge::judge_answer(std::string_view question, std::string_view reference_answer,
                            std::string_view candidate_answer) {
  if (question.empty() || reference_answer.empty() || candidate_answer.empty()) {
    throw Error(ErrorCode::UsageError, "judge inputs must be non-empty");
  }
  std::lock_guard lock(mutex_);
  if (containment_) {
    const auto lower = [](std::string_view s) {
      std::string out(s);
      std::transform(out.begin(), out.end(), out.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      return out;
    };
    return lower(candidate_answer).find(lower(reference_answer)) != std::string::npos ? 3 : 1;
  }
  const auto index = advance(cursor_, scores_.size(), exhaustion_);
  if (!index) throw Error(ErrorCode::ProviderFailure, "script exhausted");
  return scores_[*index];
}

}  // namespace egoassist
