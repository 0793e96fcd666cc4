#pragma once

// Deterministic scripted providers. Every mock is thread-safe and, for a given
// script and seed, returns byte-identical results across runs.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "egoassist/providers.hpp"

namespace egoassist {

enum class ExhaustionPolicy { repeat_last, fail };

/// Replies with the body of one "## <section>" block of the prompt, either
/// verbatim or wrapped as {"<json_key>": body}. `fallback` replaces an absent
/// or empty section.
struct EchoResponse {
  std::string section;
  std::string json_key;
  std::string fallback;
};

using MockResponse = std::variant<std::string, EchoResponse>;

struct MockScript {
  std::map<VlmCallKind, std::vector<MockResponse>> responses;
  ExhaustionPolicy exhaustion = ExhaustionPolicy::repeat_last;

  static MockScript from_json(const nlohmann::json& j);
  static MockScript load(const std::filesystem::path& path);
};

/// Kinds with no scripted responses fall back to a built-in responder that
/// produces well-formed replies (see default_response).
class MockVlm : public VlmProvider {
 public:
  explicit MockVlm(MockScript script = {});

  std::string complete(const VlmRequest& request) override;

  struct Call {
    VlmCallKind kind;
    std::string prompt;
    std::size_t image_count;
  };
  std::vector<Call> calls() const;
  std::size_t call_count() const;

  static std::string default_response(const VlmRequest& request);

 private:
  mutable std::mutex mutex_;
  MockScript script_;
  std::map<VlmCallKind, std::size_t> cursor_;
  std::vector<Call> calls_;
};

/// Unscripted frames get a disc of `disc_radius` px around the point.
class MockPointSegmenter : public PointSegmentProvider {
 public:
  explicit MockPointSegmenter(double disc_radius = 5.0);

  void script_mask(int frame_index, Mask mask);
  MaskProposal point_segment(const Image& image, const GazePoint2D& point) override;

  static std::shared_ptr<MockPointSegmenter> from_json(const nlohmann::json& j);

 private:
  std::mutex mutex_;
  double radius_;
  std::map<int, Mask> scripted_;
};

/// Translates masks by a per-frame offset (default (0,0)) and drops objects
/// scripted as lost on that frame.
class MockMaskPropagator : public MaskPropagationProvider {
 public:
  void script_offset(int frame_index, int dx, int dy);
  void script_lost(int object_id, int from_frame, int to_frame);

  std::map<int, std::optional<Mask>> propagate_masks(const Image& prev_frame, const Image& next_frame,
                                                     const std::map<int, Mask>& masks,
                                                     int next_frame_index) override;

  static std::shared_ptr<MockMaskPropagator> from_json(const nlohmann::json& j);

 private:
  std::mutex mutex_;
  std::map<int, std::pair<int, int>> offsets_;
  std::map<int, std::set<int>> lost_;  // frame -> object ids
};

/// Seeded hash of the input bytes expanded to `dim` uniform values, then
/// L2-normalized.
std::vector<float> hashed_unit_vector(const std::uint8_t* data, std::size_t size, int dim,
                                      std::uint64_t seed);

class HashingTextEmbedder : public TextEmbedder {
 public:
  HashingTextEmbedder(int dim, std::uint64_t seed);
  EmbeddingVector embed_text(std::string_view text) override;

 private:
  int dim_;
  std::uint64_t seed_;
};

class HashingImageEmbedder : public ImageEmbedder {
 public:
  HashingImageEmbedder(int dim, std::uint64_t seed);
  EmbeddingVector embed_image(const Image& image) override;

 private:
  int dim_;
  std::uint64_t seed_;
};

/// Scripted captions in order, or "Egocentric view <hash>" when unscripted.
class MockCaptioner : public CaptionProvider {
 public:
  explicit MockCaptioner(std::vector<std::string> captions = {},
                         ExhaustionPolicy exhaustion = ExhaustionPolicy::repeat_last);
  std::string caption(const Image& image) override;

 private:
  std::mutex mutex_;
  std::vector<std::string> captions_;
  ExhaustionPolicy exhaustion_;
  std::size_t cursor_ = 0;
};

/// Either replays scripted scores or, in containment mode, scores 3 when the
/// candidate contains the reference answer (case-insensitive) and 1 otherwise.
class MockJudge : public JudgeProvider {
 public:
  static MockJudge scripted(std::vector<int> scores,
                            ExhaustionPolicy exhaustion = ExhaustionPolicy::repeat_last);
  static MockJudge containment();

  MockJudge(const MockJudge& other);

  int judge_answer(std::string_view question, std::string_view reference_answer,
                   std::string_view candidate_answer) override;

 private:
  MockJudge() = default;

  std::mutex mutex_;
  bool containment_ = false;
  std::vector<int> scores_;
  ExhaustionPolicy exhaustion_ = ExhaustionPolicy::repeat_last;
  std::size_t cursor_ = 0;
};

}  // namespace egoassist
