#pragma once

// Abstract interfaces over every neural model the pipeline consumes. Each role
// has a deterministic mock (mock_providers.hpp) and an HTTP implementation
// (http_providers.hpp); callers see only these interfaces and egoassist::Error.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "egoassist/image.hpp"
#include "egoassist/mask.hpp"
#include "egoassist/recording.hpp"
#include "egoassist/segmentation.hpp"

namespace egoassist {

enum class Modality { text, visual };

struct EmbeddingVector {
  std::vector<float> values;
  Modality modality = Modality::text;

  int dim() const noexcept { return static_cast<int>(values.size()); }
  double norm() const noexcept;
  /// Unit-length copy; throws ProviderFailure("degenerate embedding") for a
  /// zero or non-finite vector.
  EmbeddingVector normalized() const;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

class PointSegmentProvider {
 public:
  virtual ~PointSegmentProvider() = default;
  /// One mask prompted by `point` (in pixels of `image`).
  virtual MaskProposal point_segment(const Image& image, const GazePoint2D& point) = 0;
};

class MaskPropagationProvider {
 public:
  virtual ~MaskPropagationProvider() = default;
  /// Carries each object's mask onto `next_frame_index`; nullopt means lost.
  virtual std::map<int, std::optional<Mask>> propagate_masks(const Image& prev_frame,
                                                             const Image& next_frame,
                                                             const std::map<int, Mask>& masks,
                                                             int next_frame_index) = 0;
};

enum class VlmCallKind { intent, keyframes, summary, caption, answer, judge, generic };

std::string_view to_string(VlmCallKind kind) noexcept;
VlmCallKind vlm_call_kind_from_string(std::string_view text);

struct PromptImage {
  std::string label;
  Image image;
};

struct VlmRequest {
  VlmCallKind kind = VlmCallKind::generic;
  std::string prompt;
  std::vector<PromptImage> images;
  bool expects_json = false;
};

class VlmProvider {
 public:
  virtual ~VlmProvider() = default;
  virtual std::string complete(const VlmRequest& request) = 0;
  virtual std::size_t max_images() const { return 64; }
};

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual EmbeddingVector embed_text(std::string_view text) = 0;
};

class ImageEmbedder {
 public:
  virtual ~ImageEmbedder() = default;
  virtual EmbeddingVector embed_image(const Image& image) = 0;
};

class CaptionProvider {
 public:
  virtual ~CaptionProvider() = default;
  virtual std::string caption(const Image& image) = 0;
};

class JudgeProvider {
 public:
  virtual ~JudgeProvider() = default;
  /// Score in {1, 2, 3}: incorrect, partially correct, correct.
  virtual int judge_answer(std::string_view question, std::string_view reference_answer,
                           std::string_view candidate_answer) = 0;
};

/// First integer appearing in `reply`, if it is 1, 2 or 3.
std::optional<int> parse_judge_score(std::string_view reply);

/// Judge backed by a chat model: renders the rubric template, re-prompts up
/// to `max_reprompts` times when the reply holds no valid score.
class VlmJudge : public JudgeProvider {
 public:
  VlmJudge(std::shared_ptr<VlmProvider> vlm, std::string rubric_template, int max_reprompts = 2);
  int judge_answer(std::string_view question, std::string_view reference_answer,
                   std::string_view candidate_answer) override;

 private:
  std::shared_ptr<VlmProvider> vlm_;
  std::string rubric_;
  int max_reprompts_;
};

/// Captioner backed by a chat model with a fixed captioning prompt.
class VlmCaptioner : public CaptionProvider {
 public:
  VlmCaptioner(std::shared_ptr<VlmProvider> vlm, std::string prompt);
  std::string caption(const Image& image) override;

 private:
  std::shared_ptr<VlmProvider> vlm_;
  std::string prompt_;
};

struct ProviderSet {
  std::shared_ptr<PointSegmentProvider> segmenter;
  std::shared_ptr<MaskPropagationProvider> tracker;
  std::shared_ptr<VlmProvider> vlm;
  std::shared_ptr<TextEmbedder> text_embedder;
  std::shared_ptr<ImageEmbedder> image_embedder;
  std::shared_ptr<JudgeProvider> judge;
  std::shared_ptr<CaptionProvider> captioner;
};

}  // namespace egoassist
