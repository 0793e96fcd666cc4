#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "egoassist/prompts.hpp"
#include "egoassist/providers.hpp"
#include "egoassist/recording.hpp"
#include "egoassist/segmentation.hpp"

namespace egoassist {

enum class CueMode { gaze, speech, gaze_speech };

std::string_view to_string(CueMode mode) noexcept;
CueMode cue_mode_from_string(std::string_view text);
inline bool uses_gaze(CueMode m) noexcept { return m != CueMode::speech; }
inline bool uses_speech(CueMode m) noexcept { return m != CueMode::gaze; }

enum class IntentSource { ground_truth, inferred };

std::string_view to_string(IntentSource source) noexcept;
IntentSource intent_source_from_string(std::string_view text);

struct TaskIntent {
  std::string text;
  IntentSource source = IntentSource::inferred;

  friend bool operator==(const TaskIntent&, const TaskIntent&) = default;
};

struct KeyFrame {
  int frame_index = 0;
  std::string caption;
  std::string reason;

  friend bool operator==(const KeyFrame&, const KeyFrame&) = default;
};

struct SegmentKnowledge {
  int segment_id = 0;
  std::string description;
  std::vector<KeyFrame> keyframes;
  bool important = true;
  CueMode cue_mode = CueMode::gaze;

  /// Lenient-mode stand-in for a segment whose reply never validated.
  bool is_placeholder() const noexcept { return keyframes.empty(); }

  friend bool operator==(const SegmentKnowledge&, const SegmentKnowledge&) = default;
};

struct DemonstrationSummary {
  std::string text;

  friend bool operator==(const DemonstrationSummary&, const DemonstrationSummary&) = default;
};

struct KnowledgeOptions {
  int k = 3;
  int segment_sample_count = 30;
  int intent_sample_count = 50;
  int max_reprompts = 2;
  bool lenient = false;
  std::size_t history_cap = 20;
  double gaze_depth_m = kDefaultGazeDepthM;
  AnnotationStyle style;
  PromptLibrary prompts = PromptLibrary::defaults();
};

/// What happened while turning one segment into knowledge.
struct ExtractionTrace {
  int retries = 0;
  std::vector<std::string> warnings;
};

/// `count` indices spread evenly over [first, last] inclusive:
/// round(first + i * (last - first) / (count - 1)). All indices when the range
/// holds no more than `count`; the midpoint when count == 1.
std::vector<int> sample_range(int first, int last, int count);
std::vector<int> sample_frames(const TemporalSegment& segment, int count);

/// Frame image as the VLM sees it under `cue_mode`: gaze circle and hand dots
/// drawn for gaze modes.
Image prompt_frame(const DemonstrationRecording& recording, int frame_index, CueMode cue_mode,
                   const KnowledgeOptions& options, const FrameImageLoader& load_frame);

TaskIntent infer_intent(const DemonstrationRecording& recording, CueMode cue_mode, VlmProvider& vlm,
                        IntentSource requested = IntentSource::inferred,
                        const KnowledgeOptions& options = {}, const FrameImageLoader& load_frame = {});

SegmentKnowledge extract_segment_knowledge(const TemporalSegment& segment,
                                           const DemonstrationRecording& recording,
                                           const TaskIntent& intent,
                                           const std::vector<std::string>& history, CueMode cue_mode,
                                           VlmProvider& vlm, const KnowledgeOptions& options = {},
                                           const FrameImageLoader& load_frame = {},
                                           ExtractionTrace* trace = nullptr);

/// Same prompt and reply handling as extract_segment_knowledge, over an
/// explicit set of frames (the clustering baseline's pseudo-segments).
SegmentKnowledge caption_frame_set(int segment_id, const std::vector<int>& frame_indices,
                                   const DemonstrationRecording& recording, const TaskIntent& intent,
                                   const std::vector<std::string>& history,
                                   const std::vector<SpeechSegment>& utterances, CueMode cue_mode,
                                   VlmProvider& vlm, const KnowledgeOptions& options,
                                   const FrameImageLoader& load_frame, ExtractionTrace* trace);

DemonstrationSummary summarize_demonstration(const std::vector<SegmentKnowledge>& knowledge,
                                             const TaskIntent& intent, VlmProvider& vlm,
                                             const KnowledgeOptions& options = {});

struct KnowledgePass {
  TaskIntent intent;
  std::vector<SegmentKnowledge> segments;
  std::optional<DemonstrationSummary> summary;
  std::vector<ExtractionTrace> traces;
};

/// Intent, then every segment in order (each prompt sees prior descriptions),
/// then the optional summary.
KnowledgePass run_knowledge_pass(const DemonstrationRecording& recording,
                                 const std::vector<TemporalSegment>& segments, CueMode cue_mode,
                                 IntentSource intent_source, bool summary_enabled, VlmProvider& vlm,
                                 const KnowledgeOptions& options = {},
                                 const FrameImageLoader& load_frame = {});

nlohmann::json segment_knowledge_to_json(const SegmentKnowledge& knowledge);
SegmentKnowledge segment_knowledge_from_json(const nlohmann::json& j);

nlohmann::json knowledge_to_json(const std::string& demonstration_id, const KnowledgePass& pass);
KnowledgePass knowledge_from_json(const nlohmann::json& j);

}  // namespace egoassist
