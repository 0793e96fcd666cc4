#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "egoassist/knowledge.hpp"
#include "egoassist/providers.hpp"
#include "egoassist/retrieval.hpp"

namespace egoassist {

/// How a query is grounded: retrieved segments, nothing, or the demonstration
/// frames nearest the query image.
enum class AnswerMode { rag, zero_shot, frames_as_context };

std::string_view to_string(AnswerMode mode) noexcept;
AnswerMode answer_mode_from_string(std::string_view text);

/// A processed demonstration as the assistant consumes it. `index` is absent
/// for demonstrations loaded only for the baselines.
struct Demonstration {
  std::string id;
  DemonstrationRecording recording;
  TaskIntent intent;
  std::optional<DemonstrationSummary> summary;
  std::optional<VectorIndex> index;
  std::vector<TemporalSegment> segments;
  CueMode cue_mode = CueMode::gaze;

  /// Embedding of every frame, computed on first use and cached.
  const std::vector<EmbeddingVector>& frame_embeddings(ImageEmbedder& embedder) const;

 private:
  mutable std::mutex frame_mutex_;
  mutable std::optional<std::vector<EmbeddingVector>> frame_embeddings_;
};

struct Query {
  std::string question;
  Image image;
  std::string image_ref;
  std::optional<GazePoint2D> gaze_point;
  double timestamp_s = 0;
};

struct TraceEntry {
  int segment_id = 0;
  double score = 0;
  double s_textual = 0;
  double s_visual = 0;

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct ChatTurn {
  std::string question;
  std::string image_ref;
  std::optional<GazePoint2D> gaze_point;
  double timestamp_s = 0;
  std::string caption;
  std::string answer_text;
  AnswerMode mode = AnswerMode::rag;
  std::vector<TraceEntry> retrieval_trace;
  std::vector<int> context_frames;
};

struct SessionConfig {
  RetrievalConfig retrieval;
  bool history_enabled = true;
  AnswerMode mode = AnswerMode::rag;
  bool use_summary = true;  // only has an effect when the demonstration has one
};

nlohmann::json session_config_to_json(const SessionConfig& config);
SessionConfig session_config_from_json(const nlohmann::json& j, SessionConfig base = {});

struct Session {
  std::string session_id;
  std::string demonstration_id;
  TaskIntent intent;
  std::vector<ChatTurn> turns;
  SessionConfig config;
  std::optional<DemonstrationSummary> summary;
  /// Query images of `turns`, kept so history can be replayed without disk reads.
  std::vector<Image> turn_images;
};

nlohmann::json session_to_json(const Session& session);
/// Turn images are reloaded from each turn's image_ref, relative to `image_dir`.
Session session_from_json(const nlohmann::json& j, const std::filesystem::path& image_dir = {});

struct Answer {
  std::string text;
  std::vector<int> retrieved_segment_ids;
  double latency_ms = 0;
  std::string caption;
  std::vector<TraceEntry> retrieval_trace;
  std::vector<int> context_frames;
};

struct AssistOptions {
  std::size_t max_prompt_images = 20;
  int max_reprompts = 2;
  int frames_as_context_count = 10;
  AnnotationStyle style;
  PromptLibrary prompts = PromptLibrary::defaults();
};

/// The prompt and images sent for one query, before the provider call.
struct AssembledPrompt {
  VlmRequest request;
  std::string caption;
  std::vector<TraceEntry> retrieval_trace;
  std::vector<int> context_frames;
  std::size_t history_images = 0;
};

AssembledPrompt assemble_answer_prompt(const Session& session, const Query& query, const Demonstration& demo,
                                       ProviderSet& providers, const AssistOptions& options = {});

/// "answer" string of a JSON reply, or nullopt when absent or malformed.
std::optional<std::string> parse_answer_reply(std::string_view reply);

/// Caption, embed, retrieve, prompt, parse; on success appends one turn to
/// `session`. On any failure `session` is left untouched.
Answer answer_query(Session& session, const Query& query, const Demonstration& demo, ProviderSet& providers,
                    const AssistOptions& options = {});

/// Demonstration registry plus sessions. Sessions are persisted under
/// `session_dir` (when set) after every turn and reloaded at construction.
class AssistEngine {
 public:
  AssistEngine(ProviderSet providers, AssistOptions options = {},
               std::optional<std::filesystem::path> session_dir = std::nullopt);

  void register_demonstration(std::shared_ptr<Demonstration> demo);
  std::shared_ptr<const Demonstration> demonstration(const std::string& id) const;
  std::vector<std::string> demonstration_ids() const;

  Session create_session(const std::string& demonstration_id, const SessionConfig& config);
  Session get_session(const std::string& session_id) const;
  Answer answer_query(const std::string& session_id, const Query& query);

  ProviderSet& providers() noexcept { return providers_; }
  const AssistOptions& options() const noexcept { return options_; }

 private:
  struct Slot {
    std::mutex turn_mutex;           // serializes answer_query per session
    mutable std::mutex state_mutex;  // guards `session`
    Session session;
  };

  std::shared_ptr<Slot> slot(const std::string& session_id) const;
  void persist(const Session& session) const;
  void load_sessions();

  ProviderSet providers_;
  AssistOptions options_;
  std::optional<std::filesystem::path> session_dir_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Demonstration>> demonstrations_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
};

std::string new_session_id();

}  // namespace egoassist
