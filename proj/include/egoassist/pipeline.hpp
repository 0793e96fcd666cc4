#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "egoassist/assist.hpp"
#include "egoassist/knowledge.hpp"
#include "egoassist/provider_config.hpp"
#include "egoassist/retrieval.hpp"
#include "egoassist/segmentation.hpp"

namespace egoassist {

/// How a demonstration is cut into indexable units: tracked-gaze or speech
/// segments (per cue mode), or k-means clusters of frame embeddings.
enum class ContextMethod { segments, kmeans };

std::string_view to_string(ContextMethod method) noexcept;
ContextMethod context_method_from_string(std::string_view text);

struct PipelineConfig {
  CueMode cue_mode = CueMode::gaze;
  IntentSource intent_source = IntentSource::ground_truth;
  bool summary_enabled = false;
  ContextMethod context_method = ContextMethod::segments;
  int kmeans_k = 10;
  int kmeans_per_cluster = 3;
  SegmentationParams segmentation;
  RetrievalConfig retrieval;
  KnowledgeOptions knowledge;
  AssistOptions assist;
  bool history_enabled = true;
  double gaze_depth_m = kDefaultGazeDepthM;
  std::optional<std::filesystem::path> providers_path;
  std::optional<std::filesystem::path> prompts_dir;
  std::filesystem::path workspace = "workspace";
  std::uint64_t seed = 42;

  /// Overlays `j` on the defaults. Relative paths resolve against
  /// `base_dir`; referenced files must exist.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);

  /// Throws UsageError on any invalid nested setting.
  void validate() const;
  /// Config for a fresh session under this pipeline config.
  SessionConfig session_config() const;
  /// Prompt library from prompts_dir, or the compiled-in defaults.
  PromptLibrary prompts() const;
  ProviderConfig provider_config() const;
};

nlohmann::json pipeline_config_to_json(const PipelineConfig& config);

struct ProcessReport {
  std::string demonstration_id;
  std::size_t segment_count = 0;
  std::size_t keyframe_count = 0;
  std::size_t visual_vector_count = 0;
  std::vector<std::string> warnings;
  std::filesystem::path out_dir;
};

/// Segments, extracts knowledge and indexes one recording, writing
/// segments.json, knowledge.json, index.json and demonstration.json to
/// `out_dir`.
ProcessReport process_demonstration(const std::filesystem::path& recording_path, const PipelineConfig& config,
                                    ProviderSet& providers, const std::filesystem::path& out_dir);

/// Reads a directory written by process_demonstration. UnknownDemonstration
/// when it holds no demonstration.json.
std::shared_ptr<Demonstration> load_demonstration(const std::filesystem::path& dir);

/// A demonstration with intent but no index, for the zero-shot and
/// frames-as-context conditions.
std::shared_ptr<Demonstration> baseline_demonstration(const std::filesystem::path& recording_path,
                                                      const PipelineConfig& config, ProviderSet& providers);

}  // namespace egoassist
