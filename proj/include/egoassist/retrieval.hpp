#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "egoassist/knowledge.hpp"
#include "egoassist/providers.hpp"

namespace egoassist {

enum class VisualAggregation { max, mean };

struct RetrievalConfig {
  double lambda_textual = 0.5;
  double lambda_visual = 0.5;
  int top_k = 3;
  bool include_unimportant = false;
  VisualAggregation visual_aggregation = VisualAggregation::max;

  /// Throws UsageError unless both weights lie in [0,1], sum to 1 within
  /// 1e-9, and top_k >= 1.
  void validate() const;

  friend bool operator==(const RetrievalConfig&, const RetrievalConfig&) = default;
};

nlohmann::json retrieval_config_to_json(const RetrievalConfig& config);
/// Missing keys keep their defaults.
RetrievalConfig retrieval_config_from_json(const nlohmann::json& j, RetrievalConfig base = {});

struct SegmentEntry {
  int segment_id = 0;
  std::vector<EmbeddingVector> visual_embeddings;
  EmbeddingVector text_embedding;
  SegmentKnowledge knowledge;
  std::vector<std::string> keyframe_image_refs;

  friend bool operator==(const SegmentEntry&, const SegmentEntry&) = default;
};

struct Score {
  double s = 0;
  double s_textual = 0;
  double s_visual = 0;
};

struct RetrievedEntry {
  SegmentEntry entry;
  Score score;
};

struct RetrievalResult {
  std::vector<RetrievedEntry> entries;

  std::vector<int> segment_ids() const;
};

/// a.b / (|a| |b|), accumulated in double. Throws DimensionMismatch.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

Score score_entry(const SegmentEntry& entry, const EmbeddingVector& query_text,
                  const EmbeddingVector& query_visual, const RetrievalConfig& config);

/// Text embedded from the description and keyframe captions, one per line.
std::string segment_embedding_text(const SegmentKnowledge& knowledge);

SegmentEntry index_segment(const SegmentKnowledge& knowledge, const std::vector<Image>& keyframe_images,
                           TextEmbedder& text_embedder, ImageEmbedder& image_embedder,
                           std::vector<std::string> keyframe_image_refs = {});

/// Sorted by s descending, ties by ascending segment_id, truncated to top_k.
/// Throws EmptyStore when nothing survives the importance filter.
RetrievalResult retrieve_top_k(const std::vector<SegmentEntry>& store, const EmbeddingVector& query_text,
                               const EmbeddingVector& query_visual, const RetrievalConfig& config);

struct VectorIndex {
  std::string demonstration_id;
  RetrievalConfig config;
  std::vector<SegmentEntry> entries;
};

/// Vectors are stored as base64 little-endian float32, so a round trip is
/// bit-exact.
nlohmann::json index_to_json(const VectorIndex& index);
VectorIndex index_from_json(const nlohmann::json& j);

std::string encode_vector(const std::vector<float>& values);
std::vector<float> decode_vector(const std::string& text);

// Baselines.

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<int> assignment;
  /// Sum of squared distances after each assignment step.
  std::vector<double> objective_history;
  int iterations = 0;
};

/// k-means++ seeding from `seed`, then Lloyd iterations until assignments
/// stop changing or `max_iterations` is reached. Ties go to the lower
/// centroid index; an emptied cluster keeps its previous centroid.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                    int max_iterations = 100);

/// Per cluster, the `per_cluster` frames nearest its centroid, returned in
/// ascending frame order. Clusters are ordered by their earliest frame.
std::vector<std::vector<int>> kmeans_cluster_baseline(const std::vector<EmbeddingVector>& frame_embeddings,
                                                      int k, int per_cluster, std::uint64_t seed);

/// The `count` frames whose embeddings are nearest (L2) the query, ascending
/// distance, ties by frame index.
std::vector<int> frames_as_context_baseline(const std::vector<EmbeddingVector>& frame_embeddings,
                                            const EmbeddingVector& query_visual, int count);

}  // namespace egoassist
