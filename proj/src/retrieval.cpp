#include "egoassist/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>

#include "egoassist/base64.hpp"
#include "egoassist/error.hpp"

namespace egoassist {

using nlohmann::json;

void RetrievalConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(lambda_textual) || !unit(lambda_visual)) {
    throw Error(ErrorCode::UsageError, "retrieval weights must lie in [0, 1]");
  }
  if (std::abs(lambda_textual + lambda_visual - 1.0) > 1e-9) {
    throw Error(ErrorCode::UsageError, "lambda_textual + lambda_visual must equal 1");
  }
  if (top_k < 1) throw Error(ErrorCode::UsageError, "top_k must be >= 1");
}

json retrieval_config_to_json(const RetrievalConfig& c) {
  return {{"lambda_textual", c.lambda_textual},
          {"lambda_visual", c.lambda_visual},
          {"top_k", c.top_k},
          {"include_unimportant", c.include_unimportant},
          {"visual_aggregation", c.visual_aggregation == VisualAggregation::max ? "max" : "mean"}};
}

RetrievalConfig retrieval_config_from_json(const json& j, RetrievalConfig c) {
  c.lambda_textual = j.value("lambda_textual", c.lambda_textual);
  c.lambda_visual = j.value("lambda_visual", c.lambda_visual);
  c.top_k = j.value("top_k", c.top_k);
  c.include_unimportant = j.value("include_unimportant", c.include_unimportant);
  if (j.contains("visual_aggregation")) {
    const auto agg = j["visual_aggregation"].get<std::string>();
    if (agg == "max") {
      c.visual_aggregation = VisualAggregation::max;
    } else if (agg == "mean") {
      c.visual_aggregation = VisualAggregation::mean;
    } else {
      throw Error(ErrorCode::UsageError, "visual_aggregation must be 'max' or 'mean'");
    }
  }
  return c;
}

std::vector<int> RetrievalResult::segment_ids() const {
  std::vector<int> ids;
  for (const auto& e : entries) ids.push_back(e.entry.segment_id);
  return ids;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "cosine over dims " + std::to_string(a.dim()) + " and " + std::to_string(b.dim()));
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double x = a.values[i], y = b.values[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (!(na > 0) || !(nb > 0)) throw Error(ErrorCode::ProviderFailure, "degenerate embedding");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

Score score_entry(const SegmentEntry& entry, const EmbeddingVector& query_text,
                  const EmbeddingVector& query_visual, const RetrievalConfig& config) {
  if (entry.visual_embeddings.empty()) {
    throw Error(ErrorCode::InvariantViolation, "segment " + std::to_string(entry.segment_id) +
                                                   " has no visual embeddings");
  }
  Score out;
  out.s_textual = cosine(query_text, entry.text_embedding);
  if (config.visual_aggregation == VisualAggregation::max) {
    out.s_visual = -std::numeric_limits<double>::infinity();
    for (const auto& v : entry.visual_embeddings) out.s_visual = std::max(out.s_visual, cosine(query_visual, v));
  } else {
    double sum = 0;
    for (const auto& v : entry.visual_embeddings) sum += cosine(query_visual, v);
    out.s_visual = sum / static_cast<double>(entry.visual_embeddings.size());
  }
  out.s = config.lambda_textual * out.s_textual + config.lambda_visual * out.s_visual;
  return out;
}

std::string segment_embedding_text(const SegmentKnowledge& knowledge) {
  std::string text = knowledge.description;
  for (const auto& kf : knowledge.keyframes) {
    text += '\n';
    text += kf.caption;
  }
  return text;
}

SegmentEntry index_segment(const SegmentKnowledge& knowledge, const std::vector<Image>& keyframe_images,
                           TextEmbedder& text_embedder, ImageEmbedder& image_embedder,
                           std::vector<std::string> keyframe_image_refs) {
  if (keyframe_images.size() != knowledge.keyframes.size()) {
    throw Error(ErrorCode::InvariantViolation, "one image per keyframe is required");
  }
  SegmentEntry entry;
  entry.segment_id = knowledge.segment_id;
  entry.knowledge = knowledge;
  entry.keyframe_image_refs = std::move(keyframe_image_refs);
  entry.text_embedding = text_embedder.embed_text(segment_embedding_text(knowledge)).normalized();
  entry.text_embedding.modality = Modality::text;
  for (const auto& image : keyframe_images) {
    auto v = image_embedder.embed_image(image).normalized();
    v.modality = Modality::visual;
    if (!entry.visual_embeddings.empty() && v.dim() != entry.visual_embeddings.front().dim()) {
      throw Error(ErrorCode::DimensionMismatch, "image embedder changed dimension between calls");
    }
    entry.visual_embeddings.push_back(std::move(v));
  }
  return entry;
}

RetrievalResult retrieve_top_k(const std::vector<SegmentEntry>& store, const EmbeddingVector& query_text,
                               const EmbeddingVector& query_visual, const RetrievalConfig& config) {
  config.validate();
  std::vector<std::pair<Score, const SegmentEntry*>> scored;
  for (const auto& entry : store) {
    if (!config.include_unimportant && !entry.knowledge.important) continue;
    scored.emplace_back(score_entry(entry, query_text, query_visual, config), &entry);
  }
  if (scored.empty()) throw Error(ErrorCode::EmptyStore, "no retrievable segments");
  const auto keep = std::min(scored.size(), static_cast<std::size_t>(config.top_k));
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    [](const auto& a, const auto& b) {
                      if (a.first.s != b.first.s) return a.first.s > b.first.s;
                      return a.second->segment_id < b.second->segment_id;
                    });
  RetrievalResult result;
  for (std::size_t i = 0; i < keep; ++i) result.entries.push_back({*scored[i].second, scored[i].first});
  return result;
}

std::string encode_vector(const std::vector<float>& values) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return base64_encode(bytes.data(), bytes.size());
}

std::vector<float> decode_vector(const std::string& text) {
  const auto bytes = base64_decode(text);
  if (bytes.size() % 4 != 0) throw Error(ErrorCode::MalformedLine, "vector payload is not float32 aligned");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + static_cast<std::size_t>(b)]) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

json index_to_json(const VectorIndex& index) {
  json entries = json::array();
  for (const auto& e : index.entries) {
    json visual = json::array();
    for (const auto& v : e.visual_embeddings) visual.push_back(encode_vector(v.values));
    entries.push_back({{"segment_id", e.segment_id},
                       {"text_embedding", encode_vector(e.text_embedding.values)},
                       {"visual_embeddings", std::move(visual)},
                       {"keyframe_image_refs", e.keyframe_image_refs},
                       {"knowledge", segment_knowledge_to_json(e.knowledge)}});
  }
  return {{"schema_version", 1},
          {"demonstration_id", index.demonstration_id},
          {"config", retrieval_config_to_json(index.config)},
          {"text_dim", index.entries.empty() ? 0 : index.entries.front().text_embedding.dim()},
          {"visual_dim", index.entries.empty() || index.entries.front().visual_embeddings.empty()
                             ? 0
                             : index.entries.front().visual_embeddings.front().dim()},
          {"entries", std::move(entries)}};
}

VectorIndex index_from_json(const json& j) {
  if (j.value("schema_version", 0) != 1) {
    throw Error(ErrorCode::InvariantViolation, "unsupported index schema_version");
  }
  VectorIndex index;
  index.demonstration_id = j.at("demonstration_id").get<std::string>();
  index.config = retrieval_config_from_json(j.at("config"));
  for (const auto& e : j.at("entries")) {
    SegmentEntry entry;
    entry.segment_id = e.at("segment_id").get<int>();
    entry.text_embedding = {decode_vector(e.at("text_embedding").get<std::string>()), Modality::text};
    for (const auto& v : e.at("visual_embeddings")) {
      entry.visual_embeddings.push_back({decode_vector(v.get<std::string>()), Modality::visual});
    }
    entry.keyframe_image_refs = e.value("keyframe_image_refs", std::vector<std::string>{});
    entry.knowledge = segment_knowledge_from_json(e.at("knowledge"));
    index.entries.push_back(std::move(entry));
  }
  return index;
}

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

// Nearest centroid, lowest index on ties.
std::pair<int, double> nearest(const std::vector<double>& p, const std::vector<std::vector<double>>& centroids) {
  int best = 0;
  double best_d = squared_distance(p, centroids[0]);
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return {best, best_d};
}

std::vector<std::vector<double>> to_points(const std::vector<EmbeddingVector>& embeddings) {
  std::vector<std::vector<double>> points;
  points.reserve(embeddings.size());
  for (const auto& e : embeddings) {
    if (!points.empty() && e.values.size() != points.front().size()) {
      throw Error(ErrorCode::DimensionMismatch, "frame embeddings differ in dimension");
    }
    points.emplace_back(e.values.begin(), e.values.end());
  }
  return points;
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed,
                    int max_iterations) {
  if (k < 1) throw Error(ErrorCode::UsageError, "k must be >= 1");
  if (points.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::TooFewFrames, std::to_string(points.size()) + " points for k=" + std::to_string(k));
  }
  const std::size_t n = points.size();
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  KMeansResult out;
  std::vector<bool> chosen(n, false);
  const std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  out.centroids.push_back(points[first]);
  chosen[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], out.centroids[0]);
  while (out.centroids.size() < static_cast<std::size_t>(k)) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = n;
    if (total > 0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0) continue;
        r -= d2[i];
        pick = i;
        if (r < 0) break;
      }
    }
    if (pick == n) {  // every point coincides with a centroid
      pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
    }
    chosen[pick] = true;
    out.centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points[i], out.centroids.back()));
  }

  // Lloyd.
  out.assignment.assign(n, -1);
  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    double objective = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto [c, d] = nearest(points[i], out.centroids);
      objective += d;
      if (c != out.assignment[i]) {
        out.assignment[i] = c;
        changed = true;
      }
    }
    out.objective_history.push_back(objective);
    out.iterations = it + 1;
    if (!changed) break;
    const std::size_t dim = points.front().size();
    std::vector<std::vector<double>> sums(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(out.assignment[i]);
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums[c][d] += points[i][d];
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t d = 0; d < dim; ++d) out.centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
    }
  }
  return out;
}

std::vector<std::vector<int>> kmeans_cluster_baseline(const std::vector<EmbeddingVector>& frame_embeddings,
                                                      int k, int per_cluster, std::uint64_t seed) {
  if (per_cluster < 1) throw Error(ErrorCode::UsageError, "per_cluster must be >= 1");
  const auto points = to_points(frame_embeddings);
  const auto result = kmeans(points, k, seed);
  std::vector<std::vector<int>> clusters;
  for (std::size_t c = 0; c < result.centroids.size(); ++c) {
    std::vector<std::pair<double, int>> members;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (result.assignment[i] == static_cast<int>(c)) {
        members.emplace_back(squared_distance(points[i], result.centroids[c]), static_cast<int>(i));
      }
    }
    if (members.empty()) continue;
    std::sort(members.begin(), members.end());
    std::vector<int> frames;
    for (std::size_t i = 0; i < members.size() && i < static_cast<std::size_t>(per_cluster); ++i) {
      frames.push_back(members[i].second);
    }
    std::sort(frames.begin(), frames.end());
    clusters.push_back(std::move(frames));
  }
  std::sort(clusters.begin(), clusters.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return clusters;
}

std::vector<int> frames_as_context_baseline(const std::vector<EmbeddingVector>& frame_embeddings,
                                            const EmbeddingVector& query_visual, int count) {
  if (frame_embeddings.empty()) throw Error(ErrorCode::TooFewFrames, "no frames to rank");
  if (count < 1) throw Error(ErrorCode::UsageError, "count must be >= 1");
  const std::vector<double> q(query_visual.values.begin(), query_visual.values.end());
  std::vector<std::pair<double, int>> ranked;
  for (std::size_t i = 0; i < frame_embeddings.size(); ++i) {
    if (frame_embeddings[i].dim() != query_visual.dim()) {
      throw Error(ErrorCode::DimensionMismatch, "frame embedding dimension differs from the query");
    }
    const std::vector<double> p(frame_embeddings[i].values.begin(), frame_embeddings[i].values.end());
    ranked.emplace_back(squared_distance(p, q), static_cast<int>(i));
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<int> out;
  for (std::size_t i = 0; i < ranked.size() && i < static_cast<std::size_t>(count); ++i) out.push_back(ranked[i].second);
  return out;
}

}  // namespace egoassist
