#pragma once

// Reference implementations used only by tests. Each one is written from the
// definition, deliberately by a different route than the library code.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "egoassist/mask.hpp"
#include "egoassist/recording.hpp"
#include "egoassist/retrieval.hpp"
#include "egoassist/segmentation.hpp"

namespace oracle {

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
};

/// 100 * average(sigma - 1) / 2 as a reduced fraction.
Rational llm_match_rational(const std::vector<int>& sigmas);

/// Pixel-loop IoU through Mask::get.
double pixel_iou(const egoassist::Mask& a, const egoassist::Mask& b);

/// Scalar pinhole projection written out component by component.
struct Projected {
  double u = 0;
  double v = 0;
  double z = 0;
};
Projected pinhole(const egoassist::Vec3& origin, const egoassist::Vec3& direction, double depth,
                  const egoassist::Extrinsics& extrinsics, double fx, double fy, double cx, double cy);

/// Stable sort of every retrievable entry by (score desc, id asc), truncated.
std::vector<int> exhaustive_top_k(const std::vector<egoassist::SegmentEntry>& store,
                                  const egoassist::EmbeddingVector& query_text,
                                  const egoassist::EmbeddingVector& query_visual,
                                  const egoassist::RetrievalConfig& config);

/// Index of the nearest centroid for each point, lowest index on ties.
std::vector<int> nearest_centroids(const std::vector<std::vector<double>>& points,
                                   const std::vector<std::vector<double>>& centroids);

/// A scripted mock stream for gaze segmentation: one optional gazed mask per
/// frame plus the tracker's per-frame offsets and lost spans.
struct GazeStream {
  int width = 12;
  int height = 12;
  int frame_count = 0;
  std::vector<std::optional<egoassist::Mask>> proposals;  // per frame
  std::map<int, std::pair<int, int>> offsets;              // frame -> (dx, dy)
  std::map<int, std::set<int>> lost;                       // frame -> object ids
  egoassist::SegmentationParams params;

  egoassist::DemonstrationRecording recording() const;
};

GazeStream random_gaze_stream(std::mt19937_64& rng);

struct GazeReference {
  std::vector<std::set<int>> active_sets;
  std::vector<int> raw_boundaries;
  std::vector<int> segment_starts;  // 0 plus every boundary kept after merging
};

/// Recomputes consensus from scratch at every frame and scans boundary
/// candidates exhaustively.
GazeReference reference_segmentation(const GazeStream& stream);

/// Time a callable in milliseconds.
template <typename Fn>
double time_ms(Fn&& fn);

}  // namespace oracle

#include <chrono>

template <typename Fn>
double oracle::time_ms(Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}
