#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "egoassist/mask.hpp"
#include "egoassist/recording.hpp"

namespace egoassist {

class PointSegmentProvider;
class MaskPropagationProvider;

struct MaskProposal {
  int frame_index = 0;
  Mask mask;
  GazePoint2D source_gaze;
};

struct TrackedObject {
  int object_id = 0;
  std::map<int, Mask> masks;  // frame_index -> mask
  int first_seen_frame = 0;
  int last_seen_frame = 0;

  const Mask& latest_mask() const { return masks.at(last_seen_frame); }
};

struct SegmentationParams {
  int window_n = 5;
  double iou_theta = 0.5;
  int lost_after_x = 30;
  double change_fraction_z = 0.5;
  int sustain_m = 15;
  int min_segment_frames = 30;

  void validate() const;
};

enum class SegmentMode { gaze, speech };

std::string_view to_string(SegmentMode mode) noexcept;

struct TemporalSegment {
  int segment_id = 0;
  int start_frame = 0;
  int end_frame = 0;  // inclusive
  double start_s = 0;
  double end_s = 0;
  std::set<int> object_ids;     // gaze mode
  std::string utterance_text;   // speech mode
  SegmentMode mode = SegmentMode::gaze;

  int frame_count() const noexcept { return end_frame - start_frame + 1; }

  friend bool operator==(const TemporalSegment&, const TemporalSegment&) = default;
};

/// |A n B| / |A u B|, 0 for an empty union.
double iou(const Mask& a, const Mask& b);

/// Jaccard distance between object-id sets; 0 when both are empty.
double set_change_fraction(const std::set<int>& previous, const std::set<int>& current);

/// Frame-t proposals that overlap some proposal (IoU > theta) in every later
/// frame of the window. `window[0]` holds frame t.
std::vector<MaskProposal> in_clip_consensus(std::span<const std::vector<MaskProposal>> window,
                                            const SegmentationParams& params);

/// Hands out object ids; never reuses one within a demonstration.
class ObjectIdAllocator {
 public:
  explicit ObjectIdAllocator(int first = 1) : next_(first) {}
  int next() { return next_++; }

 private:
  int next_;
};

/// One tracking step at `frame_index`. Returns the active tracks; tracks
/// retired at this step are appended to `retired` when it is non-null.
std::vector<TrackedObject> update_tracks(std::vector<TrackedObject> tracks, int frame_index,
                                         const std::map<int, std::optional<Mask>>& propagated_masks,
                                         const std::vector<MaskProposal>& new_consensus,
                                         const SegmentationParams& params, ObjectIdAllocator& ids,
                                         std::vector<TrackedObject>* retired = nullptr);

/// Frame boundaries (first frame of each segment except frame 0) from the
/// per-frame active sets, before the minimum-length merge.
std::vector<int> detect_boundaries(const std::vector<std::set<int>>& active_sets,
                                   const SegmentationParams& params);

/// Drops boundaries so that every segment has at least `min_frames` frames
/// (short segments merge into the preceding one; a short first segment
/// merges into the following one).
std::vector<int> merge_short_segments(std::vector<int> boundaries, int frame_count, int min_frames);

using FrameImageLoader = std::function<Image(int frame_index)>;

struct GazeSegmentation {
  std::vector<TemporalSegment> segments;
  std::vector<TrackedObject> objects;          // every track ever spawned, by object_id
  std::vector<std::set<int>> active_sets;      // per frame
  std::vector<int> raw_boundaries;
};

GazeSegmentation segment_by_gaze(const DemonstrationRecording& recording,
                                 PointSegmentProvider& segmenter,
                                 MaskPropagationProvider& tracker,
                                 const SegmentationParams& params,
                                 const FrameImageLoader& load_frame = {},
                                 double gaze_depth_m = kDefaultGazeDepthM);

std::vector<TemporalSegment> segment_by_speech(const DemonstrationRecording& recording);

nlohmann::json segments_to_json(const std::string& demonstration_id,
                                 const std::vector<TemporalSegment>& segments,
                                 const std::vector<TrackedObject>& objects = {});
std::vector<TemporalSegment> segments_from_json(const nlohmann::json& j);

}  // namespace egoassist
