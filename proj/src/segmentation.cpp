#include "egoassist/segmentation.hpp"

#include <algorithm>
#include <cmath>

#include "egoassist/error.hpp"
#include "egoassist/providers.hpp"

namespace egoassist {

using nlohmann::json;

std::string_view to_string(SegmentMode mode) noexcept {
  return mode == SegmentMode::gaze ? "gaze" : "speech";
}

void SegmentationParams::validate() const {
  const auto bad = [](const std::string& what) { throw Error(ErrorCode::UsageError, what); };
  if (window_n < 2) bad("window_n must be >= 2");
  if (!(iou_theta > 0 && iou_theta <= 1)) bad("iou_theta must lie in (0, 1]");
  if (lost_after_x < 0) bad("lost_after_x must be >= 0");
  if (!(change_fraction_z > 0 && change_fraction_z <= 1)) bad("change_fraction_z must lie in (0, 1]");
  if (sustain_m < 1) bad("sustain_m must be >= 1");
  if (min_segment_frames < 1) bad("min_segment_frames must be >= 1");
}

double iou(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::DimensionMismatch, "masks differ in size");
  const auto& da = a.data();
  const auto& db = b.data();
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    inter += static_cast<std::size_t>(da[i] & db[i]);
    uni += static_cast<std::size_t>(da[i] | db[i]);
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double set_change_fraction(const std::set<int>& previous, const std::set<int>& current) {
  std::size_t common = 0;
  for (const int id : current) common += previous.count(id);
  const std::size_t uni = previous.size() + current.size() - common;
  if (uni == 0) return 0.0;
  return static_cast<double>(uni - common) / static_cast<double>(uni);
}

std::vector<MaskProposal> in_clip_consensus(std::span<const std::vector<MaskProposal>> window,
                                            const SegmentationParams& params) {
  if (window.size() < static_cast<std::size_t>(params.window_n)) {
    throw Error(ErrorCode::WindowTooShort, "consensus window has " + std::to_string(window.size()) +
                                               " frames, needs " + std::to_string(params.window_n));
  }
  const auto later = window.subspan(1, static_cast<std::size_t>(params.window_n) - 1);
  std::vector<MaskProposal> kept;
  for (const auto& candidate : window.front()) {
    const bool persists = std::all_of(later.begin(), later.end(), [&](const auto& frame) {
      return std::any_of(frame.begin(), frame.end(), [&](const MaskProposal& other) {
        return iou(candidate.mask, other.mask) > params.iou_theta;
      });
    });
    if (persists) kept.push_back(candidate);
  }
  return kept;
}

std::vector<TrackedObject> update_tracks(std::vector<TrackedObject> tracks, int frame_index,
                                         const std::map<int, std::optional<Mask>>& propagated_masks,
                                         const std::vector<MaskProposal>& new_consensus,
                                         const SegmentationParams& params, ObjectIdAllocator& ids,
                                         std::vector<TrackedObject>* retired) {
  for (auto& track : tracks) {
    const auto it = propagated_masks.find(track.object_id);
    if (it != propagated_masks.end() && it->second && !it->second->empty()) {
      track.masks[frame_index] = *it->second;
      track.last_seen_frame = frame_index;
    }
  }

  std::vector<TrackedObject> active;
  active.reserve(tracks.size());
  for (auto& track : tracks) {
    if (frame_index - track.last_seen_frame > params.lost_after_x) {
      if (retired) retired->push_back(std::move(track));
    } else {
      active.push_back(std::move(track));
    }
  }

  for (const auto& proposal : new_consensus) {
    double best = 0.0;
    for (const auto& track : active) best = std::max(best, iou(proposal.mask, track.latest_mask()));
    if (best > params.iou_theta) continue;
    TrackedObject spawned;
    spawned.object_id = ids.next();
    spawned.first_seen_frame = frame_index;
    spawned.last_seen_frame = frame_index;
    spawned.masks[frame_index] = proposal.mask;
    active.push_back(std::move(spawned));
  }
  return active;
}

std::vector<int> detect_boundaries(const std::vector<std::set<int>>& active_sets,
                                   const SegmentationParams& params) {
  std::vector<int> boundaries;
  if (active_sets.empty()) return boundaries;
  const int n = static_cast<int>(active_sets.size());
  std::set<int> reference = active_sets.front();
  int run_start = -1;
  int run_length = 0;
  for (int t = 1; t < n; ++t) {
    if (set_change_fraction(reference, active_sets[static_cast<std::size_t>(t)]) >
        params.change_fraction_z) {
      if (run_length == 0) run_start = t;
      ++run_length;
      if (run_length >= params.sustain_m) {
        boundaries.push_back(run_start);
        reference = active_sets[static_cast<std::size_t>(run_start)];
        t = run_start;  // rescan the run against the new reference
        run_length = 0;
      }
    } else {
      run_length = 0;
    }
  }
  return boundaries;
}

std::vector<int> merge_short_segments(std::vector<int> boundaries, int frame_count, int min_frames) {
  // Right to left: a short segment gives up its own start boundary.
  for (int i = static_cast<int>(boundaries.size()) - 1; i >= 0; --i) {
    const int next = i + 1 < static_cast<int>(boundaries.size())
                         ? boundaries[static_cast<std::size_t>(i) + 1]
                         : frame_count;
    if (next - boundaries[static_cast<std::size_t>(i)] < min_frames) {
      boundaries.erase(boundaries.begin() + i);
    }
  }
  while (!boundaries.empty() && boundaries.front() < min_frames) {
    boundaries.erase(boundaries.begin());
  }
  return boundaries;
}

namespace {

template <typename Fn>
auto call_provider(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ProviderFailure) throw;
    throw Error(ErrorCode::ProviderFailure, std::string(what) + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ProviderFailure, std::string(what) + ": " + e.what());
  }
}

std::vector<TemporalSegment> build_gaze_segments(const DemonstrationRecording& rec,
                                                 const std::vector<int>& boundaries,
                                                 const std::vector<std::set<int>>& active_sets) {
  std::vector<TemporalSegment> out;
  const int n = static_cast<int>(rec.frames.size());
  std::vector<int> starts{0};
  starts.insert(starts.end(), boundaries.begin(), boundaries.end());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    TemporalSegment seg;
    seg.segment_id = static_cast<int>(i);
    seg.mode = SegmentMode::gaze;
    seg.start_frame = starts[i];
    seg.end_frame = i + 1 < starts.size() ? starts[i + 1] - 1 : n - 1;
    seg.start_s = rec.frames[static_cast<std::size_t>(seg.start_frame)].timestamp_s;
    seg.end_s = rec.frames[static_cast<std::size_t>(seg.end_frame)].timestamp_s;
    for (int t = seg.start_frame; t <= seg.end_frame; ++t) {
      const auto& ids = active_sets[static_cast<std::size_t>(t)];
      seg.object_ids.insert(ids.begin(), ids.end());
    }
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace

GazeSegmentation segment_by_gaze(const DemonstrationRecording& rec, PointSegmentProvider& segmenter,
                                 MaskPropagationProvider& tracker, const SegmentationParams& params,
                                 const FrameImageLoader& load_frame, double gaze_depth_m) {
  params.validate();
  const int n = static_cast<int>(rec.frames.size());
  if (n < params.window_n) {
    throw Error(ErrorCode::TooFewFrames, "recording has " + std::to_string(n) +
                                             " frames, consensus window needs " +
                                             std::to_string(params.window_n));
  }
  const FrameImageLoader loader = load_frame ? load_frame : [&rec](int index) {
    return load_png(rec.image_path(rec.frames[static_cast<std::size_t>(index)]));
  };

  std::vector<Image> images;
  images.reserve(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) images.push_back(loader(t));

  std::vector<std::vector<MaskProposal>> proposals(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    const auto point = frame_gaze_point(rec, t, gaze_depth_m);
    if (!point || !point->in_bounds) continue;
    auto proposal = call_provider("point_segment", [&] {
      return segmenter.point_segment(images[static_cast<std::size_t>(t)], *point);
    });
    proposal.frame_index = t;
    if (!proposal.mask.empty()) proposals[static_cast<std::size_t>(t)].push_back(std::move(proposal));
  }

  GazeSegmentation result;
  ObjectIdAllocator ids;
  std::vector<TrackedObject> tracks;
  std::vector<TrackedObject> retired;
  result.active_sets.resize(static_cast<std::size_t>(n));

  for (int t = 0; t < n; ++t) {
    std::map<int, std::optional<Mask>> propagated;
    if (t > 0 && !tracks.empty()) {
      std::map<int, Mask> latest;
      for (const auto& track : tracks) latest.emplace(track.object_id, track.latest_mask());
      propagated = call_provider("propagate_masks", [&] {
        return tracker.propagate_masks(images[static_cast<std::size_t>(t) - 1],
                                       images[static_cast<std::size_t>(t)], latest, t);
      });
    }
    std::vector<MaskProposal> consensus;
    if (t + params.window_n <= n) {
      consensus = in_clip_consensus(
          std::span<const std::vector<MaskProposal>>(proposals).subspan(
              static_cast<std::size_t>(t), static_cast<std::size_t>(params.window_n)),
          params);
    }
    tracks = update_tracks(std::move(tracks), t, propagated, consensus, params, ids, &retired);
    for (const auto& track : tracks) result.active_sets[static_cast<std::size_t>(t)].insert(track.object_id);
  }

  result.raw_boundaries = detect_boundaries(result.active_sets, params);
  const auto boundaries = merge_short_segments(result.raw_boundaries, n, params.min_segment_frames);
  result.segments = build_gaze_segments(rec, boundaries, result.active_sets);

  result.objects = std::move(retired);
  result.objects.insert(result.objects.end(), std::make_move_iterator(tracks.begin()),
                        std::make_move_iterator(tracks.end()));
  std::sort(result.objects.begin(), result.objects.end(),
            [](const TrackedObject& a, const TrackedObject& b) { return a.object_id < b.object_id; });
  return result;
}

std::vector<TemporalSegment> segment_by_speech(const DemonstrationRecording& rec) {
  if (rec.speech.empty()) throw Error(ErrorCode::NoSpeech, "recording has no transcript");
  if (rec.frames.empty()) throw Error(ErrorCode::TooFewFrames, "recording has no frames");
  std::vector<TemporalSegment> out;
  int previous_end = -1;
  for (std::size_t i = 0; i < rec.speech.size(); ++i) {
    const auto& utterance = rec.speech[i];
    int first = -1;
    int last = -1;
    for (const auto& frame : rec.frames) {
      if (frame.timestamp_s >= utterance.start_s && frame.timestamp_s <= utterance.end_s) {
        if (first < 0) first = frame.index;
        last = frame.index;
      }
    }
    if (first < 0) {
      const double mid = 0.5 * (utterance.start_s + utterance.end_s);
      const auto nearest = std::min_element(
          rec.frames.begin(), rec.frames.end(), [mid](const FrameRecord& a, const FrameRecord& b) {
            return std::abs(a.timestamp_s - mid) < std::abs(b.timestamp_s - mid);
          });
      first = last = nearest->index;
    }
    // Touching utterances would otherwise share their boundary frame.
    if (first <= previous_end && previous_end < last) first = previous_end + 1;
    TemporalSegment seg;
    seg.segment_id = static_cast<int>(i);
    seg.mode = SegmentMode::speech;
    seg.start_frame = first;
    seg.end_frame = last;
    seg.start_s = utterance.start_s;
    seg.end_s = utterance.end_s;
    seg.utterance_text = utterance.text;
    out.push_back(std::move(seg));
    previous_end = std::max(previous_end, last);
  }
  return out;
}

json segments_to_json(const std::string& demonstration_id, const std::vector<TemporalSegment>& segments,
                      const std::vector<TrackedObject>& objects) {
  json segs = json::array();
  for (const auto& s : segments) {
    json j = {{"segment_id", s.segment_id},   {"mode", to_string(s.mode)},
              {"start_frame", s.start_frame}, {"end_frame", s.end_frame},
              {"start_s", s.start_s},         {"end_s", s.end_s}};
    if (s.mode == SegmentMode::gaze) {
      j["object_ids"] = s.object_ids;
    } else {
      j["utterance_text"] = s.utterance_text;
    }
    segs.push_back(std::move(j));
  }
  json objs = json::array();
  for (const auto& o : objects) {
    json masks = json::array();
    for (const auto& [frame, mask] : o.masks) {
      json m = mask_to_json(mask);
      m["frame_index"] = frame;
      masks.push_back(std::move(m));
    }
    objs.push_back({{"object_id", o.object_id},
                    {"first_seen_frame", o.first_seen_frame},
                    {"last_seen_frame", o.last_seen_frame},
                    {"masks", std::move(masks)}});
  }
  return {{"schema_version", 1},
          {"demonstration_id", demonstration_id},
          {"segments", std::move(segs)},
          {"objects", std::move(objs)}};
}

std::vector<TemporalSegment> segments_from_json(const json& j) {
  std::vector<TemporalSegment> out;
  for (const auto& s : j.at("segments")) {
    TemporalSegment seg;
    seg.segment_id = s.at("segment_id").get<int>();
    seg.mode = s.at("mode").get<std::string>() == "speech" ? SegmentMode::speech : SegmentMode::gaze;
    seg.start_frame = s.at("start_frame").get<int>();
    seg.end_frame = s.at("end_frame").get<int>();
    seg.start_s = s.at("start_s").get<double>();
    seg.end_s = s.at("end_s").get<double>();
    if (s.contains("object_ids")) seg.object_ids = s["object_ids"].get<std::set<int>>();
    if (s.contains("utterance_text")) seg.utterance_text = s["utterance_text"].get<std::string>();
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace egoassist
