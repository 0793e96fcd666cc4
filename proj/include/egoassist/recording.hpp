#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "egoassist/image.hpp"

namespace egoassist {

enum class TaskCategory { organizing, shopping, morning_routine, other };

std::string_view to_string(TaskCategory category) noexcept;
TaskCategory task_category_from_string(std::string_view text);

struct Vec3 {
  double x = 0;
  double y = 0;
  double z = 0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
};

/// Row-major 4x4 world-to-camera transform. The camera looks down +z.
using Extrinsics = std::array<double, 16>;

inline constexpr Extrinsics kIdentityExtrinsics = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};

struct HandKeypoints {
  std::vector<Vec3> right;
  std::vector<Vec3> left;

  friend bool operator==(const HandKeypoints&, const HandKeypoints&) = default;
};

struct FrameRecord {
  int index = 0;
  double timestamp_s = 0;
  std::string image_ref;  // relative to the recording directory unless absolute
  Extrinsics extrinsics = kIdentityExtrinsics;
  std::optional<HandKeypoints> hand_keypoints;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

struct GazeSample {
  double timestamp_s = 0;
  Vec3 origin;
  Vec3 direction{0, 0, 1};
  bool valid = true;
  std::optional<double> depth_m;  // overrides the projection depth when present

  friend bool operator==(const GazeSample&, const GazeSample&) = default;
};

struct SpeechSegment {
  std::string text;
  double start_s = 0;
  double end_s = 0;

  friend bool operator==(const SpeechSegment&, const SpeechSegment&) = default;
};

struct CameraModel {
  double fx = 1;
  double fy = 1;
  double cx = 0;
  double cy = 0;
  int width = 1;
  int height = 1;

  friend bool operator==(const CameraModel&, const CameraModel&) = default;
};

struct GazePoint2D {
  int frame_index = 0;
  double u = 0;
  double v = 0;
  bool in_bounds = false;

  friend bool operator==(const GazePoint2D&, const GazePoint2D&) = default;
};

struct DemonstrationRecording {
  std::string id;
  TaskCategory task_category = TaskCategory::other;
  std::optional<std::string> ground_truth_intent;
  std::vector<FrameRecord> frames;
  std::vector<GazeSample> gaze;
  std::vector<SpeechSegment> speech;
  CameraModel camera;
  std::filesystem::path root_dir;  // not part of the manifest; where image_refs resolve

  std::filesystem::path image_path(const FrameRecord& frame) const;

  friend bool operator==(const DemonstrationRecording& a, const DemonstrationRecording& b) {
    return a.id == b.id && a.task_category == b.task_category &&
           a.ground_truth_intent == b.ground_truth_intent && a.frames == b.frames &&
           a.gaze == b.gaze && a.speech == b.speech && a.camera == b.camera;
  }
};

/// Throws InvariantViolation describing the first broken invariant.
void validate_recording(const DemonstrationRecording& recording);

/// Accepts either the recording directory or its manifest.jsonl.
DemonstrationRecording parse_recording(const std::filesystem::path& path);
DemonstrationRecording parse_manifest(std::string_view jsonl, const std::filesystem::path& root_dir);
std::string to_manifest_jsonl(const DemonstrationRecording& recording);
/// Writes manifest.jsonl into `dir`; frame images are not touched.
void write_manifest(const DemonstrationRecording& recording, const std::filesystem::path& dir);

inline constexpr double kDefaultGazeDepthM = 1.5;
inline constexpr double kGazeFrameToleranceS = 0.033;

GazePoint2D project_gaze(const GazeSample& sample, const FrameRecord& frame,
                         const CameraModel& camera, double gaze_depth_m = kDefaultGazeDepthM);

/// Pinhole projection of a world point; nullopt when behind the camera.
std::optional<std::array<double, 2>> project_point(const Vec3& world, const FrameRecord& frame,
                                                   const CameraModel& camera);

/// Nearest valid sample within +/- tolerance of the frame's timestamp.
std::optional<GazeSample> gaze_for_frame(const DemonstrationRecording& recording, int frame_index,
                                         double tolerance_s = kGazeFrameToleranceS);

/// Projected gaze for the frame, or nullopt when no usable sample exists.
std::optional<GazePoint2D> frame_gaze_point(const DemonstrationRecording& recording,
                                            int frame_index,
                                            double default_depth_m = kDefaultGazeDepthM);

struct ProjectedHands {
  std::vector<std::array<double, 2>> right;
  std::vector<std::array<double, 2>> left;
};

std::optional<ProjectedHands> frame_hand_points(const DemonstrationRecording& recording,
                                                int frame_index);

struct AnnotationStyle {
  double gaze_radius_px = 12;
  double hand_radius_px = 6;
  Rgb gaze_color{160, 32, 240};
  Rgb right_hand_color{0, 0, 255};
  Rgb left_hand_color{0, 255, 0};
};

Image annotate_frame(const Image& image, const std::optional<GazePoint2D>& gaze,
                     const std::optional<ProjectedHands>& hands = std::nullopt,
                     const AnnotationStyle& style = {});

std::vector<SpeechSegment> utterances_in_range(const std::vector<SpeechSegment>& speech,
                                               double start_s, double end_s);

}  // namespace egoassist
