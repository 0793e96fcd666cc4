#pragma once

// Procedural demonstration recordings: flat-colored squares in front of a
// static camera, with gaze aimed at one square at a time.

#include <filesystem>
#include <string>
#include <vector>

#include "egoassist/recording.hpp"

namespace egoassist {

struct SyntheticObject {
  std::string name;
  double u = 0;  // pixel center; the object sits on this ray at depth_m
  double v = 0;
  double depth_m = 1.5;
  int half_size_px = 8;
  Rgb color;
};

struct GazeFocus {
  int first_frame = 0;
  int object = 0;  // index into SyntheticSpec::objects, -1 for an invalid sample
};

struct SyntheticSpec {
  std::string id = "synthetic_demo";
  TaskCategory task_category = TaskCategory::other;
  std::string ground_truth_intent = "The user is moving a red cup onto a blue tray";
  int frame_count = 60;
  double fps = 30;
  int width = 128;
  int height = 96;
  double focal_px = 100;
  std::vector<SyntheticObject> objects;
  std::vector<GazeFocus> gaze;  // ordered by first_frame
  std::vector<SpeechSegment> speech;
  bool hands = true;
};

/// 60 frames, red cup gazed at for frames 0-29, blue tray for 30-59, and four
/// utterances.
SyntheticSpec default_synthetic_spec();

CameraModel synthetic_camera(const SyntheticSpec& spec);

/// Frame image: background, every object, and a one-pixel tick along the
/// bottom row so no two frames are byte-identical.
Image render_synthetic_frame(const SyntheticSpec& spec, int frame_index);

DemonstrationRecording build_synthetic_recording(const SyntheticSpec& spec, const std::filesystem::path& dir);

/// Renders frames/NNNN.png and manifest.jsonl under `dir`.
DemonstrationRecording write_synthetic_recording(const SyntheticSpec& spec, const std::filesystem::path& dir);

}  // namespace egoassist
