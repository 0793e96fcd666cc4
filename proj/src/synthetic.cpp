#include "egoassist/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "egoassist/error.hpp"

namespace egoassist {

namespace fs = std::filesystem;

SyntheticSpec default_synthetic_spec() {
  SyntheticSpec spec;
  spec.objects = {{"red cup", 40, 48, 1.5, 8, {220, 30, 30}}, {"blue tray", 88, 48, 1.5, 10, {30, 60, 220}}};
  spec.gaze = {{0, 0}, {30, 1}};
  spec.speech = {{"First I pick up the red cup.", 0.10, 0.45},
                 {"I hold it steady with my right hand.", 0.55, 0.95},
                 {"Now I look at the blue tray.", 1.05, 1.45},
                 {"The cup goes in the middle of the tray.", 1.55, 1.90}};
  return spec;
}

CameraModel synthetic_camera(const SyntheticSpec& spec) {
  CameraModel cam;
  cam.fx = cam.fy = spec.focal_px;
  cam.cx = spec.width / 2.0;
  cam.cy = spec.height / 2.0;
  cam.width = spec.width;
  cam.height = spec.height;
  return cam;
}

namespace {

Vec3 object_position(const SyntheticSpec& spec, const SyntheticObject& o) {
  const auto cam = synthetic_camera(spec);
  return {(o.u - cam.cx) / cam.fx * o.depth_m, (o.v - cam.cy) / cam.fy * o.depth_m, o.depth_m};
}

int focus_at(const SyntheticSpec& spec, int frame) {
  int current = spec.gaze.empty() ? -1 : spec.gaze.front().object;
  for (const auto& g : spec.gaze) {
    if (g.first_frame <= frame) current = g.object;
  }
  return current;
}

}  // namespace

Image render_synthetic_frame(const SyntheticSpec& spec, int frame_index) {
  Image image(spec.width, spec.height, {200, 200, 200});
  for (const auto& o : spec.objects) {
    const int cx = static_cast<int>(std::lround(o.u));
    const int cy = static_cast<int>(std::lround(o.v));
    for (int y = cy - o.half_size_px; y <= cy + o.half_size_px; ++y) {
      for (int x = cx - o.half_size_px; x <= cx + o.half_size_px; ++x) {
        if (image.contains(x, y)) image.set(x, y, o.color);
      }
    }
  }
  image.set(frame_index % spec.width, spec.height - 1, {0, 0, 0});
  if (frame_index >= spec.width) image.set((frame_index / spec.width) % spec.width, spec.height - 2, {0, 0, 0});
  return image;
}

DemonstrationRecording build_synthetic_recording(const SyntheticSpec& spec, const fs::path& dir) {
  if (spec.frame_count < 1 || !(spec.fps > 0)) throw Error(ErrorCode::UsageError, "synthetic spec needs frames and fps");
  DemonstrationRecording rec;
  rec.id = spec.id;
  rec.task_category = spec.task_category;
  if (!spec.ground_truth_intent.empty()) rec.ground_truth_intent = spec.ground_truth_intent;
  rec.camera = synthetic_camera(spec);
  rec.root_dir = dir;
  rec.speech = spec.speech;
  for (int i = 0; i < spec.frame_count; ++i) {
    FrameRecord f;
    f.index = i;
    f.timestamp_s = i / spec.fps;
    char name[32];
    std::snprintf(name, sizeof name, "images/%04d.png", i);
    f.image_ref = name;
    const int focus = focus_at(spec, i);
    GazeSample g;
    g.timestamp_s = f.timestamp_s;
    if (focus >= 0 && focus < static_cast<int>(spec.objects.size())) {
      const auto p = object_position(spec, spec.objects[static_cast<std::size_t>(focus)]);
      const double n = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
      g.direction = {p.x / n, p.y / n, p.z / n};
      if (spec.hands) {
        HandKeypoints h;
        h.right = {{p.x, p.y + 0.05, p.z}};
        h.left = {{-0.5, 0.4, 1.5}};
        f.hand_keypoints = h;
      }
    } else {
      g.valid = false;
    }
    rec.gaze.push_back(g);
    rec.frames.push_back(std::move(f));
  }
  validate_recording(rec);
  return rec;
}

DemonstrationRecording write_synthetic_recording(const SyntheticSpec& spec, const fs::path& dir) {
  auto rec = build_synthetic_recording(spec, dir);
  fs::create_directories(dir / "images");
  for (const auto& f : rec.frames) save_png(render_synthetic_frame(spec, f.index), dir / f.image_ref);
  write_manifest(rec, dir);
  return rec;
}

}  // namespace egoassist
