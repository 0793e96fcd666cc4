#include "egoassist/recording.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "egoassist/error.hpp"

namespace egoassist {

using nlohmann::json;

std::string_view to_string(TaskCategory category) noexcept {
  switch (category) {
    case TaskCategory::organizing: return "organizing";
    case TaskCategory::shopping: return "shopping";
    case TaskCategory::morning_routine: return "morning_routine";
    case TaskCategory::other: return "other";
  }
  return "other";
}

TaskCategory task_category_from_string(std::string_view text) {
  if (text == "organizing") return TaskCategory::organizing;
  if (text == "shopping") return TaskCategory::shopping;
  if (text == "morning_routine") return TaskCategory::morning_routine;
  if (text == "other") return TaskCategory::other;
  throw Error(ErrorCode::InvariantViolation, "unknown task_category '" + std::string(text) + "'");
}

std::filesystem::path DemonstrationRecording::image_path(const FrameRecord& frame) const {
  const std::filesystem::path ref(frame.image_ref);
  return ref.is_absolute() ? ref : root_dir / ref;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void violation(const std::string& what) {
  throw Error(ErrorCode::InvariantViolation, what);
}

void check_rotation(const Extrinsics& m, int frame_index) {
  // Columns of the upper-left 3x3 block must be orthonormal.
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int r = 0; r < 3; ++r) dot += m[r * 4 + i] * m[r * 4 + j];
      const double expected = i == j ? 1.0 : 0.0;
      if (std::abs(dot - expected) > 1e-6) {
        violation("frame " + std::to_string(frame_index) + ": extrinsics rotation not orthonormal");
      }
    }
  }
}

Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw json::type_error::create(302, "expected 3-vector", &j);
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

std::vector<Vec3> points_from_json(const json& j) {
  std::vector<Vec3> out;
  for (const auto& p : j) out.push_back(vec3_from_json(p));
  return out;
}

json points_to_json(const std::vector<Vec3>& pts) {
  json out = json::array();
  for (const auto& p : pts) out.push_back(vec3_to_json(p));
  return out;
}

}  // namespace

void validate_recording(const DemonstrationRecording& rec) {
  const auto& cam = rec.camera;
  if (!(cam.fx > 0 && cam.fy > 0)) violation("camera focal lengths must be positive");
  if (!(cam.cx >= 0 && cam.cx < cam.width && cam.cy >= 0 && cam.cy < cam.height)) {
    violation("camera principal point outside the image");
  }

  for (std::size_t i = 0; i < rec.frames.size(); ++i) {
    const auto& f = rec.frames[i];
    if (f.index != static_cast<int>(i)) {
      violation("frame index " + std::to_string(f.index) + " does not match position " +
                std::to_string(i));
    }
    if (i > 0 && !(f.timestamp_s > rec.frames[i - 1].timestamp_s)) {
      violation("non-increasing timestamps at frame " + std::to_string(i));
    }
    check_rotation(f.extrinsics, f.index);
  }

  if (!rec.gaze.empty()) {
    if (rec.frames.empty()) violation("gaze samples without frames");
    const double t0 = rec.frames.front().timestamp_s;
    const double t1 = rec.frames.back().timestamp_s;
    for (std::size_t i = 0; i < rec.gaze.size(); ++i) {
      const auto& g = rec.gaze[i];
      if (g.timestamp_s < t0 || g.timestamp_s > t1) {
        violation("gaze sample " + std::to_string(i) + " outside the frame time range");
      }
      if (i > 0 && g.timestamp_s < rec.gaze[i - 1].timestamp_s) {
        violation("gaze samples out of temporal order at " + std::to_string(i));
      }
      if (g.valid) {
        const auto& d = g.direction;
        const double norm = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
        if (std::abs(norm - 1.0) > 1e-6) {
          violation("gaze sample " + std::to_string(i) + " direction is not unit length");
        }
      }
      if (g.depth_m && !(*g.depth_m > 0)) {
        violation("gaze sample " + std::to_string(i) + " depth must be positive");
      }
    }
  }

  for (std::size_t i = 0; i < rec.speech.size(); ++i) {
    const auto& s = rec.speech[i];
    if (!(s.end_s > s.start_s)) violation("speech segment " + std::to_string(i) + " has end <= start");
    if (trim(s.text).empty()) violation("speech segment " + std::to_string(i) + " has empty text");
    if (i > 0 && s.start_s < rec.speech[i - 1].end_s) {
      violation("overlapping speech segments " + std::to_string(i - 1) + " and " + std::to_string(i));
    }
  }
}

DemonstrationRecording parse_manifest(std::string_view jsonl, const std::filesystem::path& root_dir) {
  DemonstrationRecording rec;
  rec.root_dir = root_dir;
  bool have_meta = false;

  std::istringstream lines{std::string(jsonl)};
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json j = json::parse(line);
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "meta") {
        if (have_meta) violation("duplicate meta line");
        have_meta = true;
        rec.id = j.at("id").get<std::string>();
        rec.task_category = task_category_from_string(j.value("task_category", "other"));
        if (j.contains("ground_truth_intent") && !j["ground_truth_intent"].is_null()) {
          rec.ground_truth_intent = j["ground_truth_intent"].get<std::string>();
        }
        const auto& c = j.at("camera");
        rec.camera = {c.at("fx").get<double>(), c.at("fy").get<double>(), c.at("cx").get<double>(),
                      c.at("cy").get<double>(), c.at("width").get<int>(), c.at("height").get<int>()};
      } else if (kind == "frame") {
        FrameRecord f;
        f.index = j.at("index").get<int>();
        f.timestamp_s = j.at("timestamp_s").get<double>();
        f.image_ref = j.at("image").get<std::string>();
        if (j.contains("extrinsics")) {
          const auto values = j["extrinsics"].get<std::vector<double>>();
          if (values.size() != 16) throw json::type_error::create(302, "extrinsics needs 16 values", &j);
          std::copy(values.begin(), values.end(), f.extrinsics.begin());
        }
        if (j.contains("hands") && !j["hands"].is_null()) {
          HandKeypoints h;
          if (j["hands"].contains("right")) h.right = points_from_json(j["hands"]["right"]);
          if (j["hands"].contains("left")) h.left = points_from_json(j["hands"]["left"]);
          f.hand_keypoints = std::move(h);
        }
        rec.frames.push_back(std::move(f));
      } else if (kind == "gaze") {
        GazeSample g;
        g.timestamp_s = j.at("timestamp_s").get<double>();
        g.origin = vec3_from_json(j.at("origin"));
        g.direction = vec3_from_json(j.at("direction"));
        g.valid = j.value("valid", true);
        if (j.contains("depth_m") && !j["depth_m"].is_null()) g.depth_m = j["depth_m"].get<double>();
        rec.gaze.push_back(g);
      } else if (kind == "speech") {
        rec.speech.push_back({j.at("text").get<std::string>(), j.at("start_s").get<double>(),
                              j.at("end_s").get<double>()});
      } else {
        throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": unknown kind '" +
                                                  kind + "'");
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedLine, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_meta) violation("manifest has no meta line");
  validate_recording(rec);
  return rec;
}

DemonstrationRecording parse_recording(const std::filesystem::path& path) {
  std::filesystem::path manifest = path;
  if (std::filesystem::is_directory(path)) manifest = path / "manifest.jsonl";
  if (!std::filesystem::is_regular_file(manifest)) {
    throw Error(ErrorCode::MissingFile, manifest.string());
  }
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::MissingFile, manifest.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_manifest(text, manifest.parent_path());
}

std::string to_manifest_jsonl(const DemonstrationRecording& rec) {
  std::string out;
  const auto emit = [&out](const json& j) {
    out += j.dump();
    out += '\n';
  };
  json meta = {{"kind", "meta"},
               {"id", rec.id},
               {"task_category", to_string(rec.task_category)},
               {"camera",
                {{"fx", rec.camera.fx},
                 {"fy", rec.camera.fy},
                 {"cx", rec.camera.cx},
                 {"cy", rec.camera.cy},
                 {"width", rec.camera.width},
                 {"height", rec.camera.height}}}};
  meta["ground_truth_intent"] = rec.ground_truth_intent ? json(*rec.ground_truth_intent) : json(nullptr);
  emit(meta);
  for (const auto& f : rec.frames) {
    json j = {{"kind", "frame"},
              {"index", f.index},
              {"timestamp_s", f.timestamp_s},
              {"image", f.image_ref},
              {"extrinsics", f.extrinsics}};
    if (f.hand_keypoints) {
      j["hands"] = {{"right", points_to_json(f.hand_keypoints->right)},
                    {"left", points_to_json(f.hand_keypoints->left)}};
    }
    emit(j);
  }
  for (const auto& g : rec.gaze) {
    json j = {{"kind", "gaze"},
              {"timestamp_s", g.timestamp_s},
              {"origin", vec3_to_json(g.origin)},
              {"direction", vec3_to_json(g.direction)},
              {"valid", g.valid}};
    if (g.depth_m) j["depth_m"] = *g.depth_m;
    emit(j);
  }
  for (const auto& s : rec.speech) {
    emit({{"kind", "speech"}, {"text", s.text}, {"start_s", s.start_s}, {"end_s", s.end_s}});
  }
  return out;
}

void write_manifest(const DemonstrationRecording& rec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "manifest.jsonl", std::ios::trunc);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + (dir / "manifest.jsonl").string());
  out << to_manifest_jsonl(rec);
}

namespace {

Vec3 to_camera(const Extrinsics& m, const Vec3& p) {
  return {m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
          m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
          m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
}

bool inside(const CameraModel& camera, double u, double v) {
  return u >= 0 && u < camera.width && v >= 0 && v < camera.height;
}

}  // namespace

GazePoint2D project_gaze(const GazeSample& sample, const FrameRecord& frame,
                         const CameraModel& camera, double gaze_depth_m) {
  if (!sample.valid) throw Error(ErrorCode::InvalidSample, "gaze sample flagged invalid");
  if (!(gaze_depth_m > 0)) throw Error(ErrorCode::UsageError, "gaze depth must be positive");
  const Vec3 world{sample.origin.x + gaze_depth_m * sample.direction.x,
                   sample.origin.y + gaze_depth_m * sample.direction.y,
                   sample.origin.z + gaze_depth_m * sample.direction.z};
  const Vec3 cam = to_camera(frame.extrinsics, world);
  if (cam.z <= 1e-9) throw Error(ErrorCode::BehindCamera, "gaze point behind the camera");
  GazePoint2D out;
  out.frame_index = frame.index;
  out.u = camera.fx * cam.x / cam.z + camera.cx;
  out.v = camera.fy * cam.y / cam.z + camera.cy;
  out.in_bounds = inside(camera, out.u, out.v);
  return out;
}

std::optional<std::array<double, 2>> project_point(const Vec3& world, const FrameRecord& frame,
                                                   const CameraModel& camera) {
  const Vec3 cam = to_camera(frame.extrinsics, world);
  if (cam.z <= 1e-9) return std::nullopt;
  return std::array<double, 2>{camera.fx * cam.x / cam.z + camera.cx,
                               camera.fy * cam.y / cam.z + camera.cy};
}

std::optional<GazeSample> gaze_for_frame(const DemonstrationRecording& rec, int frame_index,
                                         double tolerance_s) {
  if (frame_index < 0 || frame_index >= static_cast<int>(rec.frames.size())) return std::nullopt;
  const double t = rec.frames[static_cast<std::size_t>(frame_index)].timestamp_s;
  const auto lo = std::lower_bound(rec.gaze.begin(), rec.gaze.end(), t - tolerance_s,
                                   [](const GazeSample& g, double v) { return g.timestamp_s < v; });
  std::optional<GazeSample> best;
  double best_dt = 0;
  for (auto it = lo; it != rec.gaze.end() && it->timestamp_s <= t + tolerance_s; ++it) {
    if (!it->valid) continue;
    const double dt = std::abs(it->timestamp_s - t);
    if (!best || dt < best_dt) {
      best = *it;
      best_dt = dt;
    }
  }
  return best;
}

std::optional<GazePoint2D> frame_gaze_point(const DemonstrationRecording& rec, int frame_index,
                                            double default_depth_m) {
  const auto sample = gaze_for_frame(rec, frame_index);
  if (!sample) return std::nullopt;
  try {
    return project_gaze(*sample, rec.frames[static_cast<std::size_t>(frame_index)], rec.camera,
                        sample->depth_m.value_or(default_depth_m));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BehindCamera) return std::nullopt;
    throw;
  }
}

std::optional<ProjectedHands> frame_hand_points(const DemonstrationRecording& rec, int frame_index) {
  if (frame_index < 0 || frame_index >= static_cast<int>(rec.frames.size())) return std::nullopt;
  const auto& frame = rec.frames[static_cast<std::size_t>(frame_index)];
  if (!frame.hand_keypoints) return std::nullopt;
  ProjectedHands out;
  for (const auto& p : frame.hand_keypoints->right) {
    if (auto uv = project_point(p, frame, rec.camera)) out.right.push_back(*uv);
  }
  for (const auto& p : frame.hand_keypoints->left) {
    if (auto uv = project_point(p, frame, rec.camera)) out.left.push_back(*uv);
  }
  return out;
}

Image annotate_frame(const Image& image, const std::optional<GazePoint2D>& gaze,
                     const std::optional<ProjectedHands>& hands, const AnnotationStyle& style) {
  Image out = image;
  if (gaze && gaze->in_bounds) {
    fill_disc(out, gaze->u, gaze->v, style.gaze_radius_px, style.gaze_color);
  }
  if (hands) {
    for (const auto& [u, v] : hands->right) {
      if (image.contains(static_cast<int>(u), static_cast<int>(v)) && u >= 0 && v >= 0) {
        fill_disc(out, u, v, style.hand_radius_px, style.right_hand_color);
      }
    }
    for (const auto& [u, v] : hands->left) {
      if (image.contains(static_cast<int>(u), static_cast<int>(v)) && u >= 0 && v >= 0) {
        fill_disc(out, u, v, style.hand_radius_px, style.left_hand_color);
      }
    }
  }
  return out;
}

std::vector<SpeechSegment> utterances_in_range(const std::vector<SpeechSegment>& speech,
                                               double start_s, double end_s) {
  std::vector<SpeechSegment> out;
  for (const auto& s : speech) {
    const double overlap = std::min(s.end_s, end_s) - std::max(s.start_s, start_s);
    if (overlap > 0) out.push_back(s);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SpeechSegment& a, const SpeechSegment& b) { return a.start_s < b.start_s; });
  return out;
}

}  // namespace egoassist
