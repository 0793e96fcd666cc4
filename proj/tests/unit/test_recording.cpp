#include <cmath>

#include "doctest.h"
#include "egoassist/error.hpp"
#include "egoassist/recording.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace egoassist;

namespace {

const char* kMeta =
    R"({"kind":"meta","id":"r1","task_category":"shopping","ground_truth_intent":"The user is shopping",)"
    R"("camera":{"fx":100,"fy":100,"cx":8,"cy":8,"width":16,"height":16}})";

std::string frame_line(int i, double t) {
  return R"({"kind":"frame","index":)" + std::to_string(i) + R"(,"timestamp_s":)" + std::to_string(t) +
         R"(,"image":"images/)" + std::to_string(i) + R"(.png"})";
}

std::string gaze_line(double t) {
  return R"({"kind":"gaze","timestamp_s":)" + std::to_string(t) + R"(,"origin":[0,0,0],"direction":[0,0,1]})";
}

ErrorCode parse_error(const std::string& text) {
  try {
    parse_manifest(text, "/tmp");
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("manifest parsed without error");
  return ErrorCode::UsageError;
}

}  // namespace

TEST_CASE("manifest with 3 frames, 3 gaze samples and 1 utterance") {
  std::string text = std::string(kMeta) + "\n";
  for (int i = 0; i < 3; ++i) text += frame_line(i, i / 30.0) + "\n" + gaze_line(i / 30.0) + "\n";
  text += R"({"kind":"speech","text":"hello","start_s":0.0,"end_s":0.05})";
  const auto rec = parse_manifest(text, "/tmp");
  CHECK(rec.frames.size() == 3);
  CHECK(rec.gaze.size() == 3);
  CHECK(rec.speech.size() == 1);
  CHECK(rec.task_category == TaskCategory::shopping);
  CHECK(rec.ground_truth_intent == std::optional<std::string>("The user is shopping"));

  SUBCASE("round trip through the writer") {
    CHECK(parse_manifest(to_manifest_jsonl(rec), "/tmp") == rec);
  }
}

TEST_CASE("manifest invariants") {
  const std::string base = std::string(kMeta) + "\n";
  CHECK(parse_error(base + frame_line(0, 0.0) + "\n" + frame_line(1, 0.0)) == ErrorCode::InvariantViolation);
  CHECK(parse_error(base + frame_line(0, 0.0) + "\n" +
                    R"({"kind":"speech","text":"a","start_s":0,"end_s":2})" "\n"
                    R"({"kind":"speech","text":"b","start_s":1,"end_s":3})") == ErrorCode::InvariantViolation);
  CHECK(parse_error(base + "{not json") == ErrorCode::MalformedLine);
}

TEST_CASE("missing manifest") {
  try {
    parse_recording("/nonexistent/recording");
    FAIL("expected MissingFile");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingFile);
  }
}

TEST_CASE("gaze projection examples") {
  CameraModel cam{500, 500, 320, 240, 640, 480};
  FrameRecord frame;
  GazeSample sample;

  SUBCASE("axis ray hits the principal point at any depth") {
    for (const double depth : {0.3, 1.0, 10.0}) {
      const auto p = project_gaze(sample, frame, cam, depth);
      CHECK(p.u == doctest::Approx(320).epsilon(1e-12));
      CHECK(p.v == doctest::Approx(240).epsilon(1e-12));
      CHECK(p.in_bounds);
    }
  }
  SUBCASE("behind the camera") {
    sample.direction = {0, 0, -1};
    CHECK_THROWS_AS(project_gaze(sample, frame, cam, 1.0), Error);
  }
  SUBCASE("invalid sample") {
    sample.valid = false;
    try {
      project_gaze(sample, frame, cam, 1.0);
      FAIL("expected InvalidSample");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidSample);
    }
  }
  SUBCASE("oblique ray, checked against the scalar oracle") {
    const double n = std::sqrt(1.01);
    sample.direction = {0.1 / n, 0, 1 / n};
    const auto p = project_gaze(sample, frame, cam, 1.0);
    const auto ref = oracle::pinhole({}, sample.direction, 1.0, kIdentityExtrinsics, 500, 500, 320, 240);
    CHECK(std::fabs(p.u - 370.0) < 1e-9);
    CHECK(std::fabs(p.v - 240.0) < 1e-9);
    CHECK(std::fabs(p.u - ref.u) < 1e-12);
  }
  SUBCASE("translated camera, against the scalar oracle") {
    frame.extrinsics = {1, 0, 0, -0.2, 0, 1, 0, 0.1, 0, 0, 1, 0.5, 0, 0, 0, 1};
    sample.origin = {0.1, 0.2, 0};
    sample.direction = {0.6, 0, 0.8};
    const auto p = project_gaze(sample, frame, cam, 2.0);
    const auto ref = oracle::pinhole(sample.origin, sample.direction, 2.0, frame.extrinsics, 500, 500, 320, 240);
    CHECK(std::fabs(p.u - ref.u) < 1e-9);
    CHECK(std::fabs(p.v - ref.v) < 1e-9);
    CHECK(std::fabs(p.u - (500 * 1.1 / 2.1 + 320)) < 1e-9);
    CHECK(p.in_bounds);
    sample.direction = {0.8, 0, 0.6};
    CHECK_FALSE(project_gaze(sample, frame, cam, 2.0).in_bounds);
  }
}

TEST_CASE("annotate_frame draws a copy") {
  const Image original(32, 32, {10, 10, 10});
  GazePoint2D g{0, 16, 16, true};
  ProjectedHands hands;
  hands.right = {{4, 4}};
  hands.left = {{28, 28}};
  const auto drawn = annotate_frame(original, g, hands);
  const AnnotationStyle style;
  CHECK(original.at(16, 16) == Rgb{10, 10, 10});
  CHECK(drawn.at(16, 16) == style.gaze_color);
  CHECK(drawn.at(4, 4) == style.right_hand_color);
  CHECK(drawn.at(28, 28) == style.left_hand_color);

  g.in_bounds = false;
  CHECK(annotate_frame(original, g).at(16, 16) == Rgb{10, 10, 10});
}

TEST_CASE("gaze sample lookup uses the nearest sample within tolerance") {
  const auto rec = parse_recording(fixture::synthetic_demo_dir());
  REQUIRE(rec.frames.size() == 60);
  const auto point = frame_gaze_point(rec, 0);
  REQUIRE(point);
  CHECK(point->u == doctest::Approx(40).epsilon(1e-9));
  CHECK(point->v == doctest::Approx(48).epsilon(1e-9));
  const auto later = frame_gaze_point(rec, 45);
  REQUIRE(later);
  CHECK(later->u == doctest::Approx(88).epsilon(1e-9));
}
