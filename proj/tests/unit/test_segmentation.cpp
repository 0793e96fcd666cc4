#include <random>

#include "doctest.h"
#include "egoassist/error.hpp"
#include "egoassist/mock_providers.hpp"
#include "egoassist/segmentation.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace egoassist;

namespace {

MaskProposal proposal(const Mask& m, int frame = 0) {
  MaskProposal p;
  p.frame_index = frame;
  p.mask = m;
  return p;
}

const Mask kLeft = Mask::rectangle(10, 10, 0, 0, 5, 9);
const Mask kRight = Mask::rectangle(10, 10, 3, 0, 8, 9);

}  // namespace

TEST_CASE("iou examples") {
  CHECK(iou(kLeft, kLeft) == 1.0);
  CHECK(iou(Mask::rectangle(10, 10, 0, 0, 1, 1), Mask::rectangle(10, 10, 5, 5, 6, 6)) == 0.0);
  CHECK(iou(kLeft, kRight) == doctest::Approx(30.0 / 90.0).epsilon(1e-12));
  CHECK(oracle::pixel_iou(kLeft, kRight) == doctest::Approx(30.0 / 90.0).epsilon(1e-12));
  CHECK(iou(Mask(4, 4), Mask(4, 4)) == 0.0);
  CHECK_THROWS_AS(iou(Mask(4, 4), Mask(5, 4)), Error);
}

TEST_CASE("in-clip consensus") {
  SegmentationParams p;
  p.window_n = 3;
  p.iou_theta = 0.5;
  const Mask m = Mask::rectangle(10, 10, 2, 2, 6, 6);

  SUBCASE("repeated mask survives") {
    std::vector<std::vector<MaskProposal>> w = {{proposal(m)}, {proposal(m)}, {proposal(m)}};
    CHECK(in_clip_consensus(w, p).size() == 1);
  }
  SUBCASE("absent later is dropped") {
    std::vector<std::vector<MaskProposal>> w = {{proposal(m)}, {}, {}};
    CHECK(in_clip_consensus(w, p).empty());
  }
  SUBCASE("theta decides the 30/90 pair") {
    p.window_n = 2;
    std::vector<std::vector<MaskProposal>> w = {{proposal(kLeft)}, {proposal(kRight)}};
    CHECK(in_clip_consensus(w, p).empty());
    p.iou_theta = 0.3;
    CHECK(in_clip_consensus(w, p).size() == 1);
  }
  SUBCASE("theta 1 keeps only identical repeats") {
    p.window_n = 2;
    p.iou_theta = 1.0;
    std::vector<std::vector<MaskProposal>> w = {{proposal(m)}, {proposal(m)}};
    CHECK(in_clip_consensus(w, p).empty());  // IoU 1 is not > 1
  }
  SUBCASE("short window") {
    std::vector<std::vector<MaskProposal>> w = {{proposal(m)}, {proposal(m)}};
    try {
      in_clip_consensus(w, p);
      FAIL("expected WindowTooShort");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::WindowTooShort);
    }
  }
}

TEST_CASE("consensus output is a subset of frame-t proposals") {
  std::mt19937_64 rng(7);
  SegmentationParams p;
  p.window_n = 3;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<MaskProposal>> w(3);
    for (auto& frame : w) {
      for (int k = std::uniform_int_distribution<int>(0, 3)(rng); k > 0; --k) {
        const int x = std::uniform_int_distribution<int>(0, 6)(rng);
        frame.push_back(proposal(Mask::rectangle(10, 10, x, x, x + 3, x + 3)));
      }
    }
    for (const auto& kept : in_clip_consensus(w, p)) {
      bool found = false;
      for (const auto& q : w[0]) found = found || q.mask == kept.mask;
      CHECK(found);
    }
  }
}

TEST_CASE("update_tracks retirement boundary") {
  SegmentationParams p;
  p.lost_after_x = 5;
  ObjectIdAllocator ids;
  TrackedObject t;
  t.object_id = ids.next();
  t.first_seen_frame = t.last_seen_frame = 10;
  t.masks[10] = kLeft;
  std::vector<TrackedObject> retired;
  CHECK(update_tracks({t}, 15, {}, {}, p, ids).size() == 1);
  CHECK(update_tracks({t}, 16, {}, {}, p, ids, &retired).empty());
  CHECK(retired.size() == 1);
}

TEST_CASE("update_tracks spawns only for unmatched consensus") {
  SegmentationParams p;
  ObjectIdAllocator ids;
  TrackedObject t;
  t.object_id = ids.next();
  t.first_seen_frame = t.last_seen_frame = 0;
  const Mask big = Mask::rectangle(20, 20, 0, 0, 9, 9);
  t.masks[0] = big;
  // 90 of 100 pixels shared: IoU 0.9.
  const Mask near = Mask::rectangle(20, 20, 0, 0, 9, 8);
  CHECK(oracle::pixel_iou(big, near) == doctest::Approx(0.9));
  CHECK(update_tracks({t}, 1, {}, {proposal(near, 1)}, p, ids).size() == 1);
  // 20 shared of 100: IoU 0.2.
  const Mask far = Mask::rectangle(20, 20, 0, 0, 1, 9);
  CHECK(oracle::pixel_iou(big, far) == doctest::Approx(0.2));
  const auto tracks = update_tracks({t}, 1, {}, {proposal(far, 1)}, p, ids);
  REQUIRE(tracks.size() == 2);
  CHECK(tracks[1].object_id == 2);
}

TEST_CASE("set change fraction") {
  CHECK(set_change_fraction({1, 2, 3}, {1, 2, 4}) == 0.5);
  CHECK(set_change_fraction({}, {}) == 0.0);
  CHECK(set_change_fraction({1}, {2}) == 1.0);
  SegmentationParams p;
  p.sustain_m = 1;
  p.change_fraction_z = 0.5;
  const std::vector<std::set<int>> abc_abd = {{1, 2, 3}, {1, 2, 4}, {1, 2, 4}};
  CHECK(detect_boundaries(abc_abd, p).empty());
  p.change_fraction_z = 0.49;
  CHECK(detect_boundaries(abc_abd, p) == std::vector<int>{1});
}

TEST_CASE("boundary detection examples") {
  SegmentationParams p;
  p.change_fraction_z = 0.5;
  p.sustain_m = 2;
  std::vector<std::set<int>> sets(20);
  for (int t = 0; t < 20; ++t) sets[static_cast<std::size_t>(t)] = t < 10 ? std::set<int>{1} : std::set<int>{2};
  CHECK(detect_boundaries(sets, p) == std::vector<int>{10});

  std::vector<std::set<int>> constant(20, {1, 2});
  CHECK(detect_boundaries(constant, p).empty());

  // A one-frame blip does not last sustain_m frames.
  auto blip = constant;
  blip[5] = {3};
  CHECK(detect_boundaries(blip, p).empty());
}

TEST_CASE("short segments merge into their predecessor") {
  CHECK(merge_short_segments({10, 12, 30}, 40, 5) == std::vector<int>{12, 30});
  CHECK(merge_short_segments({3, 20}, 40, 5) == std::vector<int>{20});
  CHECK(merge_short_segments({20, 38}, 40, 5) == std::vector<int>{20});
  CHECK(merge_short_segments({}, 40, 5).empty());
}

TEST_CASE("segment_by_gaze on random streams matches the reference") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const auto stream = oracle::random_gaze_stream(rng);
    const auto ref = oracle::reference_segmentation(stream);
    const auto got = fixture::run_stream(stream);
    CHECK(got.raw_boundaries == ref.raw_boundaries);
    REQUIRE(!got.segments.empty());
    // Ordered, covering, non-overlapping.
    CHECK(got.segments.front().start_frame == 0);
    CHECK(got.segments.back().end_frame == stream.frame_count - 1);
    for (std::size_t i = 1; i < got.segments.size(); ++i) {
      CHECK(got.segments[i].start_frame == got.segments[i - 1].end_frame + 1);
      CHECK(got.segments[i - 1].frame_count() >= stream.params.min_segment_frames);
    }
  }
}

TEST_CASE("segment_by_gaze on the bundled recording") {
  const auto rec = parse_recording(fixture::synthetic_demo_dir());
  MockPointSegmenter segmenter(5);
  MockMaskPropagator tracker;
  tracker.script_lost(1, 30, 59);
  SegmentationParams p;
  p.lost_after_x = 3;
  p.sustain_m = 5;
  p.min_segment_frames = 10;
  const auto out = segment_by_gaze(rec, segmenter, tracker, p);
  REQUIRE(out.segments.size() == 2);
  // Object 1 last propagates at frame 29, retires after 3 more frames; the
  // tray (object 2) spawns at frame 30.
  CHECK(out.segments[1].start_frame == 33);
  CHECK(out.active_sets[32] == std::set<int>{1, 2});
  CHECK(out.active_sets[33] == std::set<int>{2});
}

TEST_CASE("too few frames for the window") {
  oracle::GazeStream s;
  s.frame_count = 2;
  s.params.window_n = 3;
  s.proposals.assign(2, std::nullopt);
  CHECK_THROWS_AS(fixture::run_stream(s), Error);
}

TEST_CASE("provider failures surface as ProviderFailure") {
  struct Broken : PointSegmentProvider {
    MaskProposal point_segment(const Image&, const GazePoint2D&) override { throw std::runtime_error("boom"); }
  } broken;
  MockMaskPropagator tracker;
  const auto rec = parse_recording(fixture::synthetic_demo_dir());
  try {
    segment_by_gaze(rec, broken, tracker, {});
    FAIL("expected ProviderFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ProviderFailure);
  }
}

TEST_CASE("speech segmentation") {
  DemonstrationRecording rec;
  rec.id = "speech";
  for (int i = 0; i < 61; ++i) {
    FrameRecord f;
    f.index = i;
    f.timestamp_s = i / 30.0;
    rec.frames.push_back(f);
  }
  SUBCASE("one second over 30 fps is frames 0-30") {
    rec.speech = {{"hello", 0.0, 1.0}};
    const auto segs = segment_by_speech(rec);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].start_frame == 0);
    CHECK(segs[0].end_frame == 30);
    // Brute-force scan of frame timestamps.
    int inside = 0;
    for (const auto& f : rec.frames) inside += (f.timestamp_s >= 0.0 && f.timestamp_s <= 1.0);
    CHECK(inside == segs[0].frame_count());
  }
  SUBCASE("two utterances in order") {
    rec.speech = {{"a", 0.0, 0.5}, {"b", 1.0, 1.5}};
    const auto segs = segment_by_speech(rec);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].utterance_text == "a");
    CHECK(segs[1].utterance_text == "b");
    CHECK(segs[1].start_frame == 30);
  }
  SUBCASE("utterance between frames clamps to the nearest frame") {
    rec.speech = {{"blink", 0.01, 0.02}};
    const auto segs = segment_by_speech(rec);
    CHECK(segs[0].start_frame == 0);
    CHECK(segs[0].end_frame == 0);
  }
  SUBCASE("no speech") {
    try {
      segment_by_speech(rec);
      FAIL("expected NoSpeech");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NoSpeech);
    }
  }
}

TEST_CASE("segments.json round trip") {
  TemporalSegment a;
  a.segment_id = 0;
  a.end_frame = 9;
  a.object_ids = {1, 2};
  TemporalSegment b;
  b.segment_id = 1;
  b.start_frame = 10;
  b.end_frame = 19;
  b.mode = SegmentMode::speech;
  b.utterance_text = "now the tray";
  const auto j = segments_to_json("d", {a, b});
  CHECK(segments_from_json(j) == std::vector<TemporalSegment>{a, b});
}

TEST_CASE("mask run-length encoding round trip") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    Mask m(7, 5);
    for (int y = 0; y < 5; ++y) {
      for (int x = 0; x < 7; ++x) {
        if (rng() % 3 == 0) m.set(x, y);
      }
    }
    CHECK(Mask::from_run_lengths(7, 5, m.run_lengths()) == m);
    CHECK(mask_from_json(mask_to_json(m)) == m);
  }
}
