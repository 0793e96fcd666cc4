#include <cmath>
#include <random>

#include "doctest.h"
#include "egoassist/error.hpp"
#include "egoassist/knowledge.hpp"
#include "egoassist/mock_providers.hpp"
#include "fixtures.hpp"

using namespace egoassist;
using nlohmann::json;

namespace {

std::string keyframe_reply(std::vector<int> positions, const std::string& description = "Pick up the cup",
                           json important = true) {
  json frames = json::array();
  for (const int p : positions) {
    frames.push_back({{"frame_number", p}, {"reason", "r" + std::to_string(p)}, {"description", "c" + std::to_string(p)}});
  }
  return json{{"task_segment_description", description}, {"key_frames", frames}, {"is_segment_important", important}}
      .dump();
}

MockVlm scripted(VlmCallKind kind, std::vector<std::string> replies) {
  MockScript script;
  for (auto& r : replies) script.responses[kind].emplace_back(std::move(r));
  return MockVlm(std::move(script));
}

TemporalSegment segment(int first, int last, const DemonstrationRecording& rec) {
  TemporalSegment s;
  s.start_frame = first;
  s.end_frame = last;
  s.start_s = rec.frames[static_cast<std::size_t>(first)].timestamp_s;
  s.end_s = rec.frames[static_cast<std::size_t>(last)].timestamp_s;
  return s;
}

const DemonstrationRecording& demo_recording() {
  static const auto rec = parse_recording(fixture::synthetic_demo_dir());
  return rec;
}

const TaskIntent kIntent{"The user is moving a cup", IntentSource::ground_truth};

}  // namespace

TEST_CASE("sample_range examples") {
  std::vector<int> all(30);
  for (int i = 0; i < 30; ++i) all[static_cast<std::size_t>(i)] = i;
  CHECK(sample_range(0, 29, 30) == all);
  CHECK(sample_range(0, 9, 30) == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(sample_range(0, 90, 4) == std::vector<int>{0, 30, 60, 90});
  CHECK(sample_range(10, 20, 1) == std::vector<int>{15});
}

TEST_CASE("sample_frames is increasing, in bounds and sized min(count, length)") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    TemporalSegment s;
    s.start_frame = std::uniform_int_distribution<int>(0, 100)(rng);
    s.end_frame = s.start_frame + std::uniform_int_distribution<int>(0, 200)(rng);
    const int count = std::uniform_int_distribution<int>(1, 60)(rng);
    const auto picks = sample_frames(s, count);
    CHECK(picks.size() == static_cast<std::size_t>(std::min(count, s.frame_count())));
    for (std::size_t i = 0; i < picks.size(); ++i) {
      CHECK(picks[i] >= s.start_frame);
      CHECK(picks[i] <= s.end_frame);
      if (i > 0) CHECK(picks[i] > picks[i - 1]);
    }
  }
}

TEST_CASE("intent") {
  SUBCASE("ground truth costs no provider call") {
    auto rec = demo_recording();
    rec.ground_truth_intent = "The user is shopping";
    MockVlm vlm;
    const auto intent = infer_intent(rec, CueMode::gaze, vlm, IntentSource::ground_truth);
    CHECK(intent == TaskIntent{"The user is shopping", IntentSource::ground_truth});
    CHECK(vlm.call_count() == 0);
  }
  SUBCASE("short recordings send every frame") {
    auto rec = demo_recording();
    rec.frames.resize(10);
    rec.gaze.resize(10);
    rec.speech.clear();
    auto vlm = scripted(VlmCallKind::intent, {"INTENT_X"});
    const auto intent = infer_intent(rec, CueMode::gaze, vlm, IntentSource::inferred);
    CHECK(intent == TaskIntent{"INTENT_X", IntentSource::inferred});
    REQUIRE(vlm.call_count() == 1);
    CHECK(vlm.calls()[0].image_count == 10);
  }
  SUBCASE("speech cue adds the transcript") {
    auto vlm = scripted(VlmCallKind::intent, {"x"});
    infer_intent(demo_recording(), CueMode::speech, vlm, IntentSource::inferred);
    CHECK(vlm.calls()[0].prompt.find("First I pick up the red cup.") != std::string::npos);
    CHECK(vlm.calls()[0].image_count == 50);
  }
  SUBCASE("blank reply") {
    auto vlm = scripted(VlmCallKind::intent, {"   "});
    try {
      infer_intent(demo_recording(), CueMode::gaze, vlm, IntentSource::inferred);
      FAIL("expected EmptyResponse");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyResponse);
    }
  }
}

TEST_CASE("keyframe extraction maps sample positions to frames") {
  const auto& rec = demo_recording();
  const auto seg = segment(0, 59, rec);
  // 30 samples over frames 0-59: position i is round(59 i / 29).
  auto vlm = scripted(VlmCallKind::keyframes, {keyframe_reply({2, 5, 9})});
  ExtractionTrace trace;
  const auto k = extract_segment_knowledge(seg, rec, kIntent, {}, CueMode::gaze, vlm, {}, {}, &trace);
  REQUIRE(k.keyframes.size() == 3);
  CHECK(k.keyframes[0].frame_index == static_cast<int>(std::lround(59.0 * 2 / 29)));
  CHECK(k.keyframes[0].frame_index == 4);
  CHECK(k.keyframes[1].frame_index == 10);
  CHECK(k.keyframes[2].frame_index == 18);
  CHECK(k.keyframes[1].caption == "c5");
  CHECK(k.description == "Pick up the cup");
  CHECK(trace.retries == 0);
  CHECK(trace.warnings.empty());
  CHECK(vlm.calls()[0].image_count == 30);
}

TEST_CASE("out-of-range and duplicate positions") {
  const auto& rec = demo_recording();
  const auto seg = segment(30, 59, rec);
  SUBCASE("clamped with a warning") {
    auto vlm = scripted(VlmCallKind::keyframes, {keyframe_reply({0, 10, 99})});
    ExtractionTrace trace;
    const auto k = extract_segment_knowledge(seg, rec, kIntent, {}, CueMode::gaze, vlm, {}, {}, &trace);
    CHECK(k.keyframes[2].frame_index == 59);
    REQUIRE(trace.warnings.size() == 1);
    CHECK(trace.warnings[0].find("99") != std::string::npos);
  }
  SUBCASE("duplicate replaced by the nearest unused position, lower first") {
    auto vlm = scripted(VlmCallKind::keyframes, {keyframe_reply({5, 5, 9})});
    const auto k = extract_segment_knowledge(seg, rec, kIntent, {}, CueMode::gaze, vlm);
    REQUIRE(k.keyframes.size() == 3);
    CHECK(k.keyframes[0].frame_index == 35);
    CHECK(k.keyframes[1].frame_index == 34);
    CHECK(k.keyframes[2].frame_index == 39);
  }
  SUBCASE("short reply padded to k") {
    auto vlm = scripted(VlmCallKind::keyframes, {keyframe_reply({0})});
    const auto k = extract_segment_knowledge(seg, rec, kIntent, {}, CueMode::gaze, vlm);
    CHECK(k.keyframes.size() == 3);
  }
  SUBCASE("segment shorter than k") {
    auto vlm = scripted(VlmCallKind::keyframes, {keyframe_reply({0, 1, 2})});
    const auto k = extract_segment_knowledge(segment(10, 11, rec), rec, kIntent, {}, CueMode::gaze, vlm);
    CHECK(k.keyframes.size() == 2);
  }
}

TEST_CASE("malformed replies are re-prompted") {
  const auto& rec = demo_recording();
  const auto seg = segment(0, 29, rec);
  SUBCASE("two bad, then good") {
    auto vlm = scripted(VlmCallKind::keyframes, {"not json", "{\"key_frames\": []}", keyframe_reply({1, 2, 3})});
    ExtractionTrace trace;
    const auto k = extract_segment_knowledge(seg, rec, kIntent, {}, CueMode::gaze, vlm, {}, {}, &trace);
    CHECK(k.keyframes.size() == 3);
    CHECK(trace.retries == 2);
    CHECK(vlm.call_count() == 3);
    CHECK(vlm.calls()[1].prompt.find("previous reply was rejected") != std::string::npos);
  }
  SUBCASE("three bad is fatal") {
    auto vlm = scripted(VlmCallKind::keyframes, {"no"});
    try {
      extract_segment_knowledge(seg, rec, kIntent, {}, CueMode::gaze, vlm);
      FAIL("expected MalformedReply");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedReply);
    }
    CHECK(vlm.call_count() == 3);
  }
  SUBCASE("lenient mode stores a placeholder") {
    auto vlm = scripted(VlmCallKind::keyframes, {"no"});
    KnowledgeOptions o;
    o.lenient = true;
    const auto k = extract_segment_knowledge(seg, rec, kIntent, {}, CueMode::gaze, vlm, o);
    CHECK(k.is_placeholder());
    CHECK_FALSE(k.important);
  }
  SUBCASE("string booleans are accepted") {
    auto vlm = scripted(VlmCallKind::keyframes, {keyframe_reply({1, 2, 3}, "d", "False")});
    CHECK_FALSE(extract_segment_knowledge(seg, rec, kIntent, {}, CueMode::gaze, vlm).important);
  }
}

TEST_CASE("keyframes never leave the segment for fuzzed replies") {
  const auto& rec = demo_recording();
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int first = std::uniform_int_distribution<int>(0, 50)(rng);
    const int last = std::uniform_int_distribution<int>(first, 59)(rng);
    std::vector<int> positions;
    for (int i = std::uniform_int_distribution<int>(1, 6)(rng); i > 0; --i) {
      positions.push_back(std::uniform_int_distribution<int>(-50, 150)(rng));
    }
    std::string reply = keyframe_reply(positions);
    if (trial % 7 == 0) reply = reply.substr(0, reply.size() / 2);  // truncated JSON
    MockScript script;
    script.responses[VlmCallKind::keyframes] = {reply, keyframe_reply({0, 1, 2})};
    MockVlm vlm(std::move(script));
    const auto k = extract_segment_knowledge(segment(first, last, rec), rec, kIntent, {}, CueMode::gaze, vlm);
    std::set<int> seen;
    for (const auto& kf : k.keyframes) {
      CHECK(kf.frame_index >= first);
      CHECK(kf.frame_index <= last);
      CHECK(seen.insert(kf.frame_index).second);
    }
  }
}

TEST_CASE("keyframe prompt sections") {
  const auto& rec = demo_recording();
  auto vlm = scripted(VlmCallKind::keyframes, {keyframe_reply({0, 1, 2})});
  extract_segment_knowledge(segment(0, 29, rec), rec, kIntent, {"Earlier step"}, CueMode::gaze_speech, vlm);
  const auto prompt = vlm.calls()[0].prompt;
  CHECK(extract_prompt_section(prompt, "Segment History").find("Segment 0: Earlier step") != std::string::npos);
  CHECK(extract_prompt_section(prompt, "Overall Intent") == kIntent.text);
  CHECK(extract_prompt_section(prompt, "Speech Utterance").find("red cup") != std::string::npos);

  auto gaze_only = scripted(VlmCallKind::keyframes, {keyframe_reply({0, 1, 2})});
  extract_segment_knowledge(segment(0, 29, rec), rec, kIntent, {}, CueMode::gaze, gaze_only);
  CHECK(gaze_only.calls()[0].prompt.find("## Speech Utterance") == std::string::npos);
  CHECK(extract_prompt_section(gaze_only.calls()[0].prompt, "Segment History") == "(no previous segments)");
}

TEST_CASE("history is capped") {
  const auto& rec = demo_recording();
  std::vector<std::string> history;
  for (int i = 0; i < 25; ++i) history.push_back("step " + std::to_string(i));
  auto vlm = scripted(VlmCallKind::keyframes, {keyframe_reply({0, 1, 2})});
  extract_segment_knowledge(segment(0, 29, rec), rec, kIntent, history, CueMode::gaze, vlm);
  const auto section = extract_prompt_section(vlm.calls()[0].prompt, "Segment History");
  CHECK(section.find("step 4\n") == std::string::npos);
  CHECK(section.find("Segment 5: step 5") != std::string::npos);
  CHECK(section.find("Segment 24: step 24") != std::string::npos);
}

TEST_CASE("summary") {
  SegmentKnowledge one;
  one.description = "Only step";
  one.keyframes = {{0, "c", "r"}};
  SUBCASE("echo of one description") {
    MockScript script;
    script.responses[VlmCallKind::summary] = {EchoResponse{"Segments", "", ""}};
    MockVlm vlm(std::move(script));
    CHECK(summarize_demonstration({one}, kIntent, vlm).text == "Only step");
  }
  SUBCASE("three markers survive concatenation") {
    auto a = one, b = one, c = one;
    a.description = "MARK_A";
    b.description = "MARK_B";
    c.description = "MARK_C";
    MockScript script;
    script.responses[VlmCallKind::summary] = {EchoResponse{"Segments", "", ""}};
    MockVlm vlm(std::move(script));
    const auto s = summarize_demonstration({a, b, c}, kIntent, vlm).text;
    CHECK(s.find("MARK_A") != std::string::npos);
    CHECK(s.find("MARK_B") != std::string::npos);
    CHECK(s.find("MARK_C") != std::string::npos);
  }
  SUBCASE("empty list") {
    MockVlm vlm;
    try {
      summarize_demonstration({}, kIntent, vlm);
      FAIL("expected UsageError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UsageError);
    }
  }
}

TEST_CASE("knowledge pass call count and determinism") {
  const auto& rec = demo_recording();
  const std::vector<TemporalSegment> segs = {segment(0, 32, rec), segment(33, 59, rec)};
  MockVlm first;
  const auto a = run_knowledge_pass(rec, segs, CueMode::gaze, IntentSource::inferred, true, first);
  CHECK(first.call_count() == 1 + 2 + 1);
  MockVlm second;
  const auto b = run_knowledge_pass(rec, segs, CueMode::gaze, IntentSource::inferred, true, second);
  CHECK(knowledge_to_json("d", a).dump() == knowledge_to_json("d", b).dump());
  CHECK(knowledge_from_json(knowledge_to_json("d", a)).segments == a.segments);

  MockVlm gt;
  run_knowledge_pass(rec, segs, CueMode::gaze, IntentSource::ground_truth, false, gt);
  CHECK(gt.call_count() == 2);
}
