#include "egoassist/knowledge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <variant>

#include "egoassist/error.hpp"

namespace egoassist {

using nlohmann::json;

std::string_view to_string(CueMode mode) noexcept {
  switch (mode) {
    case CueMode::gaze: return "gaze";
    case CueMode::speech: return "speech";
    case CueMode::gaze_speech: return "gaze_speech";
  }
  return "gaze";
}

CueMode cue_mode_from_string(std::string_view text) {
  if (text == "gaze" || text == "eye_gaze") return CueMode::gaze;
  if (text == "speech") return CueMode::speech;
  if (text == "gaze_speech" || text == "gaze+speech" || text == "eye_gaze+speech") {
    return CueMode::gaze_speech;
  }
  throw Error(ErrorCode::UsageError, "unknown cue mode '" + std::string(text) + "'");
}

std::string_view to_string(IntentSource source) noexcept {
  return source == IntentSource::ground_truth ? "ground_truth" : "inferred";
}

IntentSource intent_source_from_string(std::string_view text) {
  if (text == "ground_truth") return IntentSource::ground_truth;
  if (text == "inferred") return IntentSource::inferred;
  throw Error(ErrorCode::UsageError, "unknown intent source '" + std::string(text) + "'");
}

std::vector<int> sample_range(int first, int last, int count) {
  if (count < 1) throw Error(ErrorCode::UsageError, "sample count must be >= 1");
  if (last < first) return {};
  const int span = last - first;
  std::vector<int> out;
  if (span + 1 <= count) {
    for (int i = first; i <= last; ++i) out.push_back(i);
    return out;
  }
  if (count == 1) return {first + span / 2};
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    out.push_back(first + static_cast<int>(std::lround(static_cast<double>(i) * span / (count - 1))));
  }
  return out;
}

std::vector<int> sample_frames(const TemporalSegment& segment, int count) {
  return sample_range(segment.start_frame, segment.end_frame, count);
}

namespace {

FrameImageLoader disk_loader(const DemonstrationRecording& rec, const FrameImageLoader& load_frame) {
  if (load_frame) return load_frame;
  return [&rec](int index) { return load_png(rec.image_path(rec.frames.at(static_cast<std::size_t>(index)))); };
}

std::string format_utterances(const std::vector<SpeechSegment>& utterances) {
  std::string out;
  for (const auto& u : utterances) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "[%.2fs - %.2fs] ", u.start_s, u.end_s);
    out += buf;
    out += u.text;
    out += '\n';
  }
  return out;
}

bool blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

std::string trimmed(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(a, b - a + 1));
}

const char* const kGazeNote =
    " The user's gaze location is annotated on the image with a purple circle. The user's right and "
    "left hand locations are annotated on the image with blue and green dots, respectively.";

template <typename Fn>
std::string call_vlm(Fn&& fn) {
  try {
    return fn();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ProviderFailure, e.what());
  }
}

struct ParsedKeyFrame {
  long long position;
  std::string reason;
  std::string description;
};

struct ParsedReply {
  std::string description;
  std::vector<ParsedKeyFrame> frames;
  bool important = true;
};

// Strict schema check of the keyframe reply. Returns an error message instead
// of throwing so the caller can re-prompt with it.
std::variant<ParsedReply, std::string> parse_keyframe_reply(std::string_view reply) {
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    return std::string("reply contains no JSON object");
  }
  json j;
  try {
    j = json::parse(reply.substr(open, close - open + 1));
  } catch (const json::exception& e) {
    return std::string("reply is not valid JSON: ") + e.what();
  }
  ParsedReply out;
  if (!j.contains("task_segment_description") || !j["task_segment_description"].is_string() ||
      blank(j["task_segment_description"].get<std::string>())) {
    return std::string("\"task_segment_description\" must be a non-empty string");
  }
  out.description = trimmed(j["task_segment_description"].get<std::string>());
  if (!j.contains("key_frames") || !j["key_frames"].is_array() || j["key_frames"].empty()) {
    return std::string("\"key_frames\" must be a non-empty array");
  }
  for (const auto& kf : j["key_frames"]) {
    if (!kf.is_object() || !kf.contains("frame_number") || !kf["frame_number"].is_number_integer()) {
      return std::string("every key frame needs an integer \"frame_number\"");
    }
    ParsedKeyFrame f;
    f.position = kf["frame_number"].get<long long>();
    if (kf.contains("reason") && kf["reason"].is_string()) f.reason = trimmed(kf["reason"].get<std::string>());
    if (kf.contains("description") && kf["description"].is_string()) {
      f.description = trimmed(kf["description"].get<std::string>());
    }
    out.frames.push_back(std::move(f));
  }
  if (!j.contains("is_segment_important")) return std::string("\"is_segment_important\" is missing");
  const auto& imp = j["is_segment_important"];
  if (imp.is_boolean()) {
    out.important = imp.get<bool>();
  } else if (imp.is_string() && (imp == "True" || imp == "true" || imp == "False" || imp == "false")) {
    out.important = imp == "True" || imp == "true";
  } else {
    return std::string("\"is_segment_important\" must be a boolean");
  }
  return out;
}

// Nearest position in [0, n) not in `used`; ties go to the lower position.
int nearest_unused(int target, int n, const std::set<int>& used) {
  for (int d = 0; d < n; ++d) {
    if (target - d >= 0 && target - d < n && !used.count(target - d)) return target - d;
    if (target + d >= 0 && target + d < n && !used.count(target + d)) return target + d;
  }
  return -1;
}

SegmentKnowledge build_knowledge(int segment_id, const ParsedReply& reply,
                                 const std::vector<int>& frame_indices, CueMode cue_mode, int k,
                                 ExtractionTrace& trace) {
  const int n = static_cast<int>(frame_indices.size());
  const int want = std::min(k, n);
  SegmentKnowledge out;
  out.segment_id = segment_id;
  out.description = reply.description;
  out.important = reply.important;
  out.cue_mode = cue_mode;

  std::set<int> used;
  for (const auto& f : reply.frames) {
    if (static_cast<int>(out.keyframes.size()) == want) break;
    int pos = static_cast<int>(std::clamp<long long>(f.position, 0, n - 1));
    if (pos != f.position) {
      trace.warnings.push_back("frame_number " + std::to_string(f.position) + " out of range, clamped to " +
                               std::to_string(pos));
    }
    if (used.count(pos)) {
      const int replacement = nearest_unused(pos, n, used);
      trace.warnings.push_back("duplicate frame_number " + std::to_string(pos) + ", replaced by " +
                               std::to_string(replacement));
      pos = replacement;
    }
    used.insert(pos);
    KeyFrame kf;
    kf.frame_index = frame_indices[static_cast<std::size_t>(pos)];
    kf.reason = f.reason;
    kf.caption = !f.description.empty() ? f.description : !f.reason.empty() ? f.reason : reply.description;
    out.keyframes.push_back(std::move(kf));
  }
  if (static_cast<int>(out.keyframes.size()) < want) {
    trace.warnings.push_back("reply named " + std::to_string(out.keyframes.size()) + " key frames, padded to " +
                             std::to_string(want));
    for (const int target : sample_range(0, n - 1, want)) {
      if (static_cast<int>(out.keyframes.size()) == want) break;
      const int pos = nearest_unused(target, n, used);
      used.insert(pos);
      out.keyframes.push_back({frame_indices[static_cast<std::size_t>(pos)], reply.description,
                               "added to reach the key frame count"});
    }
  }
  return out;
}

}  // namespace

Image prompt_frame(const DemonstrationRecording& rec, int frame_index, CueMode cue_mode,
                   const KnowledgeOptions& options, const FrameImageLoader& load_frame) {
  Image image = disk_loader(rec, load_frame)(frame_index);
  if (!uses_gaze(cue_mode)) return image;
  return annotate_frame(image, frame_gaze_point(rec, frame_index, options.gaze_depth_m),
                        frame_hand_points(rec, frame_index), options.style);
}

TaskIntent infer_intent(const DemonstrationRecording& rec, CueMode cue_mode, VlmProvider& vlm,
                        IntentSource requested, const KnowledgeOptions& options,
                        const FrameImageLoader& load_frame) {
  if (requested == IntentSource::ground_truth && rec.ground_truth_intent &&
      !blank(*rec.ground_truth_intent)) {
    return {*rec.ground_truth_intent, IntentSource::ground_truth};
  }
  if (rec.frames.empty()) throw Error(ErrorCode::TooFewFrames, "recording has no frames");
  const auto picks = sample_range(0, static_cast<int>(rec.frames.size()) - 1, options.intent_sample_count);

  VlmRequest request;
  request.kind = VlmCallKind::intent;
  for (const int index : picks) {
    request.images.push_back({"Frame " + std::to_string(request.images.size()),
                              prompt_frame(rec, index, cue_mode, options, load_frame)});
  }
  std::string utterances;
  if (uses_speech(cue_mode) && !rec.speech.empty()) {
    utterances = prompt_section("Speech Transcript", format_utterances(rec.speech));
  }
  request.prompt = render_template(options.prompts.intent,
                                   {{"frame_count", std::to_string(picks.size())},
                                    {"gaze_note", uses_gaze(cue_mode) ? kGazeNote : ""},
                                    {"utterances", utterances}});
  const auto reply = call_vlm([&] { return vlm.complete(request); });
  if (blank(reply)) throw Error(ErrorCode::EmptyResponse, "intent reply is empty");
  return {trimmed(reply), IntentSource::inferred};
}

SegmentKnowledge caption_frame_set(int segment_id, const std::vector<int>& frame_indices,
                                   const DemonstrationRecording& rec, const TaskIntent& intent,
                                   const std::vector<std::string>& history,
                                   const std::vector<SpeechSegment>& utterances, CueMode cue_mode,
                                   VlmProvider& vlm, const KnowledgeOptions& options,
                                   const FrameImageLoader& load_frame, ExtractionTrace* trace) {
  if (options.k < 1) throw Error(ErrorCode::UsageError, "k must be >= 1");
  if (frame_indices.empty()) throw Error(ErrorCode::UsageError, "segment has no frames");
  ExtractionTrace local;
  ExtractionTrace& tr = trace ? *trace : local;

  VlmRequest request;
  request.kind = VlmCallKind::keyframes;
  request.expects_json = true;
  for (std::size_t i = 0; i < frame_indices.size(); ++i) {
    request.images.push_back(
        {"Frame " + std::to_string(i), prompt_frame(rec, frame_indices[i], cue_mode, options, load_frame)});
  }

  const std::size_t keep = std::min(history.size(), options.history_cap);
  std::string history_text;
  for (std::size_t i = history.size() - keep; i < history.size(); ++i) {
    history_text += "Segment " + std::to_string(i) + ": " + history[i] + "\n";
  }
  if (history_text.empty()) history_text = "(no previous segments)";

  std::string utterance_block;
  if (uses_speech(cue_mode)) {
    const auto text = format_utterances(utterances);
    utterance_block = prompt_section("Speech Utterance", text.empty() ? "(no speech)" : text);
  }

  const std::string base_prompt = render_template(
      options.prompts.keyframes,
      {{"k", std::to_string(options.k)},
       {"last_frame_number", std::to_string(frame_indices.size() - 1)},
       {"gaze_note", uses_gaze(cue_mode) ? kGazeNote : ""},
       {"speech_note", uses_speech(cue_mode)
                           ? "3. **Speech Utterance**: A text transcript of what the user said during the "
                             "video segment.\n"
                           : ""},
       {"history", prompt_section("Segment History", history_text)},
       {"utterances", utterance_block},
       {"intent", prompt_section("Overall Intent", intent.text)}});

  request.prompt = base_prompt;
  std::string last_error;
  for (int attempt = 0; attempt <= options.max_reprompts; ++attempt) {
    const auto reply = call_vlm([&] { return vlm.complete(request); });
    auto parsed = parse_keyframe_reply(reply);
    if (auto* ok = std::get_if<ParsedReply>(&parsed)) {
      tr.retries = attempt;
      return build_knowledge(segment_id, *ok, frame_indices, cue_mode, options.k, tr);
    }
    last_error = std::get<std::string>(parsed);
    tr.warnings.push_back("attempt " + std::to_string(attempt + 1) + ": " + last_error);
    request.prompt = base_prompt + "\n\nYour previous reply was rejected: " + last_error +
                     ". Reply with only the JSON object described above.";
  }
  tr.retries = options.max_reprompts;
  if (!options.lenient) {
    throw Error(ErrorCode::MalformedReply, "segment " + std::to_string(segment_id) + ": " + last_error);
  }
  SegmentKnowledge placeholder;
  placeholder.segment_id = segment_id;
  placeholder.important = false;
  placeholder.cue_mode = cue_mode;
  return placeholder;
}

SegmentKnowledge extract_segment_knowledge(const TemporalSegment& segment,
                                           const DemonstrationRecording& rec, const TaskIntent& intent,
                                           const std::vector<std::string>& history, CueMode cue_mode,
                                           VlmProvider& vlm, const KnowledgeOptions& options,
                                           const FrameImageLoader& load_frame, ExtractionTrace* trace) {
  if (segment.end_frame < segment.start_frame) throw Error(ErrorCode::UsageError, "empty segment");
  return caption_frame_set(segment.segment_id, sample_frames(segment, options.segment_sample_count), rec,
                           intent, history, utterances_in_range(rec.speech, segment.start_s, segment.end_s),
                           cue_mode, vlm, options, load_frame, trace);
}

DemonstrationSummary summarize_demonstration(const std::vector<SegmentKnowledge>& knowledge,
                                             const TaskIntent& intent, VlmProvider& vlm,
                                             const KnowledgeOptions& options) {
  if (knowledge.empty()) throw Error(ErrorCode::UsageError, "no segment knowledge to summarize");
  std::string segments;
  for (const auto& k : knowledge) {
    if (k.is_placeholder()) continue;
    if (!segments.empty()) segments += '\n';
    segments += k.description;
  }
  VlmRequest request;
  request.kind = VlmCallKind::summary;
  request.prompt = render_template(options.prompts.summary,
                                   {{"intent", prompt_section("Overall Intent", intent.text)},
                                    {"segments", prompt_section("Segments", segments)}});
  const auto reply = call_vlm([&] { return vlm.complete(request); });
  if (blank(reply)) throw Error(ErrorCode::EmptyResponse, "summary reply is empty");
  return {trimmed(reply)};
}

KnowledgePass run_knowledge_pass(const DemonstrationRecording& rec,
                                 const std::vector<TemporalSegment>& segments, CueMode cue_mode,
                                 IntentSource intent_source, bool summary_enabled, VlmProvider& vlm,
                                 const KnowledgeOptions& options, const FrameImageLoader& load_frame) {
  KnowledgePass pass;
  pass.intent = infer_intent(rec, cue_mode, vlm, intent_source, options, load_frame);
  std::vector<std::string> history;
  for (const auto& segment : segments) {
    ExtractionTrace trace;
    auto knowledge =
        extract_segment_knowledge(segment, rec, pass.intent, history, cue_mode, vlm, options, load_frame, &trace);
    if (!knowledge.is_placeholder()) history.push_back(knowledge.description);
    pass.segments.push_back(std::move(knowledge));
    pass.traces.push_back(std::move(trace));
  }
  if (summary_enabled && !pass.segments.empty()) {
    pass.summary = summarize_demonstration(pass.segments, pass.intent, vlm, options);
  }
  return pass;
}

json segment_knowledge_to_json(const SegmentKnowledge& k) {
  json frames = json::array();
  for (const auto& kf : k.keyframes) {
    frames.push_back({{"frame_index", kf.frame_index}, {"caption", kf.caption}, {"reason", kf.reason}});
  }
  return {{"segment_id", k.segment_id},
          {"description", k.description},
          {"keyframes", std::move(frames)},
          {"important", k.important},
          {"cue_mode", to_string(k.cue_mode)}};
}

SegmentKnowledge segment_knowledge_from_json(const json& s) {
  SegmentKnowledge k;
  k.segment_id = s.at("segment_id").get<int>();
  k.description = s.at("description").get<std::string>();
  k.important = s.at("important").get<bool>();
  k.cue_mode = cue_mode_from_string(s.at("cue_mode").get<std::string>());
  for (const auto& kf : s.at("keyframes")) {
    k.keyframes.push_back(
        {kf.at("frame_index").get<int>(), kf.at("caption").get<std::string>(), kf.value("reason", "")});
  }
  return k;
}

json knowledge_to_json(const std::string& demonstration_id, const KnowledgePass& pass) {
  json segs = json::array();
  for (const auto& k : pass.segments) segs.push_back(segment_knowledge_to_json(k));
  json j = {{"schema_version", 1},
            {"demonstration_id", demonstration_id},
            {"intent", {{"text", pass.intent.text}, {"source", to_string(pass.intent.source)}}},
            {"segments", std::move(segs)}};
  j["summary"] = pass.summary ? json(pass.summary->text) : json(nullptr);
  return j;
}

KnowledgePass knowledge_from_json(const json& j) {
  KnowledgePass pass;
  pass.intent = {j.at("intent").at("text").get<std::string>(),
                 intent_source_from_string(j.at("intent").at("source").get<std::string>())};
  for (const auto& s : j.at("segments")) pass.segments.push_back(segment_knowledge_from_json(s));
  if (j.contains("summary") && !j["summary"].is_null()) {
    pass.summary = DemonstrationSummary{j["summary"].get<std::string>()};
  }
  return pass;
}

}  // namespace egoassist
