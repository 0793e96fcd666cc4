#include "egoassist/assist.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>

#include "egoassist/error.hpp"

namespace egoassist {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(AnswerMode mode) noexcept {
  switch (mode) {
    case AnswerMode::rag: return "rag";
    case AnswerMode::zero_shot: return "zero_shot";
    case AnswerMode::frames_as_context: return "frames_as_context";
  }
  return "rag";
}

AnswerMode answer_mode_from_string(std::string_view text) {
  if (text == "rag") return AnswerMode::rag;
  if (text == "zero_shot") return AnswerMode::zero_shot;
  if (text == "frames_as_context") return AnswerMode::frames_as_context;
  throw Error(ErrorCode::UsageError, "unknown answer mode '" + std::string(text) + "'");
}

const std::vector<EmbeddingVector>& Demonstration::frame_embeddings(ImageEmbedder& embedder) const {
  std::lock_guard lock(frame_mutex_);
  if (!frame_embeddings_) {
    std::vector<EmbeddingVector> out;
    out.reserve(recording.frames.size());
    for (const auto& frame : recording.frames) {
      out.push_back(embedder.embed_image(load_png(recording.image_path(frame))).normalized());
    }
    frame_embeddings_ = std::move(out);
  }
  return *frame_embeddings_;
}

json session_config_to_json(const SessionConfig& c) {
  auto j = retrieval_config_to_json(c.retrieval);
  j["history_enabled"] = c.history_enabled;
  j["mode"] = to_string(c.mode);
  j["use_summary"] = c.use_summary;
  return j;
}

SessionConfig session_config_from_json(const json& j, SessionConfig c) {
  c.retrieval = retrieval_config_from_json(j, c.retrieval);
  c.history_enabled = j.value("history_enabled", c.history_enabled);
  if (j.contains("mode")) c.mode = answer_mode_from_string(j["mode"].get<std::string>());
  c.use_summary = j.value("use_summary", c.use_summary);
  c.retrieval.validate();
  return c;
}

namespace {

json gaze_to_json(const std::optional<GazePoint2D>& g) {
  if (!g) return nullptr;
  return {{"u", g->u}, {"v", g->v}};
}

std::optional<GazePoint2D> gaze_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  GazePoint2D g;
  g.u = j.at("u").get<double>();
  g.v = j.at("v").get<double>();
  return g;
}

json trace_to_json(const std::vector<TraceEntry>& trace) {
  json out = json::array();
  for (const auto& t : trace) {
    out.push_back({{"segment_id", t.segment_id}, {"score", t.score}, {"s_textual", t.s_textual}, {"s_visual", t.s_visual}});
  }
  return out;
}

std::string trimmed(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(a, b - a + 1));
}

std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

json session_to_json(const Session& s) {
  json turns = json::array();
  for (const auto& t : s.turns) {
    turns.push_back({{"question", t.question},
                     {"image_ref", t.image_ref},
                     {"gaze_point", gaze_to_json(t.gaze_point)},
                     {"timestamp_s", t.timestamp_s},
                     {"caption", t.caption},
                     {"answer", t.answer_text},
                     {"mode", to_string(t.mode)},
                     {"retrieval_trace", trace_to_json(t.retrieval_trace)},
                     {"context_frames", t.context_frames}});
  }
  return {{"session_id", s.session_id},
          {"demonstration_id", s.demonstration_id},
          {"intent", {{"text", s.intent.text}, {"source", to_string(s.intent.source)}}},
          {"config", session_config_to_json(s.config)},
          {"summary", s.summary ? json(s.summary->text) : json(nullptr)},
          {"turns", std::move(turns)}};
}

Session session_from_json(const json& j, const fs::path& image_dir) {
  Session s;
  s.session_id = j.at("session_id").get<std::string>();
  s.demonstration_id = j.at("demonstration_id").get<std::string>();
  s.intent = {j.at("intent").at("text").get<std::string>(),
              intent_source_from_string(j.at("intent").at("source").get<std::string>())};
  s.config = session_config_from_json(j.at("config"));
  if (!j.at("summary").is_null()) s.summary = DemonstrationSummary{j["summary"].get<std::string>()};
  for (const auto& t : j.at("turns")) {
    ChatTurn turn;
    turn.question = t.at("question").get<std::string>();
    turn.image_ref = t.at("image_ref").get<std::string>();
    turn.gaze_point = gaze_from_json(t.at("gaze_point"));
    turn.timestamp_s = t.at("timestamp_s").get<double>();
    turn.caption = t.at("caption").get<std::string>();
    turn.answer_text = t.at("answer").get<std::string>();
    turn.mode = answer_mode_from_string(t.at("mode").get<std::string>());
    for (const auto& e : t.at("retrieval_trace")) {
      turn.retrieval_trace.push_back({e.at("segment_id").get<int>(), e.at("score").get<double>(),
                                      e.at("s_textual").get<double>(), e.at("s_visual").get<double>()});
    }
    turn.context_frames = t.at("context_frames").get<std::vector<int>>();
    fs::path ref = turn.image_ref;
    if (ref.is_relative()) ref = image_dir / ref;
    s.turn_images.push_back(load_png(ref));
    s.turns.push_back(std::move(turn));
  }
  return s;
}

std::optional<std::string> parse_answer_reply(std::string_view reply) {
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
  try {
    const auto j = json::parse(reply.substr(open, close - open + 1));
    if (!j.is_object() || !j.contains("answer") || !j["answer"].is_string()) return std::nullopt;
    auto text = trimmed(j["answer"].get<std::string>());
    if (text.empty()) return std::nullopt;
    return text;
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

AssembledPrompt assemble_answer_prompt(const Session& session, const Query& query, const Demonstration& demo,
                                       ProviderSet& providers, const AssistOptions& options) {
  if (trimmed(query.question).empty()) throw Error(ErrorCode::UsageError, "question must be non-empty");
  if (options.max_prompt_images < 1) throw Error(ErrorCode::UsageError, "max_prompt_images must be >= 1");
  AssembledPrompt out;
  const auto& cfg = session.config;

  // The gaze marker goes on the copy that is captioned and shown to the VLM;
  // the raw image is what gets embedded, matching the unannotated keyframes.
  auto gaze = query.gaze_point;
  if (gaze) {
    gaze->in_bounds = gaze->u >= 0 && gaze->v >= 0 && gaze->u < query.image.width() && gaze->v < query.image.height();
  }
  const Image shown = annotate_frame(query.image, gaze, std::nullopt, options.style);
  out.caption = trimmed(providers.captioner->caption(shown));
  if (out.caption.empty()) throw Error(ErrorCode::EmptyResponse, "query caption is empty");

  std::size_t budget = options.max_prompt_images - 1;  // one slot for the query image
  std::vector<PromptImage> context_images;
  std::string experience;

  if (cfg.mode == AnswerMode::rag) {
    if (!demo.index || demo.index->entries.empty()) {
      throw Error(ErrorCode::EmptyStore, "demonstration " + demo.id + " has no indexed segments");
    }
    const auto q_text = providers.text_embedder->embed_text(out.caption).normalized();
    const auto q_visual = providers.image_embedder->embed_image(query.image).normalized();
    const auto result = retrieve_top_k(demo.index->entries, q_text, q_visual, cfg.retrieval);
    for (const auto& r : result.entries) {
      const auto& e = r.entry;
      out.retrieval_trace.push_back({e.segment_id, r.score.s, r.score.s_textual, r.score.s_visual});
      experience += "Segment " + std::to_string(e.segment_id) + " (relevance " + format_score(r.score.s) + "): " +
                    e.knowledge.description + "\n";
      for (const auto& kf : e.knowledge.keyframes) {
        const auto label = "Expert segment " + std::to_string(e.segment_id) + ", key frame " +
                           std::to_string(kf.frame_index);
        bool attached = false;
        if (context_images.size() < budget) {
          const auto& frame = demo.recording.frames.at(static_cast<std::size_t>(kf.frame_index));
          context_images.push_back({label, load_png(demo.recording.image_path(frame))});
          attached = true;
        }
        experience += "- " + label + (attached ? "" : " (image omitted)") + ": " + kf.caption + "\n";
      }
    }
  } else if (cfg.mode == AnswerMode::frames_as_context) {
    const auto q_visual = providers.image_embedder->embed_image(query.image).normalized();
    out.context_frames = frames_as_context_baseline(demo.frame_embeddings(*providers.image_embedder), q_visual,
                                                    options.frames_as_context_count);
    experience = "Frames from the expert's demonstration, most similar to the current view first:\n";
    for (const int index : out.context_frames) {
      if (context_images.size() >= budget) break;
      const auto label = "Demonstration frame " + std::to_string(index);
      context_images.push_back({label, load_png(demo.recording.image_path(demo.recording.frames.at(
                                           static_cast<std::size_t>(index))))});
      experience += "- " + label + "\n";
    }
  }
  budget -= context_images.size();

  // History: all text is kept; images are the most recent that fit.
  std::string history;
  std::vector<PromptImage> history_images;
  if (cfg.history_enabled && !session.turns.empty()) {
    const std::size_t n = session.turns.size();
    const std::size_t first_image = n > budget ? n - budget : 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& t = session.turns[i];
      history += "User: " + t.question + "\n";
      if (i >= first_image && i < session.turn_images.size()) {
        const auto label = "Chat image " + std::to_string(i + 1);
        history += "[" + label + "]\n";
        history_images.push_back({label, session.turn_images[i]});
      }
      history += "Assistant: " + t.answer_text + "\n";
    }
  }
  out.history_images = history_images.size();

  const bool grounded = cfg.mode != AnswerMode::zero_shot;
  const auto* summary = cfg.use_summary && session.summary ? &*session.summary : nullptr;
  auto& request = out.request;
  request.kind = VlmCallKind::answer;
  request.expects_json = true;
  request.prompt = render_template(
      options.prompts.answer,
      {{"history", history.empty() ? "" : prompt_section("Chat History", history)},
       {"experience", experience.empty() ? "" : prompt_section("Expert Experience", experience)},
       {"summary", grounded && summary ? prompt_section("Demonstration Summary", summary->text) : ""},
       {"intent", grounded ? prompt_section("User Intent", session.intent.text) : ""},
       {"caption", prompt_section("Query Image Caption", out.caption)},
       {"question", prompt_section("Natural Language Query", query.question)}});
  for (auto& img : context_images) request.images.push_back(std::move(img));
  for (auto& img : history_images) request.images.push_back(std::move(img));
  request.images.push_back({"Egocentric view", shown});
  return out;
}

Answer answer_query(Session& session, const Query& query, const Demonstration& demo, ProviderSet& providers,
                    const AssistOptions& options) {
  if (session.demonstration_id != demo.id) {
    throw Error(ErrorCode::UnknownDemonstration, "session is bound to " + session.demonstration_id);
  }
  if (!session.turns.empty() && query.timestamp_s < session.turns.back().timestamp_s) {
    throw Error(ErrorCode::UsageError, "query timestamp precedes the previous turn");
  }
  const auto start = std::chrono::steady_clock::now();
  auto prompt = assemble_answer_prompt(session, query, demo, providers, options);

  const std::string base_prompt = prompt.request.prompt;
  std::optional<std::string> text;
  std::string last_reply;
  for (int attempt = 0; attempt <= options.max_reprompts && !text; ++attempt) {
    if (attempt > 0) {
      prompt.request.prompt = base_prompt +
                              "\n\nYour previous reply was not a JSON object with a non-empty \"answer\" string. "
                              "Reply with only that JSON object.";
    }
    try {
      last_reply = providers.vlm->complete(prompt.request);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(ErrorCode::ProviderFailure, e.what());
    }
    text = parse_answer_reply(last_reply);
  }
  if (!text) {
    throw Error(ErrorCode::MalformedReply, "answer reply has no \"answer\" key: '" + last_reply.substr(0, 80) + "'");
  }

  Answer answer;
  answer.text = *text;
  answer.caption = prompt.caption;
  answer.retrieval_trace = prompt.retrieval_trace;
  answer.context_frames = prompt.context_frames;
  for (const auto& t : prompt.retrieval_trace) answer.retrieved_segment_ids.push_back(t.segment_id);
  answer.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  ChatTurn turn;
  turn.question = query.question;
  turn.image_ref = query.image_ref;
  turn.gaze_point = query.gaze_point;
  turn.timestamp_s = query.timestamp_s;
  turn.caption = prompt.caption;
  turn.answer_text = answer.text;
  turn.mode = session.config.mode;
  turn.retrieval_trace = prompt.retrieval_trace;
  turn.context_frames = prompt.context_frames;
  session.turns.push_back(std::move(turn));
  session.turn_images.push_back(query.image);
  return answer;
}

std::string new_session_id() {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  char buf[40];
  std::snprintf(buf, sizeof buf, "s-%016llx%016llx", static_cast<unsigned long long>(rng()),
                static_cast<unsigned long long>(rng()));
  return buf;
}

AssistEngine::AssistEngine(ProviderSet providers, AssistOptions options, std::optional<fs::path> session_dir)
    : providers_(std::move(providers)), options_(std::move(options)), session_dir_(std::move(session_dir)) {
  if (session_dir_) load_sessions();
}

void AssistEngine::register_demonstration(std::shared_ptr<Demonstration> demo) {
  if (!demo || demo->id.empty()) throw Error(ErrorCode::UsageError, "demonstration needs an id");
  std::lock_guard lock(mutex_);
  demonstrations_[demo->id] = std::move(demo);
}

std::shared_ptr<const Demonstration> AssistEngine::demonstration(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = demonstrations_.find(id);
  if (it == demonstrations_.end()) throw Error(ErrorCode::UnknownDemonstration, id);
  return it->second;
}

std::vector<std::string> AssistEngine::demonstration_ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, demo] : demonstrations_) ids.push_back(id);
  return ids;
}

Session AssistEngine::create_session(const std::string& demonstration_id, const SessionConfig& config) {
  config.retrieval.validate();
  const auto demo = demonstration(demonstration_id);
  auto slot = std::make_shared<Slot>();
  slot->session.demonstration_id = demonstration_id;
  slot->session.intent = demo->intent;
  slot->session.summary = demo->summary;
  slot->session.config = config;
  {
    std::lock_guard lock(mutex_);
    do {
      slot->session.session_id = new_session_id();
    } while (sessions_.count(slot->session.session_id));
    sessions_[slot->session.session_id] = slot;
  }
  persist(slot->session);
  return slot->session;
}

std::shared_ptr<AssistEngine::Slot> AssistEngine::slot(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, session_id);
  return it->second;
}

Session AssistEngine::get_session(const std::string& session_id) const {
  const auto s = slot(session_id);
  std::lock_guard lock(s->state_mutex);
  return s->session;
}

Answer AssistEngine::answer_query(const std::string& session_id, const Query& query) {
  const auto s = slot(session_id);
  std::lock_guard turn_lock(s->turn_mutex);
  Session working;
  {
    std::lock_guard lock(s->state_mutex);
    working = s->session;
  }
  const auto demo = demonstration(working.demonstration_id);
  Query q = query;
  if (session_dir_) q.image_ref = "turn_" + std::to_string(working.turns.size() + 1) + ".png";
  auto answer = egoassist::answer_query(working, q, *demo, providers_, options_);
  if (session_dir_) {
    const auto dir = *session_dir_ / working.session_id;
    fs::create_directories(dir);
    save_png(q.image, dir / q.image_ref);
  }
  persist(working);
  std::lock_guard lock(s->state_mutex);
  s->session = std::move(working);
  return answer;
}

void AssistEngine::persist(const Session& session) const {
  if (!session_dir_) return;
  const auto dir = *session_dir_ / session.session_id;
  fs::create_directories(dir);
  const auto tmp = dir / "session.json.tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + tmp.string());
    out << session_to_json(session).dump(2) << '\n';
  }
  fs::rename(tmp, dir / "session.json");
}

void AssistEngine::load_sessions() {
  if (!fs::is_directory(*session_dir_)) return;
  for (const auto& entry : fs::directory_iterator(*session_dir_)) {
    const auto file = entry.path() / "session.json";
    if (!fs::is_regular_file(file)) continue;
    std::ifstream in(file);
    auto slot = std::make_shared<Slot>();
    slot->session = session_from_json(json::parse(in), entry.path());
    sessions_[slot->session.session_id] = slot;
  }
}

}  // namespace egoassist
