#include "egoassist/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <ostream>

#include "egoassist/eval.hpp"
#include "egoassist/synthetic.hpp"

namespace egoassist {

namespace fs = std::filesystem;

int exit_code_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ProviderFailure:
    case ErrorCode::Timeout:
    case ErrorCode::MalformedReply:
    case ErrorCode::EmptyResponse:
      return kExitProviderFailure;
    default:
      return kExitInputError;
  }
}

PipelineConfig resolve_config(const CommonOptions& o) {
  PipelineConfig c = o.config ? PipelineConfig::load(*o.config) : PipelineConfig{};
  if (o.cue_mode) c.cue_mode = cue_mode_from_string(*o.cue_mode);
  if (o.lambda_text && o.lambda_visual) {
    c.retrieval.lambda_textual = *o.lambda_text;
    c.retrieval.lambda_visual = *o.lambda_visual;
  } else if (o.lambda_text) {
    c.retrieval.lambda_textual = *o.lambda_text;
    c.retrieval.lambda_visual = 1.0 - *o.lambda_text;
  } else if (o.lambda_visual) {
    c.retrieval.lambda_visual = *o.lambda_visual;
    c.retrieval.lambda_textual = 1.0 - *o.lambda_visual;
  }
  if (o.top_k) c.retrieval.top_k = *o.top_k;
  if (o.no_history) c.history_enabled = false;
  if (o.summary) c.summary_enabled = true;
  if (o.seed) c.seed = *o.seed;
  if (o.providers) {
    if (!fs::exists(*o.providers)) throw Error(ErrorCode::MissingFile, "providers config " + o.providers->string());
    c.providers_path = *o.providers;
  }
  if (o.workspace) c.workspace = *o.workspace;
  if (o.context_method) c.context_method = context_method_from_string(*o.context_method);
  c.validate();
  return c;
}

namespace {

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  }
}

ProviderSet providers_for(const PipelineConfig& config) {
  return build_providers(config.provider_config(), config.prompts(), config.seed);
}

AssistOptions assist_options(const PipelineConfig& config) {
  AssistOptions a = config.assist;
  a.prompts = config.prompts();
  return a;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string sanitize(const std::string& label) {
  std::string out;
  for (const char c : label) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_') ? c : '-';
  return out;
}

// <dir>/<id>, or <dir> itself when it is the recording.
fs::path recording_for(const fs::path& dir, const std::string& id) {
  if (fs::exists(dir / id)) return dir / id;
  if (fs::exists(dir / "manifest.jsonl") && parse_recording(dir).id == id) return dir;
  throw Error(ErrorCode::MissingFile, "no recording for demonstration " + id + " under " + dir.string());
}

}  // namespace

int cmd_process(const CommonOptions& options, const fs::path& recording, const std::optional<fs::path>& out_dir,
                std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto config = resolve_config(options);
    auto providers = providers_for(config);
    const auto rec_id = parse_recording(recording).id;
    const auto dir = out_dir ? *out_dir : config.workspace / rec_id;
    const auto report = process_demonstration(recording, config, providers, dir);
    for (const auto& w : report.warnings) err << "warning: " << w << '\n';
    out << "demonstration " << report.demonstration_id << ": " << report.segment_count << " segments, "
        << report.keyframe_count << " keyframes, " << report.visual_vector_count << " visual vectors\n";
    out << "wrote " << dir.string() << '\n';
    return kExitOk;
  });
}

int cmd_ask(const CommonOptions& options, const AskOptions& ask, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto config = resolve_config(options);
    auto demo = load_demonstration(config.workspace / ask.demonstration_id);
    AssistEngine engine(providers_for(config), assist_options(config));
    engine.register_demonstration(demo);
    auto session_config = config.session_config();
    session_config.mode = ask.mode;
    const auto session = engine.create_session(demo->id, session_config);
    Query query;
    query.question = ask.question;
    query.image = load_png(ask.image);
    query.image_ref = ask.image.string();
    query.gaze_point = ask.gaze;
    const auto answer = engine.answer_query(session.session_id, query);
    out << "answer: " << answer.text << '\n';
    out << "retrieved:";
    for (const int id : answer.retrieved_segment_ids) out << ' ' << id;
    out << '\n';
    for (const auto& t : answer.retrieval_trace) {
      out << "  segment " << t.segment_id << " score " << fixed4(t.score) << " (text " << fixed4(t.s_textual)
          << ", visual " << fixed4(t.s_visual) << ")\n";
    }
    if (!answer.context_frames.empty()) {
      out << "context frames:";
      for (const int f : answer.context_frames) out << ' ' << f;
      out << '\n';
    }
    return kExitOk;
  });
}

int cmd_eval(const CommonOptions& options, const EvalOptions& eval, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto base = resolve_config(options);
    if (eval.conditions.empty()) throw Error(ErrorCode::UsageError, "at least one --condition is required");
    const auto questions = load_questions(eval.questions);
    const auto recordings = eval.recordings ? *eval.recordings : eval.questions.parent_path();

    // Reject bad labels before any condition runs.
    std::vector<Condition> conditions;
    for (const auto& label : eval.conditions) conditions.push_back(parse_condition(label, base));

    std::vector<std::pair<std::string, std::vector<JudgedAnswer>>> judged;
    bool partial = false;
    for (const auto& condition : conditions) {
      const auto& label = condition.label;
      // Fresh providers per condition, so scripted mocks replay identically.
      auto providers = providers_for(condition.pipeline);
      const DemonstrationResolver resolve = [&](const std::string& id, const Condition& c) {
        const auto recording = recording_for(recordings, id);
        if (c.mode != AnswerMode::rag) return baseline_demonstration(recording, c.pipeline, providers);
        const auto dir = c.pipeline.workspace / "eval" / sanitize(c.label) / id;
        process_demonstration(recording, c.pipeline, providers, dir);
        return load_demonstration(dir);
      };
      try {
        judged.emplace_back(label, run_condition(questions, condition, resolve, providers,
                                                 eval.out_dir / (sanitize(label) + ".partial.jsonl")));
      } catch (const Error& e) {
        err << "condition " << label << " aborted: " << e.what() << '\n';
        partial = true;
      }
    }
    if (judged.empty()) return kExitPartial;
    const auto report = build_report(judged, questions);
    write_report(report, eval.out_dir);
    out << format_report_table(report);
    return partial ? kExitPartial : kExitOk;
  });
}

int cmd_serve(const CommonOptions& options, const ServeOptions& serve, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto config = resolve_config(options);
    AssistEngine engine(providers_for(config), assist_options(config), serve.sessions_dir);
    if (fs::is_directory(config.workspace)) {
      for (const auto& entry : fs::directory_iterator(config.workspace)) {
        if (fs::is_regular_file(entry.path() / "demonstration.json")) {
          engine.register_demonstration(load_demonstration(entry.path()));
        }
      }
    }
    ServiceOptions so;
    so.static_dir = serve.static_dir;
    so.default_session = config.session_config();
    if (serve.token_env) {
      const char* token = std::getenv(serve.token_env->c_str());
      if (!token || !*token) throw Error(ErrorCode::UsageError, "environment variable " + *serve.token_env + " is not set");
      so.bearer_token = token;
    }
    so.processor = [&config, &engine](const fs::path& recording, CueMode cue, bool summary) {
      auto c = config;
      c.cue_mode = cue;
      c.summary_enabled = c.summary_enabled || summary;
      auto providers = providers_for(c);
      const auto dir = c.workspace / parse_recording(recording).id;
      process_demonstration(recording, c, providers, dir);
      return load_demonstration(dir);
    };
    AssistService service(engine, so);
    const int port = service.bind(serve.host, serve.port);
    out << "listening on " << serve.host << ':' << port << " with " << engine.demonstration_ids().size()
        << " demonstrations" << std::endl;
    if (serve.on_listening) serve.on_listening(service, port);
    service.listen();
    return kExitOk;
  });
}

int cmd_make_synthetic(const fs::path& dir, int query_count, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto spec = default_synthetic_spec();
    const auto rec = write_synthetic_recording(spec, dir);
    if (query_count > 0) fs::create_directories(dir / "queries");
    for (int i = 0; i < query_count; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "q%d.png", i + 1);
      // Frame numbers past the recording give distinct tick marks.
      save_png(render_synthetic_frame(spec, spec.frame_count + 7 * (i + 1)), dir / "queries" / name);
    }
    out << "wrote " << rec.frames.size() << " frames to " << dir.string() << '\n';
    return kExitOk;
  });
}

}  // namespace egoassist
