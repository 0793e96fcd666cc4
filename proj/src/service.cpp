#include "httplib.h"

#include "egoassist/service.hpp"

#include <chrono>

#include "egoassist/base64.hpp"

namespace egoassist {

using nlohmann::json;

int http_status_for(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::UnknownSession:
    case ErrorCode::UnknownDemonstration:
      return 404;
    case ErrorCode::PayloadTooLarge:
      return 413;
    case ErrorCode::EmptyStore:
      return 409;
    case ErrorCode::ProviderFailure:
    case ErrorCode::MalformedReply:
    case ErrorCode::EmptyResponse:
      return 502;
    case ErrorCode::Timeout:
      return 504;
    case ErrorCode::BindFailure:
      return 500;
    default:
      return 400;
  }
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, status, {{"code", code}, {"message", message}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::UsageError, std::string("request body is not JSON: ") + e.what());
  }
}

bool flag_value(const std::string& v) { return v == "1" || v == "true" || v == "on" || v == "yes"; }

std::optional<double> number_field(const httplib::Request& req, const std::string& key) {
  if (!req.has_file(key)) return std::nullopt;
  try {
    return std::stod(req.get_file_value(key).content);
  } catch (const std::exception&) {
    throw Error(ErrorCode::UsageError, "field '" + key + "' is not a number");
  }
}

json trace_json(const std::vector<TraceEntry>& trace) {
  json out = json::array();
  for (const auto& t : trace) {
    out.push_back({{"segment_id", t.segment_id}, {"score", t.score}, {"s_textual", t.s_textual}, {"s_visual", t.s_visual}});
  }
  return out;
}

json segments_view(const Demonstration& demo) {
  std::map<int, const TemporalSegment*> spans;
  for (const auto& s : demo.segments) spans[s.segment_id] = &s;
  json out = json::array();
  if (!demo.index) return out;
  for (const auto& e : demo.index->entries) {
    json keyframes = json::array();
    for (const auto& kf : e.knowledge.keyframes) {
      keyframes.push_back({{"frame_index", kf.frame_index},
                           {"caption", kf.caption},
                           {"reason", kf.reason},
                           {"image_url", "/demonstrations/" + demo.id + "/frames/" + std::to_string(kf.frame_index) + ".png"}});
    }
    json seg = {{"segment_id", e.segment_id},
                {"description", e.knowledge.description},
                {"important", e.knowledge.important},
                {"cue_mode", to_string(e.knowledge.cue_mode)},
                {"keyframes", std::move(keyframes)}};
    if (const auto it = spans.find(e.segment_id); it != spans.end()) {
      seg["start_frame"] = it->second->start_frame;
      seg["end_frame"] = it->second->end_frame;
      seg["start_s"] = it->second->start_s;
      seg["end_s"] = it->second->end_s;
    }
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace

struct AssistService::Impl {
  AssistEngine& engine;
  ServiceOptions options;
  httplib::Server server;

  Impl(AssistEngine& e, ServiceOptions o) : engine(e), options(std::move(o)) { install(); }

  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, http_status_for(e.code()), error_code_name(e.code()), e.detail());
      } catch (const std::exception& e) {
        send_error(res, 500, "InternalError", e.what());
      }
    };
  }

  void install() {
    const int threads = options.worker_threads;
    server.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
    // Headroom for multipart framing; the image itself is checked against
    // max_upload_bytes so the client gets a JSON error.
    server.set_payload_max_length(options.max_upload_bytes + 1024 * 1024);
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      if (!options.bearer_token || req.method == "OPTIONS" || req.path == "/healthz") {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      if (req.get_header_value("Authorization") == "Bearer " + *options.bearer_token) {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      send_error(res, 401, "Unauthorized", "missing or wrong bearer token");
      return httplib::Server::HandlerResponse::Handled;
    });
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    if (options.static_dir) server.set_mount_point("/", options.static_dir->string());

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}});
    });

    server.Get("/demonstrations", guarded([this](const httplib::Request&, httplib::Response& res) {
      json list = json::array();
      for (const auto& id : engine.demonstration_ids()) {
        const auto demo = engine.demonstration(id);
        list.push_back({{"demonstration_id", id},
                        {"task_category", to_string(demo->recording.task_category)},
                        {"intent", demo->intent.text},
                        {"segment_count", demo->index ? demo->index->entries.size() : 0}});
      }
      send_json(res, 200, {{"demonstrations", std::move(list)}});
    }));

    server.Post("/demonstrations", guarded([this](const httplib::Request& req, httplib::Response& res) {
      if (!options.processor) {
        send_error(res, 501, "Unsupported", "this service does not process recordings");
        return;
      }
      const auto body = parse_body(req);
      if (!body.contains("recording") || !body["recording"].is_string()) {
        throw Error(ErrorCode::UsageError, "body needs a \"recording\" path");
      }
      const auto cue = cue_mode_from_string(req.has_param("cue_mode") ? req.get_param_value("cue_mode") : "gaze");
      const bool summary = req.has_param("summary") && flag_value(req.get_param_value("summary"));
      auto demo = options.processor(body["recording"].get<std::string>(), cue, summary);
      const auto id = demo->id;
      std::size_t keyframes = 0;
      if (demo->index) {
        for (const auto& e : demo->index->entries) keyframes += e.knowledge.keyframes.size();
      }
      const auto segments = demo->index ? demo->index->entries.size() : 0;
      engine.register_demonstration(std::move(demo));
      send_json(res, 201, {{"demonstration_id", id}, {"segment_count", segments}, {"keyframe_count", keyframes}});
    }));

    server.Get("/demonstrations/:id/segments", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto demo = engine.demonstration(req.path_params.at("id"));
      send_json(res, 200, {{"demonstration_id", demo->id}, {"segments", segments_view(*demo)}});
    }));

    server.Get("/demonstrations/:id/frames/:frame", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto demo = engine.demonstration(req.path_params.at("id"));
      auto name = req.path_params.at("frame");
      if (name.size() > 4 && name.compare(name.size() - 4, 4, ".png") == 0) name.resize(name.size() - 4);
      std::size_t consumed = 0;
      int index = -1;
      try {
        index = std::stoi(name, &consumed);
      } catch (const std::exception&) {
      }
      if (consumed != name.size() || index < 0 || index >= static_cast<int>(demo->recording.frames.size())) {
        throw Error(ErrorCode::OutOfBounds, "no frame '" + req.path_params.at("frame") + "'");
      }
      const auto png = encode_png(load_png(demo->recording.image_path(demo->recording.frames[static_cast<std::size_t>(index)])));
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    }));

    server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      if (!body.contains("demonstration_id") || !body["demonstration_id"].is_string()) {
        throw Error(ErrorCode::UsageError, "body needs a \"demonstration_id\"");
      }
      SessionConfig config = options.default_session;
      if (body.contains("config")) {
        try {
          config = session_config_from_json(body["config"], config);
        } catch (const json::exception& e) {
          throw Error(ErrorCode::UsageError, std::string("config: ") + e.what());
        }
      }
      const auto session = engine.create_session(body["demonstration_id"].get<std::string>(), config);
      send_json(res, 201, session_to_json(session));
    }));

    server.Get("/sessions/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, session_to_json(engine.get_session(req.path_params.at("id"))));
    }));

    server.Post("/sessions/:id/query", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto session_id = req.path_params.at("id");
      Query query;
      std::string image_bytes;
      if (req.is_multipart_form_data()) {
        if (!req.has_file("question")) throw Error(ErrorCode::UsageError, "multipart field 'question' is required");
        if (!req.has_file("image")) throw Error(ErrorCode::UsageError, "multipart field 'image' is required");
        query.question = req.get_file_value("question").content;
        image_bytes = req.get_file_value("image").content;
        const auto u = number_field(req, "gaze_u");
        const auto v = number_field(req, "gaze_v");
        if (u && v) {
          GazePoint2D g;
          g.u = *u;
          g.v = *v;
          query.gaze_point = g;
        }
        if (const auto t = number_field(req, "timestamp_s")) query.timestamp_s = *t;
        else query.timestamp_s = -1;
      } else {
        const auto body = parse_body(req);
        query.question = body.value("question", "");
        const auto bytes = base64_decode(body.value("image_base64", ""));
        image_bytes.assign(bytes.begin(), bytes.end());
        if (body.contains("gaze_point") && body["gaze_point"].is_object()) {
          GazePoint2D g;
          g.u = body["gaze_point"].value("u", 0.0);
          g.v = body["gaze_point"].value("v", 0.0);
          query.gaze_point = g;
        }
        query.timestamp_s = body.value("timestamp_s", -1.0);
      }
      if (image_bytes.size() > options.max_upload_bytes) {
        throw Error(ErrorCode::PayloadTooLarge, "image exceeds " + std::to_string(options.max_upload_bytes) + " bytes");
      }
      if (image_bytes.empty()) throw Error(ErrorCode::UsageError, "image is required");
      try {
        query.image = decode_png(image_bytes);
      } catch (const Error&) {
        throw Error(ErrorCode::UsageError, "image is not a decodable PNG");
      }
      if (query.timestamp_s < 0) {
        query.timestamp_s = std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
      }
      query.image_ref = "upload.png";
      const auto answer = engine.answer_query(session_id, query);
      const auto turns = engine.get_session(session_id).turns.size();
      send_json(res, 200,
                {{"session_id", session_id},
                 {"turn_index", turns - 1},
                 {"answer", answer.text},
                 {"caption", answer.caption},
                 {"retrieved_segment_ids", answer.retrieved_segment_ids},
                 {"retrieval_trace", trace_json(answer.retrieval_trace)},
                 {"context_frames", answer.context_frames},
                 {"latency_ms", answer.latency_ms}});
    }));
  }
};

AssistService::AssistService(AssistEngine& engine, ServiceOptions options)
    : impl_(std::make_unique<Impl>(engine, std::move(options))) {}

AssistService::~AssistService() { stop(); }

int AssistService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::BindFailure, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::BindFailure, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void AssistService::listen() { impl_->server.listen_after_bind(); }

void AssistService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace egoassist
