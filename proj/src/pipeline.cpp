#include "egoassist/pipeline.hpp"

#include <fstream>

#include "egoassist/error.hpp"

namespace egoassist {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(ContextMethod method) noexcept {
  return method == ContextMethod::kmeans ? "kmeans" : "segments";
}

ContextMethod context_method_from_string(std::string_view text) {
  if (text == "segments") return ContextMethod::segments;
  if (text == "kmeans") return ContextMethod::kmeans;
  throw Error(ErrorCode::UsageError, "unknown context method '" + std::string(text) + "'");
}

namespace {

fs::path resolve_existing(const std::string& value, const fs::path& base_dir, const char* what) {
  fs::path p = value;
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  if (!fs::exists(p)) throw Error(ErrorCode::MissingFile, std::string(what) + " " + p.string());
  return p;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedLine, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  try {
    if (j.contains("cue_mode")) c.cue_mode = cue_mode_from_string(j["cue_mode"].get<std::string>());
    if (j.contains("intent_source")) {
      c.intent_source = intent_source_from_string(j["intent_source"].get<std::string>());
    }
    c.summary_enabled = j.value("summary_enabled", c.summary_enabled);
    if (j.contains("context_method")) {
      c.context_method = context_method_from_string(j["context_method"].get<std::string>());
    }
    if (j.contains("kmeans")) {
      c.kmeans_k = j["kmeans"].value("k", c.kmeans_k);
      c.kmeans_per_cluster = j["kmeans"].value("per_cluster", c.kmeans_per_cluster);
    }
    if (j.contains("segmentation")) {
      const auto& s = j["segmentation"];
      auto& p = c.segmentation;
      p.window_n = s.value("window_n", p.window_n);
      p.iou_theta = s.value("iou_theta", p.iou_theta);
      p.lost_after_x = s.value("lost_after_x", p.lost_after_x);
      p.change_fraction_z = s.value("change_fraction_z", p.change_fraction_z);
      p.sustain_m = s.value("sustain_m", p.sustain_m);
      p.min_segment_frames = s.value("min_segment_frames", p.min_segment_frames);
    }
    if (j.contains("retrieval")) c.retrieval = retrieval_config_from_json(j["retrieval"], c.retrieval);
    if (j.contains("knowledge")) {
      const auto& k = j["knowledge"];
      auto& o = c.knowledge;
      o.k = k.value("k", o.k);
      o.segment_sample_count = k.value("segment_sample_count", o.segment_sample_count);
      o.intent_sample_count = k.value("intent_sample_count", o.intent_sample_count);
      o.max_reprompts = k.value("max_reprompts", o.max_reprompts);
      o.lenient = k.value("lenient", o.lenient);
      o.history_cap = k.value("history_cap", o.history_cap);
    }
    if (j.contains("assist")) {
      const auto& a = j["assist"];
      c.assist.max_prompt_images = a.value("max_prompt_images", c.assist.max_prompt_images);
      c.assist.max_reprompts = a.value("max_reprompts", c.assist.max_reprompts);
      c.assist.frames_as_context_count = a.value("frames_as_context_count", c.assist.frames_as_context_count);
      c.history_enabled = a.value("history_enabled", c.history_enabled);
    }
    c.gaze_depth_m = j.value("gaze_depth_m", c.gaze_depth_m);
    if (j.contains("providers") && j["providers"].is_string()) {
      c.providers_path = resolve_existing(j["providers"].get<std::string>(), base_dir, "providers config");
    }
    if (j.contains("prompts_dir") && j["prompts_dir"].is_string()) {
      c.prompts_dir = resolve_existing(j["prompts_dir"].get<std::string>(), base_dir, "prompts directory");
    }
    if (j.contains("workspace")) {
      c.workspace = j["workspace"].get<std::string>();
      if (c.workspace.is_relative() && !base_dir.empty()) c.workspace = (base_dir / c.workspace).lexically_normal();
    }
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::UsageError, std::string("pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  return from_json(read_json(path), path.parent_path());
}

void PipelineConfig::validate() const {
  segmentation.validate();
  retrieval.validate();
  if (knowledge.k < 1) throw Error(ErrorCode::UsageError, "knowledge.k must be >= 1");
  if (knowledge.segment_sample_count < 1 || knowledge.intent_sample_count < 1) {
    throw Error(ErrorCode::UsageError, "sample counts must be >= 1");
  }
  if (kmeans_k < 1 || kmeans_per_cluster < 1) throw Error(ErrorCode::UsageError, "kmeans k and per_cluster must be >= 1");
  if (!(gaze_depth_m > 0)) throw Error(ErrorCode::UsageError, "gaze_depth_m must be > 0");
  if (assist.max_prompt_images < 1) throw Error(ErrorCode::UsageError, "max_prompt_images must be >= 1");
}

SessionConfig PipelineConfig::session_config() const {
  SessionConfig s;
  s.retrieval = retrieval;
  s.history_enabled = history_enabled;
  s.use_summary = summary_enabled;
  return s;
}

PromptLibrary PipelineConfig::prompts() const {
  return prompts_dir ? PromptLibrary::from_directory(*prompts_dir) : PromptLibrary::defaults();
}

ProviderConfig PipelineConfig::provider_config() const {
  return providers_path ? ProviderConfig::load(*providers_path) : ProviderConfig::all_mock();
}

json pipeline_config_to_json(const PipelineConfig& c) {
  const auto& p = c.segmentation;
  return {{"cue_mode", to_string(c.cue_mode)},
          {"intent_source", to_string(c.intent_source)},
          {"summary_enabled", c.summary_enabled},
          {"context_method", to_string(c.context_method)},
          {"kmeans", {{"k", c.kmeans_k}, {"per_cluster", c.kmeans_per_cluster}}},
          {"segmentation",
           {{"window_n", p.window_n},
            {"iou_theta", p.iou_theta},
            {"lost_after_x", p.lost_after_x},
            {"change_fraction_z", p.change_fraction_z},
            {"sustain_m", p.sustain_m},
            {"min_segment_frames", p.min_segment_frames}}},
          {"retrieval", retrieval_config_to_json(c.retrieval)},
          {"knowledge",
           {{"k", c.knowledge.k},
            {"segment_sample_count", c.knowledge.segment_sample_count},
            {"intent_sample_count", c.knowledge.intent_sample_count},
            {"max_reprompts", c.knowledge.max_reprompts},
            {"lenient", c.knowledge.lenient},
            {"history_cap", c.knowledge.history_cap}}},
          {"assist",
           {{"max_prompt_images", c.assist.max_prompt_images},
            {"max_reprompts", c.assist.max_reprompts},
            {"frames_as_context_count", c.assist.frames_as_context_count},
            {"history_enabled", c.history_enabled}}},
          {"gaze_depth_m", c.gaze_depth_m},
          {"seed", c.seed}};
}

ProcessReport process_demonstration(const fs::path& recording_path, const PipelineConfig& config,
                                    ProviderSet& providers, const fs::path& out_dir) {
  config.validate();
  const auto rec = parse_recording(recording_path);
  KnowledgeOptions kopts = config.knowledge;
  kopts.gaze_depth_m = config.gaze_depth_m;
  kopts.prompts = config.prompts();

  ProcessReport report;
  report.demonstration_id = rec.id;
  report.out_dir = out_dir;

  // Frames are decoded once and shared by every stage.
  std::map<int, Image> cache;
  const FrameImageLoader loader = [&](int index) -> Image {
    auto it = cache.find(index);
    if (it == cache.end()) {
      it = cache.emplace(index, load_png(rec.image_path(rec.frames.at(static_cast<std::size_t>(index))))).first;
    }
    return it->second;
  };

  json segments_json;
  std::vector<TemporalSegment> segments;
  KnowledgePass pass;
  if (config.context_method == ContextMethod::segments) {
    if (uses_gaze(config.cue_mode)) {
      auto g = segment_by_gaze(rec, *providers.segmenter, *providers.tracker, config.segmentation, loader,
                               config.gaze_depth_m);
      segments = g.segments;
      segments_json = segments_to_json(rec.id, segments, g.objects);
    } else {
      segments = segment_by_speech(rec);
      segments_json = segments_to_json(rec.id, segments);
    }
    pass = run_knowledge_pass(rec, segments, config.cue_mode, config.intent_source, config.summary_enabled,
                              *providers.vlm, kopts, loader);
  } else {
    std::vector<EmbeddingVector> embeddings;
    for (std::size_t i = 0; i < rec.frames.size(); ++i) {
      embeddings.push_back(providers.image_embedder->embed_image(loader(static_cast<int>(i))).normalized());
    }
    const auto clusters =
        kmeans_cluster_baseline(embeddings, config.kmeans_k, config.kmeans_per_cluster, config.seed);
    pass.intent = infer_intent(rec, config.cue_mode, *providers.vlm, config.intent_source, kopts, loader);
    KnowledgeOptions cluster_opts = kopts;
    cluster_opts.k = config.kmeans_per_cluster;
    std::vector<std::string> history;
    json clusters_json = json::array();
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      const auto& frames = clusters[c];
      const double t0 = rec.frames[static_cast<std::size_t>(frames.front())].timestamp_s;
      const double t1 = rec.frames[static_cast<std::size_t>(frames.back())].timestamp_s;
      ExtractionTrace trace;
      auto k = caption_frame_set(static_cast<int>(c), frames, rec, pass.intent, history,
                                 utterances_in_range(rec.speech, t0, t1), config.cue_mode, *providers.vlm,
                                 cluster_opts, loader, &trace);
      if (!k.is_placeholder()) history.push_back(k.description);
      pass.segments.push_back(std::move(k));
      pass.traces.push_back(std::move(trace));
      clusters_json.push_back({{"segment_id", static_cast<int>(c)}, {"frames", frames}});
    }
    if (config.summary_enabled && !pass.segments.empty()) {
      pass.summary = summarize_demonstration(pass.segments, pass.intent, *providers.vlm, kopts);
    }
    segments_json = {{"schema_version", 1},
                     {"demonstration_id", rec.id},
                     {"method", "kmeans"},
                     {"clusters", std::move(clusters_json)}};
  }
  for (const auto& t : pass.traces) {
    for (const auto& w : t.warnings) report.warnings.push_back(w);
  }

  VectorIndex index;
  index.demonstration_id = rec.id;
  index.config = config.retrieval;
  for (const auto& k : pass.segments) {
    if (k.is_placeholder()) continue;
    std::vector<Image> images;
    std::vector<std::string> refs;
    for (const auto& kf : k.keyframes) {
      images.push_back(loader(kf.frame_index));
      refs.push_back(rec.frames[static_cast<std::size_t>(kf.frame_index)].image_ref);
    }
    index.entries.push_back(
        index_segment(k, images, *providers.text_embedder, *providers.image_embedder, std::move(refs)));
    report.keyframe_count += k.keyframes.size();
    report.visual_vector_count += index.entries.back().visual_embeddings.size();
  }
  report.segment_count = pass.segments.size();

  fs::create_directories(out_dir);
  write_json(out_dir / "segments.json", segments_json);
  write_json(out_dir / "knowledge.json", knowledge_to_json(rec.id, pass));
  write_json(out_dir / "index.json", index_to_json(index));
  write_json(out_dir / "demonstration.json",
             {{"schema_version", 1},
              {"demonstration_id", rec.id},
              {"recording", fs::absolute(recording_path).lexically_normal().string()},
              {"config", pipeline_config_to_json(config)}});
  return report;
}

std::shared_ptr<Demonstration> load_demonstration(const fs::path& dir) {
  if (!fs::is_regular_file(dir / "demonstration.json")) {
    throw Error(ErrorCode::UnknownDemonstration, "no processed demonstration in " + dir.string());
  }
  const auto meta = read_json(dir / "demonstration.json");
  auto demo = std::make_shared<Demonstration>();
  demo->id = meta.at("demonstration_id").get<std::string>();
  demo->recording = parse_recording(meta.at("recording").get<std::string>());
  demo->cue_mode = cue_mode_from_string(meta.at("config").at("cue_mode").get<std::string>());
  const auto knowledge = knowledge_from_json(read_json(dir / "knowledge.json"));
  demo->intent = knowledge.intent;
  demo->summary = knowledge.summary;
  demo->index = index_from_json(read_json(dir / "index.json"));
  const auto segments = read_json(dir / "segments.json");
  if (segments.contains("segments")) demo->segments = segments_from_json(segments);
  return demo;
}

std::shared_ptr<Demonstration> baseline_demonstration(const fs::path& recording_path, const PipelineConfig& config,
                                                      ProviderSet& providers) {
  auto demo = std::make_shared<Demonstration>();
  demo->recording = parse_recording(recording_path);
  demo->id = demo->recording.id;
  demo->cue_mode = config.cue_mode;
  KnowledgeOptions kopts = config.knowledge;
  kopts.gaze_depth_m = config.gaze_depth_m;
  kopts.prompts = config.prompts();
  demo->intent = infer_intent(demo->recording, config.cue_mode, *providers.vlm, config.intent_source, kopts);
  return demo;
}

}  // namespace egoassist
