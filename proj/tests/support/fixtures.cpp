#include "fixtures.hpp"

#include <fstream>
#include <sstream>

#include "egoassist/synthetic.hpp"

namespace fixture {

namespace fs = std::filesystem;
using namespace egoassist;

fs::path synthetic_demo_dir() { return fs::path(EGOASSIST_DATA_DIR) / "synthetic_demo"; }

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("egoassist-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ProviderSet mock_providers(std::uint64_t seed, std::shared_ptr<VlmProvider> vlm) {
  auto set = build_providers(ProviderConfig::all_mock(), PromptLibrary::defaults(), seed);
  if (vlm) set.vlm = std::move(vlm);
  return set;
}

FrameImageLoader blank_loader(int width, int height) {
  return [width, height](int) { return Image(width, height, {128, 128, 128}); };
}

GazeSegmentation run_stream(const oracle::GazeStream& stream) {
  MockPointSegmenter segmenter;
  for (int t = 0; t < stream.frame_count; ++t) {
    if (stream.proposals[static_cast<std::size_t>(t)]) segmenter.script_mask(t, *stream.proposals[static_cast<std::size_t>(t)]);
  }
  MockMaskPropagator tracker;
  for (const auto& [t, off] : stream.offsets) tracker.script_offset(t, off.first, off.second);
  for (const auto& [t, ids] : stream.lost) {
    for (const int id : ids) tracker.script_lost(id, t, t);
  }
  return segment_by_gaze(stream.recording(), segmenter, tracker, stream.params,
                         blank_loader(stream.width, stream.height));
}

EmbeddingVector vec(std::vector<float> values, Modality modality) {
  EmbeddingVector v;
  v.values = std::move(values);
  v.modality = modality;
  return v;
}

SegmentEntry make_entry(int id, std::vector<float> text, std::vector<std::vector<float>> visual, bool important) {
  SegmentEntry e;
  e.segment_id = id;
  e.text_embedding = vec(std::move(text));
  for (auto& v : visual) {
    e.visual_embeddings.push_back(vec(std::move(v), Modality::visual));
    e.knowledge.keyframes.push_back({0, "caption", "reason"});
  }
  e.knowledge.segment_id = id;
  e.knowledge.description = "segment " + std::to_string(id);
  e.knowledge.important = important;
  return e;
}

std::shared_ptr<Demonstration> memory_demo(const std::vector<std::string>& descriptions, ProviderSet& providers) {
  auto demo = std::make_shared<Demonstration>();
  demo->id = "memory_demo";
  demo->intent = {"The user is testing", IntentSource::ground_truth};
  SyntheticSpec spec;
  spec.width = 16;
  spec.height = 16;
  spec.frame_count = static_cast<int>(descriptions.size()) * 2;
  const auto dir = scratch_dir("memory-demo");
  demo->recording = write_synthetic_recording(spec, dir);
  VectorIndex index;
  index.demonstration_id = demo->id;
  for (std::size_t i = 0; i < descriptions.size(); ++i) {
    SegmentKnowledge k;
    k.segment_id = static_cast<int>(i);
    k.description = descriptions[i];
    k.keyframes = {{static_cast<int>(2 * i), descriptions[i] + " caption", "reason"}};
    const auto image = render_synthetic_frame(spec, static_cast<int>(2 * i));
    index.entries.push_back(index_segment(k, {image}, *providers.text_embedder, *providers.image_embedder,
                                          {demo->recording.frames[2 * i].image_ref}));
    TemporalSegment seg;
    seg.segment_id = static_cast<int>(i);
    seg.start_frame = static_cast<int>(2 * i);
    seg.end_frame = static_cast<int>(2 * i + 1);
    demo->segments.push_back(seg);
  }
  demo->index = std::move(index);
  return demo;
}

}  // namespace fixture
