#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "egoassist/assist.hpp"
#include "egoassist/mock_providers.hpp"
#include "egoassist/pipeline.hpp"
#include "egoassist/providers.hpp"
#include "oracles.hpp"

namespace fixture {

/// Bundled synthetic demonstration (recording plus configs).
std::filesystem::path synthetic_demo_dir();

/// Fresh, empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

std::string read_file(const std::filesystem::path& path);

/// All-mock provider set with default behaviour.
egoassist::ProviderSet mock_providers(std::uint64_t seed = 42,
                                      std::shared_ptr<egoassist::VlmProvider> vlm = nullptr);

/// Blank frames for recordings that have no images on disk.
egoassist::FrameImageLoader blank_loader(int width, int height);

/// Runs segment_by_gaze on a scripted stream with mock providers.
egoassist::GazeSegmentation run_stream(const oracle::GazeStream& stream);

/// Store entry with the given vectors and an important knowledge record.
egoassist::SegmentEntry make_entry(int id, std::vector<float> text, std::vector<std::vector<float>> visual,
                                   bool important = true);

egoassist::EmbeddingVector vec(std::vector<float> values,
                               egoassist::Modality modality = egoassist::Modality::text);

/// A tiny demonstration held in memory: one entry per caption, with a
/// 16x16 recording so frame lookups resolve.
std::shared_ptr<egoassist::Demonstration> memory_demo(const std::vector<std::string>& descriptions,
                                                      egoassist::ProviderSet& providers);

}  // namespace fixture
