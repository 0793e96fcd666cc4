#pragma once

// Providers speaking the OpenAI-compatible chat-completions and embeddings
// wire format.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <string>

#include <nlohmann/json.hpp>

#include "egoassist/providers.hpp"

namespace egoassist {

struct ProviderEndpoint {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string model;
  std::string api_key_env;  // name of the variable holding the key; may be empty
  double timeout_s = 60.0;
  int max_retries = 3;
  int max_in_flight = 4;

  /// Throws UsageError on a malformed URL, timeout_s <= 0, max_retries < 0 or
  /// max_in_flight outside [1, 64].
  void validate() const;
};

struct BackoffPolicy {
  double base_s = 0.5;
  double factor = 2.0;
  double jitter = 0.2;  // uniform in [-jitter, +jitter] of the nominal delay

  /// Nominal delay before retry number `retry` (0-based), without jitter.
  double nominal_delay(int retry) const;
};

using Sleeper = std::function<void(std::chrono::duration<double>)>;

/// POSTs JSON to one endpoint. Retries 429, 5xx and transport errors up to
/// max_retries with jittered exponential backoff; any other status fails at
/// once. At most max_in_flight requests run concurrently.
class JsonHttpClient {
 public:
  explicit JsonHttpClient(ProviderEndpoint endpoint, std::uint64_t seed = 0, Sleeper sleeper = {},
                          BackoffPolicy backoff = {});

  nlohmann::json post(const std::string& path, const nlohmann::json& body);

  const ProviderEndpoint& endpoint() const noexcept { return endpoint_; }
  /// Retries performed over the client's lifetime.
  int retry_count() const noexcept { return retries_.load(); }

 private:
  double jittered_delay(int retry);

  ProviderEndpoint endpoint_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  BackoffPolicy backoff_;
  Sleeper sleeper_;
  std::counting_semaphore<64> in_flight_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
  std::atomic<int> retries_{0};
};

struct ChatOptions {
  std::optional<double> temperature;
  std::optional<int> max_tokens;
  /// Ask for response_format json_object when the request expects JSON.
  bool json_mode = false;
  std::size_t max_images = 64;
};

/// Chat completion with one user message: the prompt text, then each image
/// as a text label part followed by a base64 PNG data URL part.
class HttpVlm : public VlmProvider {
 public:
  HttpVlm(std::shared_ptr<JsonHttpClient> client, ChatOptions options = {});

  std::string complete(const VlmRequest& request) override;
  std::size_t max_images() const override { return options_.max_images; }

  static nlohmann::json build_request_body(const std::string& model, const VlmRequest& request,
                                           const ChatOptions& options);

 private:
  std::shared_ptr<JsonHttpClient> client_;
  ChatOptions options_;
};

class HttpTextEmbedder : public TextEmbedder {
 public:
  explicit HttpTextEmbedder(std::shared_ptr<JsonHttpClient> client);
  EmbeddingVector embed_text(std::string_view text) override;

 private:
  std::shared_ptr<JsonHttpClient> client_;
};

/// Sends the image as a PNG data URL in the embeddings "input" field, the
/// convention of multimodal embedding servers.
class HttpImageEmbedder : public ImageEmbedder {
 public:
  explicit HttpImageEmbedder(std::shared_ptr<JsonHttpClient> client);
  EmbeddingVector embed_image(const Image& image) override;

 private:
  std::shared_ptr<JsonHttpClient> client_;
};

/// Declared for completeness; no HTTP segmentation or tracking backend exists
/// yet, so every call throws ProviderFailure.
class HttpPointSegmenter : public PointSegmentProvider {
 public:
  explicit HttpPointSegmenter(ProviderEndpoint endpoint);
  MaskProposal point_segment(const Image& image, const GazePoint2D& point) override;

 private:
  ProviderEndpoint endpoint_;
};

class HttpMaskPropagator : public MaskPropagationProvider {
 public:
  explicit HttpMaskPropagator(ProviderEndpoint endpoint);
  std::map<int, std::optional<Mask>> propagate_masks(const Image& prev_frame, const Image& next_frame,
                                                     const std::map<int, Mask>& masks,
                                                     int next_frame_index) override;

 private:
  ProviderEndpoint endpoint_;
};

std::string png_data_url(const Image& image);

}  // namespace egoassist
