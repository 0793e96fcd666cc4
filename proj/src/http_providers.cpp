#include "httplib.h"

#include "egoassist/http_providers.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

#include "egoassist/base64.hpp"
#include "egoassist/error.hpp"

namespace egoassist {

using nlohmann::json;

namespace {

struct ParsedUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

std::optional<ParsedUrl> parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) return std::nullopt;
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") return std::nullopt;
  const auto host_start = scheme_end + 3;
  const auto path_start = url.find('/', host_start);
  ParsedUrl out;
  out.scheme_host_port = url.substr(0, path_start);
  if (out.scheme_host_port.size() <= host_start) return std::nullopt;
  if (path_start != std::string::npos) out.path_prefix = url.substr(path_start);
  while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
  return out;
}

std::string excerpt(const std::string& body) {
  constexpr std::size_t kMax = 200;
  return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

void ProviderEndpoint::validate() const {
  if (!parse_url(base_url)) throw Error(ErrorCode::UsageError, "invalid base_url '" + base_url + "'");
  if (!(timeout_s > 0)) throw Error(ErrorCode::UsageError, "timeout_s must be > 0");
  if (max_retries < 0) throw Error(ErrorCode::UsageError, "max_retries must be >= 0");
  if (max_in_flight < 1 || max_in_flight > 64) throw Error(ErrorCode::UsageError, "max_in_flight must be in [1, 64]");
}

double BackoffPolicy::nominal_delay(int retry) const { return base_s * std::pow(factor, retry); }

JsonHttpClient::JsonHttpClient(ProviderEndpoint endpoint, std::uint64_t seed, Sleeper sleeper,
                               BackoffPolicy backoff)
    : endpoint_(std::move(endpoint)),
      backoff_(backoff),
      sleeper_(std::move(sleeper)),
      in_flight_((endpoint_.validate(), endpoint_.max_in_flight)),
      rng_(seed) {
  const auto url = *parse_url(endpoint_.base_url);
  scheme_host_port_ = url.scheme_host_port;
  path_prefix_ = url.path_prefix;
  if (!sleeper_) {
    sleeper_ = [](std::chrono::duration<double> d) { std::this_thread::sleep_for(d); };
  }
}

double JsonHttpClient::jittered_delay(int retry) {
  std::lock_guard lock(rng_mutex_);
  const double u = std::uniform_real_distribution<double>(-backoff_.jitter, backoff_.jitter)(rng_);
  return backoff_.nominal_delay(retry) * (1.0 + u);
}

json JsonHttpClient::post(const std::string& path, const json& body) {
  httplib::Headers headers;
  if (!endpoint_.api_key_env.empty()) {
    const char* key = std::getenv(endpoint_.api_key_env.c_str());
    if (!key || !*key) {
      throw Error(ErrorCode::ProviderFailure, "environment variable " + endpoint_.api_key_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const auto payload = body.dump();
  const auto full_path = path_prefix_ + path;

  std::string last_failure;
  bool timed_out = false;
  for (int attempt = 0;; ++attempt) {
    if (attempt > 0) {
      ++retries_;
      sleeper_(std::chrono::duration<double>(jittered_delay(attempt - 1)));
    }
    httplib::Result result;
    {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<64>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      httplib::Client client(scheme_host_port_);
      const auto t = std::chrono::duration<double>(endpoint_.timeout_s);
      client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
      client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
      client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
      result = client.Post(full_path, headers, payload, "application/json");
    }
    if (!result) {
      timed_out = result.error() == httplib::Error::ConnectionTimeout || result.error() == httplib::Error::Read;
      last_failure = "transport error: " + httplib::to_string(result.error());
    } else if (result->status >= 200 && result->status < 300) {
      try {
        return json::parse(result->body);
      } catch (const json::exception&) {
        throw Error(ErrorCode::ProviderFailure, "HTTP " + std::to_string(result->status) +
                                                    ": response is not JSON: " + excerpt(result->body));
      }
    } else {
      timed_out = false;
      last_failure = "HTTP " + std::to_string(result->status) + ": " + excerpt(result->body);
      if (!retryable_status(result->status)) throw Error(ErrorCode::ProviderFailure, last_failure);
    }
    if (attempt >= endpoint_.max_retries) break;
  }
  throw Error(timed_out ? ErrorCode::Timeout : ErrorCode::ProviderFailure,
              last_failure + " (after " + std::to_string(endpoint_.max_retries) + " retries)");
}

std::string png_data_url(const Image& image) {
  return "data:image/png;base64," + base64_encode(encode_png(image));
}

HttpVlm::HttpVlm(std::shared_ptr<JsonHttpClient> client, ChatOptions options)
    : client_(std::move(client)), options_(options) {}

json HttpVlm::build_request_body(const std::string& model, const VlmRequest& request, const ChatOptions& options) {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", request.prompt}});
  for (const auto& image : request.images) {
    if (!image.label.empty()) content.push_back({{"type", "text"}, {"text", image.label}});
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", png_data_url(image.image)}}}});
  }
  json body = {{"model", model}, {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
  if (options.temperature) body["temperature"] = *options.temperature;
  if (options.max_tokens) body["max_tokens"] = *options.max_tokens;
  if (options.json_mode && request.expects_json) body["response_format"] = {{"type", "json_object"}};
  return body;
}

std::string HttpVlm::complete(const VlmRequest& request) {
  if (request.images.size() > options_.max_images) {
    throw Error(ErrorCode::UsageError, std::to_string(request.images.size()) + " images exceed the backend limit of " +
                                           std::to_string(options_.max_images));
  }
  const auto reply = client_->post("/chat/completions", build_request_body(client_->endpoint().model, request, options_));
  try {
    const auto& message = reply.at("choices").at(0).at("message");
    if (message.at("content").is_null()) throw Error(ErrorCode::EmptyResponse, "chat completion has no content");
    return message.at("content").get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::ProviderFailure, "unexpected chat completion shape: " + excerpt(reply.dump()));
  }
}

namespace {

EmbeddingVector embedding_from_reply(const json& reply, Modality modality) {
  try {
    EmbeddingVector out;
    out.modality = modality;
    out.values = reply.at("data").at(0).at("embedding").get<std::vector<float>>();
    if (out.values.empty()) throw Error(ErrorCode::ProviderFailure, "empty embedding");
    return out;
  } catch (const json::exception&) {
    throw Error(ErrorCode::ProviderFailure, "unexpected embeddings shape: " + excerpt(reply.dump()));
  }
}

}  // namespace

HttpTextEmbedder::HttpTextEmbedder(std::shared_ptr<JsonHttpClient> client) : client_(std::move(client)) {}

EmbeddingVector HttpTextEmbedder::embed_text(std::string_view text) {
  if (text.empty()) throw Error(ErrorCode::UsageError, "cannot embed empty text");
  return embedding_from_reply(
      client_->post("/embeddings", {{"model", client_->endpoint().model}, {"input", std::string(text)}}),
      Modality::text);
}

HttpImageEmbedder::HttpImageEmbedder(std::shared_ptr<JsonHttpClient> client) : client_(std::move(client)) {}

EmbeddingVector HttpImageEmbedder::embed_image(const Image& image) {
  return embedding_from_reply(
      client_->post("/embeddings", {{"model", client_->endpoint().model}, {"input", png_data_url(image)}}),
      Modality::visual);
}

HttpPointSegmenter::HttpPointSegmenter(ProviderEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

MaskProposal HttpPointSegmenter::point_segment(const Image&, const GazePoint2D&) {
  throw Error(ErrorCode::ProviderFailure, "no HTTP point segmentation backend is implemented (" + endpoint_.base_url + ")");
}

HttpMaskPropagator::HttpMaskPropagator(ProviderEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

std::map<int, std::optional<Mask>> HttpMaskPropagator::propagate_masks(const Image&, const Image&,
                                                                       const std::map<int, Mask>&, int) {
  throw Error(ErrorCode::ProviderFailure, "no HTTP mask propagation backend is implemented (" + endpoint_.base_url + ")");
}

}  // namespace egoassist
