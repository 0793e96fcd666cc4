#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "egoassist/assist.hpp"
#include "egoassist/error.hpp"
#include "egoassist/knowledge.hpp"

namespace egoassist {

/// Hook behind POST /demonstrations: processes the recording and returns the
/// demonstration to register.
using DemonstrationProcessor = std::function<std::shared_ptr<Demonstration>(
    const std::filesystem::path& recording, CueMode cue_mode, bool summary_enabled)>;

struct ServiceOptions {
  std::optional<std::string> bearer_token;
  std::size_t max_upload_bytes = 10u * 1024u * 1024u;
  /// Served under / when set (the chat client bundle).
  std::optional<std::filesystem::path> static_dir;
  DemonstrationProcessor processor;
  SessionConfig default_session;
  int worker_threads = 8;
};

/// JSON HTTP API over an AssistEngine. Error bodies are {"code", "message"}.
class AssistService {
 public:
  AssistService(AssistEngine& engine, ServiceOptions options);
  ~AssistService();

  AssistService(const AssistService&) = delete;
  AssistService& operator=(const AssistService&) = delete;

  /// Binds `host:port` (port 0 picks a free one) and returns the bound port.
  /// Throws BindFailure.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop(); in-flight requests finish first.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// HTTP status for an error code.
int http_status_for(ErrorCode code) noexcept;

}  // namespace egoassist
