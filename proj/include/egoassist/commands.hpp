#pragma once

// Entry points behind the egoassist command-line tool. Each returns the
// process exit code: 0 ok, 2 input error, 3 partial results, 4 provider
// failure.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "egoassist/assist.hpp"
#include "egoassist/error.hpp"
#include "egoassist/pipeline.hpp"
#include "egoassist/service.hpp"

namespace egoassist {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 2;
inline constexpr int kExitPartial = 3;
inline constexpr int kExitProviderFailure = 4;

int exit_code_for(ErrorCode code) noexcept;

/// Flags shared by every command; each set flag overrides the config file.
struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::string> cue_mode;
  std::optional<double> lambda_text;
  std::optional<double> lambda_visual;
  std::optional<int> top_k;
  bool no_history = false;
  bool summary = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> providers;
  std::optional<std::filesystem::path> workspace;
  std::optional<std::string> context_method;
};

/// Config file (or defaults) with the flags applied. Setting one lambda
/// alone sets the other to its complement.
PipelineConfig resolve_config(const CommonOptions& options);

int cmd_process(const CommonOptions& options, const std::filesystem::path& recording,
                const std::optional<std::filesystem::path>& out_dir, std::ostream& out, std::ostream& err);

struct AskOptions {
  std::string demonstration_id;
  std::string question;
  std::filesystem::path image;
  std::optional<GazePoint2D> gaze;
  AnswerMode mode = AnswerMode::rag;
};

int cmd_ask(const CommonOptions& options, const AskOptions& ask, std::ostream& out, std::ostream& err);

struct EvalOptions {
  std::filesystem::path questions;
  std::vector<std::string> conditions;
  std::filesystem::path out_dir = "report";
  /// Holds <demonstration_id>/manifest.jsonl; defaults to the questions
  /// file's directory.
  std::optional<std::filesystem::path> recordings;
};

int cmd_eval(const CommonOptions& options, const EvalOptions& eval, std::ostream& out, std::ostream& err);

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::optional<std::filesystem::path> static_dir;
  std::optional<std::string> token_env;
  std::optional<std::filesystem::path> sessions_dir;
  /// Called once bound, before serving; lets the caller arrange stop().
  std::function<void(AssistService&, int port)> on_listening;
};

int cmd_serve(const CommonOptions& options, const ServeOptions& serve, std::ostream& out, std::ostream& err);

/// Writes the default synthetic recording plus `query_count` query images
/// under <dir>/queries.
int cmd_make_synthetic(const std::filesystem::path& dir, int query_count, std::ostream& out, std::ostream& err);

}  // namespace egoassist
