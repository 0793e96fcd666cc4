#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "egoassist/http_providers.hpp"
#include "egoassist/prompts.hpp"
#include "egoassist/providers.hpp"

namespace egoassist {

inline constexpr const char* kProviderRoles[] = {"segmenter",      "tracker", "vlm",      "text_embedder",
                                                 "image_embedder", "judge",   "captioner"};

enum class ProviderKind { mock, http };

/// One role block. `options` keeps every key besides kind and the endpoint
/// fields (mock scripts, embedding dim, chat temperature, ...).
struct RoleConfig {
  ProviderKind kind = ProviderKind::mock;
  ProviderEndpoint endpoint;
  nlohmann::json options = nlohmann::json::object();
};

struct ProviderConfig {
  std::map<std::string, RoleConfig> roles;
  /// Relative script paths resolve against this directory.
  std::filesystem::path base_dir;

  /// Every role mock.
  static ProviderConfig all_mock();
  /// Parses the config tree after `${NAME}` interpolation of every string.
  /// Roles left out stay mock. An "api_key" key anywhere is rejected.
  static ProviderConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ProviderConfig load(const std::filesystem::path& path);
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Replaces `${NAME}` with the variable's value; UsageError when unset.
std::string interpolate_env(const std::string& text, const EnvLookup& lookup = {});
nlohmann::json interpolate_env(const nlohmann::json& tree, const EnvLookup& lookup = {});

/// Instantiates every role. Mock embedders and HTTP backoff jitter are
/// seeded from `seed` unless a role sets its own "seed". Clients for the
/// HTTP roles accept an injected sleeper for tests.
ProviderSet build_providers(const ProviderConfig& config, const PromptLibrary& prompts, std::uint64_t seed,
                            Sleeper sleeper = {});

}  // namespace egoassist
