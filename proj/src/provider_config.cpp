#include "egoassist/provider_config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "egoassist/error.hpp"
#include "egoassist/mock_providers.hpp"

namespace egoassist {

using nlohmann::json;

namespace {

const std::set<std::string> kEndpointKeys = {"kind",        "base_url",    "model",        "api_key_env",
                                             "timeout_s",   "max_retries", "max_in_flight"};

void reject_inline_keys(const json& tree, const std::string& where) {
  if (tree.is_object()) {
    for (const auto& [key, value] : tree.items()) {
      if (key == "api_key" || key == "apikey" || key == "api-key") {
        throw Error(ErrorCode::UsageError,
                    where + ": API keys are read from the environment; name the variable in api_key_env");
      }
      reject_inline_keys(value, where + "." + key);
    }
  } else if (tree.is_array()) {
    for (const auto& value : tree) reject_inline_keys(value, where);
  }
}

bool known_role(const std::string& name) {
  for (const char* r : kProviderRoles) {
    if (name == r) return true;
  }
  return false;
}

std::uint64_t role_seed(const RoleConfig& role, std::uint64_t seed) {
  return role.options.value("seed", seed);
}

std::shared_ptr<JsonHttpClient> make_client(const RoleConfig& role, std::uint64_t seed, const Sleeper& sleeper) {
  return std::make_shared<JsonHttpClient>(role.endpoint, role_seed(role, seed), sleeper);
}

ChatOptions chat_options(const RoleConfig& role) {
  ChatOptions o;
  if (role.options.contains("temperature")) o.temperature = role.options["temperature"].get<double>();
  if (role.options.contains("max_tokens")) o.max_tokens = role.options["max_tokens"].get<int>();
  o.json_mode = role.options.value("json_mode", false);
  o.max_images = role.options.value("max_images", std::size_t{64});
  return o;
}

MockScript load_script(const json& spec, const std::filesystem::path& base_dir) {
  if (spec.is_string()) {
    std::filesystem::path p = spec.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    return MockScript::load(p);
  }
  return MockScript::from_json(spec);
}

}  // namespace

std::string interpolate_env(const std::string& text, const EnvLookup& lookup) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto start = text.find("${", i);
    if (start == std::string::npos) {
      out.append(text, i, std::string::npos);
      break;
    }
    const auto end = text.find('}', start + 2);
    if (end == std::string::npos) throw Error(ErrorCode::UsageError, "unterminated ${ in '" + text + "'");
    out.append(text, i, start - i);
    const auto name = text.substr(start + 2, end - start - 2);
    std::optional<std::string> value;
    if (lookup) {
      value = lookup(name);
    } else if (const char* v = std::getenv(name.c_str())) {
      value = v;
    }
    if (!value) throw Error(ErrorCode::UsageError, "environment variable " + name + " is not set");
    out += *value;
    i = end + 1;
  }
  return out;
}

json interpolate_env(const json& tree, const EnvLookup& lookup) {
  if (tree.is_string()) return interpolate_env(tree.get<std::string>(), lookup);
  if (tree.is_object()) {
    json out = json::object();
    for (const auto& [key, value] : tree.items()) out[key] = interpolate_env(value, lookup);
    return out;
  }
  if (tree.is_array()) {
    json out = json::array();
    for (const auto& value : tree) out.push_back(interpolate_env(value, lookup));
    return out;
  }
  return tree;
}

ProviderConfig ProviderConfig::all_mock() {
  ProviderConfig c;
  for (const char* r : kProviderRoles) c.roles[r] = RoleConfig{};
  return c;
}

ProviderConfig ProviderConfig::from_json(const json& raw, const std::filesystem::path& base_dir) {
  reject_inline_keys(raw, "providers");
  const json j = interpolate_env(raw);
  ProviderConfig c = all_mock();
  c.base_dir = base_dir;
  const json& roles = j.contains("providers") ? j.at("providers") : j;
  for (const auto& [name, block] : roles.items()) {
    if (!known_role(name)) throw Error(ErrorCode::UsageError, "unknown provider role '" + name + "'");
    RoleConfig role;
    const auto kind = block.value("kind", "mock");
    if (kind == "mock") {
      role.kind = ProviderKind::mock;
    } else if (kind == "http") {
      role.kind = ProviderKind::http;
    } else {
      throw Error(ErrorCode::UsageError, name + ": kind must be 'mock' or 'http'");
    }
    role.endpoint.base_url = block.value("base_url", "");
    role.endpoint.model = block.value("model", "");
    role.endpoint.api_key_env = block.value("api_key_env", "");
    role.endpoint.timeout_s = block.value("timeout_s", role.endpoint.timeout_s);
    role.endpoint.max_retries = block.value("max_retries", role.endpoint.max_retries);
    role.endpoint.max_in_flight = block.value("max_in_flight", role.endpoint.max_in_flight);
    for (const auto& [key, value] : block.items()) {
      if (!kEndpointKeys.count(key)) role.options[key] = value;
    }
    if (role.kind == ProviderKind::http) role.endpoint.validate();
    c.roles[name] = std::move(role);
  }
  return c;
}

ProviderConfig ProviderConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedLine, path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

ProviderSet build_providers(const ProviderConfig& config, const PromptLibrary& prompts, std::uint64_t seed,
                            Sleeper sleeper) {
  auto role = [&](const char* name) -> const RoleConfig& {
    static const RoleConfig kMock;
    const auto it = config.roles.find(name);
    return it == config.roles.end() ? kMock : it->second;
  };
  ProviderSet set;

  const auto& seg = role("segmenter");
  if (seg.kind == ProviderKind::http) {
    set.segmenter = std::make_shared<HttpPointSegmenter>(seg.endpoint);
  } else {
    set.segmenter = MockPointSegmenter::from_json(seg.options);
  }

  const auto& trk = role("tracker");
  if (trk.kind == ProviderKind::http) {
    set.tracker = std::make_shared<HttpMaskPropagator>(trk.endpoint);
  } else {
    set.tracker = MockMaskPropagator::from_json(trk.options);
  }

  const auto& vlm = role("vlm");
  if (vlm.kind == ProviderKind::http) {
    set.vlm = std::make_shared<HttpVlm>(make_client(vlm, seed, sleeper), chat_options(vlm));
  } else {
    set.vlm = std::make_shared<MockVlm>(vlm.options.contains("script")
                                            ? load_script(vlm.options["script"], config.base_dir)
                                            : MockScript{});
  }

  const auto& te = role("text_embedder");
  if (te.kind == ProviderKind::http) {
    set.text_embedder = std::make_shared<HttpTextEmbedder>(make_client(te, seed, sleeper));
  } else {
    set.text_embedder = std::make_shared<HashingTextEmbedder>(te.options.value("dim", 64), role_seed(te, seed));
  }

  const auto& ie = role("image_embedder");
  if (ie.kind == ProviderKind::http) {
    set.image_embedder = std::make_shared<HttpImageEmbedder>(make_client(ie, seed, sleeper));
  } else {
    set.image_embedder =
        std::make_shared<HashingImageEmbedder>(ie.options.value("dim", 64), role_seed(ie, seed) ^ 0x5bd1e995ULL);
  }

  const auto& judge = role("judge");
  if (judge.kind == ProviderKind::http) {
    auto options = chat_options(judge);
    options.temperature = 0.0;  // pinned so repeated grading agrees
    auto judge_vlm = std::make_shared<HttpVlm>(make_client(judge, seed, sleeper), options);
    set.judge = std::make_shared<VlmJudge>(judge_vlm, prompts.judge, judge.options.value("max_reprompts", 2));
  } else if (judge.options.value("mode", "containment") == "scripted") {
    std::vector<int> scores = judge.options.value("scores", std::vector<int>{});
    if (scores.empty()) throw Error(ErrorCode::UsageError, "judge: scripted mode needs scores");
    const auto policy = judge.options.value("exhaustion", "repeat_last");
    if (policy != "repeat_last" && policy != "fail") {
      throw Error(ErrorCode::UsageError, "judge: unknown exhaustion policy '" + policy + "'");
    }
    set.judge = std::make_shared<MockJudge>(MockJudge::scripted(
        std::move(scores), policy == "fail" ? ExhaustionPolicy::fail : ExhaustionPolicy::repeat_last));
  } else {
    set.judge = std::make_shared<MockJudge>(MockJudge::containment());
  }

  const auto& cap = role("captioner");
  if (cap.kind == ProviderKind::http) {
    auto cap_vlm = std::make_shared<HttpVlm>(make_client(cap, seed, sleeper), chat_options(cap));
    set.captioner = std::make_shared<VlmCaptioner>(cap_vlm, prompts.caption);
  } else if (cap.options.value("use_vlm", false)) {
    set.captioner = std::make_shared<VlmCaptioner>(set.vlm, prompts.caption);
  } else {
    set.captioner = std::make_shared<MockCaptioner>(cap.options.value("captions", std::vector<std::string>{}));
  }
  return set;
}

}  // namespace egoassist
