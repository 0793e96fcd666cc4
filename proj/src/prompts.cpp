#include "egoassist/prompts.hpp"

#include <fstream>
#include <iterator>

#include "egoassist/error.hpp"
#include "egoassist_embedded_prompts.hpp"

namespace egoassist {

PromptLibrary PromptLibrary::defaults() {
  namespace p = embedded_prompts;
  return {std::string(p::intent), std::string(p::keyframes), std::string(p::summary),
          std::string(p::caption), std::string(p::answer),   std::string(p::judge)};
}

PromptLibrary PromptLibrary::from_directory(const std::filesystem::path& dir) {
  PromptLibrary lib = defaults();
  const auto overlay = [&dir](const char* name, std::string& slot) {
    const auto file = dir / (std::string(name) + ".txt");
    if (!std::filesystem::is_regular_file(file)) return;
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::MissingFile, file.string());
    slot.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::MissingFile, dir.string());
  overlay("intent", lib.intent);
  overlay("keyframes", lib.keyframes);
  overlay("summary", lib.summary);
  overlay("caption", lib.caption);
  overlay("answer", lib.answer);
  overlay("judge", lib.judge);
  return lib;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find('{', pos);
    if (open == std::string_view::npos) break;
    const auto close = tmpl.find('}', open + 1);
    if (close == std::string_view::npos) break;
    const std::string key(tmpl.substr(open + 1, close - open - 1));
    const auto it = values.find(key);
    if (it == values.end()) {
      out.append(tmpl.substr(pos, open + 1 - pos));
      pos = open + 1;
      continue;
    }
    out.append(tmpl.substr(pos, open - pos));
    out.append(it->second);
    pos = close + 1;
  }
  out.append(tmpl.substr(pos));
  return out;
}

std::string prompt_section(std::string_view title, std::string_view body) {
  std::string out = "## ";
  out.append(title);
  out += '\n';
  out.append(body);
  if (out.back() != '\n') out += '\n';
  out += '\n';
  return out;
}

std::string extract_prompt_section(std::string_view prompt, std::string_view title) {
  const std::string header = "## " + std::string(title) + "\n";
  std::size_t start = std::string_view::npos;
  if (prompt.substr(0, header.size()) == header) {
    start = header.size();
  } else {
    const auto found = prompt.find("\n" + header);
    if (found != std::string_view::npos) start = found + 1 + header.size();
  }
  if (start == std::string_view::npos) return {};
  auto end = prompt.find("\n## ", start - 1);
  if (end == std::string_view::npos) end = prompt.size();
  std::string body(prompt.substr(start, end - start));
  while (!body.empty() && (body.back() == '\n' || body.back() == ' ')) body.pop_back();
  return body;
}

}  // namespace egoassist
