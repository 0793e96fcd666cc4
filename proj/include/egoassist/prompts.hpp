#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace egoassist {

/// Prompt templates with `{name}` placeholders. Defaults are the files under
/// prompts/ compiled into the library; a directory may override any subset.
struct PromptLibrary {
  std::string intent;
  std::string keyframes;
  std::string summary;
  std::string caption;
  std::string answer;
  std::string judge;

  static PromptLibrary defaults();
  /// Defaults overlaid with `<dir>/<name>.txt` for every file present.
  static PromptLibrary from_directory(const std::filesystem::path& dir);
};

/// Replaces `{key}` for every key in `values`; other braces are left intact.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// "## <title>\n<body>\n\n", the block format the section placeholders expand to.
std::string prompt_section(std::string_view title, std::string_view body);

/// Body of the "## <title>" block in a rendered prompt, or empty when absent.
std::string extract_prompt_section(std::string_view prompt, std::string_view title);

}  // namespace egoassist
