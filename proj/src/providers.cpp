#include "egoassist/providers.hpp"

#include <cctype>
#include <cmath>

#include "egoassist/error.hpp"
#include "egoassist/prompts.hpp"

namespace egoassist {

double EmbeddingVector::norm() const noexcept {
  double sum = 0;
  for (const float v : values) sum += static_cast<double>(v) * v;
  return std::sqrt(sum);
}

EmbeddingVector EmbeddingVector::normalized() const {
  const double n = norm();
  if (!(n > 0) || !std::isfinite(n)) {
    throw Error(ErrorCode::ProviderFailure, "degenerate embedding");
  }
  EmbeddingVector out{values, modality};
  for (auto& v : out.values) v = static_cast<float>(v / n);
  return out;
}

std::string_view to_string(VlmCallKind kind) noexcept {
  switch (kind) {
    case VlmCallKind::intent: return "intent";
    case VlmCallKind::keyframes: return "keyframes";
    case VlmCallKind::summary: return "summary";
    case VlmCallKind::caption: return "caption";
    case VlmCallKind::answer: return "answer";
    case VlmCallKind::judge: return "judge";
    case VlmCallKind::generic: return "generic";
  }
  return "generic";
}

VlmCallKind vlm_call_kind_from_string(std::string_view text) {
  for (const auto kind : {VlmCallKind::intent, VlmCallKind::keyframes, VlmCallKind::summary,
                          VlmCallKind::caption, VlmCallKind::answer, VlmCallKind::judge,
                          VlmCallKind::generic}) {
    if (to_string(kind) == text) return kind;
  }
  throw Error(ErrorCode::UsageError, "unknown call kind '" + std::string(text) + "'");
}

std::optional<int> parse_judge_score(std::string_view reply) {
  std::size_t i = 0;
  while (i < reply.size() && !std::isdigit(static_cast<unsigned char>(reply[i]))) ++i;
  if (i == reply.size()) return std::nullopt;
  std::size_t j = i;
  while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
  if (j - i != 1) return std::nullopt;
  const int value = reply[i] - '0';
  if (value < 1 || value > 3) return std::nullopt;
  return value;
}

VlmJudge::VlmJudge(std::shared_ptr<VlmProvider> vlm, std::string rubric_template, int max_reprompts)
    : vlm_(std::move(vlm)), rubric_(std::move(rubric_template)), max_reprompts_(max_reprompts) {}

int VlmJudge::judge_answer(std::string_view question, std::string_view reference_answer,
                           std::string_view candidate_answer) {
  if (question.empty() || reference_answer.empty() || candidate_answer.empty()) {
    throw Error(ErrorCode::UsageError, "judge inputs must be non-empty");
  }
  VlmRequest request;
  request.kind = VlmCallKind::judge;
  request.prompt = render_template(rubric_, {{"question", std::string(question)},
                                             {"reference", std::string(reference_answer)},
                                             {"candidate", std::string(candidate_answer)}});
  const std::string base_prompt = request.prompt;
  std::string last_reply;
  for (int attempt = 0; attempt <= max_reprompts_; ++attempt) {
    last_reply = vlm_->complete(request);
    if (auto score = parse_judge_score(last_reply)) return *score;
    request.prompt = base_prompt +
                     "\n\nYour previous reply did not contain a mark. Reply with a single integer: "
                     "1, 2 or 3.";
  }
  throw Error(ErrorCode::MalformedReply, "judge reply has no score: '" + last_reply.substr(0, 80) + "'");
}

VlmCaptioner::VlmCaptioner(std::shared_ptr<VlmProvider> vlm, std::string prompt)
    : vlm_(std::move(vlm)), prompt_(std::move(prompt)) {}

std::string VlmCaptioner::caption(const Image& image) {
  VlmRequest request;
  request.kind = VlmCallKind::caption;
  request.prompt = prompt_;
  request.images.push_back({"Image", image});
  auto text = vlm_->complete(request);
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::EmptyResponse, "captioner returned an empty caption");
  }
  return text;
}

}  // namespace egoassist
