#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "egoassist/assist.hpp"
#include "egoassist/pipeline.hpp"

namespace egoassist {

/// C = mean over questions of (sigma - 1) / 2, as a percentage.
/// EmptyInput for no scores, InvalidSigma for any score outside {1,2,3}.
double llm_match(std::span<const int> sigmas);

/// Sample standard deviation of the per-question percentages over sqrt(N).
/// TooFewSamples when N < 2.
double standard_error(std::span<const int> sigmas);

struct EvalQuestion {
  std::string question_id;
  std::string demonstration_id;
  std::string question;
  std::filesystem::path query_image_ref;
  std::string reference_answer;
  TaskCategory task_category = TaskCategory::other;
  bool ambiguous = false;
  /// Questions from one live interaction share a group and one session.
  std::string ordering_group;
  std::optional<GazePoint2D> gaze_point;
};

/// questions.jsonl: one object per line. Image refs resolve against the
/// file's directory; ordering_group defaults to the question_id.
std::vector<EvalQuestion> load_questions(const std::filesystem::path& path);

struct JudgedAnswer {
  std::string question_id;
  std::string candidate_answer;
  int sigma = 1;
  std::string condition_label;
  std::vector<int> retrieved_segment_ids;
};

/// One row of the condition matrix. Labels: zero_shot, frames_as_context,
/// clip_clustering, eye_gaze, speech, eye_gaze+speech, optionally suffixed
/// by +summary and/or +inferred_intent.
struct Condition {
  std::string label;
  AnswerMode mode = AnswerMode::rag;
  PipelineConfig pipeline;
};

Condition parse_condition(const std::string& label, const PipelineConfig& base);

/// Demonstration to answer against under a condition.
using DemonstrationResolver =
    std::function<std::shared_ptr<Demonstration>(const std::string& demonstration_id, const Condition& condition)>;

/// Judges every non-ambiguous question, in question_id order, one fresh
/// session per (demonstration, ordering group). On failure the answers judged
/// so far go to `partial_path` (when set) and the error propagates.
std::vector<JudgedAnswer> run_condition(const std::vector<EvalQuestion>& questions, const Condition& condition,
                                        const DemonstrationResolver& resolve, ProviderSet& providers,
                                        const std::optional<std::filesystem::path>& partial_path = std::nullopt);

struct ScoreRow {
  std::string condition_label;
  std::optional<TaskCategory> task_category;  // nullopt for the overall row
  double mean = 0;
  std::optional<double> standard_error;  // nullopt when n < 2
  std::size_t n = 0;
};

struct EvalReport {
  std::vector<ScoreRow> summary;
  std::vector<ScoreRow> by_task;
  std::vector<JudgedAnswer> raw;
};

EvalReport build_report(const std::vector<std::pair<std::string, std::vector<JudgedAnswer>>>& judged,
                        const std::vector<EvalQuestion>& questions);

/// summary.csv, by_task.csv and raw.jsonl.
void write_report(const EvalReport& report, const std::filesystem::path& dir);
void write_judged_jsonl(const std::vector<JudgedAnswer>& judged, const std::filesystem::path& path);
std::string format_report_table(const EvalReport& report);

}  // namespace egoassist
