#include "egoassist/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "egoassist/error.hpp"

namespace egoassist {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_sigmas(std::span<const int> sigmas) {
  for (const int s : sigmas) {
    if (s < 1 || s > 3) throw Error(ErrorCode::InvalidSigma, "score " + std::to_string(s) + " is not in {1,2,3}");
  }
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

double llm_match(std::span<const int> sigmas) {
  if (sigmas.empty()) throw Error(ErrorCode::EmptyInput, "no scores");
  check_sigmas(sigmas);
  // Sum the integer numerators so the only rounding is the final division.
  long long total = 0;
  for (const int s : sigmas) total += s - 1;
  return static_cast<double>(total) * 50.0 / static_cast<double>(sigmas.size());
}

double standard_error(std::span<const int> sigmas) {
  if (sigmas.size() < 2) throw Error(ErrorCode::TooFewSamples, "standard error needs at least 2 scores");
  check_sigmas(sigmas);
  const double n = static_cast<double>(sigmas.size());
  const double mean = llm_match(sigmas);
  double ss = 0;
  for (const int s : sigmas) {
    const double d = (s - 1) * 50.0 - mean;
    ss += d * d;
  }
  return std::sqrt(ss / (n - 1)) / std::sqrt(n);
}

std::vector<EvalQuestion> load_questions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::vector<EvalQuestion> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      EvalQuestion q;
      q.question_id = j.at("question_id").get<std::string>();
      q.demonstration_id = j.at("demonstration_id").get<std::string>();
      q.question = j.at("question").get<std::string>();
      q.query_image_ref = j.at("query_image_ref").get<std::string>();
      if (q.query_image_ref.is_relative()) q.query_image_ref = path.parent_path() / q.query_image_ref;
      q.reference_answer = j.at("reference_answer").get<std::string>();
      q.task_category = task_category_from_string(j.value("task_category", "other"));
      q.ambiguous = j.value("ambiguous", false);
      q.ordering_group = j.value("ordering_group", q.question_id);
      if (j.contains("gaze_point") && !j["gaze_point"].is_null()) {
        GazePoint2D g;
        g.u = j["gaze_point"].at("u").get<double>();
        g.v = j["gaze_point"].at("v").get<double>();
        q.gaze_point = g;
      }
      if (q.question.empty() || q.reference_answer.empty()) {
        throw Error(ErrorCode::InvariantViolation, "question and reference_answer must be non-empty");
      }
      out.push_back(std::move(q));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedLine, path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ": line " + std::to_string(line_no) + ": " + e.detail());
    }
  }
  return out;
}

Condition parse_condition(const std::string& label, const PipelineConfig& base) {
  Condition c;
  c.label = label;
  c.pipeline = base;
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= label.size()) {
    const auto plus = label.find('+', start);
    parts.push_back(label.substr(start, plus == std::string::npos ? std::string::npos : plus - start));
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  bool gaze = false, speech = false;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& p = parts[i];
    if (p == "zero_shot" && i == 0) {
      c.mode = AnswerMode::zero_shot;
    } else if (p == "frames_as_context" && i == 0) {
      c.mode = AnswerMode::frames_as_context;
    } else if (p == "clip_clustering" && i == 0) {
      c.pipeline.context_method = ContextMethod::kmeans;
    } else if (p == "eye_gaze" || p == "gaze") {
      gaze = true;
    } else if (p == "speech") {
      speech = true;
    } else if (p == "summary") {
      c.pipeline.summary_enabled = true;
    } else if (p == "inferred_intent") {
      c.pipeline.intent_source = IntentSource::inferred;
    } else {
      throw Error(ErrorCode::UsageError, "unknown condition '" + label + "'");
    }
  }
  if (gaze && speech) {
    c.pipeline.cue_mode = CueMode::gaze_speech;
  } else if (speech) {
    c.pipeline.cue_mode = CueMode::speech;
  } else if (gaze) {
    c.pipeline.cue_mode = CueMode::gaze;
  }  // otherwise the base config's cue mode stands
  return c;
}

void write_judged_jsonl(const std::vector<JudgedAnswer>& judged, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + path.string());
  for (const auto& a : judged) {
    out << json{{"condition", a.condition_label},
                {"question_id", a.question_id},
                {"candidate_answer", a.candidate_answer},
                {"sigma", a.sigma},
                {"retrieved_segment_ids", a.retrieved_segment_ids}}
               .dump()
        << '\n';
  }
}

std::vector<JudgedAnswer> run_condition(const std::vector<EvalQuestion>& questions, const Condition& condition,
                                        const DemonstrationResolver& resolve, ProviderSet& providers,
                                        const std::optional<fs::path>& partial_path) {
  std::vector<const EvalQuestion*> ordered;
  for (const auto& q : questions) {
    if (!q.ambiguous) ordered.push_back(&q);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->question_id < b->question_id; });

  AssistOptions options = condition.pipeline.assist;
  options.prompts = condition.pipeline.prompts();
  AssistEngine engine(providers, options);
  SessionConfig session_config = condition.pipeline.session_config();
  session_config.mode = condition.mode;

  std::map<std::pair<std::string, std::string>, std::string> sessions;
  std::map<std::string, double> clock;  // per session, keeps turn timestamps ordered
  std::vector<JudgedAnswer> judged;
  try {
    for (const auto* q : ordered) {
      const auto key = std::make_pair(q->demonstration_id, q->ordering_group);
      auto it = sessions.find(key);
      if (it == sessions.end()) {
        const auto ids = engine.demonstration_ids();
        if (std::find(ids.begin(), ids.end(), q->demonstration_id) == ids.end()) {
          engine.register_demonstration(resolve(q->demonstration_id, condition));
        }
        it = sessions.emplace(key, engine.create_session(q->demonstration_id, session_config).session_id).first;
      }
      Query query;
      query.question = q->question;
      query.image = load_png(q->query_image_ref);
      query.image_ref = q->query_image_ref.string();
      query.gaze_point = q->gaze_point;
      query.timestamp_s = clock[it->second]++;
      const auto answer = engine.answer_query(it->second, query);
      JudgedAnswer j;
      j.question_id = q->question_id;
      j.candidate_answer = answer.text;
      j.sigma = providers.judge->judge_answer(q->question, q->reference_answer, answer.text);
      if (j.sigma < 1 || j.sigma > 3) throw Error(ErrorCode::InvalidSigma, "judge returned " + std::to_string(j.sigma));
      j.condition_label = condition.label;
      j.retrieved_segment_ids = answer.retrieved_segment_ids;
      judged.push_back(std::move(j));
    }
  } catch (...) {
    if (partial_path) write_judged_jsonl(judged, *partial_path);
    throw;
  }
  return judged;
}

EvalReport build_report(const std::vector<std::pair<std::string, std::vector<JudgedAnswer>>>& judged,
                        const std::vector<EvalQuestion>& questions) {
  if (judged.empty()) throw Error(ErrorCode::UsageError, "report needs at least one condition");
  std::map<std::string, TaskCategory> category;
  for (const auto& q : questions) category[q.question_id] = q.task_category;

  auto row = [](const std::string& label, std::optional<TaskCategory> cat, const std::vector<int>& sigmas) {
    ScoreRow r;
    r.condition_label = label;
    r.task_category = cat;
    r.n = sigmas.size();
    if (!sigmas.empty()) r.mean = llm_match(sigmas);
    if (sigmas.size() >= 2) r.standard_error = standard_error(sigmas);
    return r;
  };

  EvalReport report;
  for (const auto& [label, answers] : judged) {
    std::vector<int> all;
    std::map<TaskCategory, std::vector<int>> split;
    for (const auto& a : answers) {
      all.push_back(a.sigma);
      const auto it = category.find(a.question_id);
      split[it == category.end() ? TaskCategory::other : it->second].push_back(a.sigma);
      report.raw.push_back(a);
    }
    report.summary.push_back(row(label, std::nullopt, all));
    for (const auto& [cat, sigmas] : split) report.by_task.push_back(row(label, cat, sigmas));
  }
  return report;
}

void write_report(const EvalReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  auto se = [](const ScoreRow& r) { return r.standard_error ? fixed4(*r.standard_error) : std::string(); };
  {
    std::ofstream out(dir / "summary.csv", std::ios::binary | std::ios::trunc);
    out << "condition,llm_match,standard_error,n\n";
    for (const auto& r : report.summary) {
      out << csv_field(r.condition_label) << ',' << fixed4(r.mean) << ',' << se(r) << ',' << r.n << '\n';
    }
  }
  {
    std::ofstream out(dir / "by_task.csv", std::ios::binary | std::ios::trunc);
    out << "condition,task_category,llm_match,standard_error,n\n";
    for (const auto& r : report.by_task) {
      out << csv_field(r.condition_label) << ',' << to_string(*r.task_category) << ',' << fixed4(r.mean) << ','
          << se(r) << ',' << r.n << '\n';
    }
  }
  write_judged_jsonl(report.raw, dir / "raw.jsonl");
}

std::string format_report_table(const EvalReport& report) {
  std::size_t width = 9;
  for (const auto& r : report.summary) width = std::max(width, r.condition_label.size());
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %8s  %5s\n", static_cast<int>(width), "condition", "LLM-Match", "SE", "n");
  out += buf;
  for (const auto& r : report.summary) {
    const auto se = r.standard_error ? fixed4(*r.standard_error) : std::string("-");
    std::snprintf(buf, sizeof buf, "%-*s  %9.2f  %8s  %5zu\n", static_cast<int>(width), r.condition_label.c_str(),
                  r.mean, se.c_str(), r.n);
    out += buf;
  }
  return out;
}

}  // namespace egoassist
