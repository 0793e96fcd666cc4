#include <csignal>
#include <iostream>
#include <mutex>
#include <pthread.h>
#include <thread>

#include "CLI11.hpp"
#include "egoassist/commands.hpp"

namespace {

using namespace egoassist;

void add_common(CLI::App& app, CommonOptions& o) {
  app.add_option("--config", o.config, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--cue-mode", o.cue_mode, "gaze, speech or gaze_speech");
  app.add_option("--lambda-text", o.lambda_text, "Weight of textual similarity");
  app.add_option("--lambda-visual", o.lambda_visual, "Weight of visual similarity");
  app.add_option("--top-k", o.top_k, "Segments retrieved per query");
  app.add_flag("--no-history", o.no_history, "Leave chat history out of answer prompts");
  app.add_flag("--summary", o.summary, "Generate and use a demonstration summary");
  app.add_option("--seed", o.seed, "Seed for mock providers, clustering and backoff jitter");
  app.add_option("--providers", o.providers, "Provider config (JSON)");
  app.add_option("--workspace", o.workspace, "Directory holding processed demonstrations");
  app.add_option("--context-method", o.context_method, "segments or kmeans");
}

std::optional<GazePoint2D> parse_gaze(const std::string& text) {
  if (text.empty()) return std::nullopt;
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw CLI::ValidationError("--gaze", "expected U,V");
  GazePoint2D g;
  g.u = std::stod(text.substr(0, comma));
  g.v = std::stod(text.substr(comma + 1));
  return g;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Demonstration-grounded egocentric assistant"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string recording;
  std::string out_dir;
  auto* process = app.add_subcommand("process", "Segment, caption and index a recording");
  add_common(*process, common);
  process->add_option("recording", recording, "Recording directory or manifest.jsonl")->required();
  process->add_option("--out", out_dir, "Output directory (default <workspace>/<id>)");

  AskOptions ask;
  std::string image;
  std::string gaze;
  bool zero_shot = false;
  bool frames_as_context = false;
  auto* ask_cmd = app.add_subcommand("ask", "Answer one question against a processed demonstration");
  add_common(*ask_cmd, common);
  ask_cmd->add_option("demonstration", ask.demonstration_id)->required();
  ask_cmd->add_option("question", ask.question)->required();
  ask_cmd->add_option("image", image, "Query image (PNG)")->required()->check(CLI::ExistingFile);
  ask_cmd->add_option("--gaze", gaze, "Query gaze point U,V in pixels");
  ask_cmd->add_flag("--zero-shot", zero_shot, "Answer without demonstration context");
  ask_cmd->add_flag("--frames-as-context", frames_as_context, "Ground on the nearest raw frames");

  ServeOptions serve;
  std::string bind = "127.0.0.1:8080";
  std::string static_dir;
  std::string token_env;
  std::string sessions_dir;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  add_common(*serve_cmd, common);
  serve_cmd->add_option("--bind", bind, "host:port");
  serve_cmd->add_option("--static", static_dir, "Directory served under /")->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--token-env", token_env, "Variable holding the bearer token clients must send");
  serve_cmd->add_option("--sessions", sessions_dir, "Directory sessions persist to");

  EvalOptions eval;
  std::string eval_out = "report";
  std::string recordings;
  auto* eval_group = app.add_subcommand("eval", "Offline evaluation");
  eval_group->require_subcommand(1);
  auto* eval_cmd = eval_group->add_subcommand("run", "Run a question set under one or more conditions");
  add_common(*eval_cmd, common);
  eval_cmd->add_option("--questions", eval.questions, "questions.jsonl")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--condition", eval.conditions, "Condition label; repeatable")->required();
  eval_cmd->add_option("--out", eval_out, "Report directory");
  eval_cmd->add_option("--recordings", recordings, "Directory of <demonstration_id>/ recordings");

  std::string synth_dir;
  int query_count = 4;
  auto* synth = app.add_subcommand("make-synthetic", "Write the synthetic demonstration recording");
  synth->add_option("dir", synth_dir)->required();
  synth->add_option("--queries", query_count, "Number of query images to render");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInputError;
  }

  try {
    if (*process) {
      return cmd_process(common, recording, out_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(out_dir),
                         std::cout, std::cerr);
    }
    if (*ask_cmd) {
      ask.image = image;
      ask.gaze = parse_gaze(gaze);
      if (zero_shot && frames_as_context) {
        std::cerr << "error: --zero-shot and --frames-as-context are exclusive\n";
        return kExitInputError;
      }
      ask.mode = zero_shot ? AnswerMode::zero_shot : frames_as_context ? AnswerMode::frames_as_context : AnswerMode::rag;
      return cmd_ask(common, ask, std::cout, std::cerr);
    }
    if (*eval_cmd) {
      eval.out_dir = eval_out;
      if (!recordings.empty()) eval.recordings = recordings;
      return cmd_eval(common, eval, std::cout, std::cerr);
    }
    if (*synth) return cmd_make_synthetic(synth_dir, query_count, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInputError;
  }

  // serve: SIGINT/SIGTERM are taken by a dedicated thread that stops the
  // server, which lets in-flight requests finish.
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) {
    std::cerr << "error: --bind expects host:port\n";
    return kExitInputError;
  }
  serve.host = bind.substr(0, colon);
  try {
    serve.port = std::stoi(bind.substr(colon + 1));
  } catch (const std::exception&) {
    std::cerr << "error: bad port in --bind\n";
    return kExitInputError;
  }
  if (!static_dir.empty()) serve.static_dir = static_dir;
  if (!token_env.empty()) serve.token_env = token_env;
  if (!sessions_dir.empty()) serve.sessions_dir = sessions_dir;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::mutex mutex;
  AssistService* running = nullptr;
  bool stop_requested = false;
  serve.on_listening = [&](AssistService& service, int) {
    std::lock_guard lock(mutex);
    running = &service;
    if (stop_requested) service.stop();
  };
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    std::lock_guard lock(mutex);
    stop_requested = true;
    if (running) running->stop();
  });
  const int code = cmd_serve(common, serve, std::cout, std::cerr);
  {
    std::lock_guard lock(mutex);
    running = nullptr;
  }
  if (!stop_requested) pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return code;
}
