// Command-line front end for the run-directory pipeline.
//
//   tinyrlhf <subcommand> [--config FILE] [--out DIR] [--seed N] [--set key=value]...
//
// Failures print one line, `error kind=<kind> message=<text>`, to stderr and
// exit with status 1 (2 for usage errors).

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tinyrlhf/error.hpp"
#include "tinyrlhf/service/annotation_server.hpp"
#include "tinyrlhf/service/annotation_service.hpp"
#include "tinyrlhf/service/config.hpp"
#include "tinyrlhf/service/jsonl.hpp"
#include "tinyrlhf/service/pipeline.hpp"

namespace {

using namespace tinyrlhf;

struct CommonOptions {
  std::string config;
  std::string out = "run";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void AddCommon(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Run config JSON (defaults when omitted)");
  cmd->add_option("--out", o.out, "Run directory")->capture_default_str();
  cmd->add_option("--seed", o.seed, "Overrides the config seed");
  cmd->add_option("--set", o.overrides, "Config override key=value, repeatable");
}

StageContext MakeContext(const CommonOptions& o) {
  std::vector<std::string> overrides = o.overrides;
  if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
  StageContext ctx{load_run_config(o.config, overrides), RunDir{o.out},
                   [](const std::string& line) { std::cerr << line << "\n"; }};
  std::filesystem::create_directories(ctx.dir.root);
  return ctx;
}

std::string OneLine(std::string s) {
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

int ServeAnnotation(const StageContext& ctx, const std::string& host) {
  int port = 8080;
  if (const char* env = std::getenv("TINYRLHF_PORT")) {
    try {
      port = std::stoi(env);
    } catch (const std::exception&) {
      Fail(ErrorKind::kConfig, "TINYRLHF_PORT must be an integer");
    }
  }
  AnnotationService service(
      build_annotation_tasks(read_prompts(ctx.dir.prompts()), read_responses(ctx.dir.responses())),
      ctx.dir.journal(),
      [] {
        return std::chrono::duration_cast<std::chrono::seconds>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
      },
      {.lease_seconds = ctx.config.annotation.lease_seconds,
       .required_annotators = ctx.config.annotation.min_annotators});
  AnnotationServer server(service);
  const int bound = server.bind(host, port);
  if (bound < 0) Fail(ErrorKind::kIo, "cannot bind " + host + ":" + std::to_string(port));
  std::cerr << "serve-annotation: listening on http://" << host << ":" << bound << "\n";
  return server.listen_after_bind() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale RLHF pipeline: warm start, sampling, annotation, reward model, PPO"};
  app.require_subcommand(1);

  CommonOptions common;
  std::string host = "127.0.0.1";
  std::string csv;

  struct Command {
    const char* name;
    const char* help;
    void (*run)(const StageContext&);
  };
  const std::vector<Command> stages = {
      {"prepare", "Write prompts and demonstrations, then warm-start the actor", &stage_prepare},
      {"generate", "Sample k responses per prompt", &stage_generate},
      {"annotate-oracle", "Rank responses with the task oracle", &stage_annotate_oracle},
      {"make-pairs", "Compile preference pairs from rankings or annotations", &stage_make_pairs},
      {"train-reward", "Train the reward model on preference pairs", &stage_train_reward},
      {"train-ppo", "Run PPO against the reward model", &stage_train_ppo},
      {"evaluate", "Compare the trained actor with its warm start", &stage_evaluate},
      {"pipeline", "Run every stage in order", &run_pipeline},
  };
  std::vector<CLI::App*> stage_cmds;
  for (const Command& c : stages) {
    CLI::App* cmd = app.add_subcommand(c.name, c.help);
    AddCommon(cmd, common);
    stage_cmds.push_back(cmd);
  }
  CLI::App* serve = app.add_subcommand("serve-annotation", "Serve the annotation HTTP API (port from TINYRLHF_PORT, default 8080)");
  AddCommon(serve, common);
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  CLI::App* export_cmd = app.add_subcommand("export-metrics", "Write the per-iteration metrics CSV");
  AddCommon(export_cmd, common);
  export_cmd->add_option("--csv", csv, "Output path (default <out>/metrics.csv)");
  CLI::App* show = app.add_subcommand("config", "Print the resolved config");
  AddCommon(show, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error kind=usage message=" << OneLine(e.what()) << "\n";
    return 2;
  }

  try {
    if (show->parsed()) {
      std::vector<std::string> overrides = common.overrides;
      if (common.seed) overrides.push_back("seed=" + std::to_string(*common.seed));
      std::cout << to_json(load_run_config(common.config, overrides)).dump(2) << "\n";
      return 0;
    }
    const StageContext ctx = MakeContext(common);
    if (serve->parsed()) {
      echo_config(ctx);
      return ServeAnnotation(ctx, host);
    }
    if (export_cmd->parsed()) {
      stage_export_metrics(ctx, csv);
      return 0;
    }
    for (std::size_t i = 0; i < stages.size(); ++i) {
      if (!stage_cmds[i]->parsed()) continue;
      RunLock lock(ctx.dir);
      echo_config(ctx);
      stages[i].run(ctx);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error kind=" << ErrorKindName(e.kind()) << " message=" << OneLine(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error kind=internal message=" << OneLine(e.what()) << "\n";
    return 1;
  }
  return 0;
}
