#include "tinyrlhf/service/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <map>

#include "tinyrlhf/error.hpp"
#include "tinyrlhf/oracle.hpp"
#include "tinyrlhf/reward_training.hpp"
#include "tinyrlhf/sft.hpp"
#include "tinyrlhf/service/checkpoint.hpp"
#include "tinyrlhf/service/jsonl.hpp"

namespace tinyrlhf {
namespace {

// Sub-stream ids for derive_seed(config.seed, ...).
enum Stream : std::uint64_t {
  kPromptStream = 1,
  kActorInitStream = 2,
  kDemoStream = 3,
  kRewardInitStream = 4,
  kOracleNoiseStream = 5,
  kSplitStream = 6,
  kDemoPromptStream = 7,
  kPpoStream = 8,
  kEvalPromptStream = 9,
  kEvalSampleStream = 10,
  kGenerateStream = 11,
  kSftStream = 12,
  kRewardShuffleStream = 13,
};

std::uint64_t Seed(const StageContext& ctx, Stream s) { return derive_seed(ctx.config.seed, s); }

void Log(const StageContext& ctx, const std::string& line) {
  if (ctx.log) ctx.log(line);
}

std::string Fmt(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string Num(double v) { return Fmt("%.17g", v); }

std::string PromptId(char prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%05d", prefix, i);
  return buf;
}

std::vector<PromptRow> MakePromptRows(const OracleTask& task, int count, std::uint64_t seed,
                                      char prefix) {
  std::vector<PromptRow> rows;
  const std::vector<Tokens> prompts = make_prompts(task, count, seed);
  for (int i = 0; i < count; ++i) rows.push_back({PromptId(prefix, i), prompts[i], std::nullopt});
  return rows;
}

std::vector<Tokens> ResolveAll(const std::vector<PromptRow>& rows) {
  std::vector<Tokens> out;
  for (const PromptRow& r : rows) out.push_back(r.resolve_tokens());
  return out;
}

// Responses grouped by prompt id, ordered by response id.
std::map<std::string, std::vector<ResponseRow>> GroupResponses(std::vector<ResponseRow> rows) {
  std::map<std::string, std::vector<ResponseRow>> out;
  for (ResponseRow& r : rows) out[r.prompt_id].push_back(std::move(r));
  for (auto& [id, list] : out) {
    std::sort(list.begin(), list.end(),
              [](const ResponseRow& a, const ResponseRow& b) { return a.response_id < b.response_id; });
    for (int i = 0; i < static_cast<int>(list.size()); ++i) {
      if (list[i].response_id != i) {
        Fail(ErrorKind::kSchema, "responses for prompt '" + id + "' must have ids 0..k-1");
      }
    }
  }
  return out;
}

const PromptRow& FindPrompt(const std::map<std::string, const PromptRow*>& index,
                            const std::string& id) {
  auto it = index.find(id);
  if (it == index.end()) Fail(ErrorKind::kSchema, "unknown prompt id '" + id + "'");
  return *it->second;
}

std::map<std::string, const PromptRow*> IndexPrompts(const std::vector<PromptRow>& rows) {
  std::map<std::string, const PromptRow*> index;
  for (const PromptRow& r : rows) {
    if (!index.emplace(r.id, &r).second) Fail(ErrorKind::kSchema, "duplicate prompt id '" + r.id + "'");
  }
  return index;
}

Json MetricsJson(const IterationMetrics& m) {
  Json j = {{"iteration", m.iteration},         {"mean_reward", m.mean_reward},
            {"mean_kl", m.mean_kl},             {"clip_fraction", m.clip_fraction},
            {"actor_loss", m.actor_loss},       {"critic_loss", m.critic_loss}};
  if (m.mean_oracle_quality) j["mean_oracle_quality"] = *m.mean_oracle_quality;
  return j;
}

IterationMetrics DecodeMetrics(const Json& j) {
  IterationMetrics m;
  try {
    m.iteration = j.at("iteration").get<int>();
    m.mean_reward = j.at("mean_reward").get<double>();
    m.mean_kl = j.at("mean_kl").get<double>();
    m.clip_fraction = j.at("clip_fraction").get<double>();
    m.actor_loss = j.at("actor_loss").get<double>();
    m.critic_loss = j.at("critic_loss").get<double>();
    if (j.contains("mean_oracle_quality")) m.mean_oracle_quality = j["mean_oracle_quality"].get<double>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kSchema, std::string("metrics row: ") + e.what());
  }
  return m;
}

void WriteMetrics(const RunDir& dir, const std::vector<IterationMetrics>& log) {
  std::string jsonl;
  for (const IterationMetrics& m : log) jsonl += MetricsJson(m).dump() + "\n";
  write_file(dir.metrics_jsonl(), jsonl);
  write_file(dir.metrics_csv(), metrics_csv(log));
}

}  // namespace

RunLock::RunLock(const RunDir& dir) : path_(dir.lock()) {
  std::filesystem::create_directories(dir.root);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    Fail(ErrorKind::kLocked, "run directory is locked by " + path_.string() +
                                 " (remove it if no other process is running)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

std::string metrics_csv(const std::vector<IterationMetrics>& log) {
  std::string out = std::string(kMetricsCsvHeader) + "\n";
  for (const IterationMetrics& m : log) {
    out += std::to_string(m.iteration) + "," + Num(m.mean_reward) + "," + Num(m.mean_kl) + "," +
           Num(m.clip_fraction) + "," + Num(m.actor_loss) + "," + Num(m.critic_loss) + "\n";
  }
  return out;
}

void echo_config(const StageContext& ctx) {
  write_file(ctx.dir.config(), to_json(ctx.config).dump(2) + "\n");
}

void stage_prepare(const StageContext& ctx) {
  const RunConfig& c = ctx.config;
  const RunDir& d = ctx.dir;
  if (!std::filesystem::exists(d.prompts())) {
    write_jsonl(d.prompts(), MakePromptRows(c.task, c.generate.num_prompts, Seed(ctx, kPromptStream), 'p'));
  }
  if (!std::filesystem::exists(d.eval_prompts())) {
    write_jsonl(d.eval_prompts(),
                MakePromptRows(c.task, c.evaluate.num_prompts, Seed(ctx, kEvalPromptStream), 'e'));
  }
  if (!std::filesystem::exists(d.demonstrations())) {
    const std::vector<Tokens> prompts = make_prompts(c.task, c.sft.demo_prompts, Seed(ctx, kDemoPromptStream));
    const std::vector<Demonstration> demos =
        make_demonstrations(c.task, prompts, c.sft.min_length, c.sft.max_length, Seed(ctx, kDemoStream));
    std::vector<DemonstrationRow> rows;
    for (int i = 0; i < static_cast<int>(demos.size()); ++i) {
      rows.push_back({PromptId('d', i), demos[i].prompt, demos[i].response});
    }
    write_jsonl(d.demonstrations(), rows);
  }

  std::vector<Demonstration> demos;
  for (DemonstrationRow& r : read_demonstrations(d.demonstrations())) {
    demos.push_back({std::move(r.prompt), std::move(r.response)});
  }
  PolicyModel policy(c.actor, Seed(ctx, kActorInitStream));
  Log(ctx, "prepare: actor has " + std::to_string(policy.net().parameter_count()) + " parameters");
  std::string curve = "epoch,loss\n";
  if (!demos.empty() && c.sft.epochs > 0) {
    SftConfig sft = c.sft_train_config();
    sft.seed = Seed(ctx, kSftStream);
    const std::vector<double> losses = train_sft(policy, demos, sft);
    for (std::size_t e = 0; e < losses.size(); ++e) {
      curve += std::to_string(e + 1) + "," + Num(losses[e]) + "\n";
      Log(ctx, "prepare: sft epoch " + std::to_string(e + 1) + " loss " + Fmt("%.4f", losses[e]));
    }
  }
  write_file(d.sft_curve(), curve);
  save_checkpoint(d.sft_checkpoint(), policy.net());
}

void stage_generate(const StageContext& ctx) {
  const RunConfig& c = ctx.config;
  const RunDir& d = ctx.dir;
  const std::vector<PromptRow> prompts = read_prompts(d.prompts());
  const PolicyModel policy(load_checkpoint(d.sft_checkpoint()));
  SamplerConfig sampler = c.generation_sampler();
  std::vector<ResponseRow> rows;
  for (int i = 0; i < static_cast<int>(prompts.size()); ++i) {
    sampler.seed = derive_seed(Seed(ctx, kGenerateStream), static_cast<std::uint64_t>(i));
    const std::vector<Tokens> responses =
        sample_k_responses(policy, prompts[i].resolve_tokens(), sampler);
    for (int j = 0; j < static_cast<int>(responses.size()); ++j) {
      rows.push_back({prompts[i].id, j, responses[j], sampler.seed + static_cast<std::uint64_t>(j)});
    }
  }
  write_jsonl(d.responses(), rows);
  Log(ctx, "generate: " + std::to_string(rows.size()) + " responses for " +
               std::to_string(prompts.size()) + " prompts");
}

void stage_annotate_oracle(const StageContext& ctx) {
  const RunConfig& c = ctx.config;
  const RunDir& d = ctx.dir;
  const std::vector<PromptRow> prompts = read_prompts(d.prompts());
  const auto index = IndexPrompts(prompts);
  const auto grouped = GroupResponses(read_responses(d.responses()));
  const OracleAnnotatorConfig annotator{c.annotation.oracle_noise, Seed(ctx, kOracleNoiseStream)};
  std::vector<AnnotationRecord> records;
  std::vector<RankedResponseSet> rankings;
  for (const PromptRow& p : prompts) {
    auto it = grouped.find(p.id);
    if (it == grouped.end()) continue;
    std::vector<Tokens> responses;
    for (const ResponseRow& r : it->second) responses.push_back(r.tokens);
    OracleRanking ranked = oracle_rank(c.task, p.id, p.resolve_tokens(), responses, annotator,
                                       c.annotation.oracle_annotators);
    rankings.push_back(std::move(ranked.ranking));
    for (AnnotationRecord& r : ranked.annotations) records.push_back(std::move(r));
  }
  for (const auto& [id, list] : grouped) FindPrompt(index, id);
  write_jsonl(d.annotations(), records);
  write_jsonl(d.rankings(), rankings);
  Log(ctx, "annotate-oracle: " + std::to_string(rankings.size()) + " rankings, " +
               std::to_string(records.size()) + " records");
}

void stage_make_pairs(const StageContext& ctx) {
  const RunConfig& c = ctx.config;
  const RunDir& d = ctx.dir;
  std::vector<PreferencePair> pairs;
  if (c.annotation.source == "oracle") {
    for (const RankedResponseSet& r : read_rankings(d.rankings())) {
      for (PreferencePair& p : extract_pairs(r, PairSource::kOracle)) pairs.push_back(std::move(p));
    }
  } else {
    const PairBuildResult built = build_pairs_from_annotations(
        read_annotations(d.journal()), PairSource::kHuman, c.annotation.min_annotators);
    write_jsonl(d.rankings(), built.rankings);
    pairs = built.pairs;
  }
  write_jsonl(d.pairs(), pairs);
  Log(ctx, "make-pairs: " + std::to_string(pairs.size()) + " pairs (" + c.annotation.source + ")");
}

void stage_train_reward(const StageContext& ctx) {
  const RunConfig& c = ctx.config;
  const RunDir& d = ctx.dir;
  const std::vector<PromptRow> prompts = read_prompts(d.prompts());
  const auto index = IndexPrompts(prompts);
  const auto grouped = GroupResponses(read_responses(d.responses()));
  std::vector<PairExample> examples;
  for (const PreferencePair& p : read_pairs(d.pairs())) {
    const PromptRow& prompt = FindPrompt(index, p.prompt_id);
    auto it = grouped.find(p.prompt_id);
    const int k = it == grouped.end() ? 0 : static_cast<int>(it->second.size());
    if (p.chosen_id < 0 || p.chosen_id >= k || p.rejected_id < 0 || p.rejected_id >= k) {
      Fail(ErrorKind::kSchema, "pair for '" + p.prompt_id + "' names a missing response");
    }
    examples.push_back({p.prompt_id, prompt.resolve_tokens(), it->second[p.chosen_id].tokens,
                        it->second[p.rejected_id].tokens});
  }
  if (examples.empty()) Fail(ErrorKind::kMissingInput, "train-reward: no pairs in " + d.pairs().string());

  RewardTrainConfig train = c.reward_train_config();
  train.seed = Seed(ctx, kRewardShuffleStream);
  const PairSplit split = split_by_group(examples, train.held_out_fraction, Seed(ctx, kSplitStream));
  RewardModel model(c.reward_model_config(), Seed(ctx, kRewardInitStream));
  std::string curve = "epoch,train_loss,held_out_accuracy\n";
  train_reward(model, split.train, train, split.held_out, [&](const RewardEpochStats& s) {
    curve += std::to_string(s.epoch) + "," + Num(s.train_loss) + "," + Num(s.held_out_accuracy) + "\n";
    Log(ctx, "train-reward: epoch " + std::to_string(s.epoch) + " loss " + Fmt("%.4f", s.train_loss) +
                 " held-out accuracy " + Fmt("%.4f", s.held_out_accuracy));
  });
  write_file(d.reward_curve(), curve);
  save_checkpoint(d.reward_checkpoint(), model.net());
}

void stage_train_ppo(const StageContext& ctx) {
  const RunConfig& c = ctx.config;
  const RunDir& d = ctx.dir;
  const std::vector<Tokens> prompts = ResolveAll(read_prompts(d.prompts()));
  PolicyModel actor(load_checkpoint(d.sft_checkpoint()));
  const ReferenceModel reference = snapshot_reference(actor);
  CriticModel critic(actor.net().with_head(HeadKind::kScalar));
  const RewardModel reward(load_checkpoint(d.reward_checkpoint()));
  if (reward.net().config().head != HeadKind::kScalar) {
    Fail(ErrorKind::kSchema, "reward checkpoint must carry a scalar head");
  }

  RlhfConfig rc;
  rc.ppo = c.ppo.ppo;
  rc.rollout = c.rollout_sampler();
  rc.iterations = c.ppo.iterations;
  rc.seed = Seed(ctx, kPpoStream);

  std::vector<IterationMetrics> log;
  auto on_iteration = [&](const IterationMetrics& m) {
    log.push_back(m);
    if (m.iteration % 10 == 0 || m.iteration == rc.iterations) {
      std::string line = "train-ppo: iteration " + std::to_string(m.iteration) + " reward " +
                         Fmt("%.4f", m.mean_reward) + " kl " + Fmt("%.4f", m.mean_kl);
      if (m.mean_oracle_quality) line += " oracle " + Fmt("%.4f", *m.mean_oracle_quality);
      Log(ctx, line);
    }
    if (c.ppo.checkpoint_every > 0 && m.iteration % c.ppo.checkpoint_every == 0) {
      char name[48];
      std::snprintf(name, sizeof name, "actor-iter-%06d.ckpt", m.iteration);
      save_checkpoint(d.checkpoints() / name, actor.net());
    }
  };
  try {
    rlhf_train(actor, critic, reward, reference, prompts, rc, &c.task, on_iteration);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kNumeric) {
      save_checkpoint(d.actor_checkpoint(), actor.net());
      save_checkpoint(d.critic_checkpoint(), critic.net());
      WriteMetrics(d, log);
    }
    throw;
  }
  save_checkpoint(d.actor_checkpoint(), actor.net());
  save_checkpoint(d.critic_checkpoint(), critic.net());
  WriteMetrics(d, log);
}

void stage_evaluate(const StageContext& ctx) {
  const RunConfig& c = ctx.config;
  const RunDir& d = ctx.dir;
  const std::vector<Tokens> prompts = ResolveAll(read_prompts(d.eval_prompts()));
  const PolicyModel baseline(load_checkpoint(d.sft_checkpoint()));
  const PolicyModel actor(load_checkpoint(d.actor_checkpoint()));
  const ReferenceModel reference = snapshot_reference(baseline);
  const RewardModel reward(load_checkpoint(d.reward_checkpoint()));
  const SamplerConfig sampler = c.rollout_sampler();
  const std::uint64_t seed = Seed(ctx, kEvalSampleStream);
  const PolicyEvaluation before =
      evaluate_policy(baseline, c.task, prompts, sampler, seed, &reference, &reward);
  const PolicyEvaluation after =
      evaluate_policy(actor, c.task, prompts, sampler, seed, &reference, &reward);
  auto to_json = [](const PolicyEvaluation& e) {
    return Json{{"mean_oracle_quality", e.mean_oracle_quality},
                {"mean_kl", e.mean_kl},
                {"mean_length", e.mean_length},
                {"mean_reward", e.mean_reward}};
  };
  const Json out = {{"prompts", prompts.size()},
                    {"baseline", to_json(before)},
                    {"final", to_json(after)},
                    {"delta_oracle_quality", after.mean_oracle_quality - before.mean_oracle_quality}};
  write_file(d.evaluation(), out.dump(2) + "\n");
  Log(ctx, "evaluate: oracle quality " + Fmt("%.4f", before.mean_oracle_quality) + " -> " +
               Fmt("%.4f", after.mean_oracle_quality) + " (kl " + Fmt("%.4f", after.mean_kl) + ")");
}

void stage_export_metrics(const StageContext& ctx, const std::filesystem::path& csv) {
  const std::string text = read_file(ctx.dir.metrics_jsonl());
  const std::vector<IterationMetrics> log =
      from_jsonl(text, ctx.dir.metrics_jsonl().string(), &DecodeMetrics);
  const std::filesystem::path target = csv.empty() ? ctx.dir.metrics_csv() : csv;
  write_file(target, metrics_csv(log));
  Log(ctx, "export-metrics: " + std::to_string(log.size()) + " rows -> " + target.string());
}

void run_pipeline(const StageContext& ctx) {
  stage_prepare(ctx);
  stage_generate(ctx);
  if (ctx.config.annotation.source == "oracle") stage_annotate_oracle(ctx);
  stage_make_pairs(ctx);
  stage_train_reward(ctx);
  stage_train_ppo(ctx);
  stage_evaluate(ctx);
  stage_export_metrics(ctx);
}

}  // namespace tinyrlhf
