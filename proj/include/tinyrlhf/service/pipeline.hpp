#ifndef TINYRLHF_SERVICE_PIPELINE_HPP_
#define TINYRLHF_SERVICE_PIPELINE_HPP_

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tinyrlhf/rlhf.hpp"
#include "tinyrlhf/service/config.hpp"

namespace tinyrlhf {

// File layout of a run directory.
struct RunDir {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path lock() const { return root / "run.lock"; }
  std::filesystem::path prompts() const { return root / "prompts.jsonl"; }
  std::filesystem::path eval_prompts() const { return root / "eval_prompts.jsonl"; }
  std::filesystem::path demonstrations() const { return root / "demonstrations.jsonl"; }
  std::filesystem::path responses() const { return root / "responses.jsonl"; }
  std::filesystem::path annotations() const { return root / "annotations.jsonl"; }
  std::filesystem::path journal() const { return root / "annotation_journal.jsonl"; }
  std::filesystem::path rankings() const { return root / "rankings.jsonl"; }
  std::filesystem::path pairs() const { return root / "pairs.jsonl"; }
  std::filesystem::path sft_curve() const { return root / "sft_curve.csv"; }
  std::filesystem::path reward_curve() const { return root / "reward_curve.csv"; }
  std::filesystem::path metrics_jsonl() const { return root / "metrics.jsonl"; }
  std::filesystem::path metrics_csv() const { return root / "metrics.csv"; }
  std::filesystem::path evaluation() const { return root / "evaluation.json"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path sft_checkpoint() const { return checkpoints() / "sft.ckpt"; }
  std::filesystem::path reward_checkpoint() const { return checkpoints() / "reward.ckpt"; }
  std::filesystem::path actor_checkpoint() const { return checkpoints() / "actor.ckpt"; }
  std::filesystem::path critic_checkpoint() const { return checkpoints() / "critic.ckpt"; }
};

// Exclusive ownership of a run directory for the lifetime of the object.
// Raises kLocked when another process holds it.
class RunLock {
 public:
  explicit RunLock(const RunDir& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

using StageLog = std::function<void(const std::string&)>;

struct StageContext {
  RunConfig config;
  RunDir dir;
  StageLog log;  // progress lines; may be empty
};

// Writes the resolved config to config.json.
void echo_config(const StageContext& ctx);

// Training prompts, evaluation prompts and demonstrations (each written only
// when absent, so user-provided files win), then the supervised warm start
// into checkpoints/sft.ckpt.
void stage_prepare(const StageContext& ctx);
// k responses per prompt from the warm-started policy.
void stage_generate(const StageContext& ctx);
// Oracle annotation records and rankings for every prompt.
void stage_annotate_oracle(const StageContext& ctx);
// Pairs from oracle rankings, or from the annotation journal when
// annotation.source is "human" (rankings then go to rankings.jsonl too).
void stage_make_pairs(const StageContext& ctx);
void stage_train_reward(const StageContext& ctx);
// PPO from the warm-started policy; the critic shares its backbone. On a
// numeric failure the last good checkpoints and metrics are persisted before
// the error propagates.
void stage_train_ppo(const StageContext& ctx);
// Warm-started policy versus the trained actor on the evaluation prompts.
void stage_evaluate(const StageContext& ctx);
// Rewrites the metrics CSV from metrics.jsonl to `csv` (default
// metrics.csv in the run directory).
void stage_export_metrics(const StageContext& ctx, const std::filesystem::path& csv = {});

// prepare, generate, annotate-oracle, make-pairs, train-reward, train-ppo,
// evaluate, export-metrics.
void run_pipeline(const StageContext& ctx);

inline constexpr const char* kMetricsCsvHeader =
    "iteration,mean_reward,mean_kl,clip_fraction,actor_loss,critic_loss";
std::string metrics_csv(const std::vector<IterationMetrics>& log);

}  // namespace tinyrlhf

#endif  // TINYRLHF_SERVICE_PIPELINE_HPP_
