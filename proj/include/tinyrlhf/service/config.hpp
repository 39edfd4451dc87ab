#ifndef TINYRLHF_SERVICE_CONFIG_HPP_
#define TINYRLHF_SERVICE_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tinyrlhf/oracle.hpp"
#include "tinyrlhf/ppo.hpp"
#include "tinyrlhf/reward_training.hpp"
#include "tinyrlhf/sampling.hpp"
#include "tinyrlhf/sft.hpp"
#include "tinyrlhf/transformer.hpp"

namespace tinyrlhf {

using Json = nlohmann::json;

inline constexpr int kConfigVersion = 1;

// Supervised warm start of the actor.
struct SftStageConfig {
  int demo_prompts = 1000;
  int min_length = 4;
  int max_length = 12;
  double learning_rate = 3e-3;
  int epochs = 4;
  int batch_size = 16;
};

struct GenerateStageConfig {
  int num_prompts = 64;
  int k_responses = 5;
  double temperature = 1.0;
  int top_k = 0;
  int max_response_tokens = 24;
};

struct AnnotationStageConfig {
  std::string source = "oracle";  // pair source for make-pairs: oracle | human
  int oracle_annotators = 3;
  double oracle_noise = 0.0;
  int min_annotators = 3;
  int lease_seconds = 15 * 60;
};

struct RewardStageConfig {
  RewardPreset preset = RewardPreset::kLarge;
  double margin = 1.0;
  double learning_rate = 3e-3;
  int batch_size = 16;
  int epochs = 10;
  double held_out_fraction = 0.2;
};

struct PpoStageConfig {
  PPOConfig ppo;
  int iterations = 200;
  int max_response_tokens = 16;
  double temperature = 1.0;
  int top_k = 0;
  int checkpoint_every = 50;  // 0 writes only the final checkpoints
};

struct EvaluateStageConfig {
  int num_prompts = 128;
};

// Every knob of a run in one document. Sub-seeds are derived from `seed`.
struct RunConfig {
  int config_version = kConfigVersion;
  std::uint64_t seed = 0;
  OracleTask task;
  BackboneConfig actor{.vocab_size = 16, .context_length = 32, .embed_dim = 64,
                       .num_layers = 1, .num_heads = 4};
  SftStageConfig sft;
  GenerateStageConfig generate;
  AnnotationStageConfig annotation;
  RewardStageConfig reward;
  PpoStageConfig ppo;
  EvaluateStageConfig evaluate;

  // Cross-field checks; throws kConfig.
  void validate() const;

  SamplerConfig generation_sampler() const;
  SamplerConfig rollout_sampler() const;
  RewardTrainConfig reward_train_config() const;
  SftConfig sft_train_config() const;
  BackboneConfig reward_model_config() const;
};

Json to_json(const RunConfig& config);

// Merges `doc` over the defaults. Unknown keys and type errors raise kConfig;
// a missing or different config_version raises kVersionMismatch.
RunConfig run_config_from_json(const Json& doc);

// Sets a dotted key (e.g. "ppo.kl_beta") in `doc`. The value is parsed as
// JSON when possible and taken as a string otherwise. The key must exist in
// the default document.
void apply_override(Json& doc, std::string_view assignment);

// Reads `path` (or starts from defaults when empty), applies overrides and
// validates.
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});

}  // namespace tinyrlhf

#endif  // TINYRLHF_SERVICE_CONFIG_HPP_
