#ifndef TINYRLHF_RLHF_HPP_
#define TINYRLHF_RLHF_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "tinyrlhf/models.hpp"
#include "tinyrlhf/oracle.hpp"
#include "tinyrlhf/ppo.hpp"
#include "tinyrlhf/sampling.hpp"

namespace tinyrlhf {

struct RlhfConfig {
  PPOConfig ppo;
  SamplerConfig rollout;  // k_responses is ignored: one response per prompt
  int iterations = 200;
  std::uint64_t seed = 0;
};

struct IterationMetrics {
  int iteration = 0;
  double mean_reward = 0.0;   // reward-model score of the rollouts
  double mean_kl = 0.0;       // exact per-token KL(actor || reference)
  double clip_fraction = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  // Ground-truth quality of the rollouts; set only when a task is supplied.
  std::optional<double> mean_oracle_quality;
};

// Samples one response and fills every rollout statistic, then shapes
// rewards and runs GAE.
Trajectory rollout(const PolicyModel& actor, const ReferenceModel& reference,
                   const CriticModel& critic, const RewardModel& reward,
                   std::span<const int> prompt, const SamplerConfig& sampler,
                   const PPOConfig& ppo);

// Mean over response tokens of sum_v p_act(v) (log p_act(v) - log p_ref(v)).
double mean_token_kl(const PolicyModel& actor, const ReferenceModel& reference,
                     std::span<const int> prompt, std::span<const int> response);

// Per iteration: sample a batch, score with the reward model, KL-shape, GAE,
// PPO. Iteration i draws prompts (i*B + j) mod N and response seeds derived
// from (config.seed, i*B + j), so runs are replayable.
std::vector<IterationMetrics> rlhf_train(
    PolicyModel& actor, CriticModel& critic, const RewardModel& reward,
    const ReferenceModel& reference, std::span<const Tokens> prompts,
    const RlhfConfig& config, const OracleTask* task = nullptr,
    const std::function<void(const IterationMetrics&)>& on_iteration = {});

struct PolicyEvaluation {
  double mean_oracle_quality = 0.0;
  double mean_kl = 0.0;         // 0 when no reference is given
  double mean_length = 0.0;
  double mean_reward = 0.0;     // 0 when no reward model is given
};

// One sampled response per prompt, seeds derived from `seed`.
PolicyEvaluation evaluate_policy(const PolicyModel& actor, const OracleTask& task,
                                 std::span<const Tokens> prompts,
                                 const SamplerConfig& sampler, std::uint64_t seed,
                                 const ReferenceModel* reference = nullptr,
                                 const RewardModel* reward = nullptr);

}  // namespace tinyrlhf

#endif  // TINYRLHF_RLHF_HPP_
