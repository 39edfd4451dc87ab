#include "tinyrlhf/rlhf.hpp"

#include <cmath>

#include "tinyrlhf/error.hpp"

namespace tinyrlhf {
namespace {

double KlFromLogDistributions(const RowMatrix& actor, const RowMatrix& ref) {
  const Eigen::ArrayXXd p = actor.array().exp();
  return (p * (actor.array() - ref.array())).rowwise().sum().mean();
}

Array Pick(const RowMatrix& log_dist, std::span<const int> response) {
  Array out(response.size());
  for (int t = 0; t < static_cast<int>(response.size()); ++t) {
    out[t] = log_dist(t, response[t]);
  }
  return out;
}

}  // namespace

Trajectory rollout(const PolicyModel& actor, const ReferenceModel& reference,
                   const CriticModel& critic, const RewardModel& reward,
                   std::span<const int> prompt, const SamplerConfig& sampler,
                   const PPOConfig& ppo) {
  Trajectory traj;
  traj.prompt.assign(prompt.begin(), prompt.end());
  traj.response = sample_response(actor, prompt, sampler);
  const RowMatrix actor_dist = actor.response_log_distributions(prompt, traj.response);
  const RowMatrix ref_dist = reference.response_log_distributions(prompt, traj.response);
  traj.old_log_probs = Pick(actor_dist, traj.response);
  traj.ref_log_probs = Pick(ref_dist, traj.response);
  traj.mean_kl = KlFromLogDistributions(actor_dist, ref_dist);
  traj.values = critic.values(prompt, traj.response);
  traj.reward_score = reward.score(prompt, traj.response);
  finalize_advantages(traj, ppo);
  return traj;
}

double mean_token_kl(const PolicyModel& actor, const ReferenceModel& reference,
                     std::span<const int> prompt, std::span<const int> response) {
  return KlFromLogDistributions(actor.response_log_distributions(prompt, response),
                                reference.response_log_distributions(prompt, response));
}

std::vector<IterationMetrics> rlhf_train(
    PolicyModel& actor, CriticModel& critic, const RewardModel& reward,
    const ReferenceModel& reference, std::span<const Tokens> prompts,
    const RlhfConfig& config, const OracleTask* task,
    const std::function<void(const IterationMetrics&)>& on_iteration) {
  config.ppo.validate();
  config.rollout.validate();
  if (prompts.empty()) Fail(ErrorKind::kInvalidArgument, "rlhf: no prompts");
  if (config.iterations < 0) Fail(ErrorKind::kConfig, "rlhf: negative iterations");

  Adam actor_opt(actor.net().parameter_ptrs(),
                 AdamConfig{.learning_rate = config.ppo.actor_lr});
  Adam critic_opt(critic.net().parameter_ptrs(),
                  AdamConfig{.learning_rate = config.ppo.critic_lr});
  const int B = config.ppo.rollout_batch_size;
  const std::size_t N = prompts.size();

  std::vector<IterationMetrics> log;
  for (int it = 0; it < config.iterations; ++it) {
    std::vector<Trajectory> batch;
    batch.reserve(B);
    IterationMetrics m;
    m.iteration = it + 1;
    double quality = 0.0;
    for (int j = 0; j < B; ++j) {
      const std::uint64_t slot = static_cast<std::uint64_t>(it) * B + j;
      SamplerConfig sampler = config.rollout;
      sampler.seed = derive_seed(config.seed, slot);
      const Tokens& prompt = prompts[slot % N];
      batch.push_back(rollout(actor, reference, critic, reward, prompt, sampler, config.ppo));
      m.mean_reward += batch.back().reward_score / B;
      m.mean_kl += batch.back().mean_kl / B;
      if (task) quality += oracle_quality(*task, prompt, batch.back().response) / B;
    }
    if (task) m.mean_oracle_quality = quality;
    const PPOStepMetrics step =
        ppo_train_step(actor, critic, batch, config.ppo, actor_opt, critic_opt);
    m.actor_loss = step.actor_loss;
    m.critic_loss = step.critic_loss;
    m.clip_fraction = step.clip_fraction;
    log.push_back(m);
    if (on_iteration) on_iteration(m);
  }
  return log;
}

PolicyEvaluation evaluate_policy(const PolicyModel& actor, const OracleTask& task,
                                 std::span<const Tokens> prompts,
                                 const SamplerConfig& sampler, std::uint64_t seed,
                                 const ReferenceModel* reference,
                                 const RewardModel* reward) {
  if (prompts.empty()) Fail(ErrorKind::kInvalidArgument, "evaluate: no prompts");
  PolicyEvaluation out;
  const double n = static_cast<double>(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    SamplerConfig one = sampler;
    one.seed = derive_seed(seed, i);
    const Tokens response = sample_response(actor, prompts[i], one);
    out.mean_oracle_quality += oracle_quality(task, prompts[i], response) / n;
    out.mean_length += static_cast<double>(response.size()) / n;
    if (reference) out.mean_kl += mean_token_kl(actor, *reference, prompts[i], response) / n;
    if (reward) out.mean_reward += reward->score(prompts[i], response) / n;
  }
  return out;
}

}  // namespace tinyrlhf
