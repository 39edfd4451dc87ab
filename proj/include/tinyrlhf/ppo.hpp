#ifndef TINYRLHF_PPO_HPP_
#define TINYRLHF_PPO_HPP_

#include <span>
#include <vector>

#include "tinyrlhf/models.hpp"
#include "tinyrlhf/optim.hpp"

namespace tinyrlhf {

struct PPOConfig {
  double gamma = 0.95;
  double lambda = 0.95;
  double clip_epsilon = 0.2;
  double kl_beta = 0.1;
  double actor_lr = 5e-6;
  double critic_lr = 5e-7;
  double value_clip = 0.2;
  int ppo_epochs = 4;
  int rollout_batch_size = 16;
  bool normalize_advantages = true;

  void validate() const;
};

// One prompt/response episode with every per-token quantity PPO needs.
struct Trajectory {
  Tokens prompt;
  Tokens response;
  Array old_log_probs;  // actor at rollout time, frozen
  Array ref_log_probs;
  Array values;         // critic at rollout time, frozen
  double reward_score = 0.0;
  double mean_kl = 0.0;  // exact per-token KL(actor || reference) at rollout
  Array rewards;        // KL-shaped
  Array advantages;     // empty until finalize_advantages()
  Array returns;

  int length() const { return static_cast<int>(response.size()); }
  bool has_advantages() const { return advantages.size() == length(); }
  // Throws kInvalidArgument unless all populated per-token arrays match T.
  void check() const;
};

// KL-shapes the rewards, then runs TD residuals and GAE to fill rewards,
// advantages and returns.
void finalize_advantages(Trajectory& traj, const PPOConfig& config);

// Concatenated advantages of a batch, normalized over the whole batch when
// config.normalize_advantages is set.
Array batch_advantages(std::span<const Trajectory> batch, bool normalize);

struct ActorLoss {
  Var loss;                    // -mean over tokens of the clipped objective
  double clip_fraction = 0.0;  // tokens whose ratio left [1-eps, 1+eps]
};

// `log_probs` holds current actor log-probs for all tokens of the batch
// ([N]); `old_log_probs` and `advantages` are the frozen counterparts.
// Throws kNumeric on a non-finite ratio.
ActorLoss ppo_actor_loss(Var log_probs, const Array& old_log_probs,
                         const Array& advantages, double epsilon);

// Mean over tokens of the clipped value loss.
Var critic_loss(Var values, const Array& old_values, const Array& returns,
                double clip);

struct PPOStepMetrics {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double clip_fraction = 0.0;
};

// `ppo_epochs` passes over the batch, one actor and one critic Adam step per
// pass. Metrics average over the passes. Throws kNumeric if a loss is NaN;
// the models are left at their last good parameters.
PPOStepMetrics ppo_train_step(PolicyModel& actor, CriticModel& critic,
                              std::span<const Trajectory> batch,
                              const PPOConfig& config, Adam& actor_optimizer,
                              Adam& critic_optimizer);

}  // namespace tinyrlhf

#endif  // TINYRLHF_PPO_HPP_
