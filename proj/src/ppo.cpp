#include "tinyrlhf/ppo.hpp"

#include <cmath>

#include "tinyrlhf/advantage.hpp"
#include "tinyrlhf/error.hpp"

namespace tinyrlhf {
namespace {

Var ConstantVector(Tape& tape, const Array& values) {
  return tape.constant(Tensor(Shape{static_cast<int>(values.size())}, values));
}

Array Concatenate(std::span<const Trajectory> batch, Array Trajectory::*field) {
  Eigen::Index n = 0;
  for (const Trajectory& t : batch) n += (t.*field).size();
  Array out(n);
  Eigen::Index at = 0;
  for (const Trajectory& t : batch) {
    out.segment(at, (t.*field).size()) = t.*field;
    at += (t.*field).size();
  }
  return out;
}

}  // namespace

void PPOConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) Fail(ErrorKind::kConfig, std::string("ppo: ") + what);
  };
  require(gamma > 0.0 && gamma <= 1.0, "gamma must lie in (0, 1]");
  require(lambda > 0.0 && lambda < 1.0, "lambda must lie in (0, 1)");
  require(clip_epsilon > 0.0 && clip_epsilon < 1.0, "clip_epsilon must lie in (0, 1)");
  require(kl_beta >= 0.0, "kl_beta must be >= 0");
  require(actor_lr >= 0.0 && critic_lr >= 0.0, "learning rates must be >= 0");
  require(value_clip > 0.0, "value_clip must be > 0");
  require(ppo_epochs >= 1, "ppo_epochs must be >= 1");
  require(rollout_batch_size >= 1, "rollout_batch_size must be >= 1");
}

void Trajectory::check() const {
  const int T = length();
  if (T < 1) Fail(ErrorKind::kInvalidArgument, "trajectory: empty response");
  auto same = [&](const Array& a, const char* name) {
    if (a.size() != 0 && a.size() != T) {
      Fail(ErrorKind::kInvalidArgument,
           std::string("trajectory: ") + name + " has length " +
               std::to_string(a.size()) + ", expected " + std::to_string(T));
    }
  };
  same(old_log_probs, "old_log_probs");
  same(ref_log_probs, "ref_log_probs");
  same(values, "values");
  same(rewards, "rewards");
  same(advantages, "advantages");
  same(returns, "returns");
}

void finalize_advantages(Trajectory& traj, const PPOConfig& config) {
  traj.check();
  if (traj.old_log_probs.size() != traj.length() ||
      traj.ref_log_probs.size() != traj.length() ||
      traj.values.size() != traj.length()) {
    Fail(ErrorKind::kInvalidArgument, "trajectory: rollout statistics missing");
  }
  traj.rewards = shape_rewards_with_kl(traj.old_log_probs, traj.ref_log_probs,
                                       traj.reward_score, config.kl_beta);
  const Array delta = td_residuals(traj.rewards, traj.values, config.gamma);
  GaeResult<double> gae = compute_gae(delta, traj.values, config.gamma, config.lambda);
  traj.advantages = std::move(gae.advantages);
  traj.returns = std::move(gae.returns);
}

Array batch_advantages(std::span<const Trajectory> batch, bool normalize) {
  for (const Trajectory& t : batch) {
    if (!t.has_advantages()) {
      Fail(ErrorKind::kInvalidArgument, "batch: advantages not computed");
    }
  }
  Array all = Concatenate(batch, &Trajectory::advantages);
  if (normalize && all.size() >= 2) return normalize_advantages(all);
  return all;
}

ActorLoss ppo_actor_loss(Var log_probs, const Array& old_log_probs,
                         const Array& advantages, double epsilon) {
  const int n = log_probs.shape().numel();
  if (old_log_probs.size() != n || advantages.size() != n) {
    Fail(ErrorKind::kShape, "ppo-actor-loss: batch arrays disagree in length");
  }
  Tape& tape = *log_probs.tape();
  Var ratio = exp(log_probs - ConstantVector(tape, old_log_probs));
  const Array rho = ratio.value().data();
  if (!rho.allFinite()) {
    Eigen::Index bad = 0;
    (!rho.isFinite()).cast<int>().maxCoeff(&bad);
    Fail(ErrorKind::kNumeric, "ppo-actor-loss: non-finite ratio at token " +
                                  std::to_string(bad) + " (log pi=" +
                                  std::to_string(log_probs.value()[bad]) +
                                  ", old=" + std::to_string(old_log_probs[bad]) + ")");
  }
  Var adv = ConstantVector(tape, advantages);
  Var surrogate = minimum(ratio * adv,
                          clamp(ratio, 1.0 - epsilon, 1.0 + epsilon) * adv);
  ActorLoss out;
  out.loss = scale(sum(surrogate), -1.0 / n);
  out.clip_fraction =
      ((rho < 1.0 - epsilon) || (rho > 1.0 + epsilon)).cast<double>().mean();
  return out;
}

Var critic_loss(Var values, const Array& old_values, const Array& returns,
                double clip) {
  const int n = values.shape().numel();
  if (old_values.size() != n || returns.size() != n) {
    Fail(ErrorKind::kShape, "critic-loss: batch arrays disagree in length");
  }
  Tape& tape = *values.tape();
  Var old_v = ConstantVector(tape, old_values);
  Var ret = ConstantVector(tape, returns);
  Var err = values - ret;
  Var clipped_err = old_v + clamp(values - old_v, -clip, clip) - ret;
  return mean(maximum(err * err, clipped_err * clipped_err));
}

PPOStepMetrics ppo_train_step(PolicyModel& actor, CriticModel& critic,
                              std::span<const Trajectory> batch,
                              const PPOConfig& config, Adam& actor_optimizer,
                              Adam& critic_optimizer) {
  config.validate();
  if (batch.empty()) Fail(ErrorKind::kInvalidArgument, "ppo: empty batch");
  const Array old_log_probs = Concatenate(batch, &Trajectory::old_log_probs);
  const Array old_values = Concatenate(batch, &Trajectory::values);
  const Array returns = Concatenate(batch, &Trajectory::returns);

  actor.net().set_trainable(true);
  critic.net().set_trainable(true);
  PPOStepMetrics metrics;
  for (int epoch = 0; epoch < config.ppo_epochs; ++epoch) {
    const Array advantages = batch_advantages(batch, config.normalize_advantages);
    {
      Tape tape;
      const Transformer::Binding binding = actor.net().bind(tape);
      std::vector<Var> parts;
      for (const Trajectory& t : batch) {
        parts.push_back(actor.sequence_log_probs(binding, t.prompt, t.response));
      }
      ActorLoss loss = ppo_actor_loss(concat(parts, 0), old_log_probs, advantages,
                                      config.clip_epsilon);
      if (!std::isfinite(loss.loss.item())) {
        Fail(ErrorKind::kNumeric, "ppo: non-finite actor loss");
      }
      tape.backward(loss.loss);
      actor_optimizer.step();
      actor_optimizer.zero_grad();
      metrics.actor_loss += loss.loss.item() / config.ppo_epochs;
      metrics.clip_fraction += loss.clip_fraction / config.ppo_epochs;
    }
    {
      Tape tape;
      const Transformer::Binding binding = critic.net().bind(tape);
      std::vector<Var> parts;
      for (const Trajectory& t : batch) {
        parts.push_back(critic.values(binding, t.prompt, t.response));
      }
      Var loss = critic_loss(concat(parts, 0), old_values, returns, config.value_clip);
      if (!std::isfinite(loss.item())) {
        Fail(ErrorKind::kNumeric, "ppo: non-finite critic loss");
      }
      tape.backward(loss);
      critic_optimizer.step();
      critic_optimizer.zero_grad();
      metrics.critic_loss += loss.item() / config.ppo_epochs;
    }
  }
  actor.net().set_trainable(false);
  critic.net().set_trainable(false);
  return metrics;
}

}  // namespace tinyrlhf
