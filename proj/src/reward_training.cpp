#include "tinyrlhf/reward_training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "tinyrlhf/error.hpp"
#include "tinyrlhf/optim.hpp"
#include "tinyrlhf/rng.hpp"

namespace tinyrlhf {

std::string_view RewardPresetName(RewardPreset p) {
  return p == RewardPreset::kSmall ? "small" : "large";
}

RewardPreset ParseRewardPreset(std::string_view name) {
  if (name == "small") return RewardPreset::kSmall;
  if (name == "large") return RewardPreset::kLarge;
  Fail(ErrorKind::kConfig, "unknown reward preset '" + std::string(name) + "'");
}

BackboneConfig reward_backbone(RewardPreset preset, int vocab_size,
                               int context_length) {
  BackboneConfig c;
  c.vocab_size = vocab_size;
  c.context_length = context_length;
  c.head = HeadKind::kScalar;
  if (preset == RewardPreset::kSmall) {
    c.embed_dim = 16;
    c.num_layers = 1;
    c.num_heads = 2;
  } else {
    c.embed_dim = 32;
    c.num_layers = 2;
    c.num_heads = 4;
  }
  return c;
}

void RewardTrainConfig::validate() const {
  if (!(margin >= 0.0)) Fail(ErrorKind::kConfig, "reward: margin must be >= 0");
  if (!(learning_rate >= 0.0)) Fail(ErrorKind::kConfig, "reward: learning_rate must be >= 0");
  if (batch_size < 1) Fail(ErrorKind::kConfig, "reward: batch_size must be >= 1");
  if (epochs < 0) Fail(ErrorKind::kConfig, "reward: epochs must be >= 0");
  if (!(held_out_fraction > 0.0 && held_out_fraction < 1.0)) {
    Fail(ErrorKind::kConfig, "reward: held_out_fraction must lie in (0, 1)");
  }
}

double pairwise_loss(double score_chosen, double score_rejected, double margin) {
  return std::max(0.0, margin - score_chosen + score_rejected);
}

Var pairwise_loss(Var score_chosen, Var score_rejected, double margin) {
  Tape* tape = score_chosen.tape();
  Var m = tape->constant(Tensor::scalar(margin));
  return relu(m - score_chosen + score_rejected);
}

double eval_pairwise_accuracy(const RewardModel& model,
                              std::span<const PairExample> pairs) {
  if (pairs.empty()) Fail(ErrorKind::kInvalidArgument, "accuracy: no pairs");
  double hits = 0.0;
  for (const PairExample& p : pairs) {
    const double c = model.score(p.prompt, p.chosen);
    const double r = model.score(p.prompt, p.rejected);
    hits += c > r ? 1.0 : (c == r ? 0.5 : 0.0);
  }
  return hits / static_cast<double>(pairs.size());
}

std::vector<RewardEpochStats> train_reward(
    RewardModel& model, std::span<const PairExample> train,
    const RewardTrainConfig& config, std::span<const PairExample> held_out,
    const std::function<void(const RewardEpochStats&)>& on_epoch) {
  config.validate();
  if (train.empty()) {
    Fail(ErrorKind::kInvalidArgument, "train-reward: empty pair set");
  }
  Transformer& net = model.net();
  net.set_trainable(true);
  net.zero_grad();
  Adam adam(net.parameter_ptrs(), AdamConfig{.learning_rate = config.learning_rate});
  CounterRng rng(derive_seed(config.seed, 0x5eed));

  std::vector<int> order(train.size());
  for (int i = 0; i < static_cast<int>(order.size()); ++i) order[i] = i;

  std::vector<RewardEpochStats> curve;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    }
    double loss_total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Tape tape;
      const Transformer::Binding binding = net.bind(tape);
      std::vector<Var> losses;
      for (std::size_t j = start; j < end; ++j) {
        const PairExample& p = train[order[j]];
        losses.push_back(reshape(
            pairwise_loss(model.score(binding, p.prompt, p.chosen),
                          model.score(binding, p.prompt, p.rejected), config.margin),
            Shape{1}));
      }
      Var batch_loss = scale(sum(concat(losses, 0)),
                             1.0 / static_cast<double>(losses.size()));
      const double value = batch_loss.item();
      if (!std::isfinite(value)) {
        Fail(ErrorKind::kNumeric, "train-reward: non-finite loss at epoch " +
                                      std::to_string(epoch) + ", batch " +
                                      std::to_string(batches));
      }
      tape.backward(batch_loss);
      adam.step();
      adam.zero_grad();
      loss_total += value;
      ++batches;
    }
    RewardEpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_total / batches;
    stats.held_out_accuracy = held_out.empty()
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : eval_pairwise_accuracy(model, held_out);
    curve.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  net.set_trainable(false);
  return curve;
}

PairSplit split_by_group(std::span<const PairExample> pairs, double held_out_fraction,
                         std::uint64_t seed) {
  std::vector<std::string> groups;
  for (const PairExample& p : pairs) {
    if (std::find(groups.begin(), groups.end(), p.group) == groups.end()) {
      groups.push_back(p.group);
    }
  }
  std::sort(groups.begin(), groups.end());
  CounterRng rng(seed);
  for (int i = static_cast<int>(groups.size()) - 1; i > 0; --i) {
    std::swap(groups[i], groups[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  }
  int n_held = static_cast<int>(std::lround(held_out_fraction * groups.size()));
  if (groups.size() >= 2) {
    n_held = std::clamp(n_held, 1, static_cast<int>(groups.size()) - 1);
  }
  std::map<std::string, bool> held;
  for (int i = 0; i < static_cast<int>(groups.size()); ++i) held[groups[i]] = i < n_held;
  PairSplit out;
  for (const PairExample& p : pairs) {
    (held[p.group] ? out.held_out : out.train).push_back(p);
  }
  return out;
}

}  // namespace tinyrlhf
