#ifndef TINYRLHF_REWARD_TRAINING_HPP_
#define TINYRLHF_REWARD_TRAINING_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tinyrlhf/models.hpp"

namespace tinyrlhf {

enum class RewardPreset { kSmall, kLarge };
std::string_view RewardPresetName(RewardPreset p);
RewardPreset ParseRewardPreset(std::string_view name);

// Scalar-head backbone for a preset: small = 1 layer / 16 dim,
// large = 2 layers / 32 dim.
BackboneConfig reward_backbone(RewardPreset preset, int vocab_size,
                               int context_length);

struct RewardTrainConfig {
  double margin = 1.0;
  double learning_rate = 3e-3;
  int batch_size = 16;
  int epochs = 10;
  double held_out_fraction = 0.2;
  RewardPreset preset = RewardPreset::kSmall;
  std::uint64_t seed = 0;

  void validate() const;
};

// One reward-model training unit with the token sequences attached.
struct PairExample {
  std::string group;  // prompt id; held-out splits never separate a group
  Tokens prompt;
  Tokens chosen;
  Tokens rejected;
};

// max(0, margin - chosen + rejected).
double pairwise_loss(double score_chosen, double score_rejected, double margin);
// Taped form; the subgradient at the hinge corner is 0.
Var pairwise_loss(Var score_chosen, Var score_rejected, double margin);

// Fraction of pairs with score(chosen) > score(rejected); ties count 0.5.
double eval_pairwise_accuracy(const RewardModel& model,
                              std::span<const PairExample> pairs);

struct RewardEpochStats {
  int epoch = 0;
  double train_loss = 0.0;      // mean hinge loss over the epoch's batches
  double held_out_accuracy = 0.0;  // NaN when no held-out set was given
};

// Mean-over-pairs hinge loss, Adam, seeded shuffling each epoch. Throws
// kInvalidArgument on an empty training set and kNumeric on a NaN loss.
std::vector<RewardEpochStats> train_reward(
    RewardModel& model, std::span<const PairExample> train,
    const RewardTrainConfig& config, std::span<const PairExample> held_out = {},
    const std::function<void(const RewardEpochStats&)>& on_epoch = {});

// Splits by group so every pair of a prompt lands on the same side. Groups
// are assigned by a seeded shuffle; at least one group goes to each side
// when there are two or more groups.
struct PairSplit {
  std::vector<PairExample> train;
  std::vector<PairExample> held_out;
};
PairSplit split_by_group(std::span<const PairExample> pairs, double held_out_fraction,
                         std::uint64_t seed);

}  // namespace tinyrlhf

#endif  // TINYRLHF_REWARD_TRAINING_HPP_
