#include <doctest.h>

#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "tinyrlhf/error.hpp"
#include "tinyrlhf/reward_training.hpp"

using namespace tinyrlhf;

namespace {

RewardModel Fresh(RewardPreset preset = RewardPreset::kSmall, std::uint64_t seed = 1) {
  return RewardModel(reward_backbone(preset, 16, 24), seed);
}

}  // namespace

TEST_CASE("hinge examples") {
  CHECK(pairwise_loss(2.0, 1.0, 0.0) == 0.0);
  CHECK(pairwise_loss(1.0, 2.0, 0.0) == 1.0);
  CHECK(pairwise_loss(2.0, 1.0, 1.5) == 0.5);
  for (double c : {-1.3, 0.0, 0.4, 2.2}) {
    for (double r : {-0.7, 0.1, 1.9}) {
      for (double m : {0.0, 0.5, 1.0}) {
        CHECK(pairwise_loss(c, r, m) == std::max(0.0, m - c + r));
        Tape tape;
        const Var taped = pairwise_loss(tape.constant(Tensor::scalar(c)),
                                        tape.constant(Tensor::scalar(r)), m);
        CHECK(taped.item() == pairwise_loss(c, r, m));
      }
    }
  }
}

TEST_CASE("identical sides with zero margin give zero loss and zero gradient") {
  RewardModel model = Fresh();
  for (NamedTensor& p : model.net().parameters()) p.tensor.data().setConstant(0.1);
  model.net().set_trainable(true);
  model.net().zero_grad();
  Tape tape;
  const auto binding = model.net().bind(tape);
  const Tokens prompt = {1, 4, 5}, response = {6, 7, 2};
  const Var loss = pairwise_loss(model.score(binding, prompt, response),
                                 model.score(binding, prompt, response), 0.0);
  CHECK(loss.item() == 0.0);
  tape.backward(loss);
  for (const Tensor* p : model.net().parameter_ptrs()) {
    CHECK((!p->has_grad() || (p->grad() == 0.0).all()));
  }
}

TEST_CASE("an untrained zero-head model ties every pair") {
  const auto pairs = oracle::separable_pairs(40, 3);
  CHECK(eval_pairwise_accuracy(Fresh(), pairs) == 0.5);
  CHECK(eval_pairwise_accuracy(Fresh(RewardPreset::kLarge), pairs) == 0.5);
}

TEST_CASE("presets") {
  const BackboneConfig small = reward_backbone(RewardPreset::kSmall, 16, 24);
  const BackboneConfig large = reward_backbone(RewardPreset::kLarge, 16, 24);
  CHECK(small.num_layers == 1);
  CHECK(small.embed_dim == 16);
  CHECK(large.num_layers == 2);
  CHECK(large.embed_dim == 32);
  CHECK(small.head == HeadKind::kScalar);
  CHECK(ParseRewardPreset("large") == RewardPreset::kLarge);
  CHECK_THROWS_AS(ParseRewardPreset("huge"), Error);
}

TEST_CASE("a single indicator token is learned within 20 epochs") {
  const auto pairs = oracle::separable_pairs(300, 5);
  const PairSplit split = split_by_group(pairs, 0.2, 6);
  RewardModel model = Fresh(RewardPreset::kSmall, 7);
  const auto stats =
      train_reward(model, split.train, {.epochs = 20, .seed = 8}, split.held_out);
  REQUIRE(stats.size() == 20);
  CHECK(stats.back().held_out_accuracy >= 0.95);
  CHECK(stats.back().train_loss < stats.front().train_loss);
  // Consistent, separable data: the trained model orders every training pair.
  CHECK(eval_pairwise_accuracy(model, split.train) == 1.0);
}

TEST_CASE("the shuffle seed barely moves the final accuracy") {
  const auto pairs = oracle::separable_pairs(200, 9);
  const PairSplit split = split_by_group(pairs, 0.25, 10);
  std::vector<double> acc;
  for (std::uint64_t seed : {1, 2, 3}) {
    RewardModel model = Fresh(RewardPreset::kSmall, 11);
    train_reward(model, split.train, {.epochs = 12, .seed = seed});
    acc.push_back(eval_pairwise_accuracy(model, split.held_out));
  }
  for (double a : acc) CHECK(std::abs(a - acc[0]) <= 0.02);
}

TEST_CASE("held-out split keeps groups whole") {
  std::vector<PairExample> pairs;
  for (int g = 0; g < 20; ++g) {
    for (int k = 0; k < 4; ++k) {
      pairs.push_back({"g" + std::to_string(g), {1, 3}, {4, k + 3}, {5}});
    }
  }
  const PairSplit split = split_by_group(pairs, 0.2, 1);
  CHECK(split.train.size() + split.held_out.size() == pairs.size());
  CHECK(split.held_out.size() == 16);
  std::set<std::string> train_groups, held_groups;
  for (const auto& p : split.train) train_groups.insert(p.group);
  for (const auto& p : split.held_out) held_groups.insert(p.group);
  for (const auto& g : held_groups) CHECK(train_groups.count(g) == 0);
  CHECK(split_by_group(pairs, 0.2, 1).held_out.front().group ==
        split.held_out.front().group);
}

TEST_CASE("training errors") {
  RewardModel model = Fresh();
  CHECK_THROWS_AS(train_reward(model, std::span<const PairExample>{}, {}), Error);
  CHECK_THROWS_AS(RewardTrainConfig{.margin = -1}.validate(), Error);
  CHECK_THROWS_AS(RewardTrainConfig{.held_out_fraction = 1.0}.validate(), Error);
  CHECK_THROWS_AS(eval_pairwise_accuracy(model, std::span<const PairExample>{}), Error);
}
