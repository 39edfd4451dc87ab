#ifndef TINYRLHF_MODELS_HPP_
#define TINYRLHF_MODELS_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "tinyrlhf/transformer.hpp"

namespace tinyrlhf {

using Tokens = std::vector<int>;

// Tokens fed to the network when scoring `response` as a continuation of
// `prompt`: prompt ++ response[0 .. T-2]. Row P-1+t of the output predicts
// (or values the state before) response token t.
Tokens conditioning_tokens(std::span<const int> prompt,
                           std::span<const int> response);

// Actor / policy: an lm-head transformer.
class PolicyModel {
 public:
  explicit PolicyModel(Transformer net);
  PolicyModel(const BackboneConfig& config, std::uint64_t seed);

  const Transformer& net() const { return net_; }
  Transformer& net() { return net_; }

  // Per-position logits, [T, vocab].
  RowMatrix logits(std::span<const int> tokens) const;
  // log pi(a_t | prompt, a_<t) for every response token; each value <= 0.
  Array sequence_log_probs(std::span<const int> prompt,
                           std::span<const int> response) const;
  // Full next-token log-distributions at every response position, [T, vocab].
  RowMatrix response_log_distributions(std::span<const int> prompt,
                                       std::span<const int> response) const;

  // Taped variant; `binding` must come from net().bind(tape). Shape [T].
  Var sequence_log_probs(const Transformer::Binding& binding,
                         std::span<const int> prompt,
                         std::span<const int> response) const;

 private:
  Transformer net_;
};

// Frozen deep copy of a policy. Only const access is exposed, so its
// parameters cannot change after creation.
class ReferenceModel {
 public:
  const PolicyModel& policy() const { return policy_; }

  Array sequence_log_probs(std::span<const int> prompt,
                           std::span<const int> response) const {
    return policy_.sequence_log_probs(prompt, response);
  }
  RowMatrix response_log_distributions(std::span<const int> prompt,
                                       std::span<const int> response) const {
    return policy_.response_log_distributions(prompt, response);
  }

 private:
  friend ReferenceModel snapshot_reference(const PolicyModel& actor);
  explicit ReferenceModel(PolicyModel policy) : policy_(std::move(policy)) {}
  PolicyModel policy_;
};

ReferenceModel snapshot_reference(const PolicyModel& actor);
ReferenceModel snapshot_reference(const ReferenceModel& reference);

// Per-token state values V(s_t) from a scalar-head transformer.
class CriticModel {
 public:
  explicit CriticModel(Transformer net);
  CriticModel(const BackboneConfig& config, std::uint64_t seed);

  const Transformer& net() const { return net_; }
  Transformer& net() { return net_; }

  Array values(std::span<const int> prompt, std::span<const int> response) const;
  Var values(const Transformer::Binding& binding, std::span<const int> prompt,
             std::span<const int> response) const;

 private:
  Transformer net_;
};

// R(s, a): scalar head read at the final non-PAD position of prompt ++
// response.
class RewardModel {
 public:
  explicit RewardModel(Transformer net);
  RewardModel(const BackboneConfig& config, std::uint64_t seed);

  const Transformer& net() const { return net_; }
  Transformer& net() { return net_; }

  double score(std::span<const int> prompt, std::span<const int> response) const;
  Var score(const Transformer::Binding& binding, std::span<const int> prompt,
            std::span<const int> response) const;

 private:
  Transformer net_;
};

}  // namespace tinyrlhf

#endif  // TINYRLHF_MODELS_HPP_
