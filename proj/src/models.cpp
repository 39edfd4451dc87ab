#include "tinyrlhf/models.hpp"

#include "tinyrlhf/error.hpp"

namespace tinyrlhf {
namespace {

void RequireHead(const Transformer& net, HeadKind head, const char* model) {
  if (net.config().head != head) {
    Fail(ErrorKind::kConfig, std::string(model) + " needs a " +
                                 std::string(HeadKindName(head)));
  }
}

void RequireResponse(std::span<const int> prompt, std::span<const int> response) {
  if (prompt.empty()) Fail(ErrorKind::kInvalidArgument, "empty prompt");
  if (response.empty()) Fail(ErrorKind::kInvalidArgument, "empty response");
}

// Index of the last non-PAD token of prompt ++ response, plus one.
int PooledLength(std::span<const int> prompt, std::span<const int> response) {
  int n = static_cast<int>(prompt.size() + response.size());
  auto at = [&](int i) {
    return i < static_cast<int>(prompt.size()) ? prompt[i]
                                               : response[i - prompt.size()];
  };
  while (n > 1 && at(n - 1) == kPadToken) --n;
  return n;
}

Tokens Concat(std::span<const int> prompt, std::span<const int> response,
              int length) {
  Tokens out(prompt.begin(), prompt.end());
  out.insert(out.end(), response.begin(), response.end());
  out.resize(length);
  return out;
}

}  // namespace

Tokens conditioning_tokens(std::span<const int> prompt,
                           std::span<const int> response) {
  RequireResponse(prompt, response);
  Tokens out(prompt.begin(), prompt.end());
  out.insert(out.end(), response.begin(), response.end() - 1);
  return out;
}

PolicyModel::PolicyModel(Transformer net) : net_(std::move(net)) {
  RequireHead(net_, HeadKind::kLanguageModel, "policy");
}

PolicyModel::PolicyModel(const BackboneConfig& config, std::uint64_t seed)
    : PolicyModel(Transformer(config, seed)) {}

RowMatrix PolicyModel::logits(std::span<const int> tokens) const {
  return net_.infer(tokens);
}

RowMatrix PolicyModel::response_log_distributions(
    std::span<const int> prompt, std::span<const int> response) const {
  const Tokens input = conditioning_tokens(prompt, response);
  const RowMatrix all = net_.infer(input);
  const int P = static_cast<int>(prompt.size());
  const int T = static_cast<int>(response.size());
  RowMatrix out = all.middleRows(P - 1, T);
  for (int r = 0; r < T; ++r) {
    const double m = out.row(r).maxCoeff();
    const double lse = m + std::log((out.row(r).array() - m).exp().sum());
    out.row(r).array() -= lse;
  }
  return out;
}

Array PolicyModel::sequence_log_probs(std::span<const int> prompt,
                                      std::span<const int> response) const {
  const RowMatrix dist = response_log_distributions(prompt, response);
  Array out(response.size());
  for (int t = 0; t < static_cast<int>(response.size()); ++t) {
    net_.check_tokens(response.subspan(t, 1));
    out[t] = dist(t, response[t]);
  }
  return out;
}

Var PolicyModel::sequence_log_probs(const Transformer::Binding& binding,
                                    std::span<const int> prompt,
                                    std::span<const int> response) const {
  const Tokens input = conditioning_tokens(prompt, response);
  net_.check_tokens(response);
  const int P = static_cast<int>(prompt.size());
  const int T = static_cast<int>(response.size());
  Var logits = net_.forward(binding, input);
  Var rows = P == 1 && T == static_cast<int>(input.size())
                 ? logits
                 : slice_rows(logits, P - 1, T);
  return gather(log_softmax_rows(rows), {response.begin(), response.end()});
}

ReferenceModel snapshot_reference(const PolicyModel& actor) {
  Transformer copy = actor.net();
  copy.set_trainable(false);
  for (NamedTensor& p : copy.parameters()) {
    p.tensor = Tensor(p.tensor.shape(), p.tensor.data(), false);
  }
  return ReferenceModel(PolicyModel(std::move(copy)));
}

ReferenceModel snapshot_reference(const ReferenceModel& reference) {
  return snapshot_reference(reference.policy());
}

CriticModel::CriticModel(Transformer net) : net_(std::move(net)) {
  RequireHead(net_, HeadKind::kScalar, "critic");
}

CriticModel::CriticModel(const BackboneConfig& config, std::uint64_t seed)
    : CriticModel(Transformer(config, seed)) {}

Array CriticModel::values(std::span<const int> prompt,
                          std::span<const int> response) const {
  const Tokens input = conditioning_tokens(prompt, response);
  const RowMatrix all = net_.infer(input);
  return all.col(0).segment(prompt.size() - 1, response.size()).array();
}

Var CriticModel::values(const Transformer::Binding& binding,
                        std::span<const int> prompt,
                        std::span<const int> response) const {
  const Tokens input = conditioning_tokens(prompt, response);
  const int P = static_cast<int>(prompt.size());
  const int T = static_cast<int>(response.size());
  Var out = net_.forward(binding, input);
  if (!(P == 1 && T == static_cast<int>(input.size()))) {
    out = slice_rows(out, P - 1, T);
  }
  return reshape(out, Shape{T});
}

RewardModel::RewardModel(Transformer net) : net_(std::move(net)) {
  RequireHead(net_, HeadKind::kScalar, "reward model");
}

RewardModel::RewardModel(const BackboneConfig& config, std::uint64_t seed)
    : RewardModel(Transformer(config, seed)) {}

double RewardModel::score(std::span<const int> prompt,
                          std::span<const int> response) const {
  RequireResponse(prompt, response);
  const Tokens input = Concat(prompt, response, PooledLength(prompt, response));
  const RowMatrix all = net_.infer(input);
  return all(all.rows() - 1, 0);
}

Var RewardModel::score(const Transformer::Binding& binding,
                       std::span<const int> prompt,
                       std::span<const int> response) const {
  RequireResponse(prompt, response);
  const Tokens input = Concat(prompt, response, PooledLength(prompt, response));
  const int n = static_cast<int>(input.size());
  Var out = net_.forward(binding, input);
  if (n > 1) out = slice_rows(out, n - 1, 1);
  return reshape(out, Shape{});
}

}  // namespace tinyrlhf
