#include "tinyrlhf/sft.hpp"

#include <algorithm>
#include <cmath>

#include "tinyrlhf/error.hpp"
#include "tinyrlhf/optim.hpp"
#include "tinyrlhf/rng.hpp"

namespace tinyrlhf {

std::vector<double> train_sft(PolicyModel& policy,
                              std::span<const Demonstration> demos,
                              const SftConfig& config) {
  if (demos.empty()) Fail(ErrorKind::kInvalidArgument, "sft: no demonstrations");
  if (config.batch_size < 1) Fail(ErrorKind::kConfig, "sft: batch_size must be >= 1");
  Transformer& net = policy.net();
  net.set_trainable(true);
  net.zero_grad();
  Adam adam(net.parameter_ptrs(), AdamConfig{.learning_rate = config.learning_rate});
  CounterRng rng(derive_seed(config.seed, 0x5f7));
  std::vector<int> order(demos.size());
  for (int i = 0; i < static_cast<int>(order.size()); ++i) order[i] = i;

  std::vector<double> curve;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    }
    double total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      Tape tape;
      const Transformer::Binding binding = net.bind(tape);
      std::vector<Var> parts;
      for (std::size_t j = start; j < end; ++j) {
        const Demonstration& d = demos[order[j]];
        parts.push_back(policy.sequence_log_probs(binding, d.prompt, d.response));
      }
      Var loss = -mean(concat(parts, 0));
      if (!std::isfinite(loss.item())) {
        Fail(ErrorKind::kNumeric, "sft: non-finite loss");
      }
      tape.backward(loss);
      adam.step();
      adam.zero_grad();
      total += loss.item();
      ++batches;
    }
    curve.push_back(total / batches);
  }
  net.set_trainable(false);
  return curve;
}

std::vector<Demonstration> make_demonstrations(const OracleTask& task,
                                               std::span<const Tokens> prompts,
                                               int min_length, int max_length,
                                               std::uint64_t seed) {
  if (min_length < 1 || max_length < min_length) {
    Fail(ErrorKind::kConfig, "demonstrations: invalid length range");
  }
  const int n = task.num_content_tokens();
  CounterRng rng(seed);
  auto uniform_content = [&] {
    return kFirstContentToken + static_cast<int>(rng.below(n));
  };
  std::vector<Demonstration> out;
  for (const Tokens& p : prompts) {
    const int len = min_length + static_cast<int>(rng.below(max_length - min_length + 1));
    Tokens response;
    if (task.kind == TaskKind::kSortedSequence) {
      // Each step rises with probability s and falls otherwise; s is drawn
      // per demonstration, so quality spreads over [0, 1].
      const double s = rng.uniform();
      response.push_back(uniform_content());
      for (int i = 1; i < len; ++i) {
        const int prev = response.back() - kFirstContentToken;
        bool up = rng.uniform() < s;
        if (prev == n - 1) up = false;
        if (prev == 0) up = true;
        const int next = up ? prev + 1 + static_cast<int>(rng.below(n - 1 - prev))
                            : static_cast<int>(rng.below(prev));
        response.push_back(kFirstContentToken + next);
      }
    } else {
      for (int i = 0; i < len; ++i) response.push_back(uniform_content());
    }
    response.push_back(kEosToken);
    out.push_back({p, std::move(response)});
  }
  return out;
}

}  // namespace tinyrlhf
