#ifndef TINYRLHF_SFT_HPP_
#define TINYRLHF_SFT_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "tinyrlhf/models.hpp"
#include "tinyrlhf/oracle.hpp"

namespace tinyrlhf {

struct Demonstration {
  Tokens prompt;
  Tokens response;
};

struct SftConfig {
  double learning_rate = 3e-3;
  int epochs = 3;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

// Supervised warm start: mean next-token cross-entropy over response tokens.
// Returns the mean loss per epoch.
std::vector<double> train_sft(PolicyModel& policy,
                              std::span<const Demonstration> demos,
                              const SftConfig& config);

// Demonstrations for an oracle task, uniform length in [min_length,
// max_length], terminated by EOS. For sorted-sequence each demonstration
// rises step-to-step with its own probability s ~ U(0, 1) and falls
// otherwise, so a warm-started policy produces responses of widely varying
// quality (mean near 0.5). Other tasks use uniform content tokens.
std::vector<Demonstration> make_demonstrations(const OracleTask& task,
                                               std::span<const Tokens> prompts,
                                               int min_length, int max_length,
                                               std::uint64_t seed);

}  // namespace tinyrlhf

#endif  // TINYRLHF_SFT_HPP_
