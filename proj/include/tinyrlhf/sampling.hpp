#ifndef TINYRLHF_SAMPLING_HPP_
#define TINYRLHF_SAMPLING_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "tinyrlhf/models.hpp"
#include "tinyrlhf/rng.hpp"

namespace tinyrlhf {

struct SamplerConfig {
  double temperature = 1.0;    // 0 selects greedy (argmax) decoding
  int top_k = 0;               // 0 means unlimited
  int max_response_tokens = 16;
  int k_responses = 5;
  std::uint64_t seed = 0;

  // Throws kConfig on invalid settings.
  void validate() const;
};

// Next-token probabilities after temperature and top-k. Ties at the top-k
// boundary keep the lowest token ids. Temperature 0 puts all mass on the
// argmax (lowest id among ties).
Eigen::VectorXd next_token_distribution(const Eigen::VectorXd& logits,
                                        double temperature, int top_k);

// Inverse-CDF draw in token-id order.
int draw_token(const Eigen::VectorXd& probs, CounterRng& rng);

// Samples until EOS (kept as the last token) or the length cap. Uses
// config.seed; deterministic given parameters, prompt and seed.
Tokens sample_response(const PolicyModel& policy, std::span<const int> prompt,
                       const SamplerConfig& config);

// k = config.k_responses draws, response i seeded with config.seed + i.
std::vector<Tokens> sample_k_responses(const PolicyModel& policy,
                                       std::span<const int> prompt,
                                       const SamplerConfig& config);

}  // namespace tinyrlhf

#endif  // TINYRLHF_SAMPLING_HPP_
