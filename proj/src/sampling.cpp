#include "tinyrlhf/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tinyrlhf/error.hpp"

namespace tinyrlhf {

void SamplerConfig::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    Fail(ErrorKind::kConfig, "sampler: temperature must be finite and >= 0");
  }
  if (top_k < 0) Fail(ErrorKind::kConfig, "sampler: top_k must be >= 0");
  if (max_response_tokens < 1) {
    Fail(ErrorKind::kConfig, "sampler: max_response_tokens must be >= 1");
  }
  if (k_responses < 1) Fail(ErrorKind::kConfig, "sampler: k_responses must be >= 1");
}

Eigen::VectorXd next_token_distribution(const Eigen::VectorXd& logits,
                                        double temperature, int top_k) {
  const int V = static_cast<int>(logits.size());
  Eigen::VectorXd probs = Eigen::VectorXd::Zero(V);
  if (temperature == 0.0) {
    Eigen::Index best = 0;
    logits.maxCoeff(&best);  // first maximal index
    probs[best] = 1.0;
    return probs;
  }
  std::vector<int> keep(V);
  std::iota(keep.begin(), keep.end(), 0);
  if (top_k > 0 && top_k < V) {
    std::stable_sort(keep.begin(), keep.end(),
                     [&](int a, int b) { return logits[a] > logits[b]; });
    keep.resize(top_k);
  }
  double m = -std::numeric_limits<double>::infinity();
  for (int i : keep) m = std::max(m, logits[i]);
  double z = 0.0;
  for (int i : keep) {
    probs[i] = std::exp((logits[i] - m) / temperature);
    z += probs[i];
  }
  return probs / z;
}

int draw_token(const Eigen::VectorXd& probs, CounterRng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last_nonzero = 0;
  for (int i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_nonzero = i;
    if (u < acc) return i;
  }
  return last_nonzero;  // u landed in the rounding slack above acc
}

Tokens sample_response(const PolicyModel& policy, std::span<const int> prompt,
                       const SamplerConfig& config) {
  config.validate();
  if (prompt.empty()) Fail(ErrorKind::kInvalidArgument, "empty prompt");
  const int budget = policy.net().config().context_length;
  if (static_cast<int>(prompt.size()) + config.max_response_tokens > budget) {
    Fail(ErrorKind::kInvalidArgument,
         "prompt of " + std::to_string(prompt.size()) + " tokens plus " +
             std::to_string(config.max_response_tokens) +
             " response tokens exceeds context length " + std::to_string(budget));
  }
  CounterRng rng(config.seed);
  Tokens sequence(prompt.begin(), prompt.end());
  Tokens response;
  while (static_cast<int>(response.size()) < config.max_response_tokens) {
    const RowMatrix logits = policy.logits(sequence);
    const Eigen::VectorXd last = logits.row(logits.rows() - 1).transpose();
    const int token =
        draw_token(next_token_distribution(last, config.temperature, config.top_k), rng);
    response.push_back(token);
    sequence.push_back(token);
    if (token == kEosToken) break;
  }
  return response;
}

std::vector<Tokens> sample_k_responses(const PolicyModel& policy,
                                       std::span<const int> prompt,
                                       const SamplerConfig& config) {
  std::vector<Tokens> out;
  out.reserve(config.k_responses);
  for (int i = 0; i < config.k_responses; ++i) {
    SamplerConfig one = config;
    one.seed = config.seed + static_cast<std::uint64_t>(i);
    out.push_back(sample_response(policy, prompt, one));
  }
  return out;
}

}  // namespace tinyrlhf
