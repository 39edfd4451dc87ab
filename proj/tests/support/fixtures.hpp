#ifndef TINYRLHF_TESTS_FIXTURES_HPP_
#define TINYRLHF_TESTS_FIXTURES_HPP_

#include <random>
#include <string>
#include <vector>

#include "tinyrlhf/oracle.hpp"
#include "tinyrlhf/reward_training.hpp"

namespace oracle {

// Keyword-coverage task whose only keyword is the single token 15: a response
// has quality 1 when it contains that token and 0 otherwise.
inline tinyrlhf::OracleTask indicator_task() {
  tinyrlhf::OracleTask task;
  task.kind = tinyrlhf::TaskKind::kKeywordCoverage;
  task.keywords = {{15}};
  return task;
}

// Pairs of responses that are identical except for one position, which holds
// the indicator token in one response and token 14 in the other. The oracle
// decides which side is chosen. One pair per prompt, so each is its own group.
inline std::vector<tinyrlhf::PairExample> separable_pairs(int count, std::uint64_t seed) {
  using namespace tinyrlhf;
  const OracleTask task = indicator_task();
  const auto prompts = make_prompts(task, count, seed);
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<int> tok(3, 13), len(3, 8), coin(0, 1);
  std::vector<PairExample> out;
  for (int i = 0; i < count; ++i) {
    Tokens a;
    for (int n = len(gen); n > 0; --n) a.push_back(tok(gen));
    Tokens b = a;
    const int pos = std::uniform_int_distribution<int>(0, static_cast<int>(a.size()) - 1)(gen);
    a[pos] = 15;
    b[pos] = 14;
    if (coin(gen)) std::swap(a, b);
    const bool a_better = oracle_quality(task, prompts[i], a) > oracle_quality(task, prompts[i], b);
    out.push_back({"g" + std::to_string(i), prompts[i], a_better ? a : b, a_better ? b : a});
  }
  return out;
}

}  // namespace oracle

#endif  // TINYRLHF_TESTS_FIXTURES_HPP_
