#ifndef TINYRLHF_RNG_HPP_
#define TINYRLHF_RNG_HPP_

#include <cstdint>
#include <string_view>

namespace tinyrlhf {

// Counter-based generator: draw n is a pure function of (key, n), mixed with
// the SplitMix64 finalizer. Streams are replayable on any platform and can be
// split by deriving child keys.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() { return at(counter_++); }
  std::uint64_t at(std::uint64_t counter) const;

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  // Standard normal via Box-Muller; consumes two draws.
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Deterministic child key for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// 64-bit FNV-1a, used for string-keyed seeds and checkpoint checksums.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace tinyrlhf

#endif  // TINYRLHF_RNG_HPP_
