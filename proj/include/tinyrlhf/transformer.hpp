#ifndef TINYRLHF_TRANSFORMER_HPP_
#define TINYRLHF_TRANSFORMER_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tinyrlhf/tape.hpp"
#include "tinyrlhf/tensor.hpp"

namespace tinyrlhf {

inline constexpr int kPadToken = 0;
inline constexpr int kBosToken = 1;
inline constexpr int kEosToken = 2;
inline constexpr int kFirstContentToken = 3;

enum class HeadKind { kLanguageModel, kScalar };

std::string_view HeadKindName(HeadKind kind);
HeadKind ParseHeadKind(std::string_view name);

struct BackboneConfig {
  int vocab_size = 16;
  int context_length = 32;
  int embed_dim = 32;
  int num_layers = 2;
  int num_heads = 2;
  HeadKind head = HeadKind::kLanguageModel;

  int mlp_dim() const { return 4 * embed_dim; }
  int output_dim() const {
    return head == HeadKind::kLanguageModel ? vocab_size : 1;
  }
  // Throws kConfig on any violated invariant.
  void validate() const;

  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Decoder-only transformer: token + learned positional embeddings, pre-norm
// blocks of causal multi-head attention and a ReLU MLP, a final RMS norm and
// either a vocabulary head or a scalar head.
//
// Two forward routes exist. forward() records on a tape for training;
// infer() evaluates the same function with plain Eigen and no tape. They
// must agree to rounding.
class Transformer {
 public:
  // Weights ~ N(0, 0.02^2); biases and the output head start at zero.
  Transformer(const BackboneConfig& config, std::uint64_t seed);
  Transformer(const BackboneConfig& config, std::vector<NamedTensor> params);

  const BackboneConfig& config() const { return config_; }

  // Parameters bound to one tape. Bind once per tape, then run any number of
  // forward passes against the binding.
  struct Binding {
    std::vector<Var> vars;
  };
  Binding bind(Tape& tape);

  // Head outputs, shape [T, output_dim].
  Var forward(const Binding& binding, std::span<const int> tokens) const;
  RowMatrix infer(std::span<const int> tokens) const;

  std::vector<NamedTensor>& parameters() { return params_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::vector<Tensor*> parameter_ptrs();
  const Tensor& parameter(std::string_view name) const;
  Tensor& parameter(std::string_view name);
  std::int64_t parameter_count() const;

  void set_trainable(bool trainable);
  void zero_grad();

  // Rebuilds the output head for `head` (zero-initialized) and keeps every
  // backbone weight. Used to derive critic/reward models from one checkpoint.
  Transformer with_head(HeadKind head) const;

  void check_tokens(std::span<const int> tokens) const;

 private:
  void index_parameters();

  BackboneConfig config_;
  std::vector<NamedTensor> params_;
  // Offsets into params_ for fast access.
  struct LayerIndex {
    int wq, wk, wv, wo, w1, b1, w2, b2;
  };
  int tok_embed_ = -1;
  int pos_embed_ = -1;
  int head_w_ = -1;
  int head_b_ = -1;
  std::vector<LayerIndex> layers_;
};

}  // namespace tinyrlhf

#endif  // TINYRLHF_TRANSFORMER_HPP_
