#include "tinyrlhf/transformer.hpp"

#include <cmath>

#include "tinyrlhf/error.hpp"
#include "tinyrlhf/rng.hpp"

namespace tinyrlhf {
namespace {

constexpr double kInitStd = 0.02;
constexpr double kNormEps = 1e-6;

Tensor Gaussian(Shape shape, CounterRng& rng) {
  Tensor t(shape);
  for (int i = 0; i < t.numel(); ++i) t[i] = kInitStd * rng.normal();
  return t;
}

void RmsNormRowsInPlace(RowMatrix& x) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    x.row(r) /= std::sqrt(x.row(r).squaredNorm() / x.cols() + kNormEps);
  }
}

void SoftmaxRowsInPlace(RowMatrix& x) {
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    x.row(r).array() = (x.row(r).array() - x.row(r).maxCoeff()).exp();
    x.row(r) /= x.row(r).sum();
  }
}

}  // namespace

std::string_view HeadKindName(HeadKind kind) {
  return kind == HeadKind::kLanguageModel ? "lm-head" : "scalar-head";
}

HeadKind ParseHeadKind(std::string_view name) {
  if (name == "lm-head") return HeadKind::kLanguageModel;
  if (name == "scalar-head") return HeadKind::kScalar;
  Fail(ErrorKind::kConfig, "unknown head kind '" + std::string(name) + "'");
}

void BackboneConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) Fail(ErrorKind::kConfig, "backbone: " + what);
  };
  require(vocab_size >= 4, "vocab_size must be >= 4");
  require(context_length >= 1, "context_length must be positive");
  require(embed_dim >= 1, "embed_dim must be positive");
  require(num_layers >= 1, "num_layers must be positive");
  require(num_heads >= 1, "num_heads must be positive");
  require(embed_dim % num_heads == 0, "embed_dim must be divisible by num_heads");
}

Transformer::Transformer(const BackboneConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  CounterRng rng(seed);
  const int d = config_.embed_dim;
  params_.push_back({"tok_embed", Gaussian(Shape{config_.vocab_size, d}, rng)});
  params_.push_back(
      {"pos_embed", Gaussian(Shape{config_.context_length, d}, rng)});
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    params_.push_back({p + "wq", Gaussian(Shape{d, d}, rng)});
    params_.push_back({p + "wk", Gaussian(Shape{d, d}, rng)});
    params_.push_back({p + "wv", Gaussian(Shape{d, d}, rng)});
    params_.push_back({p + "wo", Gaussian(Shape{d, d}, rng)});
    params_.push_back({p + "w1", Gaussian(Shape{d, config_.mlp_dim()}, rng)});
    params_.push_back({p + "b1", Tensor(Shape{config_.mlp_dim()})});
    params_.push_back({p + "w2", Gaussian(Shape{config_.mlp_dim(), d}, rng)});
    params_.push_back({p + "b2", Tensor(Shape{d})});
  }
  params_.push_back({"head.w", Tensor(Shape{d, config_.output_dim()})});
  params_.push_back({"head.b", Tensor(Shape{config_.output_dim()})});
  index_parameters();
}

Transformer::Transformer(const BackboneConfig& config,
                         std::vector<NamedTensor> params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  index_parameters();
}

void Transformer::index_parameters() {
  auto find = [&](const std::string& name, Shape expected) {
    for (int i = 0; i < static_cast<int>(params_.size()); ++i) {
      if (params_[i].name == name) {
        if (!(params_[i].tensor.shape() == expected)) {
          Fail(ErrorKind::kSchema, "parameter " + name + " has shape " +
                                       params_[i].tensor.shape().str() +
                                       ", expected " + expected.str());
        }
        return i;
      }
    }
    Fail(ErrorKind::kSchema, "missing parameter " + name);
  };
  const int d = config_.embed_dim;
  const int h = config_.mlp_dim();
  tok_embed_ = find("tok_embed", Shape{config_.vocab_size, d});
  pos_embed_ = find("pos_embed", Shape{config_.context_length, d});
  layers_.clear();
  for (int l = 0; l < config_.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    layers_.push_back({find(p + "wq", Shape{d, d}), find(p + "wk", Shape{d, d}),
                       find(p + "wv", Shape{d, d}), find(p + "wo", Shape{d, d}),
                       find(p + "w1", Shape{d, h}), find(p + "b1", Shape{h}),
                       find(p + "w2", Shape{h, d}), find(p + "b2", Shape{d})});
  }
  head_w_ = find("head.w", Shape{d, config_.output_dim()});
  head_b_ = find("head.b", Shape{config_.output_dim()});
  const std::size_t expected = 4 + 8 * static_cast<std::size_t>(config_.num_layers);
  if (params_.size() != expected) {
    Fail(ErrorKind::kSchema, "unexpected parameter count " +
                                 std::to_string(params_.size()));
  }
}

void Transformer::check_tokens(std::span<const int> tokens) const {
  if (tokens.empty()) {
    Fail(ErrorKind::kInvalidArgument, "empty token sequence");
  }
  if (static_cast<int>(tokens.size()) > config_.context_length) {
    Fail(ErrorKind::kInvalidArgument,
         "sequence length " + std::to_string(tokens.size()) +
             " exceeds context length " + std::to_string(config_.context_length));
  }
  for (int t : tokens) {
    if (t < 0 || t >= config_.vocab_size) {
      Fail(ErrorKind::kInvalidArgument,
           "token id " + std::to_string(t) + " outside vocabulary of " +
               std::to_string(config_.vocab_size));
    }
  }
}

Transformer::Binding Transformer::bind(Tape& tape) {
  Binding b;
  b.vars.reserve(params_.size());
  for (NamedTensor& p : params_) b.vars.push_back(tape.leaf(p.tensor));
  return b;
}

Var Transformer::forward(const Binding& binding,
                         std::span<const int> tokens) const {
  check_tokens(tokens);
  const auto& v = binding.vars;
  const int T = static_cast<int>(tokens.size());
  const int d = config_.embed_dim;
  const int heads = config_.num_heads;
  const int hd = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  std::vector<int> positions(T);
  for (int t = 0; t < T; ++t) positions[t] = t;
  Var x = take_rows(v[tok_embed_], {tokens.begin(), tokens.end()}) +
          take_rows(v[pos_embed_], positions);

  for (const LayerIndex& L : layers_) {
    Var n = rms_norm_rows(x);
    Var q = matmul(n, v[L.wq]);
    Var k = matmul(n, v[L.wk]);
    Var val = matmul(n, v[L.wv]);
    std::vector<Var> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
      Var qh = heads == 1 ? q : slice_cols(q, h * hd, hd);
      Var kh = heads == 1 ? k : slice_cols(k, h * hd, hd);
      Var vh = heads == 1 ? val : slice_cols(val, h * hd, hd);
      Var scores = causal_mask(scale(matmul(qh, transpose(kh)), inv_sqrt));
      outs.push_back(matmul(softmax_rows(scores), vh));
    }
    Var attn = heads == 1 ? outs[0] : concat(outs, -1);
    x = x + matmul(attn, v[L.wo]);
    Var n2 = rms_norm_rows(x);
    Var hidden = relu(add_row(matmul(n2, v[L.w1]), v[L.b1]));
    x = x + add_row(matmul(hidden, v[L.w2]), v[L.b2]);
  }
  return add_row(matmul(rms_norm_rows(x), v[head_w_]), v[head_b_]);
}

RowMatrix Transformer::infer(std::span<const int> tokens) const {
  check_tokens(tokens);
  const int T = static_cast<int>(tokens.size());
  const int d = config_.embed_dim;
  const int heads = config_.num_heads;
  const int hd = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  auto M = [&](int idx) { return params_[idx].tensor.matrix(); };
  auto Row = [&](int idx) {
    const Tensor& t = params_[idx].tensor;
    return Eigen::Map<const Eigen::RowVectorXd>(t.data().data(), t.numel());
  };

  RowMatrix x(T, d);
  for (int t = 0; t < T; ++t) {
    x.row(t) = M(tok_embed_).row(tokens[t]) + M(pos_embed_).row(t);
  }
  RowMatrix n, q, k, val, attn(T, d), scores, hidden;
  for (const LayerIndex& L : layers_) {
    n = x;
    RmsNormRowsInPlace(n);
    q.noalias() = n * M(L.wq);
    k.noalias() = n * M(L.wk);
    val.noalias() = n * M(L.wv);
    for (int h = 0; h < heads; ++h) {
      scores.noalias() =
          q.middleCols(h * hd, hd) * k.middleCols(h * hd, hd).transpose();
      scores *= inv_sqrt;
      for (int r = 0; r < T; ++r) {
        for (int c = r + 1; c < T; ++c) scores(r, c) = kMaskedLogit;
      }
      SoftmaxRowsInPlace(scores);
      attn.middleCols(h * hd, hd).noalias() = scores * val.middleCols(h * hd, hd);
    }
    x.noalias() += attn * M(L.wo);
    n = x;
    RmsNormRowsInPlace(n);
    hidden.noalias() = n * M(L.w1);
    hidden.rowwise() += Row(L.b1);
    hidden = hidden.cwiseMax(0.0);
    x.noalias() += hidden * M(L.w2);
    x.rowwise() += Row(L.b2);
  }
  RmsNormRowsInPlace(x);
  RowMatrix out = x * M(head_w_);
  out.rowwise() += Row(head_b_);
  return out;
}

std::vector<Tensor*> Transformer::parameter_ptrs() {
  std::vector<Tensor*> out;
  out.reserve(params_.size());
  for (NamedTensor& p : params_) out.push_back(&p.tensor);
  return out;
}

const Tensor& Transformer::parameter(std::string_view name) const {
  for (const NamedTensor& p : params_) {
    if (p.name == name) return p.tensor;
  }
  Fail(ErrorKind::kInvalidArgument, "no parameter named " + std::string(name));
}

Tensor& Transformer::parameter(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).parameter(name));
}

std::int64_t Transformer::parameter_count() const {
  std::int64_t n = 0;
  for (const NamedTensor& p : params_) n += p.tensor.numel();
  return n;
}

void Transformer::set_trainable(bool trainable) {
  for (NamedTensor& p : params_) p.tensor.set_requires_grad(trainable);
}

void Transformer::zero_grad() {
  for (NamedTensor& p : params_) p.tensor.zero_grad();
}

Transformer Transformer::with_head(HeadKind head) const {
  BackboneConfig config = config_;
  config.head = head;
  std::vector<NamedTensor> params;
  for (const NamedTensor& p : params_) {
    if (p.name == "head.w" || p.name == "head.b") continue;
    params.push_back({p.name, Tensor(p.tensor.shape(), p.tensor.data())});
  }
  params.push_back({"head.w", Tensor(Shape{config.embed_dim, config.output_dim()})});
  params.push_back({"head.b", Tensor(Shape{config.output_dim()})});
  return Transformer(config, std::move(params));
}

}  // namespace tinyrlhf
