#ifndef TINYRLHF_OPTIM_HPP_
#define TINYRLHF_OPTIM_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "tinyrlhf/tape.hpp"
#include "tinyrlhf/tensor.hpp"

namespace tinyrlhf {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Array m;
  Array v;
  std::int64_t t = 0;
};

// One bias-corrected Adam update. A parameter whose gradient is entirely
// zero keeps its values and moments; only the step counter advances.
// Throws kNumeric (without touching anything) if `grad` is not finite.
void adam_step(Tensor& param, const Array& grad, AdamState& state,
               const AdamConfig& config);

// Adam over a fixed list of tensors. The tensors must outlive the optimizer.
class Adam {
 public:
  Adam(std::vector<Tensor*> params, AdamConfig config);

  // Applies one update from the accumulated grads. Rejects the whole step if
  // any gradient contains NaN/Inf.
  void step();
  void zero_grad();

  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const std::vector<AdamState>& states() const { return states_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<AdamState> states_;
  AdamConfig config_;
};

// Max over coordinates of |analytic - central| / (|analytic| + |central| +
// 1e-12), with the analytic gradient taken from the tape.
double grad_check(const std::function<Var(Tape&, Var)>& fn,
                  const Tensor& point, double h);

// Same check over every coordinate of several parameter tensors. `fn` must
// bind the tensors with Tape::leaf itself.
double grad_check_params(const std::function<Var(Tape&)>& fn,
                         const std::vector<Tensor*>& params, double h);

}  // namespace tinyrlhf

#endif  // TINYRLHF_OPTIM_HPP_
