#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ildet/rng.hpp"
#include "ildet/tensor.hpp"

namespace ildet {

struct OptimizerConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.00005;
};

struct ParamEntry {
  Tensor value;
  Tensor grad;
  Tensor velocity;
  /// Optional 0/1 trainability mask (empty = fully trainable). Masked
  /// entries are never moved by the optimizer, including weight decay.
  Tensor mask;
};

/// Named parameters with matching gradient and velocity buffers.
class ParamStore {
 public:
  void add(const std::string& name, Tensor init) {
    ParamEntry e;
    e.grad = Tensor(init.shape);
    e.velocity = Tensor(init.shape);
    e.value = std::move(init);
    entries_.emplace(name, std::move(e));
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  ParamEntry& at(const std::string& name) { return entries_.at(name); }
  const ParamEntry& at(const std::string& name) const { return entries_.at(name); }
  Tensor& value(const std::string& name) { return entries_.at(name).value; }
  const Tensor& value(const std::string& name) const { return entries_.at(name).value; }
  Tensor& grad(const std::string& name) { return entries_.at(name).grad; }

  std::map<std::string, ParamEntry>& entries() { return entries_; }
  const std::map<std::string, ParamEntry>& entries() const { return entries_; }

  void zero_grads() {
    for (auto& [k, e] : entries_) e.grad.fill(0.0);
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& [k, e] : entries_) n += e.value.size();
    return n;
  }

 private:
  std::map<std::string, ParamEntry> entries_;
};

/// out[i,j] = sum_k x[i,k] * W[k,j] + b[j]
Tensor affine_forward(const Tensor& x, const Tensor& W, const Tensor& b);

/// Reverse-mode gradients of the affine layer. dW and db are accumulated
/// (+=); dx is written if non-null.
void affine_backward(const Tensor& x, const Tensor& W, const Tensor& dout,
                     Tensor* dx, Tensor& dW, Tensor& db);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& pre_activation, const Tensor& dout);

/// Row-wise softmax with max-subtraction.
Tensor softmax(const Tensor& logits);

/// v <- mu*v - lr*(g + wd*theta); theta <- theta + mu*v - lr*(g + wd*theta)
/// with v already updated (Nesterov lookahead form). Gradients are zeroed
/// afterward. Masked entries are left untouched.
void sgd_nesterov_step(ParamStore& params, const OptimizerConfig& cfg);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
};

/// Central finite-difference check. loss_fn must zero the store's
/// gradients, run forward+backward and return the scalar loss. Relative
/// error is |a - n| / max(1e-8, |a| + |n|), maximized over parameters.
GradCheckReport grad_check(ParamStore& params,
                           const std::function<double()>& loss_fn,
                           double h = 1e-5);

/// As grad_check but throws std::runtime_error naming the offending
/// parameter when tolerance is exceeded.
GradCheckReport grad_check_or_throw(ParamStore& params,
                                    const std::function<double()>& loss_fn,
                                    double tolerance, double h = 1e-5);

/// He-style init: weights ~ N(0, 2/fan_in), biases 0.
Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace ildet
