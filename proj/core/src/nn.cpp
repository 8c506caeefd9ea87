#include "ildet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ildet {

Tensor affine_forward(const Tensor& x, const Tensor& W, const Tensor& b) {
  if (x.shape.size() != 2 || W.shape.size() != 2 || x.shape[1] != W.shape[0] ||
      b.size() != W.shape[1]) {
    throw std::invalid_argument("affine_forward: shapes do not conform, x=" +
                                x.shape_str() + " W=" + W.shape_str() +
                                " b=" + b.shape_str());
  }
  const std::size_t n = x.shape[0], d_in = x.shape[1], d_out = W.shape[1];
  Tensor out({n, d_out});
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = &out.data[i * d_out];
    for (std::size_t j = 0; j < d_out; ++j) orow[j] = b[j];
    const double* xrow = &x.data[i * d_in];
    for (std::size_t k = 0; k < d_in; ++k) {
      const double xv = xrow[k];
      if (xv == 0.0) continue;
      const double* wrow = &W.data[k * d_out];
      for (std::size_t j = 0; j < d_out; ++j) orow[j] += xv * wrow[j];
    }
  }
  return out;
}

void affine_backward(const Tensor& x, const Tensor& W, const Tensor& dout,
                     Tensor* dx, Tensor& dW, Tensor& db) {
  const std::size_t n = x.shape[0], d_in = x.shape[1], d_out = W.shape[1];
  if (dout.shape[0] != n || dout.shape[1] != d_out)
    throw std::invalid_argument("affine_backward: dout shape mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const double* drow = &dout.data[i * d_out];
    const double* xrow = &x.data[i * d_in];
    for (std::size_t j = 0; j < d_out; ++j) db[j] += drow[j];
    for (std::size_t k = 0; k < d_in; ++k) {
      double* dwrow = &dW.data[k * d_out];
      const double xv = xrow[k];
      for (std::size_t j = 0; j < d_out; ++j) dwrow[j] += xv * drow[j];
    }
    if (dx) {
      double* dxrow = &dx->data[i * d_in];
      for (std::size_t k = 0; k < d_in; ++k) {
        const double* wrow = &W.data[k * d_out];
        double acc = 0.0;
        for (std::size_t j = 0; j < d_out; ++j) acc += wrow[j] * drow[j];
        dxrow[k] += acc;
      }
    }
  }
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data) v = std::max(0.0, v);
  return out;
}

Tensor relu_backward(const Tensor& pre_activation, const Tensor& dout) {
  Tensor dx = dout;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (pre_activation.data[i] <= 0.0) dx.data[i] = 0.0;
  return dx;
}

Tensor softmax(const Tensor& logits) {
  const std::size_t n = logits.rows(), c = logits.shape.size() >= 2 ? logits.shape[1] : 0;
  Tensor out = logits;
  for (std::size_t i = 0; i < n; ++i) {
    double* row = &out.data[i * c];
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) row[j] /= sum;
  }
  return out;
}

void sgd_nesterov_step(ParamStore& params, const OptimizerConfig& cfg) {
  const double lr = cfg.learning_rate, mu = cfg.momentum, wd = cfg.weight_decay;
  for (auto& [name, e] : params.entries()) {
    const bool masked = !e.mask.data.empty();
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      if (masked && e.mask.data[i] == 0.0) continue;
      const double g = e.grad.data[i] + wd * e.value.data[i];
      const double v = mu * e.velocity.data[i] - lr * g;
      e.velocity.data[i] = v;
      e.value.data[i] += mu * v - lr * g;
    }
    e.grad.fill(0.0);
  }
}

GradCheckReport grad_check(ParamStore& params,
                           const std::function<double()>& loss_fn,
                           double h) {
  loss_fn();
  // Snapshot analytic gradients before perturbing.
  std::map<std::string, Tensor> analytic;
  for (auto& [name, e] : params.entries()) analytic[name] = e.grad;

  GradCheckReport rep;
  for (auto& [name, e] : params.entries()) {
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double orig = e.value.data[i];
      e.value.data[i] = orig + h;
      const double lp = loss_fn();
      e.value.data[i] = orig - h;
      const double lm = loss_fn();
      e.value.data[i] = orig;
      const double numeric = (lp - lm) / (2.0 * h);
      const double a = analytic[name].data[i];
      const double rel =
          std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_param = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  // Restore gradients to the analytic state.
  loss_fn();
  return rep;
}

GradCheckReport grad_check_or_throw(ParamStore& params,
                                    const std::function<double()>& loss_fn,
                                    double tolerance, double h) {
  GradCheckReport rep = grad_check(params, loss_fn, h);
  if (rep.max_rel_error > tolerance) {
    throw std::runtime_error("gradient check failed at " + rep.worst_param +
                             ": relative error " +
                             std::to_string(rep.max_rel_error));
  }
  return rep;
}

Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor W({fan_in, fan_out});
  const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : W.data) v = scale * rng.normal();
  return W;
}

}  // namespace ildet
