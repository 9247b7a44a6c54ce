#include "cfcontra/nn.hpp"

#include <cmath>

#include "cfcontra/errors.hpp"

namespace cfcontra {

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = Tensor::zeros({in, out});
  bias = Tensor::zeros({out});
  for (auto& w : weight.values) w = rng.uniform(-bound, bound);
  for (auto& b : bias.values) b = rng.uniform(-bound, bound);
}

Var Linear::forward(Graph& g, Var x) {
  if (x.value().rank() != 2 || x.value().shape[1] != in_dim()) {
    throw DimensionError("linear layer expects [Nx" + std::to_string(in_dim()) + "], got " +
                         shape_string(x.value().shape));
  }
  return add(matmul(x, g.parameter(weight)), g.parameter(bias));
}

Tensor Linear::apply(const Tensor& x) const {
  if (x.rank() != 2 || x.shape[1] != in_dim()) {
    throw DimensionError("linear layer expects [Nx" + std::to_string(in_dim()) + "], got " + shape_string(x.shape));
  }
  const std::size_t n = x.shape[0], k = in_dim(), m = out_dim();
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.values.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) o[j] = bias.values[j];
    for (std::size_t p = 0; p < k; ++p) {
      const double s = x.values[i * k + p];
      const double* w = weight.values.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += s * w[j];
    }
  }
  return out;
}

BatchNorm1d::BatchNorm1d(std::size_t dim, double e, double momentum)
    : gamma(Tensor::filled({dim}, 1.0)), beta(Tensor::zeros({dim})), eps(e) {
  stats.running_mean = Tensor::zeros({dim});
  stats.running_var = Tensor::filled({dim}, 1.0);
  stats.momentum = momentum;
}

Var BatchNorm1d::forward(Graph& g, Var x, Mode mode) {
  return batch_norm(x, g.parameter(gamma), g.parameter(beta), eps, mode, stats);
}

void sgd_step(const std::vector<Tensor*>& params, double lr) {
  for (auto* p : params) {
    if (p->grad) {
      for (std::size_t i = 0; i < p->size(); ++i) p->values[i] -= lr * (*p->grad)[i];
    }
    p->grad.reset();
  }
}

void zero_grads(const std::vector<Tensor*>& params) {
  for (auto* p : params) p->grad.reset();
}

std::size_t parameter_count(const std::vector<Tensor*>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->size();
  return n;
}

}  // namespace cfcontra
