#pragma once

#include <vector>

#include "cfcontra/graph.hpp"
#include "cfcontra/rng.hpp"

namespace cfcontra {

/// y = x W + b with W stored [in x out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  /// Uniform init in +-1/sqrt(in).
  Linear(std::size_t in, std::size_t out, Rng& rng);

  std::size_t in_dim() const { return weight.shape[0]; }
  std::size_t out_dim() const { return weight.shape[1]; }
  Var forward(Graph& g, Var x);
  /// Forward on plain values, no graph.
  Tensor apply(const Tensor& x) const;
  std::vector<Tensor*> parameters() { return {&weight, &bias}; }
};

struct BatchNorm1d {
  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;
  double eps = 1e-5;

  BatchNorm1d() = default;
  explicit BatchNorm1d(std::size_t dim, double eps = 1e-5, double momentum = 0.1);

  Var forward(Graph& g, Var x, Mode mode);
  std::vector<Tensor*> parameters() { return {&gamma, &beta}; }
};

/// Plain gradient descent: p -= lr * grad, then clears the gradient.
void sgd_step(const std::vector<Tensor*>& params, double lr);
void zero_grads(const std::vector<Tensor*>& params);
std::size_t parameter_count(const std::vector<Tensor*>& params);

}  // namespace cfcontra
