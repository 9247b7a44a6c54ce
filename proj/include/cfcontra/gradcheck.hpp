#pragma once

#include <functional>
#include <vector>

#include "cfcontra/graph.hpp"

namespace cfcontra {

/// Builds a scalar on `g` from the leaf `x`.
using ScalarFn = std::function<Var(Graph& g, Var x)>;

/// Reverse-mode gradient of f at x.
std::vector<double> analytic_gradient(const ScalarFn& f, const Tensor& x);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
std::vector<double> numeric_gradient(const ScalarFn& f, const Tensor& x, double h);

/// max_i |a_i - n_i| / max(1, |a_i|, |n_i|).
double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric);

/// Max relative error between the reverse-mode and central-difference
/// gradients of f at x.
double grad_check(const ScalarFn& f, const Tensor& x, double h = 1e-5);

}  // namespace cfcontra
