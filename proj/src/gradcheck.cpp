#include "cfcontra/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cfcontra/errors.hpp"

namespace cfcontra {

namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
  Graph g;
  return f(g, g.constant(x)).item();
}

}  // namespace

std::vector<double> analytic_gradient(const ScalarFn& f, const Tensor& x) {
  Graph g;
  Var in = g.input(x);
  Var root = f(g, in);
  g.backward(root);
  return g.grad(in);
}

std::vector<double> numeric_gradient(const ScalarFn& f, const Tensor& x, double h) {
  std::vector<double> out(x.size());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.values[i];
    probe.values[i] = orig + h;
    const double up = evaluate(f, probe);
    probe.values[i] = orig - h;
    const double down = evaluate(f, probe);
    probe.values[i] = orig;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  if (analytic.size() != numeric.size()) throw DimensionError("gradient length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric[i])});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

double grad_check(const ScalarFn& f, const Tensor& x, double h) {
  return max_relative_error(analytic_gradient(f, x), numeric_gradient(f, x, h));
}

}  // namespace cfcontra
