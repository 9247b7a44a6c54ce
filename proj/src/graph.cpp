#include "cfcontra/graph.hpp"

#include <algorithm>
#include <cmath>

#include "cfcontra/errors.hpp"

namespace cfcontra {

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::leaf(std::string tag, Tensor t, bool requires_grad, Tensor* bound) {
  Node n;
  n.tag = std::move(tag);
  n.value = std::move(t);
  n.value.grad.reset();
  n.requires_grad = requires_grad;
  n.bound = bound;
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Graph::constant(Tensor t) { return leaf("constant", std::move(t), false, nullptr); }
Var Graph::input(Tensor t) { return leaf("input", std::move(t), true, nullptr); }
Var Graph::parameter(Tensor& p) { return leaf("parameter", p, true, &p); }

Var Graph::record(std::string tag, std::vector<std::size_t> inputs, Tensor value, BackwardFn fn) {
  Node n;
  n.tag = std::move(tag);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].requires_grad; });
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

std::vector<double>& Graph::grad_slot(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

std::vector<double> Graph::grad(Var v) const {
  const auto& n = nodes_[v.id];
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

void Graph::backward(Var root) {
  if (root.graph != this) throw ContractError("backward root belongs to another graph");
  if (!nodes_[root.id].value.is_scalar()) {
    throw ContractError("backward root must be scalar, got " + shape_string(nodes_[root.id].value.shape));
  }
  for (auto& n : nodes_) n.grad.clear();
  grad_slot(root.id)[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      // The closure may grow other nodes' slots but never this one.
      const std::vector<double> g = n.grad;
      n.backward(*this, g);
    } else if (n.bound != nullptr) {
      auto& p = *n.bound;
      if (!p.grad || p.grad->size() != p.size()) p.grad.emplace(p.size(), 0.0);
      for (std::size_t k = 0; k < n.grad.size(); ++k) (*p.grad)[k] += n.grad[k];
    }
  }
}

namespace {

Graph& same_graph(Var a, Var b) {
  if (a.graph != b.graph || a.graph == nullptr) throw ContractError("operands belong to different graphs");
  return *a.graph;
}

enum class Broadcast { None, Rows };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape == b.shape) return Broadcast::None;
  if (a.rank() == 2) {
    const bool row = (b.rank() == 1 && b.shape[0] == a.shape[1]) ||
                     (b.rank() == 2 && b.shape[0] == 1 && b.shape[1] == a.shape[1]);
    if (row) return Broadcast::Rows;
  }
  throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape) + " and " + shape_string(b.shape) +
                       " are incompatible");
}

Var add_impl(Var a, Var b, double sign, const char* tag) {
  auto& g = same_graph(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  const auto kind = broadcast_kind(av, bv, tag);
  Tensor out = av;
  const std::size_t width = bv.size();
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += sign * bv.values[kind == Broadcast::None ? i : i % width];
  const auto ia = a.id, ib = b.id;
  return g.record(tag, {ia, ib}, std::move(out), [ia, ib, sign, kind, width](Graph& gr, std::span<const double> go) {
    if (gr.needs_grad(ia)) {
      auto& ga = gr.grad_slot(ia);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    }
    if (gr.needs_grad(ib)) {
      auto& gb = gr.grad_slot(ib);
      for (std::size_t i = 0; i < go.size(); ++i) gb[kind == Broadcast::None ? i : i % width] += sign * go[i];
    }
  });
}

template <typename Fwd, typename Deriv>
Var unary(Var a, const char* tag, Fwd fwd, Deriv deriv) {
  auto& g = *a.graph;
  Tensor out = a.value();
  for (auto& v : out.values) v = fwd(v);
  const auto ia = a.id;
  return g.record(tag, {ia}, std::move(out), [ia, deriv](Graph& gr, std::span<const double> go) {
    const auto& x = gr.value(Var{&gr, ia}).values;
    auto& ga = gr.grad_slot(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * deriv(x[i]);
  });
}

}  // namespace

Var add(Var a, Var b) { return add_impl(a, b, 1.0, "add"); }
Var sub(Var a, Var b) { return add_impl(a, b, -1.0, "sub"); }

Var mul(Var a, Var b) {
  auto& g = same_graph(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.shape != bv.shape) {
    throw DimensionError("mul: shapes " + shape_string(av.shape) + " and " + shape_string(bv.shape) + " differ");
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] *= bv.values[i];
  const auto ia = a.id, ib = b.id;
  return g.record("mul", {ia, ib}, std::move(out), [ia, ib](Graph& gr, std::span<const double> go) {
    const auto& x = gr.value(Var{&gr, ia}).values;
    const auto& y = gr.value(Var{&gr, ib}).values;
    if (gr.needs_grad(ia)) {
      auto& ga = gr.grad_slot(ia);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * y[i];
    }
    if (gr.needs_grad(ib)) {
      auto& gb = gr.grad_slot(ib);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * x[i];
    }
  });
}

Var scale(Var a, double factor) {
  return unary(a, "scale", [factor](double x) { return factor * x; }, [factor](double) { return factor; });
}

Var relu(Var a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(Var a) {
  return unary(
      a, "log", [](double x) { return std::log(std::max(x, kLogEps)); },
      [](double x) { return x > kLogEps ? 1.0 / x : 0.0; });
}

Var matmul(Var a, Var b) {
  auto& g = same_graph(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0]) {
    throw DimensionError("matmul: shapes " + shape_string(av.shape) + " and " + shape_string(bv.shape) +
                         " are incompatible");
  }
  const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.values.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = av.values[i * k + p];
      if (s == 0.0) continue;
      const double* brow = bv.values.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }
  const auto ia = a.id, ib = b.id;
  return g.record("matmul", {ia, ib}, std::move(out), [ia, ib, m, k, n](Graph& gr, std::span<const double> go) {
    const auto& x = gr.value(Var{&gr, ia}).values;
    const auto& y = gr.value(Var{&gr, ib}).values;
    if (gr.needs_grad(ia)) {
      // dA = G * B^T
      auto& ga = gr.grad_slot(ia);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += go[i * n + j] * y[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (gr.needs_grad(ib)) {
      // dB = A^T * G
      auto& gb = gr.grad_slot(ib);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double s = x[i * k + p];
          if (s == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += s * go[i * n + j];
        }
      }
    }
  });
}

Var softmax(Var a) {
  auto& g = *a.graph;
  const auto& av = a.value();
  if (av.rank() > 2) throw DimensionError("softmax: expected rank 1 or 2, got " + shape_string(av.shape));
  const std::size_t width = av.shape.back();
  const std::size_t rows = av.size() / width;
  Tensor out = av;
  for (std::size_t r = 0; r < rows; ++r) {
    double* x = out.values.data() + r * width;
    const double mx = *std::max_element(x, x + width);
    double z = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      x[c] = std::exp(x[c] - mx);
      z += x[c];
    }
    for (std::size_t c = 0; c < width; ++c) x[c] /= z;
  }
  const auto ia = a.id;
  const std::size_t self = g.size();
  return g.record("softmax", {ia}, std::move(out), [ia, self, rows, width](Graph& gr, std::span<const double> go) {
    const auto& y = gr.value(Var{&gr, self}).values;
    auto& ga = gr.grad_slot(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * width;
      double inner = 0.0;
      for (std::size_t c = 0; c < width; ++c) inner += go[off + c] * y[off + c];
      for (std::size_t c = 0; c < width; ++c) ga[off + c] += y[off + c] * (go[off + c] - inner);
    }
  });
}

Var sum(Var a) {
  auto& g = *a.graph;
  double s = 0.0;
  for (double v : a.value().values) s += v;
  const auto ia = a.id;
  return g.record("sum", {ia}, Tensor::scalar(s), [ia](Graph& gr, std::span<const double> go) {
    auto& ga = gr.grad_slot(ia);
    for (auto& v : ga) v += go[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var masked_mean(Var a, const std::vector<bool>& mask) {
  auto& g = *a.graph;
  const auto& av = a.value();
  if (mask.size() != av.size()) {
    throw DimensionError("masked_mean: mask of length " + std::to_string(mask.size()) + " for tensor " +
                         shape_string(av.shape));
  }
  std::size_t count = 0;
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (mask[i]) {
      s += av.values[i];
      ++count;
    }
  }
  if (count == 0) throw ContractError("masked_mean: mask selects no element");
  const double inv = 1.0 / static_cast<double>(count);
  const auto ia = a.id;
  return g.record("masked_mean", {ia}, Tensor::scalar(s * inv), [ia, mask, inv](Graph& gr, std::span<const double> go) {
    auto& ga = gr.grad_slot(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (mask[i]) ga[i] += go[0] * inv;
    }
  });
}

Var gather(Var a, std::span<const int> index) {
  auto& g = *a.graph;
  const auto& av = a.value();
  const std::size_t n = av.rows(), c = av.cols();
  if (index.size() != n) {
    throw DimensionError("gather: " + std::to_string(index.size()) + " indices for " + shape_string(av.shape));
  }
  Tensor out = Tensor::zeros({n});
  std::vector<int> idx(index.begin(), index.end());
  for (std::size_t i = 0; i < n; ++i) {
    if (idx[i] >= static_cast<int>(c)) {
      throw DimensionError("gather: index " + std::to_string(idx[i]) + " out of range for " + shape_string(av.shape));
    }
    if (idx[i] >= 0) out.values[i] = av.values[i * c + static_cast<std::size_t>(idx[i])];
  }
  const auto ia = a.id;
  return g.record("gather", {ia}, std::move(out), [ia, idx = std::move(idx), c](Graph& gr, std::span<const double> go) {
    auto& ga = gr.grad_slot(ia);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= 0) ga[i * c + static_cast<std::size_t>(idx[i])] += go[i];
    }
  });
}

Var dot(Var a, Var b) {
  auto& g = same_graph(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.size() != bv.size()) {
    throw DimensionError("dot: shapes " + shape_string(av.shape) + " and " + shape_string(bv.shape) + " differ");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av.values[i] * bv.values[i];
  const auto ia = a.id, ib = b.id;
  return g.record("dot", {ia, ib}, Tensor::scalar(s), [ia, ib](Graph& gr, std::span<const double> go) {
    const auto& x = gr.value(Var{&gr, ia}).values;
    const auto& y = gr.value(Var{&gr, ib}).values;
    if (gr.needs_grad(ia)) {
      auto& ga = gr.grad_slot(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[0] * y[i];
    }
    if (gr.needs_grad(ib)) {
      auto& gb = gr.grad_slot(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[0] * x[i];
    }
  });
}

Var batch_norm(Var x, Var gamma, Var beta, double eps, Mode mode, BatchNormStats& stats) {
  auto& g = same_graph(x, gamma);
  same_graph(x, beta);
  const auto& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("batch_norm: expected [NxD], got " + shape_string(xv.shape));
  const std::size_t n = xv.shape[0], d = xv.shape[1];
  if (n == 0) throw ContractError("batch_norm: empty batch");
  if (!(eps > 0.0)) throw ContractError("batch_norm: eps must be positive");
  if (gamma.value().size() != d || beta.value().size() != d) {
    throw DimensionError("batch_norm: affine parameters of size " + std::to_string(gamma.value().size()) + "/" +
                         std::to_string(beta.value().size()) + " for " + std::to_string(d) + " features");
  }
  if (stats.running_mean.size() != d) stats.running_mean = Tensor::zeros({d});
  if (stats.running_var.size() != d) stats.running_var = Tensor::filled({d}, 1.0);

  std::vector<double> mu(d, 0.0), var(d, 0.0);
  if (mode == Mode::Train) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) mu[j] += xv.values[i * d + j];
    for (auto& m : mu) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = xv.values[i * d + j] - mu[j];
        var[j] += c * c;
      }
    for (auto& v : var) v /= static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) {
      stats.running_mean.values[j] = (1.0 - stats.momentum) * stats.running_mean.values[j] + stats.momentum * mu[j];
      stats.running_var.values[j] = (1.0 - stats.momentum) * stats.running_var.values[j] + stats.momentum * var[j];
    }
  } else {
    mu = stats.running_mean.values;
    var = stats.running_var.values;
  }
  std::vector<double> inv_std(d);
  for (std::size_t j = 0; j < d; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);

  Tensor xhat = Tensor::zeros({n, d});
  Tensor out = Tensor::zeros({n, d});
  const auto& gm = gamma.value().values;
  const auto& bt = beta.value().values;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xv.values[i * d + j] - mu[j]) * inv_std[j];
      xhat.values[i * d + j] = h;
      out.values[i * d + j] = gm[j] * h + bt[j];
    }

  const auto ix = x.id, ig = gamma.id, ib = beta.id;
  const bool train = mode == Mode::Train;
  return g.record("batch_norm", {ix, ig, ib}, std::move(out),
                  [ix, ig, ib, n, d, train, xhat = std::move(xhat.values), inv_std = std::move(inv_std)](
                      Graph& gr, std::span<const double> go) {
                    const auto& gm = gr.value(Var{&gr, ig}).values;
                    std::vector<double> sum_g(d, 0.0), sum_gh(d, 0.0);
                    for (std::size_t i = 0; i < n; ++i)
                      for (std::size_t j = 0; j < d; ++j) {
                        sum_g[j] += go[i * d + j];
                        sum_gh[j] += go[i * d + j] * xhat[i * d + j];
                      }
                    if (gr.needs_grad(ig)) {
                      auto& gg = gr.grad_slot(ig);
                      for (std::size_t j = 0; j < d; ++j) gg[j] += sum_gh[j];
                    }
                    if (gr.needs_grad(ib)) {
                      auto& gb = gr.grad_slot(ib);
                      for (std::size_t j = 0; j < d; ++j) gb[j] += sum_g[j];
                    }
                    if (gr.needs_grad(ix)) {
                      auto& gx = gr.grad_slot(ix);
                      const double nn = static_cast<double>(n);
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) {
                          const double k = gm[j] * inv_std[j];
                          if (train) {
                            gx[i * d + j] += k / nn * (nn * go[i * d + j] - sum_g[j] - xhat[i * d + j] * sum_gh[j]);
                          } else {
                            gx[i * d + j] += k * go[i * d + j];
                          }
                        }
                    }
                  });
}

Var square(Var a) { return mul(a, a); }

Var sqrt(Var a) { return exp(scale(log(a), 0.5)); }

Var column_mean(Var a) {
  const auto n = a.value().rows();
  Var ones = a.graph->constant(Tensor::filled({1, n}, 1.0 / static_cast<double>(n)));
  return matmul(ones, a);
}

Var row_sum(Var a) {
  const auto d = a.value().cols();
  return matmul(a, a.graph->constant(Tensor::filled({d, 1}, 1.0)));
}

Var broadcast_rows(Var row, std::size_t n) {
  const auto& rv = row.value();
  if (rv.rank() != 2 || rv.shape[0] != 1) {
    throw DimensionError("broadcast_rows: expected [1xD], got " + shape_string(rv.shape));
  }
  return matmul(row.graph->constant(Tensor::filled({n, 1}, 1.0)), row);
}

Var logsumexp_rows(Var a) {
  const auto& av = a.value();
  const std::size_t n = av.rows(), k = av.cols();
  // The row max is a constant shift; softmax shift invariance keeps the
  // gradient exact.
  Tensor shift = Tensor::zeros({n, k});
  Tensor row_max = Tensor::zeros({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = av.row(i);
    const double m = *std::max_element(r.begin(), r.end());
    row_max.values[i] = m;
    std::fill_n(shift.values.begin() + static_cast<std::ptrdiff_t>(i * k), k, m);
  }
  auto& g = *a.graph;
  Var shifted = sub(a, g.constant(std::move(shift)));
  return add(log(row_sum(exp(shifted))), g.constant(std::move(row_max)));
}

}  // namespace cfcontra
