#pragma once

// Define-by-run reverse-mode differentiation over dense Tensors.
//
// A Graph is an append-only tape. Every operation appends one node holding its
// output value and a closure that pushes the output gradient to its inputs.
// Backward walks the tape once in reverse insertion order, so gradients from
// fan-out accumulate before a node propagates them further.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cfcontra/tensor.hpp"

namespace cfcontra {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its Graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  double item() const { return value().item(); }
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::span<const double> out_grad)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor t);
  /// Leaf owned by the graph whose gradient is read back through grad().
  Var input(Tensor t);
  /// Leaf bound to an external tensor; backward() adds into p.grad.
  Var parameter(Tensor& p);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward root with respect to v (zeros if v did not
  /// influence the root).
  std::vector<double> grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Reverse pass from a scalar root. Throws ContractError on a non-scalar root.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  const std::string& tag(std::size_t id) const { return nodes_[id].tag; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  // Used by operation implementations.
  Var record(std::string tag, std::vector<std::size_t> inputs, Tensor value, BackwardFn fn);
  /// Gradient accumulator of node id, allocated on first use.
  std::vector<double>& grad_slot(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    std::string tag;
    std::vector<std::size_t> inputs;
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    Tensor* bound = nullptr;
    BackwardFn backward;
  };
  Var leaf(std::string tag, Tensor t, bool requires_grad, Tensor* bound);

  std::vector<Node> nodes_;
};

// Elementwise ops. `add`/`sub` also broadcast a [D] or [1xD] right operand
// across the rows of an [NxD] left operand.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var relu(Var a);
Var exp(Var a);

/// Clamped natural log: log(max(x, kLogEps)). The gradient is zero where the
/// clamp is active.
inline constexpr double kLogEps = 1e-12;
Var log(Var a);

Var matmul(Var a, Var b);

/// Softmax along the last axis of a rank-1 or rank-2 tensor, with
/// max-subtraction.
Var softmax(Var a);

Var sum(Var a);
Var mean(Var a);
/// Mean over the elements whose mask entry is true. Throws ContractError if
/// the mask selects nothing.
Var masked_mean(Var a, const std::vector<bool>& mask);

/// out[i] = a[i, index[i]] for an [NxC] tensor; entries with index < 0 yield 0
/// and pass no gradient.
Var gather(Var a, std::span<const int> index);

/// Inner product of two equally sized tensors; scalar result.
Var dot(Var a, Var b);

enum class Mode { Train, Eval };

struct BatchNormStats {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
};

/// Per-column normalization of an [NxD] input. Train mode uses batch mean and
/// population variance and updates `stats`; eval mode reads `stats`.
Var batch_norm(Var x, Var gamma, Var beta, double eps, Mode mode, BatchNormStats& stats);

// Compositions of the primitives above.
Var square(Var a);
/// sqrt(max(x, kLogEps)) as exp(0.5 * log(x)).
Var sqrt(Var a);
/// [NxD] -> [1xD] column means.
Var column_mean(Var a);
/// [NxD] -> [Nx1] row sums.
Var row_sum(Var a);
/// Repeats a [1xD] row n times.
Var broadcast_rows(Var row, std::size_t n);
/// Row-wise log-sum-exp of an [NxK] tensor, shape [Nx1].
Var logsumexp_rows(Var a);

}  // namespace cfcontra
