#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cfcontra/errors.hpp"
#include "cfcontra/gradcheck.hpp"
#include "cfcontra/graph.hpp"
#include "oracles.hpp"

using namespace cfcontra;
using doctest::Approx;

namespace {

Tensor integer_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Tensor t = Tensor::zeros({r, c});
  for (auto& v : t.values) v = static_cast<double>(static_cast<int>(rng.index(19)) - 9);
  return t;
}

// Random scalar function of x built from a chain of elementwise and matrix ops.
Var random_chain(Graph& g, Var x, Rng rng, int depth) {
  Var h = x;
  const auto n = x.shape()[0], d = x.shape()[1];
  for (int i = 0; i < depth; ++i) {
    switch (rng.index(6)) {
      case 0: h = add(h, g.constant(oracle::random_matrix(rng, n, d))); break;
      case 1: h = mul(h, g.constant(oracle::random_matrix(rng, n, d))); break;
      case 2: h = relu(h); break;
      case 3: h = exp(scale(h, 0.3)); break;
      case 4: h = matmul(h, g.constant(oracle::random_matrix(rng, d, d))); break;
      default: h = sub(h, x); break;
    }
  }
  return sum(mul(h, h));
}

}  // namespace

TEST_CASE("tensor constructor validates extents") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1, 2, 3}), DimensionError);
  Tensor t({2, 2}, {1, 2, 3, 4});
  CHECK(t.at(1, 0) == 3);
}

TEST_CASE("tensor serialization round trip") {
  Tensor t({2, 3}, {1.5, -2, 3, 4, 5e-300, 6});
  std::stringstream ss;
  write_tensor(ss, t);
  CHECK(ss.str().size() == 4 + 2 * 4 + 6 * 8);
  const std::string bytes = ss.str();
  CHECK(static_cast<unsigned char>(bytes[0]) == 2);  // little-endian rank
  Tensor back = read_tensor(ss);
  CHECK(back.shape == t.shape);
  CHECK(back.values == t.values);
}

TEST_CASE("matmul examples") {
  Graph g;
  auto a = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  auto b = g.constant(Tensor::matrix({{5, 6}, {7, 8}}));
  CHECK(matmul(a, b).value().values == std::vector<double>{19, 22, 43, 50});
  auto eye = g.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  const Tensor same = matmul(a, eye).value();
  CHECK(same.values == std::vector<double>{1, 2, 3, 4});
  auto zero = g.constant(Tensor::zeros({2, 2}));
  const Tensor annihilated = matmul(a, zero).value();
  CHECK(annihilated.values == std::vector<double>(4, 0.0));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Graph g;
  auto a = g.constant(Tensor::zeros({2, 3}));
  auto b = g.constant(Tensor::zeros({2, 3}));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul equals triple loop on integer matrices up to 8x8") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.index(8), k = 1 + rng.index(8), n = 1 + rng.index(8);
    const Tensor a = integer_matrix(rng, m, k), b = integer_matrix(rng, k, n);
    Graph g;
    const Tensor got = matmul(g.constant(a), g.constant(b)).value();
    CHECK(got.values == oracle::matmul(a, b).values);
  }
}

TEST_CASE("softmax examples") {
  Graph g;
  auto p = softmax(g.constant(Tensor({2}, {0, 0}))).value();
  CHECK(p.values[0] == 0.5);
  CHECK(p.values[1] == 0.5);
  p = softmax(g.constant(Tensor({2}, {std::log(2.0), 0}))).value();
  CHECK(p.values[0] == Approx(2.0 / 3).epsilon(1e-15));
  CHECK(p.values[1] == Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(6), c = 1 + rng.index(9);
    Tensor x = oracle::random_matrix(rng, n, c, -800.0, 800.0);
    Graph g;
    const Tensor p = softmax(g.constant(x)).value();
    CHECK(p.all_finite());
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (double v : p.row(i)) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    Tensor shifted = x;
    const double c0 = rng.uniform(-50, 50);
    for (auto& v : shifted.values) v += c0;
    const Tensor q = softmax(g.constant(shifted)).value();
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(q.values[i] == Approx(p.values[i]).epsilon(1e-9));
  }
}

TEST_CASE("batch_norm examples") {
  Graph g;
  BatchNormStats stats{Tensor::zeros({1}), Tensor::filled({1}, 1.0), 0.1};
  auto x = g.constant(Tensor::matrix({{1}, {3}}));
  auto y = batch_norm(x, g.constant(Tensor({1}, {1})), g.constant(Tensor({1}, {0})), 1e-14, Mode::Train, stats);
  CHECK(y.value().values[0] == Approx(-1.0));
  CHECK(y.value().values[1] == Approx(1.0));
  y = batch_norm(x, g.constant(Tensor({1}, {2})), g.constant(Tensor({1}, {1})), 1e-14, Mode::Train, stats);
  CHECK(y.value().values[0] == Approx(-1.0));
  CHECK(y.value().values[1] == Approx(3.0));

  BatchNormStats wide{Tensor::zeros({2}), Tensor::filled({2}, 1.0), 0.1};
  auto c = g.constant(Tensor::matrix({{4, 1}, {4, 2}, {4, 3}}));
  y = batch_norm(c, g.constant(Tensor({2}, {3, 1})), g.constant(Tensor({2}, {0.25, 0})), 1e-5, Mode::Train, wide);
  for (std::size_t i = 0; i < 3; ++i) CHECK(y.value().at(i, 0) == 0.25);
}

TEST_CASE("batch_norm running statistics and eval mode") {
  Graph g;
  BatchNormStats stats{Tensor::zeros({1}), Tensor::filled({1}, 1.0), 0.1};
  auto gamma = g.constant(Tensor({1}, {1})), beta = g.constant(Tensor({1}, {0}));
  batch_norm(g.constant(Tensor::matrix({{1}, {3}})), gamma, beta, 1e-5, Mode::Train, stats);
  CHECK(stats.running_mean.values[0] == Approx(0.2));
  CHECK(stats.running_var.values[0] == Approx(1.0));
  // Eval mode treats rows independently.
  auto one = batch_norm(g.constant(Tensor::matrix({{2}})), gamma, beta, 1e-5, Mode::Eval, stats);
  auto two = batch_norm(g.constant(Tensor::matrix({{2}, {-7}})), gamma, beta, 1e-5, Mode::Eval, stats);
  CHECK(one.value().values[0] == two.value().values[0]);
  CHECK_THROWS(batch_norm(g.constant(Tensor::zeros({0, 1})), gamma, beta, 1e-5, Mode::Train, stats));
}

TEST_CASE("backward examples") {
  {
    Graph g;
    auto x = g.input(Tensor({3}, {1, 2, 3}));
    g.backward(sum(mul(x, x)));
    CHECK(g.grad(x) == std::vector<double>{2, 4, 6});
  }
  {
    Graph g;
    auto x = g.input(Tensor({2}, {-1, 2}));
    g.backward(sum(relu(x)));
    CHECK(g.grad(x) == std::vector<double>{0, 1});
  }
  {
    Graph g;
    auto x = g.input(Tensor({2}, {4, 5}));
    auto c = g.constant(Tensor({2}, {1, 1}));
    g.backward(sum(c));
    CHECK(g.grad(x) == std::vector<double>{0, 0});
  }
}

TEST_CASE("backward rejects non-scalar root") {
  Graph g;
  auto x = g.input(Tensor({2}, {1, 2}));
  CHECK_THROWS_AS(g.backward(relu(x)), ContractError);
}

TEST_CASE("gradients accumulate across fan-out and into parameters") {
  Tensor p({2}, {1.0, 3.0}, true);
  Graph g;
  auto v = g.parameter(p);
  g.backward(add(dot(v, v), sum(scale(v, 5.0))));
  REQUIRE(p.grad.has_value());
  CHECK(*p.grad == std::vector<double>{7, 11});
}

TEST_CASE("graph nodes precede their consumers") {
  Rng rng(1);
  Graph g;
  auto x = g.input(oracle::random_matrix(rng, 3, 3));
  random_chain(g, x, Rng(2), 6);
  for (std::size_t id = 0; id < g.size(); ++id)
    for (auto in : g.inputs(id)) CHECK(in < id);
}

TEST_CASE("backward is linear on random graphs") {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed);
    const Tensor x0 = oracle::random_matrix(rng, 3, 4);
    const int d1 = 1 + static_cast<int>(rng.index(6)), d2 = 1 + static_cast<int>(rng.index(6));
    auto grad_of = [&](bool first, bool second) {
      Graph g;
      auto x = g.input(x0);
      Var root = g.constant(Tensor::scalar(0.0));
      if (first) root = add(root, random_chain(g, x, Rng(seed * 2 + 100), d1));
      if (second) root = add(root, random_chain(g, x, Rng(seed * 2 + 101), d2));
      g.backward(root);
      return g.grad(x);
    };
    const auto both = grad_of(true, true), a = grad_of(true, false), b = grad_of(false, true);
    for (std::size_t i = 0; i < both.size(); ++i)
      CHECK(both[i] == Approx(a[i] + b[i]).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("log is clamped") {
  Graph g;
  auto x = g.input(Tensor({2}, {0.0, 1.0}));
  auto y = log(x);
  CHECK(y.value().values[0] == Approx(std::log(kLogEps)));
  g.backward(sum(y));
  CHECK(g.grad(x)[0] == 0.0);
  CHECK(g.grad(x)[1] == 1.0);
}

TEST_CASE("grad_check examples") {
  Rng rng(3);
  const Tensor x = oracle::random_matrix(rng, 4, 3, -2, 2);
  ScalarFn square_sum = [](Graph&, Var v) { return sum(mul(v, v)); };
  CHECK(grad_check(square_sum, x) < 1e-6);

  const Tensor w = oracle::random_matrix(rng, 4, 3);
  ScalarFn linear = [&](Graph& g, Var v) { return dot(v, g.constant(w)); };
  CHECK(grad_check(linear, x) < 1e-9);

  auto analytic = analytic_gradient(square_sum, x);
  for (auto& a : analytic) a *= 1.1;
  CHECK(max_relative_error(analytic, numeric_gradient(square_sum, x, 1e-5)) > 0.05);
}

TEST_CASE("every primitive passes grad_check") {
  Rng rng(21);
  const Tensor x = oracle::random_matrix(rng, 3, 4, 0.2, 1.5);
  const Tensor w = oracle::random_matrix(rng, 4, 2);
  const Tensor r = oracle::random_matrix(rng, 3, 4);
  const std::vector<int> idx{1, -1, 3};
  const std::vector<ScalarFn> fns = {
      [&](Graph& g, Var v) { return sum(mul(sub(v, g.constant(r)), add(v, g.constant(r)))); },
      [&](Graph& g, Var v) { return sum(square(matmul(v, g.constant(w)))); },
      [&](Graph&, Var v) { return sum(mul(softmax(v), v)); },
      [&](Graph&, Var v) { return mean(log(v)); },
      [&](Graph&, Var v) { return sum(exp(scale(v, 0.5))); },
      [&](Graph&, Var v) { return sum(gather(square(v), idx)); },
      [&](Graph&, Var v) { return masked_mean(sqrt(v), {true, false, true, true, false, true, true, true, false, true, true, true}); },
      [&](Graph&, Var v) { return sum(square(logsumexp_rows(v))); },
      [&](Graph& g, Var v) { return dot(column_mean(v), g.constant(Tensor({1, 4}, {1, -2, 3, 0.5}))); },
      [&](Graph& g, Var v) {
        BatchNormStats s{Tensor::zeros({4}), Tensor::filled({4}, 1.0), 0.1};
        Var y = batch_norm(v, g.constant(Tensor({4}, {1, 2, 0.5, -1})), g.constant(Tensor({4}, {0, 1, 0, 2})),
                           1e-5, Mode::Train, s);
        return dot(y, g.constant(r));
      },
  };
  for (const auto& f : fns) CHECK(grad_check(f, x) < 1e-6);
}
