#include <doctest.h>

#include "cfcontra/errors.hpp"
#include "cfcontra/gradcheck.hpp"
#include "cfcontra/heads.hpp"
#include "cfcontra/losses.hpp"
#include "oracles.hpp"

using namespace cfcontra;

TEST_CASE("head structure and parameter counts") {
  auto none = build_head(HeadKind::None, 4, 4, 4, 1);
  CHECK(none.layers.empty());
  CHECK(none.parameter_count() == 0);

  auto moco = build_head(HeadKind::Moco, 4, 4, 4, 1);
  CHECK(moco.parameter_count() == 40);
  CHECK(moco.layers.size() == 3);
  CHECK(std::holds_alternative<ReluLayer>(moco.layers[1]));

  CHECK(build_head(HeadKind::Linear, 4, 4, 4, 1).layers.size() == 1);
  CHECK(build_head(HeadKind::Linear, 4, 4, 4, 1).count_batch_norms() == 0);
  CHECK(build_head(HeadKind::Byol, 4, 4, 4, 1).count_batch_norms() == 1);
  CHECK(build_head(HeadKind::Byol, 4, 4, 4, 1).layers.size() == 4);
  CHECK(build_head(HeadKind::Simclr, 4, 4, 4, 1).count_batch_norms() == 2);
  CHECK(build_head(HeadKind::Simclr, 4, 4, 4, 1).layers.size() == 5);
}

TEST_CASE("head initialization is deterministic and bounded") {
  auto a = build_head(HeadKind::Byol, 9, 5, 3, 42);
  auto b = build_head(HeadKind::Byol, 9, 5, 3, 42);
  auto pa = a.parameters(), pb = b.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->values == pb[i]->values);
  const auto& first = std::get<Linear>(a.layers[0]);
  for (double w : first.weight.values) CHECK(std::abs(w) <= 1.0 / 3.0);
}

TEST_CASE("head_forward examples") {
  Rng rng(3);
  const Tensor x = oracle::random_matrix(rng, 5, 4);
  Graph g;
  auto none = build_head(HeadKind::None, 4, 4, 4, 1);
  CHECK(head_forward(none, g, g.constant(x), Mode::Train).value().values == x.values);

  auto lin = build_head(HeadKind::Linear, 4, 4, 4, 1);
  auto& layer = std::get<Linear>(lin.layers[0]);
  layer.weight = Tensor::zeros({4, 4});
  for (std::size_t i = 0; i < 4; ++i) layer.weight.at(i, i) = 1.0;
  layer.bias = Tensor::zeros({4});
  CHECK(head_forward(lin, g, g.constant(x), Mode::Eval).value().values == x.values);

  auto moco = build_head(HeadKind::Moco, 4, 7, 6, 2);
  for (std::size_t n : {1, 3, 17}) {
    const auto y = head_forward(moco, g, g.constant(oracle::random_matrix(rng, n, 4)), Mode::Train);
    CHECK(y.shape() == Shape{n, 6});
  }
  CHECK_THROWS_AS(head_forward(moco, g, g.constant(oracle::random_matrix(rng, 2, 5)), Mode::Train), DimensionError);
}

TEST_CASE("eval mode is row-wise and batch-size independent") {
  Rng rng(12);
  for (HeadKind kind : {HeadKind::Byol, HeadKind::Simclr}) {
    auto head = build_head(kind, 3, 5, 4, 6);
    for (int i = 0; i < 5; ++i) {
      Graph g;
      head_forward(head, g, g.constant(oracle::random_matrix(rng, 8, 3)), Mode::Train);
    }
    const Tensor batch = oracle::random_matrix(rng, 6, 3);
    Graph g;
    const Tensor all = head_forward(head, g, g.constant(batch), Mode::Eval).value();
    const Tensor again = head_forward(head, g, g.constant(batch), Mode::Eval).value();
    CHECK(all.values == again.values);
    for (std::size_t r = 0; r < 6; ++r) {
      Tensor one = Tensor::zeros({1, 3});
      for (std::size_t j = 0; j < 3; ++j) one.at(0, j) = batch.at(r, j);
      const Tensor y = head_forward(head, g, g.constant(one), Mode::Eval).value();
      for (std::size_t j = 0; j < 4; ++j) CHECK(y.at(0, j) == doctest::Approx(all.at(r, j)).epsilon(1e-14));
    }
  }
}

TEST_CASE("gradients flow through every head") {
  Rng rng(55);
  for (HeadKind kind : {HeadKind::Linear, HeadKind::Moco, HeadKind::Byol, HeadKind::Simclr}) {
    for (int trial = 0; trial < 5; ++trial) {
      auto head = build_head(kind, 3, 4, 3, 100 + trial);
      const Tensor f = oracle::random_matrix(rng, 6, 3);
      const Tensor v = oracle::random_matrix(rng, 3, 3);
      const std::vector<int> y{0, 1, 2, -1, 1, 0};
      auto loss = [&](Graph& g, Var x) {
        return info_nce(head_forward(head, g, x, Mode::Train), y, v, {true, true, true}, 0.5).loss;
      };
      CHECK(grad_check(loss, f) < 1e-4);
    }
  }
}

TEST_CASE("head kind names") {
  CHECK(parse_head_kind("SimCLR") == HeadKind::Simclr);
  CHECK(to_string(HeadKind::Moco) == "moco");
  for (HeadKind k : {HeadKind::None, HeadKind::Linear, HeadKind::Moco, HeadKind::Byol, HeadKind::Simclr})
    CHECK(parse_head_kind(to_string(k)) == k);
  CHECK_THROWS_AS(parse_head_kind("swav"), ConfigError);
}
