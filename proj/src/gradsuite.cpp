#include "cfcontra/gradsuite.hpp"

#include <algorithm>
#include <functional>

#include "cfcontra/adain.hpp"
#include "cfcontra/gradcheck.hpp"
#include "cfcontra/heads.hpp"
#include "cfcontra/losses.hpp"
#include "cfcontra/rng.hpp"

namespace cfcontra {

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values) v = scale * rng.normal();
  return t;
}

std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t c, double ignore_rate) {
  std::vector<int> y(n);
  for (auto& v : y) v = rng.uniform() < ignore_rate ? -1 : static_cast<int>(rng.index(c));
  y[0] = static_cast<int>(rng.index(c));  // keep at least one labeled row
  return y;
}

/// Constant [rows x total] matrix selecting `rows` consecutive rows from `offset`.
Tensor selector(std::size_t rows, std::size_t offset, std::size_t total) {
  Tensor s = Tensor::zeros({rows, total});
  for (std::size_t i = 0; i < rows; ++i) s.at(i, offset + i) = 1.0;
  return s;
}

MemoryBank random_bank(Rng& rng, std::size_t c, std::size_t d) {
  MemoryBank bank(c, d, 0.9);
  for (auto domain : {Domain::Source, Domain::Target}) {
    for (std::size_t k = 0; k < c; ++k) {
      if (k >= 2 && rng.uniform() < 0.25) continue;  // leave some rows uninitialized
      const Tensor row = random_tensor(rng, {d});
      bank.set_row(domain, k, row.values);
    }
  }
  return bank;
}

using Case = std::function<double(Rng&, double h)>;

}  // namespace

std::vector<GradCheckReport> run_gradient_suite(std::size_t instances, double h, std::uint64_t seed) {
  std::vector<std::pair<std::string, Case>> cases;

  cases.emplace_back("cross_entropy", [](Rng& rng, double h) {
    const std::size_t n = 2 + rng.index(7), c = 2 + rng.index(4);
    const auto y = random_labels(rng, n, c, 0.2);
    return grad_check([&](Graph&, Var x) { return cross_entropy(softmax(x), y); }, random_tensor(rng, {n, c}), h);
  });

  cases.emplace_back("entropy_loss", [](Rng& rng, double h) {
    const std::size_t n = 1 + rng.index(8), c = 2 + rng.index(4);
    return grad_check([&](Graph&, Var x) { return entropy_loss(softmax(x)); }, random_tensor(rng, {n, c}), h);
  });

  cases.emplace_back("info_nce", [](Rng& rng, double h) {
    const std::size_t n = 1 + rng.index(8), c = 2 + rng.index(4), d = 1 + rng.index(4);
    const Tensor centers = random_tensor(rng, {c, d});
    std::vector<bool> mask(c, true);
    const auto y = random_labels(rng, n, c, 0.2);
    const double tau = rng.uniform(0.05, 1.0);
    return grad_check([&](Graph&, Var x) { return info_nce(x, y, centers, mask, tau).loss; },
                      random_tensor(rng, {n, d}, 0.5), h);
  });

  cases.emplace_back("contrastive_combined", [](Rng& rng, double h) {
    const std::size_t ns = 1 + rng.index(6), nt = 1 + rng.index(6), c = 2 + rng.index(4), d = 1 + rng.index(4);
    const MemoryBank bank = random_bank(rng, c, d);
    const auto ys = random_labels(rng, ns, c, 0.1);
    const auto yt = random_labels(rng, nt, c, 0.4);
    const double tau = rng.uniform(0.05, 1.0);
    const Tensor sel_s = selector(ns, 0, ns + nt), sel_t = selector(nt, ns, ns + nt);
    return grad_check(
        [&](Graph& g, Var x) {
          return contrastive_combined(matmul(g.constant(sel_s), x), ys, matmul(g.constant(sel_t), x), yt, bank, tau);
        },
        random_tensor(rng, {ns + nt, d}, 0.5), h);
  });

  cases.emplace_back("content_loss", [](Rng& rng, double h) {
    const std::size_t n = 1 + rng.index(8), c = 1 + rng.index(4);
    const Tensor other = random_tensor(rng, {n, c});
    return grad_check([&](Graph& g, Var x) { return content_loss(x, g.constant(other)); }, random_tensor(rng, {n, c}),
                      h);
  });

  cases.emplace_back("style_loss", [](Rng& rng, double h) {
    const std::size_t n = 3 + rng.index(8), c = 1 + rng.index(4);
    ChannelStats style{std::vector<double>(c), std::vector<double>(c)};
    for (std::size_t k = 0; k < c; ++k) {
      style.mean[k] = rng.normal();
      style.var[k] = rng.uniform(0.2, 2.0);
    }
    return grad_check(
        [&](Graph& g, Var x) { return style_loss(channel_stats(x), constant_stats(g, style)); },
        random_tensor(rng, {n, c}), h);
  });

  for (auto kind : {HeadKind::Linear, HeadKind::Moco, HeadKind::Byol, HeadKind::Simclr}) {
    cases.emplace_back("info_nce_" + to_string(kind) + "_head", [kind](Rng& rng, double h) {
      const std::size_t n = 3 + rng.index(6), c = 2 + rng.index(3), d = 2 + rng.index(3);
      HeadModule head = build_head(kind, d, d + 1, d, rng.next());
      const Tensor centers = random_tensor(rng, {c, d});
      std::vector<bool> mask(c, true);
      const auto y = random_labels(rng, n, c, 0.2);
      const double tau = rng.uniform(0.2, 1.0);
      return grad_check(
          [&](Graph& g, Var x) { return info_nce(head_forward(head, g, x, Mode::Train), y, centers, mask, tau).loss; },
          random_tensor(rng, {n, d}), h);
    });
  }

  std::vector<GradCheckReport> reports;
  for (std::size_t k = 0; k < cases.size(); ++k) {
    Rng rng = Rng::derive(seed, k);
    GradCheckReport r{cases[k].first, instances, 0.0};
    for (std::size_t i = 0; i < instances; ++i) r.max_error = std::max(r.max_error, cases[k].second(rng, h));
    reports.push_back(r);
  }
  return reports;
}

}  // namespace cfcontra
