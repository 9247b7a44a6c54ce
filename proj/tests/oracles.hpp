#pragma once

// Naive reference implementations used to cross-check the library.

#include <cmath>
#include <limits>
#include <vector>

#include "cfcontra/membank.hpp"
#include "cfcontra/rng.hpp"
#include "cfcontra/tensor.hpp"

namespace oracle {

using cfcontra::Tensor;

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::zeros({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      out.at(i, j) = s;
    }
  return out;
}

inline double distance(const Tensor& f, std::size_t i, const Tensor& v, std::size_t k) {
  double s = 0.0;
  for (std::size_t j = 0; j < f.cols(); ++j) {
    const double d = f.at(i, j) - v.at(k, j);
    s += d * d;
  }
  return std::sqrt(s);
}

// Full scan over all initialized centers, tracking the two smallest distances.
inline std::vector<int> pseudo_labels(const Tensor& f, const Tensor& v, const std::vector<bool>& init, double t) {
  std::vector<int> out(f.rows(), -1);
  for (std::size_t i = 0; i < f.rows(); ++i) {
    std::vector<double> d;
    std::vector<int> idx;
    for (std::size_t k = 0; k < v.rows(); ++k) {
      if (!init[k]) continue;
      d.push_back(distance(f, i, v, k));
      idx.push_back(static_cast<int>(k));
    }
    std::size_t best = 0;
    for (std::size_t a = 1; a < d.size(); ++a)
      if (d[a] < d[best]) best = a;
    double second = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < d.size(); ++a)
      if (a != best && d[a] < second) second = d[a];
    if (second - d[best] > t) out[i] = idx[best];
  }
  return out;
}

struct NceValue {
  double sum = 0.0;
  std::size_t count = 0;
  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

// Per-feature -log softmax over masked-in centers, accumulated directly.
inline NceValue info_nce_terms(const Tensor& f, const std::vector<int>& y, const Tensor& v,
                               const std::vector<bool>& mask, double tau) {
  NceValue out;
  for (std::size_t i = 0; i < f.rows(); ++i) {
    if (y[i] < 0 || !mask[static_cast<std::size_t>(y[i])]) continue;
    std::vector<double> logits;
    double pos = 0.0;
    for (std::size_t k = 0; k < v.rows(); ++k) {
      if (!mask[k]) continue;
      double s = 0.0;
      for (std::size_t j = 0; j < f.cols(); ++j) s += f.at(i, j) * v.at(k, j);
      logits.push_back(s / tau);
      if (static_cast<int>(k) == y[i]) pos = s / tau;
    }
    double m = logits[0];
    for (double l : logits) m = std::max(m, l);
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    out.sum += (m + std::log(z)) - pos;
    ++out.count;
  }
  return out;
}

inline double info_nce(const Tensor& f, const std::vector<int>& y, const Tensor& v, const std::vector<bool>& mask,
                       double tau) {
  return info_nce_terms(f, y, v, mask, tau).mean();
}

inline double contrastive_combined(const Tensor& fs, const std::vector<int>& ys, const Tensor& ft,
                                   const std::vector<int>& yt, const cfcontra::MemoryBank& bank, double tau) {
  using cfcontra::Domain;
  double total = 0.0;
  for (const Tensor* f : {&fs, &ft}) {
    const auto& y = f == &fs ? ys : yt;
    for (Domain d : {Domain::Source, Domain::Target})
      total += info_nce(*f, y, bank.centers(d), bank.initialized(d), tau);
  }
  return total;
}

inline Tensor random_matrix(cfcontra::Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros({r, c});
  for (auto& v : t.values) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace oracle
