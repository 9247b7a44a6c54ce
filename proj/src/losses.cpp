#include "cfcontra/losses.hpp"

#include <cmath>

#include "cfcontra/errors.hpp"

namespace cfcontra {

Var cross_entropy(Var probs, std::span<const int> labels) {
  const auto& p = probs.value();
  const std::size_t n = p.rows(), c = p.cols();
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + shape_string(p.shape));
  }
  std::vector<bool> mask(n);
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < -1 || labels[i] >= static_cast<int>(c)) {
      throw DimensionError("cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(c) +
                           ")");
    }
    mask[i] = labels[i] >= 0;
    any = any || mask[i];
  }
  if (!any) throw ContractError("cross_entropy: every label is -1");
  return scale(masked_mean(log(gather(probs, labels)), mask), -1.0);
}

Var entropy_loss(Var probs) {
  const auto& p = probs.value();
  const std::size_t n = p.rows(), c = p.cols();
  if (c < 2) throw ContractError("entropy_loss needs at least two classes");
  // sum_c p log p per pixel, then the pixel mean.
  Var plogp = mul(probs, log(probs));
  return scale(sum(plogp), -1.0 / (std::log(static_cast<double>(c)) * static_cast<double>(n)));
}

namespace {

Var l2_normalize_rows(Var x) {
  auto& g = *x.graph;
  const std::size_t d = x.value().cols();
  Var inv_norm = exp(scale(log(row_sum(square(x))), -0.5));  // [N x 1]
  return mul(x, matmul(inv_norm, g.constant(Tensor::filled({1, d}, 1.0))));
}

Tensor normalized_rows(const Tensor& t) {
  Tensor out = t;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    double s = 0.0;
    for (double v : t.row(i)) s += v * v;
    const double inv = 1.0 / std::sqrt(std::max(s, kLogEps));
    for (double& v : out.row(i)) v *= inv;
  }
  return out;
}

}  // namespace

ContrastiveTerm info_nce(Var features, std::span<const int> labels, const Tensor& centers,
                         const std::vector<bool>& center_mask, double tau, const InfoNceOptions& options) {
  if (!(tau > 0.0)) throw ContractError("info_nce: temperature must be positive");
  auto& g = *features.graph;
  const auto& f = features.value();
  const std::size_t n = f.rows(), d = f.cols();
  if (labels.size() != n) {
    throw DimensionError("info_nce: " + std::to_string(labels.size()) + " labels for " + shape_string(f.shape));
  }
  if (centers.rank() != 2 || centers.cols() != d || center_mask.size() != centers.rows()) {
    throw DimensionError("info_nce: centers " + shape_string(centers.shape) + " with mask of " +
                         std::to_string(center_mask.size()) + " for features " + shape_string(f.shape));
  }
  const std::size_t c = centers.rows();

  // Active centers become the columns of the logit matrix.
  std::vector<int> column_of(c, -1);
  std::vector<std::size_t> active;
  for (std::size_t k = 0; k < c; ++k) {
    if (center_mask[k]) {
      column_of[k] = static_cast<int>(active.size());
      active.push_back(k);
    }
  }

  std::vector<int> positive(n, -1);
  std::vector<bool> row_mask(n, false);
  std::size_t labeled = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y == -1) continue;
    if (y < -1 || y >= static_cast<int>(c)) {
      throw DimensionError("info_nce: label " + std::to_string(y) + " outside [0, " + std::to_string(c) + ")");
    }
    if (!center_mask[static_cast<std::size_t>(y)]) {
      throw ContractError("info_nce: label " + std::to_string(y) + " points at a masked-out center");
    }
    positive[i] = column_of[static_cast<std::size_t>(y)];
    row_mask[i] = true;
    ++labeled;
  }
  if (labeled == 0) return {g.constant(Tensor::scalar(0.0)), 0};

  const Tensor bank = options.normalize ? normalized_rows(centers) : centers;
  Tensor centers_t = Tensor::zeros({d, active.size()});
  for (std::size_t col = 0; col < active.size(); ++col)
    for (std::size_t j = 0; j < d; ++j) centers_t.values[j * active.size() + col] = bank.at(active[col], j);

  Var feats = options.normalize ? l2_normalize_rows(features) : features;
  Var logits = scale(matmul(feats, g.constant(std::move(centers_t))), 1.0 / tau);  // [N x K]
  Var pos = gather(logits, positive);                                                 // [N]

  Var denom_logits = logits;
  if (options.exclude_positive) {
    // A large negative offset on the positive column removes it from the
    // log-sum-exp; rows with no negative left are dropped.
    Tensor offset = Tensor::zeros(logits.shape());
    const std::size_t k = active.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (positive[i] < 0) continue;
      if (k < 2) {
        row_mask[i] = false;
        --labeled;
        continue;
      }
      offset.values[i * k + static_cast<std::size_t>(positive[i])] = -1e300;
    }
    if (labeled == 0) return {g.constant(Tensor::scalar(0.0)), 0};
    denom_logits = add(logits, g.constant(std::move(offset)));
  }
  Var lse = logsumexp_rows(denom_logits);  // [N x 1]
  return {sub(masked_mean(lse, row_mask), masked_mean(pos, row_mask)), labeled};
}

Var contrastive_combined(Var f_s, std::span<const int> y_s, Var f_t, std::span<const int> y_t,
                         const MemoryBank& bank, double tau, const InfoNceOptions& options) {
  auto& g = *f_s.graph;
  auto term = [&](Var f, std::span<const int> y, Domain d) {
    const auto& mask = bank.initialized(d);
    std::vector<int> usable(y.begin(), y.end());
    for (auto& label : usable) {
      if (label >= 0 && static_cast<std::size_t>(label) < mask.size() && !mask[static_cast<std::size_t>(label)]) {
        label = -1;
      }
    }
    return info_nce(f, usable, bank.centers(d), mask, tau, options).loss;
  };
  Var total = g.constant(Tensor::scalar(0.0));
  total = add(total, term(f_s, y_s, Domain::Source));
  total = add(total, term(f_s, y_s, Domain::Target));
  total = add(total, term(f_t, y_t, Domain::Source));
  total = add(total, term(f_t, y_t, Domain::Target));
  return total;
}

LossBreakdown total_objective(double ce, double entropy, double contra, const LossWeights& weights) {
  LossBreakdown b{ce, entropy, contra, 0.0, weights};
  b.total = ce + weights.entropy * entropy + weights.contra * contra;
  return b;
}

Objective total_objective(Var ce, Var entropy, Var contra, const LossWeights& weights) {
  Var total = add(add(ce, scale(entropy, weights.entropy)), scale(contra, weights.contra));
  LossBreakdown b{ce.item(), entropy.item(), contra.item(), total.item(), weights};
  return {total, b};
}

}  // namespace cfcontra
