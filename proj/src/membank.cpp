#include "cfcontra/membank.hpp"

#include <cmath>
#include <limits>

#include "cfcontra/errors.hpp"

namespace cfcontra {

ClassCenters class_centers(const Tensor& features, std::span<const int> labels, std::size_t class_count) {
  const std::size_t n = features.rows(), d = features.cols();
  if (labels.size() != n) {
    throw DimensionError("class_centers: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                         " features");
  }
  ClassCenters out{Tensor::zeros({class_count, d}), std::vector<std::size_t>(class_count, 0)};
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y == -1) continue;
    if (y < -1 || y >= static_cast<int>(class_count)) {
      throw DimensionError("class_centers: label " + std::to_string(y) + " outside [0, " +
                           std::to_string(class_count) + ")");
    }
    const auto c = static_cast<std::size_t>(y);
    ++out.counts[c];
    for (std::size_t j = 0; j < d; ++j) out.centers.values[c * d + j] += features.values[i * d + j];
  }
  for (std::size_t c = 0; c < class_count; ++c) {
    if (out.counts[c] == 0) continue;
    const double inv = 1.0 / static_cast<double>(out.counts[c]);
    for (std::size_t j = 0; j < d; ++j) out.centers.values[c * d + j] *= inv;
  }
  return out;
}

MemoryBank::MemoryBank(std::size_t class_count, std::size_t feature_dim, double alpha)
    : class_count_(class_count),
      feature_dim_(feature_dim),
      alpha_(alpha),
      source_(Tensor::zeros({class_count, feature_dim})),
      target_(Tensor::zeros({class_count, feature_dim})),
      source_init_(class_count, false),
      target_init_(class_count, false) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("memory bank momentum must lie in [0, 1]");
}

std::size_t MemoryBank::initialized_count(Domain d) const {
  std::size_t n = 0;
  for (bool b : initialized(d)) n += b ? 1 : 0;
  return n;
}

void MemoryBank::update(Domain d, const Tensor& batch_means, std::span<const std::size_t> counts) {
  if (batch_means.rank() != 2 || batch_means.shape[0] != class_count_ || batch_means.shape[1] != feature_dim_ ||
      counts.size() != class_count_) {
    throw DimensionError("bank update: means " + shape_string(batch_means.shape) + " with " +
                         std::to_string(counts.size()) + " counts for a " + std::to_string(class_count_) + "x" +
                         std::to_string(feature_dim_) + " bank");
  }
  Tensor& rows = d == Domain::Source ? source_ : target_;
  auto& init = d == Domain::Source ? source_init_ : target_init_;
  for (std::size_t c = 0; c < class_count_; ++c) {
    if (counts[c] == 0) continue;
    for (std::size_t j = 0; j < feature_dim_; ++j) {
      double& v = rows.values[c * feature_dim_ + j];
      const double m = batch_means.values[c * feature_dim_ + j];
      v = init[c] ? alpha_ * v + (1.0 - alpha_) * m : m;
    }
    init[c] = true;
  }
}

void MemoryBank::set_row(Domain d, std::size_t cls, std::span<const double> row) {
  if (cls >= class_count_ || row.size() != feature_dim_) throw DimensionError("bank set_row: bad class or width");
  Tensor& rows = d == Domain::Source ? source_ : target_;
  std::copy(row.begin(), row.end(), rows.values.begin() + static_cast<std::ptrdiff_t>(cls * feature_dim_));
  (d == Domain::Source ? source_init_ : target_init_)[cls] = true;
}

std::vector<Tensor> MemoryBank::to_tensors() const {
  auto flags = [](const std::vector<bool>& f) {
    std::vector<double> v(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) v[i] = f[i] ? 1.0 : 0.0;
    return Tensor({f.size()}, std::move(v));
  };
  return {source_, target_, flags(source_init_), flags(target_init_)};
}

MemoryBank MemoryBank::from_tensors(const std::vector<Tensor>& t, double alpha) {
  if (t.size() != 4 || t[0].rank() != 2 || t[1].shape != t[0].shape || t[2].size() != t[0].shape[0] ||
      t[3].size() != t[0].shape[0]) {
    throw FormatError("malformed memory bank tensors");
  }
  MemoryBank bank(t[0].shape[0], t[0].shape[1], alpha);
  bank.source_ = t[0];
  bank.target_ = t[1];
  for (std::size_t c = 0; c < bank.class_count_; ++c) {
    bank.source_init_[c] = t[2].values[c] != 0.0;
    bank.target_init_[c] = t[3].values[c] != 0.0;
  }
  return bank;
}

PseudoLabelMap assign_pseudo_labels(const Tensor& features, const MemoryBank& bank, double threshold) {
  if (!(threshold >= 0.0)) throw ContractError("pseudo-label threshold must be >= 0");
  if (bank.initialized_count(Domain::Source) < 2) {
    throw ContractError("pseudo-labeling needs at least two initialized source centers");
  }
  const std::size_t n = features.rows(), d = features.cols();
  if (d != bank.feature_dim()) {
    throw DimensionError("pseudo-labeling: features of width " + std::to_string(d) + " against a bank of width " +
                         std::to_string(bank.feature_dim()));
  }
  const auto& v = bank.centers(Domain::Source).values;
  const auto& init = bank.initialized(Domain::Source);
  PseudoLabelMap labels(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    double second = best;
    int arg = -1;
    for (std::size_t c = 0; c < bank.class_count(); ++c) {
      if (!init[c]) continue;
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = features.values[i * d + j] - v[c * d + j];
        s += diff * diff;
      }
      const double dist = std::sqrt(s);
      if (dist < best) {
        second = best;
        best = dist;
        arg = static_cast<int>(c);
      } else if (dist < second) {
        second = dist;
      }
    }
    if (second - best > threshold) labels[i] = arg;
  }
  return labels;
}

PseudoLabelAccuracy pseudo_label_accuracy(std::span<const int> pseudo, std::span<const int> truth) {
  if (pseudo.size() != truth.size()) {
    throw DimensionError("pseudo_label_accuracy: " + std::to_string(pseudo.size()) + " pseudo-labels against " +
                         std::to_string(truth.size()) + " truth labels");
  }
  PseudoLabelAccuracy out;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pseudo.size(); ++i) {
    if (pseudo[i] < 0) continue;
    ++out.assigned;
    if (pseudo[i] == truth[i]) ++correct;
  }
  if (out.assigned > 0) out.accuracy = static_cast<double>(correct) / static_cast<double>(out.assigned);
  return out;
}

}  // namespace cfcontra
