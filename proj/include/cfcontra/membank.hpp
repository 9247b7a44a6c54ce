#pragma once

#include <span>
#include <vector>

#include "cfcontra/tensor.hpp"

namespace cfcontra {

enum class Domain { Source, Target };

/// Per-class mean features of a batch. Rows of classes with count 0 are left
/// at zero and must not be read.
struct ClassCenters {
  Tensor centers;                   // [C x D]
  std::vector<std::size_t> counts;  // per class
};

/// Means of `features` rows grouped by label; label -1 rows are skipped.
/// Throws DimensionError for labels outside {-1} U [0, class_count).
ClassCenters class_centers(const Tensor& features, std::span<const int> labels, std::size_t class_count);

/// Source and target class centers with per-row initialization flags,
/// updated as V <- alpha V + (1 - alpha) M.
class MemoryBank {
 public:
  MemoryBank() = default;
  MemoryBank(std::size_t class_count, std::size_t feature_dim, double alpha);

  std::size_t class_count() const { return class_count_; }
  std::size_t feature_dim() const { return feature_dim_; }
  double alpha() const { return alpha_; }

  const Tensor& centers(Domain d) const { return d == Domain::Source ? source_ : target_; }
  const std::vector<bool>& initialized(Domain d) const {
    return d == Domain::Source ? source_init_ : target_init_;
  }
  std::size_t initialized_count(Domain d) const;

  /// For every class with counts[i] > 0: the first observation sets the row,
  /// later ones apply the momentum rule. Classes with count 0 are untouched.
  void update(Domain d, const Tensor& batch_means, std::span<const std::size_t> counts);
  void update(Domain d, const ClassCenters& batch) { update(d, batch.centers, batch.counts); }

  /// Writes a row and marks it initialized (warm start from a full pass).
  void set_row(Domain d, std::size_t cls, std::span<const double> row);

  /// Flags are stored as 0/1 tensors so the whole bank uses the tensor layout.
  std::vector<Tensor> to_tensors() const;
  static MemoryBank from_tensors(const std::vector<Tensor>& tensors, double alpha);

  bool operator==(const MemoryBank&) const = default;

 private:
  std::size_t class_count_ = 0;
  std::size_t feature_dim_ = 0;
  double alpha_ = 0.9;
  Tensor source_;
  Tensor target_;
  std::vector<bool> source_init_;
  std::vector<bool> target_init_;
};

/// Per-pixel labels in {-1} U [0, C); -1 means ignored.
using PseudoLabelMap = std::vector<int>;

/// Nearest initialized source center by Euclidean distance, kept only when the
/// second-nearest is farther by more than `threshold`.
/// Throws ContractError with fewer than two initialized source rows.
PseudoLabelMap assign_pseudo_labels(const Tensor& features, const MemoryBank& bank, double threshold);

struct PseudoLabelAccuracy {
  double accuracy = 0.0;
  std::size_t assigned = 0;
  bool has_assignments() const { return assigned > 0; }
};

/// Fraction of assigned (non -1) pixels whose label matches the truth.
PseudoLabelAccuracy pseudo_label_accuracy(std::span<const int> pseudo, std::span<const int> truth);

}  // namespace cfcontra
