#pragma once

#include <span>
#include <vector>

#include "cfcontra/graph.hpp"
#include "cfcontra/membank.hpp"

namespace cfcontra {

/// Mean over pixels with label != -1 of -log p[label] (clamped log).
/// Throws ContractError when every label is -1.
Var cross_entropy(Var probs, std::span<const int> labels);

/// Per-pixel entropy normalized by log C, averaged over pixels. Lies in [0, 1].
/// Throws ContractError for C < 2.
Var entropy_loss(Var probs);

struct InfoNceOptions {
  /// Drop the positive center from the denominator (literal sum over k != i).
  bool exclude_positive = false;
  /// L2-normalize features and centers before the inner product.
  bool normalize = false;
};

struct ContrastiveTerm {
  Var loss;
  std::size_t labeled = 0;  // features that contributed
  bool empty() const { return labeled == 0; }
};

/// Mean over labeled features of
///   -log( exp(<f, V+>/tau) / sum_j exp(<f, V_j>/tau) )
/// with j ranging over centers whose mask entry is set. Centers are constants.
/// An all -1 label set yields a zero loss and labeled == 0.
ContrastiveTerm info_nce(Var features, std::span<const int> labels, const Tensor& centers,
                         const std::vector<bool>& center_mask, double tau, const InfoNceOptions& options = {});

/// L(f_s,V_s) + L(f_s,V_t) + L(f_t,V_s) + L(f_t,V_t). Each term masks the
/// uninitialized rows of its bank and ignores features whose label points at
/// such a row; a term with no remaining features contributes 0.
Var contrastive_combined(Var f_s, std::span<const int> y_s, Var f_t, std::span<const int> y_t,
                         const MemoryBank& bank, double tau, const InfoNceOptions& options = {});

struct LossWeights {
  double entropy = 1e-3;
  double contra = 1e-3;
};

struct LossBreakdown {
  double ce = 0.0;
  double entropy = 0.0;
  double contra = 0.0;
  double total = 0.0;
  LossWeights weights;
};

struct Objective {
  Var total;
  LossBreakdown breakdown;
};

/// total = ce + w.entropy * entropy + w.contra * contra.
Objective total_objective(Var ce, Var entropy, Var contra, const LossWeights& weights);
LossBreakdown total_objective(double ce, double entropy, double contra, const LossWeights& weights);

}  // namespace cfcontra
