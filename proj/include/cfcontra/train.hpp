#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfcontra/dataset.hpp"
#include "cfcontra/model.hpp"

namespace cfcontra {

struct MetricsRecord {
  std::size_t iteration = 0;
  double ce = 0.0;
  double entropy = 0.0;
  double contra = 0.0;
  double total = 0.0;
  double pseudo_acc = 0.0;
  double labeled_frac = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<MetricsRecord> metrics;
};

/// Initial checkpoint for `config` on `data`: fresh model, empty banks, domain
/// statistics and (style_mode == "net") a trained style network.
Checkpoint initialize(const RunConfig& config, const Dataset& data);

/// Runs config.iterations steps of plain gradient descent on
/// ce + lambda_ent * entropy + lambda_contra * contra. Terms that are toggled
/// off are logged as 0. Throws DivergenceError on a non-finite objective.
TrainResult train(const RunConfig& config, const Dataset& data);

struct IouResult {
  std::vector<std::optional<double>> per_class;  // empty when the union is empty
  double miou = 0.0;
};

/// TP / (TP + FP + FN) per class; mIOU averages classes with non-empty union.
IouResult segmentation_iou(std::span<const int> predicted, std::span<const int> truth, std::size_t class_count);

struct EvalResult {
  IouResult iou;
  double pseudo_acc = 0.0;
  double labeled_frac = 0.0;
};

/// Predicts every pixel of `split` (after the configured target alignment)
/// and scores it against the split's labels. Pseudo-label accuracy uses the
/// checkpoint's source centers. Throws ContractError on a class-count
/// mismatch.
EvalResult evaluate(const Checkpoint& ckpt, const SegSplit& split);

/// iteration,ce,entropy,contra,total,pseudo_acc,labeled_frac with %.17g values.
std::string metrics_csv(const std::vector<MetricsRecord>& metrics);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& metrics);

/// {"per_class_iou": [...], "miou": m, "pseudo_acc": p, "labeled_frac": f, "config": {...}}
nlohmann::json results_json(const EvalResult& eval, const RunConfig& config);

/// Mean of `field` over the last `fraction` of the series (at least one row).
double tail_mean(const std::vector<MetricsRecord>& metrics, double MetricsRecord::*field, double fraction = 0.1);

}  // namespace cfcontra
