#include "cfcontra/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "cfcontra/errors.hpp"
#include "cfcontra/image.hpp"
#include "cfcontra/losses.hpp"

namespace cfcontra {

namespace {

std::vector<std::size_t> sample(Rng& rng, std::size_t count, std::size_t n) {
  std::vector<std::size_t> out(count);
  for (auto& i : out) i = rng.index(n);
  return out;
}

void warm_start_banks(Checkpoint& ckpt, const SegSplit& source) {
  const std::size_t c = ckpt.class_count;
  std::vector<std::size_t> all(source.count());
  for (std::size_t b = 0; b < all.size(); ++b) all[b] = b;
  const Tensor pixels = ckpt.align_source(batch_pixels(source.images, all));
  const Tensor features = ckpt.model.backbone_values(pixels);
  const auto centers = class_centers(features, source.labels, c);
  Graph g;
  Var head_out = head_forward(ckpt.model.head, g, g.constant(features), Mode::Eval);
  const auto head_centers = class_centers(head_out.value(), source.labels, c);
  for (std::size_t k = 0; k < c; ++k) {
    if (centers.counts[k] == 0) continue;
    ckpt.label_bank.set_row(Domain::Source, k, centers.centers.row(k));
    ckpt.contra_bank.set_row(Domain::Source, k, head_centers.centers.row(k));
  }
}

}  // namespace

Checkpoint initialize(const RunConfig& config, const Dataset& data) {
  config.validate();
  const auto& spec = data.spec;
  if (data.source_train.images.rank() != 4) throw ContractError("dataset has no source images");
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.class_count = spec.class_count;
  ckpt.channels = data.source_train.images.shape[1];
  ckpt.model = SegModel::build(ckpt.channels, ckpt.class_count, config);
  ckpt.label_bank = MemoryBank(ckpt.class_count, config.feature_dim, config.alpha);
  ckpt.contra_bank = MemoryBank(ckpt.class_count, ckpt.model.head.output_dim, config.alpha);
  ckpt.source_stats = channel_stats(data.source_train.images);
  ckpt.target_stats = channel_stats(data.target_train.images);
  if (config.use_style_transfer && config.style_mode == "net") {
    StyleTrainOptions opts;
    opts.iterations = config.style_iters;
    opts.learning_rate = config.style_lr;
    opts.style_weight = config.style_weight;
    opts.eps = config.adain_eps;
    opts.seed = config.seed;
    StyleNet net(ckpt.channels, config.feature_dim, config.seed);
    net = train_style_net(std::move(net), data.source_train.images, data.target_train.images, opts);
    std::vector<std::size_t> all_s(data.source_train.count()), all_t(data.target_train.count());
    for (std::size_t i = 0; i < all_s.size(); ++i) all_s[i] = i;
    for (std::size_t i = 0; i < all_t.size(); ++i) all_t[i] = i;
    ckpt.source_code_stats = channel_stats(net.encode_values(batch_pixels(data.source_train.images, all_s)));
    ckpt.target_code_stats = channel_stats(net.encode_values(batch_pixels(data.target_train.images, all_t)));
    ckpt.style_net = std::move(net);
  }
  if (config.warm_start) warm_start_banks(ckpt, data.source_train);
  return ckpt;
}

TrainResult train(const RunConfig& config, const Dataset& data) {
  TrainResult result{initialize(config, data), {}};
  Checkpoint& ckpt = result.checkpoint;
  SegModel& model = ckpt.model;
  const auto params = model.parameters();
  const auto& source = data.source_train;
  const auto& target = data.target_train;
  const LossWeights weights{config.lambda_ent, config.lambda_contra};
  const InfoNceOptions nce{config.exclude_positive, config.normalize_features};
  Rng rng = Rng::derive(config.seed, 11);
  result.metrics.reserve(config.iterations);

  for (std::size_t it = 0; it < config.iterations; ++it) {
    const auto src_idx = sample(rng, config.batch_source, source.count());
    const auto tgt_idx = sample(rng, config.batch_target, target.count());
    const Tensor xs = ckpt.align_source(batch_pixels(source.images, src_idx));
    const Tensor xt = ckpt.align_target(batch_pixels(target.images, tgt_idx));
    const std::vector<int> ys = source.labels_of(src_idx);
    const std::vector<int> yt_truth = target.labels_of(tgt_idx);

    Graph g;
    auto out_s = model.forward(g, g.constant(xs));
    auto out_t = model.forward(g, g.constant(xt));
    Var zero = g.constant(Tensor::scalar(0.0));
    Var ce = cross_entropy(out_s.probs, ys);
    Var ent = config.use_entropy ? entropy_loss(out_t.probs) : zero;

    // Centers only see values; no gradient reaches the banks.
    const Tensor& fs = out_s.features.value();
    const Tensor& ft = out_t.features.value();
    ckpt.label_bank.update(Domain::Source, class_centers(fs, ys, ckpt.class_count));
    PseudoLabelMap pseudo(ft.rows(), -1);
    if (ckpt.label_bank.initialized_count(Domain::Source) >= 2) {
      pseudo = assign_pseudo_labels(ft, ckpt.label_bank, config.threshold);
    }
    ckpt.label_bank.update(Domain::Target, class_centers(ft, pseudo, ckpt.class_count));

    Var contra = zero;
    if (config.use_contrastive) {
      Var hs = head_forward(model.head, g, out_s.features, Mode::Train);
      Var ht = head_forward(model.head, g, out_t.features, Mode::Train);
      ckpt.contra_bank.update(Domain::Source, class_centers(hs.value(), ys, ckpt.class_count));
      ckpt.contra_bank.update(Domain::Target, class_centers(ht.value(), pseudo, ckpt.class_count));
      contra = contrastive_combined(hs, ys, ht, pseudo, ckpt.contra_bank, config.tau, nce);
    }

    const auto objective = total_objective(ce, ent, contra, weights);
    if (!std::isfinite(objective.breakdown.total)) {
      throw DivergenceError("objective became non-finite at iteration " + std::to_string(it) +
                            " (ce=" + std::to_string(objective.breakdown.ce) +
                            ", entropy=" + std::to_string(objective.breakdown.entropy) +
                            ", contra=" + std::to_string(objective.breakdown.contra) + ")");
    }
    g.backward(objective.total);
    sgd_step(params, config.learning_rate);

    const auto acc = pseudo_label_accuracy(pseudo, yt_truth);
    const auto& b = objective.breakdown;
    result.metrics.push_back({it, b.ce, b.entropy, b.contra, b.total, acc.accuracy,
                              static_cast<double>(acc.assigned) / static_cast<double>(pseudo.size())});
    ckpt.iterations_done = it + 1;
  }
  return result;
}

IouResult segmentation_iou(std::span<const int> predicted, std::span<const int> truth, std::size_t class_count) {
  if (predicted.size() != truth.size()) {
    throw DimensionError("segmentation_iou: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(truth.size()) + " labels");
  }
  std::vector<std::size_t> tp(class_count, 0), fp(class_count, 0), fn(class_count, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int p = predicted[i], t = truth[i];
    if (p < 0 || t < 0 || p >= static_cast<int>(class_count) || t >= static_cast<int>(class_count)) {
      throw ContractError("segmentation_iou: label outside [0, " + std::to_string(class_count) + ")");
    }
    if (p == t) {
      ++tp[static_cast<std::size_t>(p)];
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(t)];
    }
  }
  IouResult r;
  r.per_class.resize(class_count);
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < class_count; ++c) {
    const std::size_t uni = tp[c] + fp[c] + fn[c];
    if (uni == 0) continue;
    r.per_class[c] = static_cast<double>(tp[c]) / static_cast<double>(uni);
    total += *r.per_class[c];
    ++present;
  }
  r.miou = present ? total / static_cast<double>(present) : 0.0;
  return r;
}

EvalResult evaluate(const Checkpoint& ckpt, const SegSplit& split) {
  if (split.images.rank() != 4) throw ContractError("evaluation split has no images");
  if (split.images.shape[1] != ckpt.channels) {
    throw ContractError("evaluation split has " + std::to_string(split.images.shape[1]) +
                        " channels, checkpoint expects " + std::to_string(ckpt.channels));
  }
  if (split.class_count != 0 && split.class_count != ckpt.class_count) {
    throw ContractError("evaluation split has " + std::to_string(split.class_count) + " classes, checkpoint has " +
                        std::to_string(ckpt.class_count));
  }
  for (int y : split.labels) {
    if (y < 0 || y >= static_cast<int>(ckpt.class_count)) {
      throw ContractError("evaluation labels exceed the checkpoint's " + std::to_string(ckpt.class_count) +
                          " classes");
    }
  }
  std::vector<int> predicted;
  std::vector<int> pseudo;
  predicted.reserve(split.labels.size());
  const bool can_label = ckpt.label_bank.initialized_count(Domain::Source) >= 2;
  for (std::size_t b = 0; b < split.count(); ++b) {
    const Tensor pixels = ckpt.align_target(image_pixels(split.images, b));
    const Tensor features = ckpt.model.backbone_values(pixels);
    const Tensor logits = ckpt.model.classifier.apply(features);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
      const auto r = logits.row(i);
      predicted.push_back(static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin()));
    }
    if (can_label) {
      const auto p = assign_pseudo_labels(features, ckpt.label_bank, ckpt.config.threshold);
      pseudo.insert(pseudo.end(), p.begin(), p.end());
    } else {
      pseudo.insert(pseudo.end(), logits.rows(), -1);
    }
  }
  EvalResult out;
  out.iou = segmentation_iou(predicted, split.labels, ckpt.class_count);
  const auto acc = pseudo_label_accuracy(pseudo, split.labels);
  out.pseudo_acc = acc.accuracy;
  out.labeled_frac = static_cast<double>(acc.assigned) / static_cast<double>(pseudo.size());
  return out;
}

std::string metrics_csv(const std::vector<MetricsRecord>& metrics) {
  std::string s = "iteration,ce,entropy,contra,total,pseudo_acc,labeled_frac\n";
  char buf[512];
  for (const auto& m : metrics) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", m.iteration, m.ce, m.entropy,
                  m.contra, m.total, m.pseudo_acc, m.labeled_frac);
    s += buf;
  }
  return s;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRecord>& metrics) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << metrics_csv(metrics);
}

nlohmann::json results_json(const EvalResult& eval, const RunConfig& config) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& v : eval.iou.per_class) {
    if (v) {
      per_class.push_back(*v);
    } else {
      per_class.push_back(nullptr);
    }
  }
  return {{"per_class_iou", per_class},
          {"miou", eval.iou.miou},
          {"pseudo_acc", eval.pseudo_acc},
          {"labeled_frac", eval.labeled_frac},
          {"config", to_json(config)}};
}

double tail_mean(const std::vector<MetricsRecord>& metrics, double MetricsRecord::*field, double fraction) {
  if (metrics.empty()) return 0.0;
  auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(metrics.size())));
  n = std::clamp<std::size_t>(n, 1, metrics.size());
  double s = 0.0;
  for (std::size_t i = metrics.size() - n; i < metrics.size(); ++i) s += metrics[i].*field;
  return s / static_cast<double>(n);
}

}  // namespace cfcontra
