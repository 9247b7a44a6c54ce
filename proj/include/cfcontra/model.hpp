#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cfcontra/adain.hpp"
#include "cfcontra/config.hpp"
#include "cfcontra/heads.hpp"
#include "cfcontra/membank.hpp"

namespace cfcontra {

/// Per-pixel segmentation network: a two-layer ReLU MLP backbone producing
/// features, a linear classifier, and the contrastive head on top of the
/// backbone features.
struct SegModel {
  Linear stem;        // channels -> feature_dim
  Linear mix;         // feature_dim -> feature_dim
  Linear classifier;  // feature_dim -> classes
  HeadModule head;

  static SegModel build(std::size_t channels, std::size_t class_count, const RunConfig& config);

  struct Outputs {
    Var features;  // [N x D], post-ReLU
    Var probs;     // [N x C]
  };
  Outputs forward(Graph& g, Var pixels);

  Tensor backbone_values(const Tensor& pixels) const;
  Tensor probability_values(const Tensor& features) const;
  std::vector<int> predict(const Tensor& pixels) const;

  /// Backbone and classifier parameters followed by head parameters.
  std::vector<Tensor*> parameters();
};

/// Everything needed to resume evaluation of a trained run.
struct Checkpoint {
  RunConfig config;
  std::size_t class_count = 0;
  std::size_t channels = 0;
  std::size_t iterations_done = 0;
  SegModel model;
  MemoryBank label_bank;   // backbone features; drives pseudo-labels
  MemoryBank contra_bank;  // head outputs; drives the contrastive loss
  ChannelStats source_stats;
  ChannelStats target_stats;
  std::optional<StyleNet> style_net;
  ChannelStats source_code_stats;  // encoder-space statistics for style_net
  ChannelStats target_code_stats;

  /// Applies the configured coarse alignment to [N x C] source or target
  /// pixels; identity for the side that is not transferred.
  Tensor align_source(const Tensor& pixels) const;
  Tensor align_target(const Tensor& pixels) const;
};

/// Single file: one JSON header line (config echo, dimensions and the ordered
/// tensor names) followed by a u32 tensor count and the tensors in the binary
/// tensor layout.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cfcontra
