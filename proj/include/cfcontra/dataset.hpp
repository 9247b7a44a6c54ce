#pragma once

#include <string>
#include <vector>

#include "cfcontra/config.hpp"
#include "cfcontra/tensor.hpp"

namespace cfcontra {

enum class LabelUse {
  Train,     // supervised labels (source)
  HeldOut,   // stored for metrics only, never used as supervision
};

/// Images [BxCxHxW] with per-pixel labels [B*H*W] in image-major order.
struct SegSplit {
  std::string name;
  Tensor images;
  std::vector<int> labels;
  std::size_t class_count = 0;
  LabelUse label_use = LabelUse::Train;

  std::size_t count() const { return images.shape[0]; }
  std::size_t pixels_per_image() const { return images.shape[2] * images.shape[3]; }
  /// Labels of the listed images, concatenated.
  std::vector<int> labels_of(const std::vector<std::size_t>& which) const;
};

struct Dataset {
  SynthSpec spec;
  SegSplit source_train;
  SegSplit target_train;
  SegSplit target_eval;
};

/// Deterministic in spec.seed. Throws GenerationError when some class cannot
/// be made to appear in every training split within a bounded number of
/// retries.
Dataset generate_dataset(const SynthSpec& spec);

/// One file per split: a single-line JSON header
///   {"shape":[B,C,H,W],"class_count":C,"seed":s,"spec":{...},"split":name,"labels":"train"|"held_out"}
/// terminated by '\n', then the image tensor and the label tensor [BxHxW] in
/// the binary tensor layout.
void save_split(const std::string& path, const SegSplit& split, const SynthSpec& spec);
SegSplit load_split(const std::string& path, SynthSpec* spec = nullptr);

/// source_train.bin, target_train.bin and target_eval.bin inside `dir`.
void save_dataset(const std::string& dir, const Dataset& data);
Dataset load_dataset(const std::string& dir);

}  // namespace cfcontra
