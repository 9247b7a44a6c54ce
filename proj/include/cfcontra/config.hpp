#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfcontra/heads.hpp"

namespace cfcontra {

/// Desk-scale two-domain segmentation task. The target domain applies a
/// per-channel affine shift plus Gaussian noise to the source process.
struct SynthSpec {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t class_count = 5;
  std::size_t channels = 3;
  /// class_count x channels row-major; empty means drawn from the seed.
  std::vector<double> class_means;
  double class_std = 0.12;
  /// Per-channel target scale and offset; empty means the built-in shift.
  std::vector<double> shift_scale;
  std::vector<double> shift_offset;
  double noise = 0.05;
  std::string layout = "voronoi";  // voronoi | rectangles
  std::size_t regions = 8;
  std::size_t source_train = 200;
  std::size_t target_train = 200;
  std::size_t target_eval = 50;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
  std::vector<double> resolved_shift_scale() const;
  std::vector<double> resolved_shift_offset() const;
};

enum class TransferDirection { SourceToTarget, TargetToSource };
std::string to_string(TransferDirection d);
TransferDirection parse_transfer_direction(const std::string& s);

struct RunConfig {
  double tau = 0.07;
  double alpha = 0.9;
  double threshold = 0.05;
  double lambda_ent = 1e-3;
  double lambda_contra = 1e-3;
  double learning_rate = 0.1;
  std::size_t iterations = 2000;
  std::size_t batch_source = 1;
  std::size_t batch_target = 1;
  HeadKind head = HeadKind::Moco;
  std::size_t feature_dim = 16;
  std::size_t hidden_dim = 0;    // 0: feature_dim
  std::size_t head_out_dim = 0;  // 0: feature_dim
  bool use_style_transfer = true;
  bool use_entropy = true;
  bool use_contrastive = true;
  TransferDirection transfer_direction = TransferDirection::SourceToTarget;
  std::string style_mode = "pixel";  // pixel | net
  std::size_t style_iters = 200;
  double style_lr = 0.05;
  double style_weight = 1.0;
  double adain_eps = 1e-5;
  bool exclude_positive = false;
  bool normalize_features = false;
  bool warm_start = false;
  std::uint64_t seed = 0;
  std::string out_dir = ".";

  /// Throws ConfigError when an invariant (tau > 0, alpha in [0,1], ...) fails.
  void validate() const;
  std::size_t resolved_hidden_dim() const { return hidden_dim ? hidden_dim : feature_dim; }
  std::size_t resolved_head_out_dim() const { return head_out_dim ? head_out_dim : feature_dim; }
};

nlohmann::json to_json(const RunConfig& c);
nlohmann::json to_json(const SynthSpec& s);

/// Reads the RunConfig fields present in `j`; unknown keys are ignored here
/// so that one flat document can hold both RunConfig and SynthSpec fields.
void apply_json(const nlohmann::json& j, RunConfig& c);
void apply_json(const nlohmann::json& j, SynthSpec& s);

/// Loads a flat JSON document and applies it to both structures. Throws
/// ConfigError for unreadable files, non-object documents, unknown keys or
/// ill-typed values.
void load_config_file(const std::string& path, RunConfig& run, SynthSpec& synth);

}  // namespace cfcontra
