#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "cfcontra/nn.hpp"

namespace cfcontra {

/// Remapping heads placed between backbone features and the contrastive loss.
///   Linear: Linear
///   Moco:   Linear, ReLU, Linear
///   Byol:   Linear, BatchNorm, ReLU, Linear
///   Simclr: Linear, BatchNorm, ReLU, Linear, BatchNorm
enum class HeadKind { None, Linear, Moco, Byol, Simclr };

std::string to_string(HeadKind kind);
/// Accepts none/linear/moco/byol/simclr, case-insensitive.
HeadKind parse_head_kind(const std::string& name);

struct ReluLayer {};
using HeadLayer = std::variant<Linear, BatchNorm1d, ReluLayer>;

struct HeadModule {
  HeadKind kind = HeadKind::None;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  std::size_t output_dim = 0;
  std::vector<HeadLayer> layers;

  std::vector<Tensor*> parameters();
  std::size_t parameter_count();
  std::size_t count_batch_norms() const;
  /// Running statistics of every BatchNorm layer, in layer order.
  std::vector<BatchNormStats*> batch_norm_stats();
};

/// Uniform +-1/sqrt(fan_in) init from `seed`. For HeadKind::None the
/// dimensions collapse to d_in and the head has no layers.
HeadModule build_head(HeadKind kind, std::size_t d_in, std::size_t d_hidden, std::size_t d_out, std::uint64_t seed);

Var head_forward(HeadModule& head, Graph& g, Var x, Mode mode);

}  // namespace cfcontra
