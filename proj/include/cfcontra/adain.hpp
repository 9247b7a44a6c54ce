#pragma once

// Coarse alignment: per-channel statistics transfer and the content/style
// objectives used to train a small pixel-wise autoencoder.
//
// Every function here treats axis 1 as the channel axis, so the same code
// serves [BxCxHxW] image batches and [N x C] pixel matrices.

#include <cstdint>
#include <vector>

#include "cfcontra/graph.hpp"
#include "cfcontra/nn.hpp"

namespace cfcontra {

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> var;  // population variance

  std::size_t channels() const { return mean.size(); }
};

/// Mean and population variance per channel over every other axis.
ChannelStats channel_stats(const Tensor& x);

/// Renormalizes `content` from its own channel statistics to `style`:
/// (x - mu_c) / sqrt(var_c + eps) * sqrt(var_s) + mu_s.
Tensor adain_transfer(const Tensor& content, const ChannelStats& style, double eps = 1e-5);

/// Same map with caller-supplied content statistics (e.g. domain-level ones).
Tensor adain_renormalize(const Tensor& content, const ChannelStats& content_stats, const ChannelStats& style,
                         double eps = 1e-5);

/// Mean squared difference over all entries.
double content_loss(const Tensor& f_tf, const Tensor& f_s);
/// 0.5 * sum_c ((mu_tf - mu_t)^2 + (sqrt(var_t) - sqrt(var_tf))^2).
double style_loss(const ChannelStats& tf, const ChannelStats& style);

// Differentiable counterparts on [N x C] pixel matrices.
struct ChannelStatsVar {
  Var mean;  // [1 x C]
  Var var;   // [1 x C]
};
ChannelStatsVar channel_stats(Var pixels);
ChannelStatsVar constant_stats(Graph& g, const ChannelStats& s);
Var adain_transfer(Var content, const ChannelStatsVar& content_stats, const ChannelStatsVar& style, double eps);
Var content_loss(Var f_tf, Var f_s);
Var style_loss(const ChannelStatsVar& tf, const ChannelStatsVar& style);

/// Per-pixel autoencoder: encoder Linear(C->D) + ReLU, decoder Linear(D->C).
struct StyleNet {
  Linear encoder;
  Linear decoder;

  StyleNet() = default;
  StyleNet(std::size_t channels, std::size_t features, std::uint64_t seed);

  Var encode(Graph& g, Var pixels);
  Var decode(Graph& g, Var features);
  std::vector<Tensor*> parameters() { return {&encoder.weight, &encoder.bias, &decoder.weight, &decoder.bias}; }

  /// Transfers [N x C] pixels: decode(adain(encode(x), content, style)). The
  /// statistics are in encoder feature space.
  Tensor stylize(const Tensor& pixels, const ChannelStats& content_stats, const ChannelStats& style,
                 double eps) const;
  Tensor encode_values(const Tensor& pixels) const;
};

struct StyleTrainOptions {
  std::size_t iterations = 200;
  double learning_rate = 0.05;
  double style_weight = 1.0;
  double eps = 1e-5;
  std::uint64_t seed = 0;
};

/// Gradient descent on content_loss(enc(dec(t)), enc(x_s)) + w * style_loss,
/// where t is the ADAIN transfer of a random source image's encoding to a
/// random target image's encoding statistics. Images are [BxCxHxW].
/// `history`, when given, receives the loss before each step.
StyleNet train_style_net(StyleNet net, const Tensor& source_images, const Tensor& target_images,
                         const StyleTrainOptions& options, std::vector<double>* history = nullptr);

}  // namespace cfcontra
