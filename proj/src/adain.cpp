#include "cfcontra/adain.hpp"

#include <cmath>

#include "cfcontra/errors.hpp"
#include "cfcontra/image.hpp"
#include "cfcontra/rng.hpp"

namespace cfcontra {

namespace {

struct ChannelLayout {
  std::size_t channels;
  std::size_t inner;  // extent product after the channel axis
};

ChannelLayout layout_of(const Tensor& x) {
  if (x.values.empty()) throw ContractError("channel statistics of an empty tensor");
  if (x.rank() < 2) throw DimensionError("channel tensors need rank >= 2, got " + shape_string(x.shape));
  std::size_t inner = 1;
  for (std::size_t a = 2; a < x.rank(); ++a) inner *= x.shape[a];
  return {x.shape[1], inner};
}

void require_same_channels(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": channel counts " + std::to_string(a) + " and " + std::to_string(b) +
                         " differ");
  }
}

}  // namespace

ChannelStats channel_stats(const Tensor& x) {
  if (x.size() == 0) throw ContractError("channel_stats of an empty tensor");
  const auto [c, inner] = layout_of(x);
  ChannelStats s{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  const double count = static_cast<double>(x.size() / c);
  for (std::size_t i = 0; i < x.size(); ++i) s.mean[(i / inner) % c] += x.values[i];
  for (auto& m : s.mean) m /= count;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.values[i] - s.mean[(i / inner) % c];
    s.var[(i / inner) % c] += d * d;
  }
  for (auto& v : s.var) v /= count;
  return s;
}

Tensor adain_transfer(const Tensor& content, const ChannelStats& style, double eps) {
  return adain_renormalize(content, channel_stats(content), style, eps);
}

Tensor adain_renormalize(const Tensor& content, const ChannelStats& content_stats, const ChannelStats& style,
                         double eps) {
  if (!(eps > 0.0)) throw ContractError("adain: eps must be positive");
  const auto [c, inner] = layout_of(content);
  require_same_channels(c, style.channels(), "adain");
  require_same_channels(c, content_stats.channels(), "adain");
  std::vector<double> gain(c), offset(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    gain[ch] = std::sqrt(style.var[ch]) / std::sqrt(content_stats.var[ch] + eps);
    offset[ch] = style.mean[ch] - content_stats.mean[ch] * gain[ch];
  }
  Tensor out = content;
  out.grad.reset();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto ch = (i / inner) % c;
    out.values[i] = (content.values[i] - content_stats.mean[ch]) * gain[ch] + style.mean[ch];
  }
  return out;
}

double content_loss(const Tensor& f_tf, const Tensor& f_s) {
  if (f_tf.shape != f_s.shape) {
    throw DimensionError("content_loss: shapes " + shape_string(f_tf.shape) + " and " + shape_string(f_s.shape) +
                         " differ");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < f_tf.size(); ++i) {
    const double d = f_tf.values[i] - f_s.values[i];
    s += d * d;
  }
  return s / static_cast<double>(f_tf.size());
}

double style_loss(const ChannelStats& tf, const ChannelStats& style) {
  require_same_channels(tf.channels(), style.channels(), "style_loss");
  double s = 0.0;
  for (std::size_t c = 0; c < tf.channels(); ++c) {
    const double dm = tf.mean[c] - style.mean[c];
    const double ds = std::sqrt(style.var[c]) - std::sqrt(tf.var[c]);
    s += 0.5 * (dm * dm + ds * ds);
  }
  return s;
}

ChannelStatsVar channel_stats(Var pixels) {
  Var mu = column_mean(pixels);
  Var centered = sub(pixels, mu);
  return {mu, column_mean(square(centered))};
}

ChannelStatsVar constant_stats(Graph& g, const ChannelStats& s) {
  const std::size_t c = s.channels();
  return {g.constant(Tensor({1, c}, s.mean)), g.constant(Tensor({1, c}, s.var))};
}

Var adain_transfer(Var content, const ChannelStatsVar& content_stats, const ChannelStatsVar& style, double eps) {
  if (!(eps > 0.0)) throw ContractError("adain: eps must be positive");
  auto& g = *content.graph;
  const std::size_t n = content.value().rows();
  const std::size_t c = content.value().cols();
  require_same_channels(c, style.mean.value().size(), "adain");
  Var shifted_var = add(content_stats.var, g.constant(Tensor::filled({1, c}, eps)));
  Var inv_std = exp(scale(log(shifted_var), -0.5));
  Var gain = mul(inv_std, sqrt(style.var));
  Var normalized = mul(sub(content, content_stats.mean), broadcast_rows(gain, n));
  return add(normalized, style.mean);
}

Var content_loss(Var f_tf, Var f_s) {
  if (f_tf.shape() != f_s.shape()) {
    throw DimensionError("content_loss: shapes " + shape_string(f_tf.shape()) + " and " + shape_string(f_s.shape()) +
                         " differ");
  }
  return mean(square(sub(f_tf, f_s)));
}

Var style_loss(const ChannelStatsVar& tf, const ChannelStatsVar& style) {
  require_same_channels(tf.mean.value().size(), style.mean.value().size(), "style_loss");
  Var dm = square(sub(tf.mean, style.mean));
  Var ds = square(sub(sqrt(style.var), sqrt(tf.var)));
  return scale(sum(add(dm, ds)), 0.5);
}

StyleNet::StyleNet(std::size_t channels, std::size_t features, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, 0x57);
  encoder = Linear(channels, features, rng);
  decoder = Linear(features, channels, rng);
}

Var StyleNet::encode(Graph& g, Var pixels) { return relu(encoder.forward(g, pixels)); }
Var StyleNet::decode(Graph& g, Var features) { return decoder.forward(g, features); }

Tensor StyleNet::encode_values(const Tensor& pixels) const {
  Tensor f = encoder.apply(pixels);
  for (auto& v : f.values) v = v > 0.0 ? v : 0.0;
  return f;
}

Tensor StyleNet::stylize(const Tensor& pixels, const ChannelStats& content_stats, const ChannelStats& style,
                         double eps) const {
  return decoder.apply(adain_renormalize(encode_values(pixels), content_stats, style, eps));
}

StyleNet train_style_net(StyleNet net, const Tensor& source_images, const Tensor& target_images,
                         const StyleTrainOptions& options, std::vector<double>* history) {
  if (source_images.rank() != 4 || target_images.rank() != 4) {
    throw DimensionError("train_style_net expects [BxCxHxW] image batches");
  }
  require_same_channels(source_images.shape[1], target_images.shape[1], "train_style_net");
  require_same_channels(source_images.shape[1], net.encoder.in_dim(), "train_style_net");
  Rng rng = Rng::derive(options.seed, 0x5717);
  const auto params = net.parameters();
  for (std::size_t it = 0; it < options.iterations; ++it) {
    const Tensor xs = image_pixels(source_images, rng.index(source_images.shape[0]));
    const Tensor xt = image_pixels(target_images, rng.index(target_images.shape[0]));
    Graph g;
    Var f_s = net.encode(g, g.constant(xs));
    Var f_t = net.encode(g, g.constant(xt));
    const auto style = channel_stats(f_t);
    Var t = adain_transfer(f_s, channel_stats(f_s), style, options.eps);
    Var f_tf = net.encode(g, net.decode(g, t));
    Var loss = add(content_loss(f_tf, f_s), scale(style_loss(channel_stats(f_tf), style), options.style_weight));
    if (history) history->push_back(loss.item());
    g.backward(loss);
    sgd_step(params, options.learning_rate);
  }
  return net;
}

}  // namespace cfcontra
