#include "cfcontra/model.hpp"

#include <algorithm>
#include <fstream>

#include "cfcontra/errors.hpp"

namespace cfcontra {

SegModel SegModel::build(std::size_t channels, std::size_t class_count, const RunConfig& config) {
  Rng rng = Rng::derive(config.seed, 10);
  SegModel m;
  const auto d = config.feature_dim;
  m.stem = Linear(channels, d, rng);
  m.mix = Linear(d, d, rng);
  m.classifier = Linear(d, class_count, rng);
  m.head = build_head(config.head, d, config.resolved_hidden_dim(), config.resolved_head_out_dim(), config.seed);
  return m;
}

SegModel::Outputs SegModel::forward(Graph& g, Var pixels) {
  Var f = relu(mix.forward(g, relu(stem.forward(g, pixels))));
  return {f, softmax(classifier.forward(g, f))};
}

namespace {

void relu_inplace(Tensor& t) {
  for (auto& v : t.values) v = v > 0.0 ? v : 0.0;
}

}  // namespace

Tensor SegModel::backbone_values(const Tensor& pixels) const {
  Tensor h = stem.apply(pixels);
  relu_inplace(h);
  h = mix.apply(h);
  relu_inplace(h);
  return h;
}

Tensor SegModel::probability_values(const Tensor& features) const {
  Graph g;
  Linear c = classifier;
  return softmax(c.forward(g, g.constant(features))).value();
}

std::vector<int> SegModel::predict(const Tensor& pixels) const {
  const Tensor logits = classifier.apply(backbone_values(pixels));
  const std::size_t n = logits.rows();
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = logits.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

std::vector<Tensor*> SegModel::parameters() {
  std::vector<Tensor*> out = {&stem.weight, &stem.bias, &mix.weight, &mix.bias, &classifier.weight, &classifier.bias};
  for (auto* p : head.parameters()) out.push_back(p);
  return out;
}

Tensor Checkpoint::align_source(const Tensor& pixels) const {
  if (!config.use_style_transfer || config.transfer_direction != TransferDirection::SourceToTarget) return pixels;
  if (style_net) return style_net->stylize(pixels, source_code_stats, target_code_stats, config.adain_eps);
  return adain_renormalize(pixels, source_stats, target_stats, config.adain_eps);
}

Tensor Checkpoint::align_target(const Tensor& pixels) const {
  if (!config.use_style_transfer || config.transfer_direction != TransferDirection::TargetToSource) return pixels;
  if (style_net) return style_net->stylize(pixels, target_code_stats, source_code_stats, config.adain_eps);
  return adain_renormalize(pixels, target_stats, source_stats, config.adain_eps);
}

namespace {

struct NamedTensors {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  void add(std::string name, const Tensor& t) {
    names.push_back(std::move(name));
    tensors.push_back(t);
    tensors.back().grad.reset();
  }
  void add_stats(const std::string& prefix, const ChannelStats& s) {
    add(prefix + ".mean", Tensor({s.mean.size()}, s.mean));
    add(prefix + ".var", Tensor({s.var.size()}, s.var));
  }
};

class TensorReader {
 public:
  TensorReader(std::vector<std::string> names, std::vector<Tensor> tensors)
      : names_(std::move(names)), tensors_(std::move(tensors)) {}

  Tensor take(const std::string& name) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i] == name) return tensors_[i];
    }
    throw FormatError("checkpoint lacks tensor '" + name + "'");
  }
  void into(const std::string& name, Tensor& target) {
    Tensor t = take(name);
    if (!target.shape.empty() && t.shape != target.shape) {
      throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_string(t.shape) + ", expected " +
                        shape_string(target.shape));
    }
    target = std::move(t);
  }
  ChannelStats stats(const std::string& prefix) {
    return {take(prefix + ".mean").values, take(prefix + ".var").values};
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

void add_linear(NamedTensors& out, const std::string& name, const Linear& l) {
  out.add(name + ".weight", l.weight);
  out.add(name + ".bias", l.bias);
}

void read_linear(TensorReader& in, const std::string& name, Linear& l) {
  in.into(name + ".weight", l.weight);
  in.into(name + ".bias", l.bias);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  NamedTensors t;
  add_linear(t, "stem", ckpt.model.stem);
  add_linear(t, "mix", ckpt.model.mix);
  add_linear(t, "classifier", ckpt.model.classifier);
  for (std::size_t i = 0; i < ckpt.model.head.layers.size(); ++i) {
    const auto prefix = "head." + std::to_string(i);
    const auto& layer = ckpt.model.head.layers[i];
    if (const auto* l = std::get_if<Linear>(&layer)) {
      add_linear(t, prefix, *l);
    } else if (const auto* bn = std::get_if<BatchNorm1d>(&layer)) {
      t.add(prefix + ".gamma", bn->gamma);
      t.add(prefix + ".beta", bn->beta);
      t.add(prefix + ".running_mean", bn->stats.running_mean);
      t.add(prefix + ".running_var", bn->stats.running_var);
    }
  }
  const char* bank_parts[] = {"v_source", "v_target", "init_source", "init_target"};
  auto add_bank = [&](const std::string& prefix, const MemoryBank& bank) {
    auto parts = bank.to_tensors();
    for (std::size_t i = 0; i < parts.size(); ++i) t.add(prefix + "." + bank_parts[i], parts[i]);
  };
  add_bank("label_bank", ckpt.label_bank);
  add_bank("contra_bank", ckpt.contra_bank);
  t.add_stats("source_stats", ckpt.source_stats);
  t.add_stats("target_stats", ckpt.target_stats);
  if (ckpt.style_net) {
    add_linear(t, "style.encoder", ckpt.style_net->encoder);
    add_linear(t, "style.decoder", ckpt.style_net->decoder);
    t.add_stats("style.source_code_stats", ckpt.source_code_stats);
    t.add_stats("style.target_code_stats", ckpt.target_code_stats);
  }

  nlohmann::json header = {{"format", "cfcontra-checkpoint"},
                           {"version", 1},
                           {"config", to_json(ckpt.config)},
                           {"class_count", ckpt.class_count},
                           {"channels", ckpt.channels},
                           {"iterations_done", ckpt.iterations_done},
                           {"has_style_net", ckpt.style_net.has_value()},
                           {"tensors", t.names}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint '" + path + "'");
  out << header.dump() << '\n';
  write_u32(out, static_cast<std::uint32_t>(t.tensors.size()));
  for (const auto& tensor : t.tensors) write_tensor(out, tensor);
  if (!out) throw FormatError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("checkpoint '" + path + "' has no header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint header is not JSON: " + std::string(e.what()));
  }
  if (header.value("format", std::string()) != "cfcontra-checkpoint") throw FormatError("not a cfcontra checkpoint");

  Checkpoint ckpt;
  apply_json(header.at("config"), ckpt.config);
  ckpt.class_count = header.at("class_count").get<std::size_t>();
  ckpt.channels = header.at("channels").get<std::size_t>();
  ckpt.iterations_done = header.at("iterations_done").get<std::size_t>();
  const auto names = header.at("tensors").get<std::vector<std::string>>();
  const auto count = read_u32(in);
  if (count != names.size()) throw FormatError("checkpoint tensor count does not match its header");
  std::vector<Tensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) tensors.push_back(read_tensor(in));
  TensorReader r(names, std::move(tensors));

  ckpt.model = SegModel::build(ckpt.channels, ckpt.class_count, ckpt.config);
  read_linear(r, "stem", ckpt.model.stem);
  read_linear(r, "mix", ckpt.model.mix);
  read_linear(r, "classifier", ckpt.model.classifier);
  for (std::size_t i = 0; i < ckpt.model.head.layers.size(); ++i) {
    const auto prefix = "head." + std::to_string(i);
    auto& layer = ckpt.model.head.layers[i];
    if (auto* l = std::get_if<Linear>(&layer)) {
      read_linear(r, prefix, *l);
    } else if (auto* bn = std::get_if<BatchNorm1d>(&layer)) {
      r.into(prefix + ".gamma", bn->gamma);
      r.into(prefix + ".beta", bn->beta);
      r.into(prefix + ".running_mean", bn->stats.running_mean);
      r.into(prefix + ".running_var", bn->stats.running_var);
    }
  }
  auto read_bank = [&](const std::string& prefix) {
    return MemoryBank::from_tensors({r.take(prefix + ".v_source"), r.take(prefix + ".v_target"),
                                     r.take(prefix + ".init_source"), r.take(prefix + ".init_target")},
                                    ckpt.config.alpha);
  };
  ckpt.label_bank = read_bank("label_bank");
  ckpt.contra_bank = read_bank("contra_bank");
  ckpt.source_stats = r.stats("source_stats");
  ckpt.target_stats = r.stats("target_stats");
  if (header.value("has_style_net", false)) {
    StyleNet net;
    read_linear(r, "style.encoder", net.encoder);
    read_linear(r, "style.decoder", net.decoder);
    ckpt.style_net = std::move(net);
    ckpt.source_code_stats = r.stats("style.source_code_stats");
    ckpt.target_code_stats = r.stats("style.target_code_stats");
  }
  return ckpt;
}

}  // namespace cfcontra
