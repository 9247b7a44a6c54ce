#include "cfcontra/heads.hpp"

#include <algorithm>
#include <cctype>

#include "cfcontra/errors.hpp"

namespace cfcontra {

std::string to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::None: return "none";
    case HeadKind::Linear: return "linear";
    case HeadKind::Moco: return "moco";
    case HeadKind::Byol: return "byol";
    case HeadKind::Simclr: return "simclr";
  }
  return "none";
}

HeadKind parse_head_kind(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "none") return HeadKind::None;
  if (s == "linear") return HeadKind::Linear;
  if (s == "moco") return HeadKind::Moco;
  if (s == "byol") return HeadKind::Byol;
  if (s == "simclr") return HeadKind::Simclr;
  throw ConfigError("unknown head kind '" + name + "'");
}

std::vector<Tensor*> HeadModule::parameters() {
  std::vector<Tensor*> out;
  for (auto& layer : layers) {
    if (auto* l = std::get_if<Linear>(&layer)) {
      for (auto* p : l->parameters()) out.push_back(p);
    } else if (auto* bn = std::get_if<BatchNorm1d>(&layer)) {
      for (auto* p : bn->parameters()) out.push_back(p);
    }
  }
  return out;
}

std::size_t HeadModule::parameter_count() { return cfcontra::parameter_count(parameters()); }

std::size_t HeadModule::count_batch_norms() const {
  return static_cast<std::size_t>(std::count_if(layers.begin(), layers.end(), [](const HeadLayer& l) {
    return std::holds_alternative<BatchNorm1d>(l);
  }));
}

std::vector<BatchNormStats*> HeadModule::batch_norm_stats() {
  std::vector<BatchNormStats*> out;
  for (auto& layer : layers) {
    if (auto* bn = std::get_if<BatchNorm1d>(&layer)) out.push_back(&bn->stats);
  }
  return out;
}

HeadModule build_head(HeadKind kind, std::size_t d_in, std::size_t d_hidden, std::size_t d_out, std::uint64_t seed) {
  if (d_in == 0 || d_hidden == 0 || d_out == 0) throw ContractError("head dimensions must be positive");
  HeadModule h;
  h.kind = kind;
  h.input_dim = d_in;
  if (kind == HeadKind::None) {
    h.hidden_dim = h.output_dim = d_in;
    return h;
  }
  Rng rng = Rng::derive(seed, 0x4eadULL);
  if (kind == HeadKind::Linear) {
    h.hidden_dim = d_out;
    h.output_dim = d_out;
    h.layers.emplace_back(Linear(d_in, d_out, rng));
    return h;
  }
  h.hidden_dim = d_hidden;
  h.output_dim = d_out;
  h.layers.emplace_back(Linear(d_in, d_hidden, rng));
  if (kind != HeadKind::Moco) h.layers.emplace_back(BatchNorm1d(d_hidden));
  h.layers.emplace_back(ReluLayer{});
  h.layers.emplace_back(Linear(d_hidden, d_out, rng));
  if (kind == HeadKind::Simclr) h.layers.emplace_back(BatchNorm1d(d_out));
  return h;
}

Var head_forward(HeadModule& head, Graph& g, Var x, Mode mode) {
  const auto& xv = x.value();
  if (xv.rank() != 2 || xv.shape[1] != head.input_dim) {
    throw DimensionError("head expects [Nx" + std::to_string(head.input_dim) + "], got " + shape_string(xv.shape));
  }
  Var h = x;
  for (auto& layer : head.layers) {
    if (auto* l = std::get_if<Linear>(&layer)) {
      h = l->forward(g, h);
    } else if (auto* bn = std::get_if<BatchNorm1d>(&layer)) {
      h = bn->forward(g, h, mode);
    } else {
      h = relu(h);
    }
  }
  return h;
}

}  // namespace cfcontra
