#include "cfcontra/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "cfcontra/errors.hpp"

namespace cfcontra {

namespace {

const std::vector<double> kDefaultShiftScale = {1.2, 0.85, 1.1};
const std::vector<double> kDefaultShiftOffset = {0.12, -0.08, 0.06};

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_integer() || it->template get<long long>() < 0) {
        throw ConfigError(std::string("field '") + key + "' must be a non-negative integer");
      }
    }
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

const std::set<std::string>& run_keys() {
  static const std::set<std::string> keys = {
      "tau",          "alpha",           "threshold",          "lambda_ent",     "lambda_contra",
      "learning_rate", "iterations",     "batch_source",       "batch_target",   "head",
      "feature_dim",  "hidden_dim",      "head_out_dim",       "use_style_transfer", "use_entropy",
      "use_contrastive", "transfer_direction", "style_mode",   "style_iters",    "style_lr",
      "style_weight", "adain_eps",       "exclude_positive",   "normalize_features", "warm_start",
      "seed",         "out_dir"};
  return keys;
}

const std::set<std::string>& synth_keys() {
  static const std::set<std::string> keys = {
      "height",     "width",      "class_count", "channels",     "class_means",  "class_std",
      "shift_scale", "shift_offset", "noise",    "layout",       "regions",      "source_train",
      "target_train", "target_eval", "seed"};
  return keys;
}

}  // namespace

std::vector<double> SynthSpec::resolved_shift_scale() const {
  if (!shift_scale.empty()) return shift_scale;
  std::vector<double> out(channels);
  for (std::size_t c = 0; c < channels; ++c) out[c] = kDefaultShiftScale[c % kDefaultShiftScale.size()];
  return out;
}

std::vector<double> SynthSpec::resolved_shift_offset() const {
  if (!shift_offset.empty()) return shift_offset;
  std::vector<double> out(channels);
  for (std::size_t c = 0; c < channels; ++c) out[c] = kDefaultShiftOffset[c % kDefaultShiftOffset.size()];
  return out;
}

void SynthSpec::validate() const {
  if (height == 0 || width == 0) throw ConfigError("image extents must be positive");
  if (class_count < 2) throw ConfigError("class_count must be at least 2");
  if (channels == 0) throw ConfigError("channels must be positive");
  if (!class_means.empty() && class_means.size() != class_count * channels) {
    throw ConfigError("class_means must hold class_count * channels values");
  }
  if (!(class_std >= 0.0) || !(noise >= 0.0)) throw ConfigError("class_std and noise must be >= 0");
  if (!shift_scale.empty() && shift_scale.size() != channels) throw ConfigError("shift_scale needs one entry per channel");
  if (!shift_offset.empty() && shift_offset.size() != channels) {
    throw ConfigError("shift_offset needs one entry per channel");
  }
  for (double s : resolved_shift_scale()) {
    if (!(s > 0.0)) throw ConfigError("shift_scale entries must be positive");
  }
  if (layout != "voronoi" && layout != "rectangles") throw ConfigError("layout must be voronoi or rectangles");
  if (regions == 0) throw ConfigError("regions must be positive");
  if (source_train == 0 || target_train == 0 || target_eval == 0) throw ConfigError("split sizes must be positive");
}

std::string to_string(TransferDirection d) {
  return d == TransferDirection::SourceToTarget ? "source_to_target" : "target_to_source";
}

TransferDirection parse_transfer_direction(const std::string& s) {
  if (s == "source_to_target") return TransferDirection::SourceToTarget;
  if (s == "target_to_source") return TransferDirection::TargetToSource;
  throw ConfigError("transfer_direction must be source_to_target or target_to_source, got '" + s + "'");
}

void RunConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("tau must be > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(threshold >= 0.0)) throw ConfigError("threshold must be >= 0");
  if (!(lambda_ent >= 0.0) || !(lambda_contra >= 0.0)) throw ConfigError("loss weights must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (batch_source == 0 || batch_target == 0) throw ConfigError("batch sizes must be positive");
  if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
  if (style_mode != "pixel" && style_mode != "net") throw ConfigError("style_mode must be pixel or net");
  if (!(adain_eps > 0.0)) throw ConfigError("adain_eps must be > 0");
  if (!(style_lr > 0.0) || !(style_weight >= 0.0)) throw ConfigError("style_lr must be > 0, style_weight >= 0");
}

nlohmann::json to_json(const RunConfig& c) {
  return {{"tau", c.tau},
          {"alpha", c.alpha},
          {"threshold", c.threshold},
          {"lambda_ent", c.lambda_ent},
          {"lambda_contra", c.lambda_contra},
          {"learning_rate", c.learning_rate},
          {"iterations", c.iterations},
          {"batch_source", c.batch_source},
          {"batch_target", c.batch_target},
          {"head", to_string(c.head)},
          {"feature_dim", c.feature_dim},
          {"hidden_dim", c.hidden_dim},
          {"head_out_dim", c.head_out_dim},
          {"use_style_transfer", c.use_style_transfer},
          {"use_entropy", c.use_entropy},
          {"use_contrastive", c.use_contrastive},
          {"transfer_direction", to_string(c.transfer_direction)},
          {"style_mode", c.style_mode},
          {"style_iters", c.style_iters},
          {"style_lr", c.style_lr},
          {"style_weight", c.style_weight},
          {"adain_eps", c.adain_eps},
          {"exclude_positive", c.exclude_positive},
          {"normalize_features", c.normalize_features},
          {"warm_start", c.warm_start},
          {"seed", c.seed},
          {"out_dir", c.out_dir}};
}

nlohmann::json to_json(const SynthSpec& s) {
  return {{"height", s.height},           {"width", s.width},
          {"class_count", s.class_count}, {"channels", s.channels},
          {"class_means", s.class_means}, {"class_std", s.class_std},
          {"shift_scale", s.shift_scale}, {"shift_offset", s.shift_offset},
          {"noise", s.noise},             {"layout", s.layout},
          {"regions", s.regions},         {"source_train", s.source_train},
          {"target_train", s.target_train}, {"target_eval", s.target_eval},
          {"seed", s.seed}};
}

void apply_json(const nlohmann::json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("config document must be a JSON object");
  read_field(j, "tau", c.tau);
  read_field(j, "alpha", c.alpha);
  read_field(j, "threshold", c.threshold);
  read_field(j, "lambda_ent", c.lambda_ent);
  read_field(j, "lambda_contra", c.lambda_contra);
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "iterations", c.iterations);
  read_field(j, "batch_source", c.batch_source);
  read_field(j, "batch_target", c.batch_target);
  if (j.contains("head")) {
    std::string h;
    read_field(j, "head", h);
    c.head = parse_head_kind(h);
  }
  read_field(j, "feature_dim", c.feature_dim);
  read_field(j, "hidden_dim", c.hidden_dim);
  read_field(j, "head_out_dim", c.head_out_dim);
  read_field(j, "use_style_transfer", c.use_style_transfer);
  read_field(j, "use_entropy", c.use_entropy);
  read_field(j, "use_contrastive", c.use_contrastive);
  if (j.contains("transfer_direction")) {
    std::string d;
    read_field(j, "transfer_direction", d);
    c.transfer_direction = parse_transfer_direction(d);
  }
  read_field(j, "style_mode", c.style_mode);
  read_field(j, "style_iters", c.style_iters);
  read_field(j, "style_lr", c.style_lr);
  read_field(j, "style_weight", c.style_weight);
  read_field(j, "adain_eps", c.adain_eps);
  read_field(j, "exclude_positive", c.exclude_positive);
  read_field(j, "normalize_features", c.normalize_features);
  read_field(j, "warm_start", c.warm_start);
  read_field(j, "seed", c.seed);
  read_field(j, "out_dir", c.out_dir);
}

void apply_json(const nlohmann::json& j, SynthSpec& s) {
  if (!j.is_object()) throw ConfigError("config document must be a JSON object");
  read_field(j, "height", s.height);
  read_field(j, "width", s.width);
  read_field(j, "class_count", s.class_count);
  read_field(j, "channels", s.channels);
  read_field(j, "class_means", s.class_means);
  read_field(j, "class_std", s.class_std);
  read_field(j, "shift_scale", s.shift_scale);
  read_field(j, "shift_offset", s.shift_offset);
  read_field(j, "noise", s.noise);
  read_field(j, "layout", s.layout);
  read_field(j, "regions", s.regions);
  read_field(j, "source_train", s.source_train);
  read_field(j, "target_train", s.target_train);
  read_field(j, "target_eval", s.target_eval);
  read_field(j, "seed", s.seed);
}

void load_config_file(const std::string& path, RunConfig& run, SynthSpec& synth) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config document must be a flat JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!run_keys().contains(key) && !synth_keys().contains(key)) {
      throw ConfigError("unknown config field '" + key + "'");
    }
  }
  apply_json(j, run);
  apply_json(j, synth);
}

}  // namespace cfcontra
