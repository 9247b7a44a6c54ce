#include "cfcontra/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>

#include "cfcontra/errors.hpp"
#include "cfcontra/rng.hpp"

namespace cfcontra {

std::vector<int> SegSplit::labels_of(const std::vector<std::size_t>& which) const {
  const std::size_t hw = pixels_per_image();
  std::vector<int> out;
  out.reserve(which.size() * hw);
  for (auto b : which) {
    out.insert(out.end(), labels.begin() + static_cast<std::ptrdiff_t>(b * hw),
               labels.begin() + static_cast<std::ptrdiff_t>((b + 1) * hw));
  }
  return out;
}

namespace {

constexpr int kMaxAttempts = 16;

std::vector<double> class_means_for(const SynthSpec& spec, Rng& rng) {
  if (!spec.class_means.empty()) return spec.class_means;
  // Rejection-sample means in the unit cube with a minimum pairwise spacing.
  const std::size_t c = spec.class_count, ch = spec.channels;
  std::vector<double> means(c * ch);
  double spacing = 0.45;
  for (int attempt = 0;; ++attempt) {
    bool ok = true;
    for (std::size_t k = 0; k < c && ok; ++k) {
      bool placed = false;
      for (int tries = 0; tries < 200 && !placed; ++tries) {
        for (std::size_t j = 0; j < ch; ++j) means[k * ch + j] = rng.uniform();
        placed = true;
        for (std::size_t o = 0; o < k && placed; ++o) {
          double d2 = 0.0;
          for (std::size_t j = 0; j < ch; ++j) {
            const double d = means[k * ch + j] - means[o * ch + j];
            d2 += d * d;
          }
          placed = d2 >= spacing * spacing;
        }
      }
      ok = placed;
    }
    if (ok) return means;
    spacing *= 0.8;
    if (attempt > 20) return means;
  }
}

void paint_labels(const SynthSpec& spec, Rng& rng, int* out) {
  const std::size_t h = spec.height, w = spec.width;
  if (spec.layout == "voronoi") {
    std::vector<double> sx(spec.regions), sy(spec.regions);
    std::vector<int> cls(spec.regions);
    for (std::size_t r = 0; r < spec.regions; ++r) {
      sy[r] = rng.uniform(0.0, static_cast<double>(h));
      sx[r] = rng.uniform(0.0, static_cast<double>(w));
      cls[r] = static_cast<int>(rng.index(spec.class_count));
    }
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double best = std::numeric_limits<double>::infinity();
        int label = 0;
        for (std::size_t r = 0; r < spec.regions; ++r) {
          const double dy = static_cast<double>(y) + 0.5 - sy[r];
          const double dx = static_cast<double>(x) + 0.5 - sx[r];
          const double d = dx * dx + dy * dy;
          if (d < best) {
            best = d;
            label = cls[r];
          }
        }
        out[y * w + x] = label;
      }
  } else {
    std::fill_n(out, h * w, static_cast<int>(rng.index(spec.class_count)));
    for (std::size_t r = 0; r < spec.regions; ++r) {
      const int label = static_cast<int>(rng.index(spec.class_count));
      const std::size_t y0 = rng.index(h), x0 = rng.index(w);
      const std::size_t rh = 1 + rng.index(std::max<std::size_t>(1, h / 2));
      const std::size_t rw = 1 + rng.index(std::max<std::size_t>(1, w / 2));
      for (std::size_t y = y0; y < std::min(h, y0 + rh); ++y)
        for (std::size_t x = x0; x < std::min(w, x0 + rw); ++x) out[y * w + x] = label;
    }
  }
}

struct DomainShift {
  std::vector<double> scale;
  std::vector<double> offset;
  double noise = 0.0;
};

SegSplit make_split(const std::string& name, std::size_t count, const SynthSpec& spec,
                    const std::vector<double>& means, const DomainShift* shift, LabelUse use, bool require_all,
                    Rng& rng) {
  const std::size_t c = spec.channels, hw = spec.height * spec.width;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    SegSplit split;
    split.name = name;
    split.class_count = spec.class_count;
    split.label_use = use;
    split.images = Tensor::zeros({count, c, spec.height, spec.width});
    split.labels.assign(count * hw, 0);
    for (std::size_t b = 0; b < count; ++b) {
      int* lab = split.labels.data() + b * hw;
      paint_labels(spec, rng, lab);
      double* img = split.images.values.data() + b * c * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        const auto k = static_cast<std::size_t>(lab[p]);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double v = rng.normal(means[k * c + ch], spec.class_std);
          if (shift) v = shift->scale[ch] * v + shift->offset[ch] + shift->noise * rng.normal();
          img[ch * hw + p] = v;
        }
      }
    }
    if (!require_all) return split;
    std::vector<bool> seen(spec.class_count, false);
    for (int y : split.labels) seen[static_cast<std::size_t>(y)] = true;
    if (std::all_of(seen.begin(), seen.end(), [](bool s) { return s; })) return split;
  }
  throw GenerationError("split '" + name + "': could not make every class appear after " +
                        std::to_string(kMaxAttempts) + " attempts");
}

}  // namespace

Dataset generate_dataset(const SynthSpec& spec) {
  spec.validate();
  Rng rng = Rng::derive(spec.seed, 0xda7a);
  const auto means = class_means_for(spec, rng);
  DomainShift shift{spec.resolved_shift_scale(), spec.resolved_shift_offset(), spec.noise};
  Dataset d;
  d.spec = spec;
  d.spec.class_means = means;
  Rng source_rng = Rng::derive(spec.seed, 1);
  Rng target_rng = Rng::derive(spec.seed, 2);
  Rng eval_rng = Rng::derive(spec.seed, 3);
  d.source_train = make_split("source_train", spec.source_train, spec, means, nullptr, LabelUse::Train, true, source_rng);
  d.target_train = make_split("target_train", spec.target_train, spec, means, &shift, LabelUse::HeldOut, true, target_rng);
  d.target_eval = make_split("target_eval", spec.target_eval, spec, means, &shift, LabelUse::HeldOut, false, eval_rng);
  return d;
}

void save_split(const std::string& path, const SegSplit& split, const SynthSpec& spec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  const auto& s = split.images.shape;
  nlohmann::json header = {{"shape", s},
                           {"class_count", split.class_count ? split.class_count : spec.class_count},
                           {"seed", spec.seed},
                           {"spec", to_json(spec)},
                           {"split", split.name},
                           {"labels", split.label_use == LabelUse::Train ? "train" : "held_out"}};
  out << header.dump() << '\n';
  write_tensor(out, split.images);
  std::vector<double> lab(split.labels.begin(), split.labels.end());
  write_tensor(out, Tensor({s[0], s[2], s[3]}, std::move(lab)));
  if (!out) throw FormatError("failed writing '" + path + "'");
}

SegSplit load_split(const std::string& path, SynthSpec* spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("'" + path + "' has no header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path + "' header is not JSON: " + e.what());
  }
  SegSplit split;
  split.name = header.value("split", std::string("unnamed"));
  split.label_use = header.value("labels", std::string("train")) == "train" ? LabelUse::Train : LabelUse::HeldOut;
  split.images = read_tensor(in);
  const Tensor labels = read_tensor(in);
  if (split.images.rank() != 4 || labels.size() != split.images.shape[0] * split.pixels_per_image()) {
    throw FormatError("'" + path + "': label extents do not match image extents");
  }
  const auto class_count = header.at("class_count").get<int>();
  split.class_count = static_cast<std::size_t>(class_count);
  split.labels.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = static_cast<int>(labels.values[i]);
    if (y < 0 || y >= class_count) throw FormatError("'" + path + "': label out of range");
    split.labels[i] = y;
  }
  if (spec) {
    *spec = SynthSpec{};
    apply_json(header.at("spec"), *spec);
  }
  return split;
}

void save_dataset(const std::string& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  save_split((base / "source_train.bin").string(), data.source_train, data.spec);
  save_split((base / "target_train.bin").string(), data.target_train, data.spec);
  save_split((base / "target_eval.bin").string(), data.target_eval, data.spec);
}

Dataset load_dataset(const std::string& dir) {
  const std::filesystem::path base(dir);
  Dataset d;
  d.source_train = load_split((base / "source_train.bin").string(), &d.spec);
  d.target_train = load_split((base / "target_train.bin").string());
  d.target_eval = load_split((base / "target_eval.bin").string());
  return d;
}

}  // namespace cfcontra
