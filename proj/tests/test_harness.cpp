#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "cfcontra/errors.hpp"
#include "cfcontra/experiments.hpp"
#include "cfcontra/image.hpp"

using namespace cfcontra;
using doctest::Approx;
namespace fs = std::filesystem;

namespace {

SynthSpec small_spec(std::uint64_t seed = 3) {
  SynthSpec s;
  s.height = s.width = 8;
  s.source_train = s.target_train = 20;
  s.target_eval = 5;
  s.seed = seed;
  return s;
}

RunConfig short_run(std::uint64_t seed = 1, std::size_t iterations = 60) {
  RunConfig c;
  c.iterations = iterations;
  c.seed = seed;
  return c;
}

const Dataset& small_data() {
  static const Dataset data = generate_dataset(small_spec());
  return data;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("cfcontra_test_" + std::to_string(::getpid())) / name;
  fs::create_directories(p.parent_path());
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ChannelStats split_stats(const SegSplit& s) { return channel_stats(s.images); }

}  // namespace

TEST_CASE("dataset generation is deterministic and byte-stable") {
  const auto a = scratch("data_a"), b = scratch("data_b");
  save_dataset(a.string(), generate_dataset(small_spec(11)));
  save_dataset(b.string(), generate_dataset(small_spec(11)));
  for (const char* f : {"source_train.bin", "target_train.bin", "target_eval.bin"})
    CHECK(slurp(a / f) == slurp(b / f));

  SynthSpec echoed;
  const SegSplit loaded = load_split((a / "target_eval.bin").string(), &echoed);
  const Dataset fresh = generate_dataset(small_spec(11));
  CHECK(loaded.images.values == fresh.target_eval.images.values);
  CHECK(loaded.labels == fresh.target_eval.labels);
  CHECK(loaded.label_use == LabelUse::HeldOut);
  CHECK(echoed.seed == 11);
}

TEST_CASE("every class occurs in both training splits") {
  const Dataset& d = small_data();
  for (const SegSplit* s : {&d.source_train, &d.target_train}) {
    std::vector<bool> seen(d.spec.class_count, false);
    for (int y : s->labels) seen[static_cast<std::size_t>(y)] = true;
    for (bool b : seen) CHECK(b);
    CHECK(s->labels.size() == s->count() * s->pixels_per_image());
  }
}

TEST_CASE("unsatisfiable class occurrence raises after retries") {
  SynthSpec s = small_spec();
  s.regions = 1;
  s.source_train = 2;
  CHECK_THROWS_AS(generate_dataset(s), GenerationError);
}

TEST_CASE("identity shift keeps channel statistics") {
  SynthSpec s;
  s.source_train = s.target_train = 100;
  s.target_eval = 1;
  s.shift_scale = {1, 1, 1};
  s.shift_offset = {0, 0, 0};
  s.noise = 0.0;
  s.layout = "voronoi";
  s.regions = 16;
  const Dataset d = generate_dataset(s);
  const auto src = split_stats(d.source_train), tgt = split_stats(d.target_train);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(std::abs(src.mean[c] - tgt.mean[c]) < 0.05);
    CHECK(tgt.var[c] == Approx(src.var[c]).epsilon(0.15));
  }
}

TEST_CASE("shift scale 2 quadruples channel variance") {
  SynthSpec s;
  s.source_train = s.target_train = 100;  // 102400 pixels each
  s.target_eval = 1;
  s.shift_scale = {2, 2, 2};
  s.shift_offset = {0.3, -0.3, 0};
  s.regions = 16;
  const Dataset d = generate_dataset(s);
  const auto src = split_stats(d.source_train), tgt = split_stats(d.target_train);
  for (std::size_t c = 0; c < 3; ++c) CHECK(tgt.var[c] / src.var[c] == Approx(4.0).epsilon(0.10));
}

TEST_CASE("synth spec validation") {
  SynthSpec s;
  s.shift_scale = {1, 0, 1};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SynthSpec{};
  s.layout = "hexagons";
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("run config validation") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  c.tau = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.alpha = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.threshold = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = RunConfig{};
  c.lambda_contra = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  const RunConfig defaults;
  CHECK(defaults.tau == 0.07);
  CHECK(defaults.alpha == 0.9);
  CHECK(defaults.threshold == 0.05);
  CHECK(defaults.lambda_ent == 1e-3);
  CHECK(defaults.lambda_contra == 1e-3);
  CHECK(defaults.batch_source == 1);
  CHECK(defaults.batch_target == 1);
}

TEST_CASE("config files") {
  const auto path = scratch("config.json");
  {
    std::ofstream out(path);
    out << R"({"tau": 0.2, "head": "byol", "use_contrastive": false, "height": 16, "shift_scale": [1, 2, 3]})";
  }
  RunConfig run;
  SynthSpec synth;
  load_config_file(path.string(), run, synth);
  CHECK(run.tau == 0.2);
  CHECK(run.head == HeadKind::Byol);
  CHECK_FALSE(run.use_contrastive);
  CHECK(synth.height == 16);
  CHECK(synth.shift_scale == std::vector<double>{1, 2, 3});

  RunConfig echo;
  apply_json(to_json(run), echo);
  CHECK(to_json(echo) == to_json(run));

  {
    std::ofstream out(path);
    out << R"({"tau": 0.2, "temperature": 1})";
  }
  CHECK_THROWS_AS(load_config_file(path.string(), run, synth), ConfigError);
  {
    std::ofstream out(path);
    out << R"({"tau": "warm"})";
  }
  CHECK_THROWS_AS(load_config_file(path.string(), run, synth), ConfigError);
  CHECK_THROWS_AS(load_config_file((path.parent_path() / "missing.json").string(), run, synth), ConfigError);
}

TEST_CASE("segmentation_iou examples") {
  const std::vector<int> truth{0, 0, 1, 1}, pred{0, 1, 1, 1};
  auto r = segmentation_iou(pred, truth, 2);
  CHECK(*r.per_class[0] == Approx(0.5));
  CHECK(*r.per_class[1] == Approx(2.0 / 3));
  CHECK(r.miou == Approx(7.0 / 12));

  CHECK(segmentation_iou(truth, truth, 2).miou == 1.0);
  const std::vector<int> flipped{1, 1, 0, 0};
  CHECK(segmentation_iou(flipped, truth, 2).miou == 0.0);

  r = segmentation_iou(truth, truth, 3);
  CHECK_FALSE(r.per_class[2].has_value());
  CHECK(r.miou == 1.0);
}

TEST_CASE("training with zero iterations returns the initialization") {
  RunConfig c = short_run(4, 0);
  const TrainResult r = train(c, small_data());
  Checkpoint init = initialize(c, small_data());
  CHECK(r.metrics.empty());
  SegModel trained = r.checkpoint.model;
  auto a = trained.parameters();
  auto b = init.model.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->values == b[i]->values);
  CHECK(r.checkpoint.label_bank == init.label_bank);
}

TEST_CASE("metrics rows satisfy the objective identity") {
  for (bool st : {false, true}) {
    RunConfig c = short_run(2, 80);
    c.use_style_transfer = st;
    c.lambda_ent = 0.3;
    c.lambda_contra = 0.05;
    const auto r = train(c, small_data());
    REQUIRE(r.metrics.size() == 80);
    for (const auto& m : r.metrics) {
      CHECK(std::abs(m.total - (m.ce + c.lambda_ent * m.entropy + c.lambda_contra * m.contra)) <= 1e-12);
      CHECK((m.pseudo_acc >= 0.0 && m.pseudo_acc <= 1.0));
      CHECK((m.labeled_frac >= 0.0 && m.labeled_frac <= 1.0));
    }
  }
}

TEST_CASE("disabled terms are logged as zero") {
  RunConfig c = short_run(5, 20);
  c.use_entropy = false;
  c.use_contrastive = false;
  for (const auto& m : train(c, small_data()).metrics) {
    CHECK(m.entropy == 0.0);
    CHECK(m.contra == 0.0);
    CHECK(m.total == m.ce);
  }
}

TEST_CASE("training is deterministic and metrics CSV is stable") {
  RunConfig c = short_run(7, 50);
  const auto a = metrics_csv(train(c, small_data()).metrics);
  const auto b = metrics_csv(train(c, small_data()).metrics);
  CHECK(a == b);
  CHECK(a.rfind("iteration,ce,entropy,contra,total,pseudo_acc,labeled_frac\n", 0) == 0);
}

TEST_CASE("checkpoint round trip reproduces evaluation") {
  for (HeadKind head : {HeadKind::Simclr, HeadKind::None}) {
    RunConfig c = short_run(8, 40);
    c.head = head;
    c.style_mode = head == HeadKind::None ? "net" : "pixel";
    c.style_iters = 20;
    const TrainResult r = train(c, small_data());
    const auto path = scratch("ckpt.bin");
    save_checkpoint(path.string(), r.checkpoint);
    const Checkpoint back = load_checkpoint(path.string());
    const EvalResult e1 = evaluate(r.checkpoint, small_data().target_eval);
    const EvalResult e2 = evaluate(back, small_data().target_eval);
    CHECK(results_json(e1, c).dump() == results_json(e2, back.config).dump());
    CHECK(back.contra_bank == r.checkpoint.contra_bank);
    CHECK(back.iterations_done == 40);
    CHECK(back.style_net.has_value() == (c.style_mode == "net"));
  }
}

TEST_CASE("evaluate rejects class-count mismatch") {
  const TrainResult r = train(short_run(1, 1), small_data());
  SynthSpec s = small_spec();
  s.class_count = 4;
  const Dataset other = generate_dataset(s);
  CHECK_THROWS_AS(evaluate(r.checkpoint, other.target_eval), ContractError);
}

TEST_CASE("divergence aborts training") {
  RunConfig c = short_run(1, 200);
  c.learning_rate = 1e6;
  CHECK_THROWS_AS(train(c, small_data()), DivergenceError);
}

TEST_CASE("ablation rows") {
  const auto rows = ablation_configs(short_run());
  REQUIRE(rows.size() == 4);
  const bool st[] = {false, true, false, true}, contra[] = {false, false, true, true};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(rows[i].second.use_entropy);
    CHECK(rows[i].second.use_style_transfer == st[i]);
    CHECK(rows[i].second.use_contrastive == contra[i]);
  }
  const auto runs = run_all({rows[2], rows[2]}, small_data(), 2);
  CHECK(metrics_csv(runs[0].metrics) == metrics_csv(runs[1].metrics));
}

TEST_CASE("sensitivity sweeps") {
  const RunConfig base = short_run(3, 30);
  const auto grid = std::vector<SweepAxis>{parse_sweep_axis("lambda_contra=0.1,0.01,0.001")};
  CHECK(grid[0].values == std::vector<double>{0.1, 0.01, 0.001});
  const auto configs = sensitivity_configs(base, grid);
  REQUIRE(configs.size() == 3);
  CHECK(configs[1].second.lambda_contra == 0.01);

  const auto single = run_sensitivity(base, {parse_sweep_axis("tau=0.07")}, small_data(), 1);
  REQUIRE(single.size() == 1);
  CHECK(metrics_csv(single[0].metrics) == metrics_csv(train(base, small_data()).metrics));

  CHECK_THROWS_AS(sensitivity_configs(base, {parse_sweep_axis("alpha=2")}), ConfigError);
  CHECK_THROWS_AS(sensitivity_configs(base, {parse_sweep_axis("momentum=0.5")}), ConfigError);
}

TEST_CASE("cross entropy falls early in training on the default task") {
  const Dataset data = generate_dataset(SynthSpec{});
  int improved = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto m = train(short_run(seed, 501), data).metrics;
    if (m[500].ce < m[0].ce) ++improved;
  }
  CHECK(improved >= 4);
}

TEST_CASE("image pixel layout") {
  Tensor images({1, 2, 1, 2}, {1, 2, 3, 4});
  const Tensor p = image_pixels(images, 0);
  CHECK(p.values == std::vector<double>{1, 3, 2, 4});
  CHECK(pixels_to_image(p, 1, 2).values == images.values);
}

TEST_CASE("labeled pixel fraction grows over training on the default task") {
  const Dataset data = generate_dataset(SynthSpec{});
  int grew = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig c = short_run(seed, 1000);
    c.use_style_transfer = false;
    const auto m = train(c, data).metrics;
    double early = 0.0, late = 0.0;
    for (std::size_t i = 100; i < 200; ++i) early += m[i].labeled_frac;
    for (std::size_t i = 900; i < 1000; ++i) late += m[i].labeled_frac;
    MESSAGE("seed " << seed << ": labeled fraction " << early / 100 << " -> " << late / 100);
    if (late >= early) ++grew;
  }
  CHECK(grew >= 4);
}
