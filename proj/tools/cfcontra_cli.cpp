// Command-line front end: gen-data, train, eval, ablate, sweep, grad-check.
//
// Exit codes: 0 success, 1 other failure, 2 config error, 3 divergence.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cfcontra/errors.hpp"
#include "cfcontra/experiments.hpp"
#include "cfcontra/gradsuite.hpp"

namespace fs = std::filesystem;
using namespace cfcontra;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

/// Flags that mirror RunConfig fields. Unset flags leave file/default values.
struct RunFlags {
  std::optional<double> tau, alpha, threshold, lambda_ent, lambda_contra, learning_rate;
  std::optional<std::size_t> iterations, batch_source, batch_target, feature_dim, hidden_dim, head_out_dim;
  std::optional<std::string> head, transfer_direction, style_mode, out_dir;
  std::optional<bool> use_style_transfer, use_entropy, use_contrastive, exclude_positive, normalize_features,
      warm_start;
  std::optional<std::size_t> style_iters;
  std::optional<double> style_lr, style_weight, adain_eps;

  void add_to(CLI::App& app) {
    app.add_option("--tau", tau, "contrastive temperature");
    app.add_option("--alpha", alpha, "memory bank momentum");
    app.add_option("--threshold", threshold, "pseudo-label distance-gap threshold t");
    app.add_option("--lambda_ent", lambda_ent, "entropy loss weight");
    app.add_option("--lambda_contra", lambda_contra, "contrastive loss weight");
    app.add_option("--learning_rate", learning_rate);
    app.add_option("--iterations", iterations);
    app.add_option("--batch_source", batch_source);
    app.add_option("--batch_target", batch_target);
    app.add_option("--head", head, "none|linear|moco|byol|simclr");
    app.add_option("--feature_dim", feature_dim);
    app.add_option("--hidden_dim", hidden_dim);
    app.add_option("--head_out_dim", head_out_dim);
    app.add_option("--use_style_transfer", use_style_transfer);
    app.add_option("--use_entropy", use_entropy);
    app.add_option("--use_contrastive", use_contrastive);
    app.add_option("--transfer_direction", transfer_direction, "source_to_target|target_to_source");
    app.add_option("--style_mode", style_mode, "pixel|net");
    app.add_option("--style_iters", style_iters);
    app.add_option("--style_lr", style_lr);
    app.add_option("--style_weight", style_weight);
    app.add_option("--adain_eps", adain_eps);
    app.add_option("--exclude_positive", exclude_positive);
    app.add_option("--normalize_features", normalize_features);
    app.add_option("--warm_start", warm_start);
    app.add_option("--out_dir", out_dir);
  }

  void apply(RunConfig& c) const {
    auto set = [](auto& field, const auto& flag) {
      if (flag) field = *flag;
    };
    set(c.tau, tau);
    set(c.alpha, alpha);
    set(c.threshold, threshold);
    set(c.lambda_ent, lambda_ent);
    set(c.lambda_contra, lambda_contra);
    set(c.learning_rate, learning_rate);
    set(c.iterations, iterations);
    set(c.batch_source, batch_source);
    set(c.batch_target, batch_target);
    if (head) c.head = parse_head_kind(*head);
    set(c.feature_dim, feature_dim);
    set(c.hidden_dim, hidden_dim);
    set(c.head_out_dim, head_out_dim);
    set(c.use_style_transfer, use_style_transfer);
    set(c.use_entropy, use_entropy);
    set(c.use_contrastive, use_contrastive);
    if (transfer_direction) c.transfer_direction = parse_transfer_direction(*transfer_direction);
    set(c.style_mode, style_mode);
    set(c.style_iters, style_iters);
    set(c.style_lr, style_lr);
    set(c.style_weight, style_weight);
    set(c.adain_eps, adain_eps);
    set(c.exclude_positive, exclude_positive);
    set(c.normalize_features, normalize_features);
    set(c.warm_start, warm_start);
    set(c.out_dir, out_dir);
  }
};

struct SynthFlags {
  std::optional<std::size_t> height, width, class_count, channels, regions, source_train, target_train, target_eval;
  std::optional<double> class_std, noise;
  std::optional<std::vector<double>> class_means, shift_scale, shift_offset;
  std::optional<std::string> layout;

  void add_to(CLI::App& app) {
    app.add_option("--height", height);
    app.add_option("--width", width);
    app.add_option("--class_count", class_count);
    app.add_option("--channels", channels);
    app.add_option("--class_means", class_means)->delimiter(',');
    app.add_option("--class_std", class_std);
    app.add_option("--shift_scale", shift_scale)->delimiter(',');
    app.add_option("--shift_offset", shift_offset)->delimiter(',');
    app.add_option("--noise", noise);
    app.add_option("--layout", layout, "voronoi|rectangles");
    app.add_option("--regions", regions);
    app.add_option("--source_train", source_train);
    app.add_option("--target_train", target_train);
    app.add_option("--target_eval", target_eval);
  }

  void apply(SynthSpec& s) const {
    auto set = [](auto& field, const auto& flag) {
      if (flag) field = *flag;
    };
    set(s.height, height);
    set(s.width, width);
    set(s.class_count, class_count);
    set(s.channels, channels);
    set(s.class_means, class_means);
    set(s.class_std, class_std);
    set(s.shift_scale, shift_scale);
    set(s.shift_offset, shift_offset);
    set(s.noise, noise);
    set(s.layout, layout);
    set(s.regions, regions);
    set(s.source_train, source_train);
    set(s.target_train, target_train);
    set(s.target_eval, target_eval);
  }
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  RunFlags run;
  SynthFlags synth;

  void add_to(CLI::App& app, bool with_run, bool with_synth) {
    app.add_option("--config", config_path, "flat JSON with RunConfig/SynthSpec fields");
    app.add_option("--seed", seed);
    if (with_run) run.add_to(app);
    if (with_synth) synth.add_to(app);
  }

  void resolve(RunConfig& rc, SynthSpec& ss) const {
    if (!config_path.empty()) load_config_file(config_path, rc, ss);
    run.apply(rc);
    synth.apply(ss);
    if (seed) rc.seed = ss.seed = *seed;
  }
};

Dataset obtain_dataset(const std::string& data_dir, const SynthSpec& spec) {
  if (!data_dir.empty()) return load_dataset(data_dir);
  return generate_dataset(spec);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << text;
}

std::vector<std::uint64_t> seeds_or(const std::vector<std::uint64_t>& seeds, std::uint64_t fallback) {
  return seeds.empty() ? std::vector<std::uint64_t>{fallback} : seeds;
}

void print_table(const std::vector<RunSummary>& runs) {
  std::printf("%-24s %6s %10s %10s %10s %10s\n", "run", "seed", "mIOU", "CE", "entropy", "pseudo");
  for (const auto& r : runs) {
    std::printf("%-24s %6llu %10.4f %10.4f %10.4f %10.4f\n", r.label.c_str(),
                static_cast<unsigned long long>(r.config.seed), r.eval.iou.miou, r.final_ce, r.final_entropy,
                r.final_pseudo_acc);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coarse-to-fine contrastive domain adaptation on synthetic segmentation data"};
  app.require_subcommand(1);

  Common gen_opts;
  std::string gen_out = "data";
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic source/target splits");
  gen_opts.add_to(*gen, false, true);
  gen->add_option("--out", gen_out, "output directory");

  Common train_opts;
  std::string train_data;
  auto* train_cmd = app.add_subcommand("train", "train one configuration and evaluate it");
  train_opts.add_to(*train_cmd, true, true);
  train_cmd->add_option("--data", train_data, "dataset directory (generated from SynthSpec flags if absent)");

  std::string eval_ckpt, eval_data, eval_split, eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the target eval split");
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
  eval_cmd->add_option("--data", eval_data, "dataset directory");
  eval_cmd->add_option("--split", eval_split, "split file (overrides --data)");
  eval_cmd->add_option("--out", eval_out, "write the results JSON here instead of stdout");

  Common ablate_opts;
  std::string ablate_data, ablate_out;
  std::vector<std::uint64_t> ablate_seeds;
  unsigned ablate_threads = 0;
  auto* ablate = app.add_subcommand("ablate", "run the four entropy/style/contrastive toggle patterns");
  ablate_opts.add_to(*ablate, true, true);
  ablate->add_option("--data", ablate_data);
  ablate->add_option("--seeds", ablate_seeds, "one ablation per run seed")->delimiter(',');
  ablate->add_option("--threads", ablate_threads);
  ablate->add_option("--out", ablate_out, "CSV table path");

  Common sweep_opts;
  std::string sweep_data, sweep_out;
  std::vector<std::string> sweep_grid;
  std::vector<std::uint64_t> sweep_seeds;
  unsigned sweep_threads = 0;
  auto* sweep = app.add_subcommand("sweep", "one-at-a-time parameter sensitivity sweep");
  sweep_opts.add_to(*sweep, true, true);
  sweep->add_option("--data", sweep_data);
  sweep->add_option("--grid", sweep_grid, "name=v1,v2,... (repeatable)")->required();
  sweep->add_option("--seeds", sweep_seeds)->delimiter(',');
  sweep->add_option("--threads", sweep_threads);
  sweep->add_option("--out", sweep_out, "CSV table path");

  std::size_t gc_instances = 20;
  double gc_h = 1e-5;
  double gc_tol = 1e-4;
  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of every objective");
  gc->add_option("--instances", gc_instances);
  gc->add_option("--step", gc_h, "finite-difference step h");
  gc->add_option("--tolerance", gc_tol);
  gc->add_option("--seed", gc_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) {
      RunConfig rc;
      SynthSpec spec;
      gen_opts.resolve(rc, spec);
      const auto data = generate_dataset(spec);
      save_dataset(gen_out, data);
      std::printf("wrote %zu/%zu/%zu images to %s\n", data.source_train.count(), data.target_train.count(),
                  data.target_eval.count(), gen_out.c_str());
    } else if (*train_cmd) {
      RunConfig rc;
      SynthSpec spec;
      train_opts.resolve(rc, spec);
      rc.validate();
      const auto data = obtain_dataset(train_data, spec);
      auto result = train(rc, data);
      const auto eval = evaluate(result.checkpoint, data.target_eval);
      const fs::path out(rc.out_dir);
      fs::create_directories(out);
      save_checkpoint((out / "checkpoint.bin").string(), result.checkpoint);
      write_metrics_csv((out / "metrics.csv").string(), result.metrics);
      write_text(out / "results.json", results_json(eval, rc).dump(2) + "\n");
      std::printf("miou %.4f  pseudo_acc %.4f  final ce %.4f  entropy %.4f\n", eval.iou.miou, eval.pseudo_acc,
                  tail_mean(result.metrics, &MetricsRecord::ce), tail_mean(result.metrics, &MetricsRecord::entropy));
    } else if (*eval_cmd) {
      const auto ckpt = load_checkpoint(eval_ckpt);
      SegSplit split;
      if (!eval_split.empty()) {
        split = load_split(eval_split);
      } else if (!eval_data.empty()) {
        split = load_split((fs::path(eval_data) / "target_eval.bin").string());
      } else {
        throw ConfigError("eval needs --data or --split");
      }
      const auto text = results_json(evaluate(ckpt, split), ckpt.config).dump(2) + "\n";
      if (eval_out.empty()) {
        std::cout << text;
      } else {
        write_text(eval_out, text);
      }
    } else if (*ablate) {
      RunConfig rc;
      SynthSpec spec;
      ablate_opts.resolve(rc, spec);
      const auto data = obtain_dataset(ablate_data, spec);
      std::vector<std::pair<std::string, RunConfig>> configs;
      for (auto s : seeds_or(ablate_seeds, rc.seed)) {
        RunConfig c = rc;
        c.seed = s;
        for (auto& entry : ablation_configs(c)) configs.push_back(std::move(entry));
      }
      const auto runs = run_all(configs, data, ablate_threads);
      print_table(runs);
      if (!ablate_out.empty()) write_text(ablate_out, summary_table_csv(runs));
    } else if (*sweep) {
      RunConfig rc;
      SynthSpec spec;
      sweep_opts.resolve(rc, spec);
      std::vector<SweepAxis> grid;
      for (const auto& g : sweep_grid) grid.push_back(parse_sweep_axis(g));
      const auto data = obtain_dataset(sweep_data, spec);
      std::vector<std::pair<std::string, RunConfig>> configs;
      for (auto s : seeds_or(sweep_seeds, rc.seed)) {
        RunConfig c = rc;
        c.seed = s;
        for (auto& entry : sensitivity_configs(c, grid)) configs.push_back(std::move(entry));
      }
      const auto runs = run_all(configs, data, sweep_threads);
      print_table(runs);
      if (!sweep_out.empty()) write_text(sweep_out, summary_table_csv(runs));
    } else if (*gc) {
      bool ok = true;
      for (const auto& r : run_gradient_suite(gc_instances, gc_h, gc_seed)) {
        const bool pass = r.max_error < gc_tol;
        ok = ok && pass;
        std::printf("%-28s %3zu instances  max rel error %.3e  %s\n", r.name.c_str(), r.instances, r.max_error,
                    pass ? "PASS" : "FAIL");
      }
      return ok ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
