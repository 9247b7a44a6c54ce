#include "cfcontra/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <sstream>
#include <thread>

#include "cfcontra/errors.hpp"

namespace cfcontra {

RunSummary run_once(const std::string& label, const RunConfig& config, const Dataset& data) {
  auto trained = train(config, data);
  RunSummary s;
  s.label = label;
  s.config = config;
  s.eval = evaluate(trained.checkpoint, data.target_eval);
  s.final_ce = tail_mean(trained.metrics, &MetricsRecord::ce);
  s.final_entropy = tail_mean(trained.metrics, &MetricsRecord::entropy);
  s.final_pseudo_acc = tail_mean(trained.metrics, &MetricsRecord::pseudo_acc);
  s.final_labeled_frac = tail_mean(trained.metrics, &MetricsRecord::labeled_frac);
  s.metrics = std::move(trained.metrics);
  return s;
}

std::vector<RunSummary> run_all(const std::vector<std::pair<std::string, RunConfig>>& configs, const Dataset& data,
                                unsigned threads) {
  for (const auto& [label, cfg] : configs) cfg.validate();
  std::vector<RunSummary> out(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, configs.size())));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        out[i] = run_once(configs[i].first, configs[i].second, data);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<std::pair<std::string, RunConfig>> ablation_configs(const RunConfig& base) {
  std::vector<std::pair<std::string, RunConfig>> out;
  const struct {
    const char* label;
    bool style;
    bool contra;
  } rows[] = {{"ent", false, false}, {"ent+st", true, false}, {"ent+contra", false, true}, {"ent+st+contra", true, true}};
  for (const auto& r : rows) {
    RunConfig c = base;
    c.use_entropy = true;
    c.use_style_transfer = r.style;
    c.use_contrastive = r.contra;
    out.emplace_back(r.label, c);
  }
  return out;
}

std::vector<RunSummary> run_ablation(const RunConfig& base, const Dataset& data, unsigned threads) {
  return run_all(ablation_configs(base), data, threads);
}

namespace {

double* sweep_field(RunConfig& c, const std::string& name) {
  if (name == "tau") return &c.tau;
  if (name == "alpha") return &c.alpha;
  if (name == "threshold" || name == "t") return &c.threshold;
  if (name == "lambda_contra") return &c.lambda_contra;
  if (name == "lambda_ent") return &c.lambda_ent;
  if (name == "learning_rate") return &c.learning_rate;
  throw ConfigError("cannot sweep unknown parameter '" + name + "'");
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::vector<std::pair<std::string, RunConfig>> sensitivity_configs(const RunConfig& base,
                                                                   const std::vector<SweepAxis>& grid) {
  std::vector<std::pair<std::string, RunConfig>> out;
  for (const auto& axis : grid) {
    for (double v : axis.values) {
      RunConfig c = base;
      *sweep_field(c, axis.parameter) = v;
      c.validate();
      out.emplace_back(axis.parameter + "=" + format_value(v), c);
    }
  }
  return out;
}

std::vector<RunSummary> run_sensitivity(const RunConfig& base, const std::vector<SweepAxis>& grid,
                                        const Dataset& data, unsigned threads) {
  return run_all(sensitivity_configs(base, grid), data, threads);
}

SweepAxis parse_sweep_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
    throw ConfigError("sweep axis must look like name=v1,v2; got '" + text + "'");
  }
  SweepAxis axis;
  axis.parameter = text.substr(0, eq);
  RunConfig probe;
  sweep_field(probe, axis.parameter);
  std::stringstream ss(text.substr(eq + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      axis.values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("sweep value '" + item + "' is not a number");
    }
  }
  return axis;
}

std::string summary_table_csv(const std::vector<RunSummary>& runs) {
  std::string s =
      "label,entropy,style_transfer,contrastive,tau,alpha,threshold,lambda_ent,lambda_contra,seed,miou,final_ce,"
      "final_entropy,final_pseudo_acc,final_labeled_frac\n";
  char buf[512];
  for (const auto& r : runs) {
    const auto& c = r.config;
    std::snprintf(buf, sizeof buf, "%s,%d,%d,%d,%g,%g,%g,%g,%g,%llu,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.label.c_str(),
                  c.use_entropy, c.use_style_transfer, c.use_contrastive, c.tau, c.alpha, c.threshold, c.lambda_ent,
                  c.lambda_contra, static_cast<unsigned long long>(c.seed), r.eval.iou.miou, r.final_ce,
                  r.final_entropy, r.final_pseudo_acc, r.final_labeled_frac);
    s += buf;
  }
  return s;
}

}  // namespace cfcontra
