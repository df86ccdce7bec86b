#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "tokencast/error.hpp"
#include "tokencast/io/binary.hpp"
#include "tokencast/log.hpp"
#include "tokencast/pipeline/ablation.hpp"
#include "tokencast/pipeline/pipeline.hpp"

using namespace tokencast;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::string out = "runs/default";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::size_t horizon = 0;
  bool quiet = false;

  // Per-command overrides, applied as config keys.
  std::vector<std::pair<std::string, std::string>> flags;
};

// Registers a flag whose value becomes the config key `key`.
template <typename T>
void override_flag(CLI::App* cmd, Options& o, const std::string& name, const std::string& key,
                   const std::string& help) {
  cmd->add_option_function<T>(
      name,
      [&o, key](const T& v) { o.flags.emplace_back(key, json(v).dump()); },
      help);
}

pipeline::RunConfig resolve(const Options& o) {
  json j = json::object();
  if (!o.config.empty()) {
    if (!std::filesystem::exists(o.config)) throw ValidationError("config file not found: " + o.config);
    try {
      j = json::parse(io::read_file(o.config));
    } catch (const json::parse_error& e) {
      throw ValidationError(o.config + ": " + e.what());
    }
  }
  for (const auto& s : o.sets) pipeline::apply_override(j, s);
  for (const auto& [key, value] : o.flags) pipeline::apply_override(j, key + "=" + value);
  if (o.seed) j["seed"] = *o.seed;
  return pipeline::RunConfig::from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tokencast: time-series tokenizer and language-model forecaster"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config, "JSON run configuration");
  app.add_option("--out", o.out, "Run directory")->capture_default_str();
  app.add_option("--seed", o.seed, "Run seed (overrides the config)");
  app.add_option("--set", o.sets, "Config override key.path=value (repeatable)");
  app.add_option("--horizon", o.horizon, "Run a single configured horizon");
  app.add_flag("-q,--quiet", o.quiet, "Only print warnings and errors");

  auto* synth = app.add_subcommand("synth", "Write a synthetic series as CSV");
  std::string synth_out;
  synth->add_option("--output", synth_out, "CSV path (default <out>/data/synth.csv)");
  override_flag<std::string>(synth, o, "--kind", "data.synth_kind", "sine-mixture | seasonal-trend | ar1");
  override_flag<std::size_t>(synth, o, "--length", "data.synth.length", "Series length");

  auto* prepare = app.add_subcommand("prepare", "Impute, standardize and window the data");
  std::string csv;
  prepare->add_option("--csv", csv, "Use this CSV instead of the synthetic source");
  override_flag<std::string>(prepare, o, "--kind", "data.synth_kind", "Synthetic kind");
  override_flag<std::size_t>(prepare, o, "--history", "data.history_len", "History length");
  override_flag<std::size_t>(prepare, o, "--stride", "data.stride", "Window stride");

  auto* tok = app.add_subcommand("train-tokenizer", "Train the VQ tokenizer");
  override_flag<std::size_t>(tok, o, "--steps", "tokenizer_train.steps", "Optimizer steps");
  override_flag<std::size_t>(tok, o, "--batch", "tokenizer_train.batch", "Batch size");
  override_flag<double>(tok, o, "--lr", "tokenizer_train.lr", "Learning rate");
  override_flag<std::size_t>(tok, o, "--codebook-size", "tokenizer.K", "Codebook size K");
  override_flag<double>(tok, o, "--gamma", "tokenizer.gamma", "Diversity weight");

  auto* pre = app.add_subcommand("pretrain-lm", "Pretrain the backbone on the word corpus");
  override_flag<std::size_t>(pre, o, "--steps", "pretrain.steps", "Optimizer steps");
  override_flag<double>(pre, o, "--lr", "pretrain.lr", "Learning rate");

  auto* align = app.add_subcommand("align", "Extend the vocabulary and align its embeddings");
  override_flag<std::size_t>(align, o, "--steps", "align.steps", "Optimizer steps");
  override_flag<double>(align, o, "--lr", "align.lr", "Learning rate");
  override_flag<std::string>(align, o, "--init", "prompt.init", "mean | word | random");

  auto* ft = app.add_subcommand("finetune", "Generative fine-tuning of the aligned model");
  override_flag<std::size_t>(ft, o, "--steps", "finetune.steps", "Optimizer steps");
  override_flag<double>(ft, o, "--lr", "finetune.lr", "Learning rate");

  auto* fc = app.add_subcommand("forecast", "Forecast the test windows to CSV");
  bool intervals = false;
  override_flag<std::string>(fc, o, "--policy", "forecast.policy", "greedy | sample");
  override_flag<double>(fc, o, "--temperature", "forecast.temperature", "Sampling temperature");
  override_flag<std::size_t>(fc, o, "--top-k", "forecast.top_k", "Top-k (0 = full vocabulary)");
  override_flag<std::size_t>(fc, o, "--samples", "forecast.samples", "Sample paths per window");
  fc->add_flag("--intervals", intervals, "Add 50%/80% bands from sampled paths");

  auto* ev = app.add_subcommand("evaluate", "Metrics, baselines, coverage and plots");
  override_flag<std::size_t>(ev, o, "--samples", "forecast.samples", "Sample paths per window");
  override_flag<std::size_t>(ev, o, "--max-windows", "forecast.max_windows", "Cap on test windows");

  app.add_subcommand("diagnose", "Codebook usage table, heatmap and reconstructions");

  auto* ab = app.add_subcommand("ablate", "Run an ablation suite");
  std::string suite;
  ab->add_option("--suite", suite, "stages | codebook-size | init | context-segments | backbone-size")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }
  if (o.quiet) set_log_threshold(LogLevel::warn);

  try {
    if (!csv.empty()) {
      o.flags.emplace_back("data.source", json("csv").dump());
      o.flags.emplace_back("data.csv_path", json(csv).dump());
    }
    const auto cfg = resolve(o);
    const pipeline::Layout layout{o.out};
    const std::string name = app.get_subcommands().front()->get_name();
    pipeline::write_config(cfg, layout);
    log_info(name, ": config ", cfg.digest(), " ", cfg.to_json().dump());
    const auto horizons = pipeline::select_horizons(cfg, o.horizon);

    if (name == "synth") {
      const auto path = synth_out.empty() ? layout.root / "data" / "synth.csv"
                                          : std::filesystem::path(synth_out);
      pipeline::write_synth_csv(cfg, path);
      log_info("synth: wrote ", path.string());
    } else if (name == "pretrain-lm") {
      pipeline::run_pretrain(cfg, layout);
    } else if (name == "ablate") {
      const auto s = pipeline::suite_from_string(suite);
      for (auto h : horizons) {
        const auto t = pipeline::run_ablation(cfg, layout, s, h);
        std::cout << t.csv(cfg.digest());
      }
    } else {
      for (auto h : horizons) {
        if (name == "prepare") pipeline::run_prepare(cfg, layout, h);
        else if (name == "train-tokenizer") pipeline::run_train_tokenizer(cfg, layout, h);
        else if (name == "align") pipeline::run_align(cfg, layout, h);
        else if (name == "finetune") pipeline::run_finetune(cfg, layout, h);
        else if (name == "forecast") pipeline::run_forecast(cfg, layout, h, intervals);
        else if (name == "evaluate") {
          const auto r = pipeline::run_evaluate(cfg, layout, h);
          std::cout << r.to_json().dump(2) << "\n";
        } else if (name == "diagnose") pipeline::run_diagnose(cfg, layout, h);
      }
    }
  } catch (const TrainingAbort& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
