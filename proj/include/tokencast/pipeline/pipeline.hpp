#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tokencast/backbone/lm.hpp"
#include "tokencast/data/window.hpp"
#include "tokencast/error.hpp"
#include "tokencast/eval/report.hpp"
#include "tokencast/pipeline/config.hpp"
#include "tokencast/tokenizer/tokenizer.hpp"
#include "tokencast/vocab/unified.hpp"

namespace tokencast::pipeline {

namespace fs = std::filesystem;

// An upstream artifact is absent or was produced by a different
// configuration; names the command that (re)creates it.
class MissingUpstream : public ValidationError {
 public:
  MissingUpstream(const fs::path& path, const std::string& command, const std::string& why);
  const std::string& command() const { return command_; }

 private:
  std::string command_;
};

// File layout under a run directory. Stages that depend on the horizon live
// under h<horizon>/; the pretrained backbone is shared.
struct Layout {
  fs::path root;

  fs::path config() const { return root / "config.json"; }
  fs::path pretrain() const { return root / "lm" / "pretrain.tkc"; }
  fs::path pretrain_curve() const { return root / "lm" / "pretrain_curve.csv"; }
  fs::path horizon(std::size_t h) const { return root / ("h" + std::to_string(h)); }
  fs::path manifest(std::size_t h) const { return horizon(h) / "data" / "manifest.json"; }
  fs::path windows(std::size_t h, data::Split s) const {
    return horizon(h) / "data" / (std::string(data::to_string(s)) + ".json");
  }
  fs::path tokenizer(std::size_t h) const { return horizon(h) / "tokenizer" / "tokenizer.tkc"; }
  fs::path tokenizer_metrics(std::size_t h) const {
    return horizon(h) / "tokenizer" / "metrics.csv";
  }
  fs::path align(std::size_t h) const { return horizon(h) / "lm" / "align.tkc"; }
  fs::path align_curve(std::size_t h) const { return horizon(h) / "lm" / "align_curve.csv"; }
  fs::path vocab(std::size_t h) const { return horizon(h) / "lm" / "vocab.json"; }
  fs::path finetune(std::size_t h) const { return horizon(h) / "lm" / "finetune.tkc"; }
  fs::path finetune_curve(std::size_t h) const {
    return horizon(h) / "lm" / "finetune_curve.csv";
  }
  fs::path forecast(std::size_t h) const { return horizon(h) / "forecast" / "forecast.csv"; }
  fs::path eval_dir(std::size_t h) const { return horizon(h) / "eval"; }
  fs::path diagnose_dir(std::size_t h) const { return horizon(h) / "diagnose"; }
  fs::path ablation(const std::string& suite) const { return root / "ablate" / suite; }
};

// Digests of the configuration subsets each stage depends on. An artifact
// records its stage digest; consumers reject mismatches.
std::string data_digest(const RunConfig& cfg, std::size_t horizon);
std::string tokenizer_digest(const RunConfig& cfg, std::size_t horizon);
std::string pretrain_digest(const RunConfig& cfg);
std::string align_digest(const RunConfig& cfg, std::size_t horizon);
std::string finetune_digest(const RunConfig& cfg, std::size_t horizon);

struct Dataset {
  data::DatasetManifest manifest;
  std::vector<data::TimeSeriesWindow> train, val, test;
};

// Raw series named by the data config (synthetic or CSV).
data::RawSeries load_source(const RunConfig& cfg, std::string* source_digest = nullptr);

// Trained artifacts plus the vocabulary wiring of an extended model.
struct ExtendedModel {
  backbone::LanguageModel lm;
  vocab::UnifiedVocab vocab;
};

// Appends K temporal and S special rows initialized from the word rows.
ExtendedModel extend_model(const backbone::LanguageModel& pretrained, std::size_t codes,
                           vocab::InitStrategy strategy, std::uint64_t seed);

// One sequence per window (every stride-th), encoded with the tokenizer.
std::vector<backbone::Sequence> build_sequences(const tokenizer::Tokenizer& tok,
                                                const std::vector<data::TimeSeriesWindow>& windows,
                                                const vocab::UnifiedVocab& vocab,
                                                std::size_t words, vocab::PromptMode mode,
                                                const vocab::SegmentToggles& toggles,
                                                std::size_t horizon, std::size_t stride = 1);

// Stage commands. Each writes its outputs under the layout and embeds the
// config digest; missing upstream artifacts raise MissingUpstream.
void write_config(const RunConfig& cfg, const Layout& layout);
void write_synth_csv(const RunConfig& cfg, const fs::path& path);
Dataset run_prepare(const RunConfig& cfg, const Layout& layout, std::size_t horizon);
tokenizer::TrainReport run_train_tokenizer(const RunConfig& cfg, const Layout& layout,
                                           std::size_t horizon);
backbone::TrainResult run_pretrain(const RunConfig& cfg, const Layout& layout);
backbone::TrainResult run_align(const RunConfig& cfg, const Layout& layout, std::size_t horizon);
backbone::TrainResult run_finetune(const RunConfig& cfg, const Layout& layout,
                                   std::size_t horizon);
// Point forecasts (and bands when intervals is set) for the evaluated test
// windows as CSV.
void run_forecast(const RunConfig& cfg, const Layout& layout, std::size_t horizon,
                  bool intervals);
eval::EvalReport run_evaluate(const RunConfig& cfg, const Layout& layout, std::size_t horizon);
eval::CodebookDiagnosis run_diagnose(const RunConfig& cfg, const Layout& layout,
                                     std::size_t horizon);

// Loaders that check the producing configuration.
Dataset load_dataset(const RunConfig& cfg, const Layout& layout, std::size_t horizon);
tokenizer::Tokenizer load_tokenizer(const RunConfig& cfg, const Layout& layout,
                                    std::size_t horizon);
backbone::LanguageModel load_pretrained(const RunConfig& cfg, const Layout& layout);
ExtendedModel load_stage_model(const RunConfig& cfg, const Layout& layout, std::size_t horizon,
                               backbone::Stage stage);

// Evaluated test windows: every window_stride-th, capped at max_windows.
std::vector<data::TimeSeriesWindow> eval_windows(const RunConfig& cfg,
                                                 const std::vector<data::TimeSeriesWindow>& test);

// Horizons a command runs for: all configured ones, or the single requested
// one (which must be configured).
std::vector<std::size_t> select_horizons(const RunConfig& cfg, std::size_t requested);

}  // namespace tokencast::pipeline
