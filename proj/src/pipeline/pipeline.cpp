#include "tokencast/pipeline/pipeline.hpp"

#include <iomanip>
#include <sstream>

#include "tokencast/core/parallel.hpp"
#include "tokencast/data/synth.hpp"
#include "tokencast/eval/forecast.hpp"
#include "tokencast/io/binary.hpp"
#include "tokencast/io/checkpoint.hpp"
#include "tokencast/io/digest.hpp"
#include "tokencast/log.hpp"

namespace tokencast::pipeline {

using nlohmann::json;

MissingUpstream::MissingUpstream(const fs::path& path, const std::string& command,
                                 const std::string& why)
    : ValidationError(path.string() + " " + why + "; run `tokencast " + command + "` first"),
      command_(command) {}

namespace {

std::string hash_json(const json& j) { return io::sha256_hex(j.dump()); }

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

json toggles_json(const vocab::SegmentToggles& t) {
  return json{{"general", t.general}, {"local", t.local}};
}

// Stage digest recorded in a checkpoint or manifest, or empty.
std::string recorded_digest(const json& meta) { return meta.value("stage_digest", ""); }

io::Checkpoint load_checked(const fs::path& path, const std::string& command,
                            const std::string& expected) {
  if (!fs::exists(path)) throw MissingUpstream(path, command, "is missing");
  io::Checkpoint ckpt = io::load_checkpoint(path);
  if (recorded_digest(ckpt.meta) != expected) {
    throw MissingUpstream(path, command, "was produced by a different configuration");
  }
  return ckpt;
}

std::string backbone_digest(const backbone::LanguageModel& lm) {
  std::string all;
  for (const auto& [name, t] : lm.backbone_tensors()) all += name + ":" + io::tensor_digest(t) + "\n";
  return io::sha256_hex(all);
}

}  // namespace

std::string data_digest(const RunConfig& cfg, std::size_t horizon) {
  json d = cfg.to_json().at("data");
  d.erase("horizons");
  return hash_json({{"data", d}, {"horizon", horizon}, {"patch", cfg.tokenizer.patch}});
}

std::string tokenizer_digest(const RunConfig& cfg, std::size_t horizon) {
  const json j = cfg.to_json();
  return hash_json({{"data", data_digest(cfg, horizon)},
                    {"tokenizer", j.at("tokenizer")},
                    {"train", j.at("tokenizer_train")},
                    {"seed", cfg.seed}});
}

std::string pretrain_digest(const RunConfig& cfg) {
  const json j = cfg.to_json();
  return hash_json({{"corpus", j.at("corpus")},
                    {"backbone", j.at("backbone")},
                    {"pretrain", j.at("pretrain")},
                    {"seed", cfg.seed}});
}

std::string align_digest(const RunConfig& cfg, std::size_t horizon) {
  const json j = cfg.to_json();
  return hash_json({{"tokenizer", tokenizer_digest(cfg, horizon)},
                    {"pretrain", pretrain_digest(cfg)},
                    {"align", j.at("align")},
                    {"prompt", j.at("prompt")}});
}

std::string finetune_digest(const RunConfig& cfg, std::size_t horizon) {
  return hash_json({{"align", align_digest(cfg, horizon)}, {"finetune", cfg.to_json().at("finetune")}});
}

std::vector<std::size_t> select_horizons(const RunConfig& cfg, std::size_t requested) {
  if (requested == 0) return cfg.data.horizons;
  for (std::size_t h : cfg.data.horizons) {
    if (h == requested) return {h};
  }
  throw ValidationError("horizon " + std::to_string(requested) +
                        " is not in the configured horizons list");
}

void write_config(const RunConfig& cfg, const Layout& layout) {
  const json j{{"config_digest", cfg.digest()}, {"config", cfg.to_json()}};
  io::write_file(layout.config(), j.dump(2) + "\n");
}

data::RawSeries load_source(const RunConfig& cfg, std::string* source_digest) {
  if (cfg.data.source == "csv") {
    if (!fs::exists(cfg.data.csv_path)) {
      throw ValidationError("data.csv_path " + cfg.data.csv_path + " does not exist");
    }
    if (source_digest) *source_digest = io::sha256_file(cfg.data.csv_path);
    return data::load_csv(cfg.data.csv_path);
  }
  auto raw = data::synth_series(cfg.data.synth_kind, cfg.data.synth, cfg.stage_seed("synth"));
  if (source_digest) {
    std::string all;
    for (const auto& ch : data::impute(raw).channels) all += io::sha256_doubles(ch);
    *source_digest = io::sha256_hex(all);
  }
  return raw;
}

void write_synth_csv(const RunConfig& cfg, const fs::path& path) {
  const auto raw = data::synth_series(cfg.data.synth_kind, cfg.data.synth, cfg.stage_seed("synth"));
  data::write_csv(path, data::impute(raw));
}

Dataset run_prepare(const RunConfig& cfg, const Layout& layout, std::size_t horizon) {
  std::string source_digest;
  const auto raw = load_source(cfg, &source_digest);
  data::PrepareOptions po;
  po.ratios = cfg.data.ratios;
  po.stride = cfg.data.stride;
  po.history_len = cfg.data.history_len;
  po.horizon = horizon;
  po.patch = cfg.tokenizer.patch;
  auto prepared = data::prepare(raw, po, source_digest);
  if (prepared.train.empty()) throw ValidationError("the train split holds no complete window");
  if (prepared.val.empty()) throw ValidationError("the val split holds no complete window");
  if (prepared.test.empty()) throw ValidationError("the test split holds no complete window");
  json m = prepared.manifest.to_json();
  m["config_digest"] = cfg.digest();
  m["stage_digest"] = data_digest(cfg, horizon);
  io::write_file(layout.manifest(horizon), m.dump(2) + "\n");
  for (auto [split, ws] : {std::pair{data::Split::train, &prepared.train},
                           std::pair{data::Split::val, &prepared.val},
                           std::pair{data::Split::test, &prepared.test}}) {
    data::write_window_archive(layout.windows(horizon, split), *ws, cfg.digest());
  }
  log_info("prepare h", horizon, ": ", prepared.train.size(), " train, ", prepared.val.size(),
           " val, ", prepared.test.size(), " test windows");
  return {prepared.manifest, std::move(prepared.train), std::move(prepared.val),
          std::move(prepared.test)};
}

Dataset load_dataset(const RunConfig& cfg, const Layout& layout, std::size_t horizon) {
  const auto path = layout.manifest(horizon);
  if (!fs::exists(path)) throw MissingUpstream(path, "prepare", "is missing");
  const json m = json::parse(io::read_file(path));
  if (recorded_digest(m) != data_digest(cfg, horizon)) {
    throw MissingUpstream(path, "prepare", "was produced by a different configuration");
  }
  Dataset d;
  d.manifest = data::DatasetManifest::from_json(m);
  d.train = data::read_window_archive(layout.windows(horizon, data::Split::train));
  d.val = data::read_window_archive(layout.windows(horizon, data::Split::val));
  d.test = data::read_window_archive(layout.windows(horizon, data::Split::test));
  return d;
}

tokenizer::TrainReport run_train_tokenizer(const RunConfig& cfg, const Layout& layout,
                                           std::size_t horizon) {
  const Dataset ds = load_dataset(cfg, layout, horizon);
  tokenizer::Tokenizer tok(cfg.tokenizer, cfg.stage_seed("tokenizer-init"));
  auto opt = cfg.tokenizer_train;
  opt.seed = cfg.stage_seed("tokenizer");
  auto abort_path = layout.tokenizer(horizon);
  abort_path.replace_extension(".abort.tkc");
  opt.abort_checkpoint = abort_path;
  const auto& eval = ds.val;
  const auto report = tokenizer::train_tokenizer(tok, ds.train, eval, opt);
  json meta{{"config_digest", cfg.digest()},
            {"stage_digest", tokenizer_digest(cfg, horizon)},
            {"recon_mse", report.final_recon_mse},
            {"utilization", report.final_utilization}};
  io::save_checkpoint(layout.tokenizer(horizon), tok.to_checkpoint(meta));
  tokenizer::write_metrics_csv(layout.tokenizer_metrics(horizon), report, cfg.digest());
  log_info("train-tokenizer h", horizon, ": recon mse ", report.final_recon_mse, ", utilization ",
           report.final_utilization);
  return report;
}

tokenizer::Tokenizer load_tokenizer(const RunConfig& cfg, const Layout& layout,
                                    std::size_t horizon) {
  return tokenizer::Tokenizer::from_checkpoint(
      load_checked(layout.tokenizer(horizon), "train-tokenizer", tokenizer_digest(cfg, horizon)));
}

backbone::TrainResult run_pretrain(const RunConfig& cfg, const Layout& layout) {
  const auto stream = data::synth_corpus(cfg.corpus.words, cfg.stage_seed("corpus"), cfg.corpus.tokens);
  auto seqs = backbone::corpus_sequences(stream, cfg.corpus.seq_len);
  const std::size_t nval = std::min(cfg.corpus.val_sequences, seqs.size() / 2);
  std::vector<backbone::Sequence> val(seqs.end() - static_cast<std::ptrdiff_t>(nval), seqs.end());
  seqs.resize(seqs.size() - nval);
  backbone::LanguageModel lm(cfg.backbone, cfg.corpus.words, cfg.stage_seed("pretrain-init"));
  auto plan = cfg.pretrain;
  plan.seed = cfg.stage_seed("pretrain");
  const auto result = backbone::train_lm(lm, seqs, val, plan);
  json meta{{"config_digest", cfg.digest()},
            {"stage_digest", pretrain_digest(cfg)},
            {"words", cfg.corpus.words},
            {"initial_val_loss", result.initial_val_loss},
            {"best_val_loss", result.best_val_loss}};
  io::save_checkpoint(layout.pretrain(), lm.to_checkpoint("pretrain", meta));
  backbone::write_curve_csv(layout.pretrain_curve(), result, cfg.digest());
  log_info("pretrain-lm: val loss ", result.initial_val_loss, " -> ", result.best_val_loss);
  return result;
}

backbone::LanguageModel load_pretrained(const RunConfig& cfg, const Layout& layout) {
  return backbone::LanguageModel::from_checkpoint(
      load_checked(layout.pretrain(), "pretrain-lm", pretrain_digest(cfg)));
}

ExtendedModel extend_model(const backbone::LanguageModel& pretrained, std::size_t codes,
                           vocab::InitStrategy strategy, std::uint64_t seed) {
  vocab::UnifiedVocab v(pretrained.vocab_size(), codes);
  // A checkpoint round trip copies every tensor.
  auto lm = backbone::LanguageModel::from_checkpoint(pretrained.to_checkpoint("pretrain"));
  const auto& e = pretrained.embedding();
  const auto rows = vocab::init_new_embeddings(e, strategy, v.size() - v.words(), seed);
  std::vector<double> all(e.data().begin(), e.data().end());
  all.insert(all.end(), rows.data().begin(), rows.data().end());
  lm.set_embedding(core::Tensor::from({v.size(), e.dim(1)}, all));
  return {std::move(lm), std::move(v)};
}

std::vector<backbone::Sequence> build_sequences(const tokenizer::Tokenizer& tok,
                                                const std::vector<data::TimeSeriesWindow>& windows,
                                                const vocab::UnifiedVocab& vocab,
                                                std::size_t words, vocab::PromptMode mode,
                                                const vocab::SegmentToggles& toggles,
                                                std::size_t horizon, std::size_t stride) {
  const vocab::WordTable table(words);
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < windows.size(); i += stride) picked.push_back(i);
  std::vector<backbone::Sequence> out(picked.size());
  const std::size_t hist_tokens = windows.empty() ? 0 : windows.front().history.size() / tok.config().patch;
  core::parallel_for(picked.size(), [&](std::size_t i) {
    const auto& w = windows[picked[i]];
    // The encoder is causal, so the history codes are a prefix of the
    // full-window codes.
    const auto all = tok.series_to_tokens(w.full(), w.norm);
    const std::vector<int> hist(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(hist_tokens));
    const std::vector<int> fut(all.begin() + static_cast<std::ptrdiff_t>(hist_tokens), all.end());
    auto p = vocab::build_prompt(w.stats, hist, &fut, vocab, table, mode, toggles, horizon);
    out[i] = {std::move(p.ids), std::move(p.loss_mask)};
  });
  return out;
}

namespace {

json stage_meta(const RunConfig& cfg, const ExtendedModel& m, std::size_t horizon,
                const std::string& stage_digest, const backbone::TrainResult& r) {
  return json{{"config_digest", cfg.digest()},
              {"stage_digest", stage_digest},
              {"vocab", m.vocab.layout_json()},
              {"prompt_template", vocab::kPromptTemplateVersion},
              {"toggles", toggles_json(cfg.prompt.toggles)},
              {"init", vocab::to_string(cfg.prompt.init)},
              {"horizon", horizon},
              {"initial_val_loss", r.initial_val_loss},
              {"best_val_loss", r.best_val_loss},
              {"best_step", r.best_step},
              {"steps_run", r.steps_run},
              {"early_stopped", r.early_stopped},
              {"backbone_digest", backbone_digest(m.lm)}};
}

}  // namespace

backbone::TrainResult run_align(const RunConfig& cfg, const Layout& layout, std::size_t horizon) {
  const auto pre = load_pretrained(cfg, layout);
  const auto tok = load_tokenizer(cfg, layout, horizon);
  const Dataset ds = load_dataset(cfg, layout, horizon);
  ExtendedModel m = extend_model(pre, cfg.tokenizer.K, cfg.prompt.init, cfg.stage_seed("extend"));
  const std::string before = backbone_digest(m.lm);
  const auto mode = vocab::PromptMode::align;
  const auto train = build_sequences(tok, ds.train, m.vocab, m.vocab.words(), mode,
                                     cfg.prompt.toggles, horizon);
  const auto val = build_sequences(tok, ds.val, m.vocab, m.vocab.words(), mode, cfg.prompt.toggles,
                                   horizon, cfg.prompt.val_stride);
  auto plan = cfg.align;
  plan.seed = cfg.stage_seed("align");
  plan.pad_id = m.vocab.pad();
  const auto result = backbone::train_lm(m.lm, train, val, plan);
  if (backbone_digest(m.lm) != before) {
    throw std::logic_error("align modified a frozen backbone tensor");
  }
  const vocab::WordTable table(m.vocab.words());
  io::save_checkpoint(layout.align(horizon),
                      m.lm.to_checkpoint("align", stage_meta(cfg, m, horizon, align_digest(cfg, horizon), result)));
  json vj = m.vocab.to_json(table);
  vj["config_digest"] = cfg.digest();
  io::write_file(layout.vocab(horizon), vj.dump(2) + "\n");
  backbone::write_curve_csv(layout.align_curve(horizon), result, cfg.digest());
  log_info("align h", horizon, ": held-out loss ", result.initial_val_loss, " -> ",
           result.best_val_loss);
  return result;
}

ExtendedModel load_stage_model(const RunConfig& cfg, const Layout& layout, std::size_t horizon,
                               backbone::Stage stage) {
  const bool align = stage == backbone::Stage::align;
  const auto ckpt = load_checked(align ? layout.align(horizon) : layout.finetune(horizon),
                                 align ? "align" : "finetune",
                                 align ? align_digest(cfg, horizon) : finetune_digest(cfg, horizon));
  return {backbone::LanguageModel::from_checkpoint(ckpt),
          vocab::UnifiedVocab::from_layout(ckpt.meta.at("vocab"))};
}

backbone::TrainResult run_finetune(const RunConfig& cfg, const Layout& layout,
                                   std::size_t horizon) {
  ExtendedModel m = load_stage_model(cfg, layout, horizon, backbone::Stage::align);
  const auto tok = load_tokenizer(cfg, layout, horizon);
  const Dataset ds = load_dataset(cfg, layout, horizon);
  const auto mode = vocab::PromptMode::finetune;
  const auto train = build_sequences(tok, ds.train, m.vocab, m.vocab.words(), mode,
                                     cfg.prompt.toggles, horizon);
  const auto val = build_sequences(tok, ds.val, m.vocab, m.vocab.words(), mode, cfg.prompt.toggles,
                                   horizon, cfg.prompt.val_stride);
  auto plan = cfg.finetune;
  plan.seed = cfg.stage_seed("finetune");
  plan.pad_id = m.vocab.pad();
  const auto result = backbone::train_lm(m.lm, train, val, plan);
  io::save_checkpoint(layout.finetune(horizon),
                      m.lm.to_checkpoint("finetune", stage_meta(cfg, m, horizon, finetune_digest(cfg, horizon), result)));
  backbone::write_curve_csv(layout.finetune_curve(horizon), result, cfg.digest());
  log_info("finetune h", horizon, ": held-out response loss ", result.initial_val_loss, " -> ",
           result.best_val_loss, " (best step ", result.best_step, ")");
  return result;
}

std::vector<data::TimeSeriesWindow> eval_windows(const RunConfig& cfg,
                                                 const std::vector<data::TimeSeriesWindow>& test) {
  std::vector<data::TimeSeriesWindow> out;
  for (std::size_t i = 0; i < test.size(); i += cfg.forecast.window_stride) {
    if (cfg.forecast.max_windows && out.size() >= cfg.forecast.max_windows) break;
    out.push_back(test[i]);
  }
  return out;
}

void run_forecast(const RunConfig& cfg, const Layout& layout, std::size_t horizon,
                  bool intervals) {
  const ExtendedModel m = load_stage_model(cfg, layout, horizon, backbone::Stage::finetune);
  const auto tok = load_tokenizer(cfg, layout, horizon);
  const Dataset ds = load_dataset(cfg, layout, horizon);
  const eval::Forecaster fc(tok, m.lm, m.vocab, m.vocab.words(), cfg.prompt.toggles, horizon);
  const auto windows = eval_windows(cfg, ds.test);
  const auto policy = cfg.forecast.sampling();
  const std::uint64_t seed = cfg.stage_seed("forecast");
  std::vector<eval::Forecast> out(windows.size());
  core::parallel_for(windows.size(), [&](std::size_t i) {
    const auto s = eval::window_seed(seed, i);
    out[i] = fc.forecast(windows[i], policy, s);
    if (intervals) {
      auto b = fc.forecast_intervals(windows[i], cfg.forecast.temperature, cfg.forecast.samples, s,
                                     cfg.forecast.top_k);
      out[i].q10 = std::move(b.q10);
      out[i].q25 = std::move(b.q25);
      out[i].q75 = std::move(b.q75);
      out[i].q90 = std::move(b.q90);
    }
  });
  std::ostringstream os;
  os << "# config_digest=" << cfg.digest() << "\n";
  os << "window,channel,offset,step,truth,point";
  if (intervals) os << ",q10,q25,q75,q90";
  os << ",malformed,repaired\n";
  std::size_t malformed = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    const auto& f = out[i];
    malformed += f.malformed;
    for (std::size_t s = 0; s < horizon; ++s) {
      os << i << "," << w.channel << "," << w.offset << "," << s + 1 << "," << fmt(w.future[s]) << ","
         << fmt(f.point[s]);
      if (intervals) {
        os << "," << fmt(f.q10[s]) << "," << fmt(f.q25[s]) << "," << fmt(f.q75[s]) << ","
           << fmt(f.q90[s]);
      }
      os << "," << f.malformed << "," << f.repaired << "\n";
    }
  }
  io::write_file(layout.forecast(horizon), os.str());
  if (malformed) log_warn("forecast h", horizon, ": ", malformed, " malformed generation(s), persistence used");
  log_info("forecast h", horizon, ": ", windows.size(), " windows -> ", layout.forecast(horizon).string());
}

eval::EvalReport run_evaluate(const RunConfig& cfg, const Layout& layout, std::size_t horizon) {
  const ExtendedModel m = load_stage_model(cfg, layout, horizon, backbone::Stage::finetune);
  const auto tok = load_tokenizer(cfg, layout, horizon);
  const Dataset ds = load_dataset(cfg, layout, horizon);
  const eval::Forecaster fc(tok, m.lm, m.vocab, m.vocab.words(), cfg.prompt.toggles, horizon);
  const auto windows = eval_windows(cfg, ds.test);
  eval::EvalOptions opt;
  opt.policy = cfg.forecast.sampling();
  opt.seasonal_period = cfg.forecast.seasonal_period;
  opt.interval_temperatures = cfg.forecast.interval_temperatures;
  opt.samples = cfg.forecast.samples;
  opt.top_k = cfg.forecast.top_k;
  opt.seed = cfg.stage_seed("evaluate");
  std::vector<eval::Forecast> forecasts;
  auto report = eval::evaluate(fc, windows, opt, &forecasts);
  report.config_digest = cfg.digest();
  const auto dir = layout.eval_dir(horizon);
  report.write(dir);
  for (std::size_t i = 0; i < std::min(cfg.forecast.plots, windows.size()); ++i) {
    io::write_file(dir / ("forecast_" + std::to_string(i) + ".svg"),
                   eval::forecast_svg(windows[i], forecasts[i], cfg.digest()));
  }
  log_info("evaluate h", horizon, ": mse ", report.model.mse, " mae ", report.model.mae,
           " | persistence mse ", report.persistence.mse, " | seasonal-naive mse ",
           report.seasonal.mse, " over ", report.windows, " windows");
  if (report.malformed) log_warn("evaluate h", horizon, ": ", report.malformed, " malformed generation(s)");
  return report;
}

eval::CodebookDiagnosis run_diagnose(const RunConfig& cfg, const Layout& layout,
                                     std::size_t horizon) {
  const auto tok = load_tokenizer(cfg, layout, horizon);
  const Dataset ds = load_dataset(cfg, layout, horizon);
  const auto d = eval::diagnose_codebook(tok, ds.test);
  const auto dir = layout.diagnose_dir(horizon);
  eval::write_usage_csv(dir / "usage.csv", d, cfg.digest());
  io::write_file(dir / "usage.svg", eval::usage_heatmap_svg(d, cfg.digest()));
  const auto windows = eval_windows(cfg, ds.test);
  for (std::size_t i = 0; i < std::min(cfg.forecast.plots, windows.size()); ++i) {
    io::write_file(dir / ("reconstruction_" + std::to_string(i) + ".svg"),
                   eval::reconstruction_svg(tok, windows[i], cfg.digest()));
  }
  log_info("diagnose h", horizon, ": utilization ", d.utilization, " over ", d.total, " tokens");
  return d;
}

}  // namespace tokencast::pipeline
