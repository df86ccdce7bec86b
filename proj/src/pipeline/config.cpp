#include "tokencast/pipeline/config.hpp"

#include <limits>

#include "tokencast/error.hpp"
#include "tokencast/io/binary.hpp"
#include "tokencast/io/digest.hpp"

namespace tokencast::pipeline {

using nlohmann::json;

backbone::SamplingPolicy ForecastConfig::sampling() const {
  if (policy == "greedy") return backbone::SamplingPolicy::make_greedy();
  return backbone::SamplingPolicy::make_sample(temperature, top_k);
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

json plan_json(const backbone::TrainPlan& p) {
  return json{{"lr", p.lr},
              {"batch", p.batch},
              {"steps", p.steps},
              {"clip", p.clip},
              {"eval_every", p.eval_every},
              {"patience", p.patience},
              {"trainable", p.trainable == backbone::Trainable::all ? "all" : "embeddings-only"}};
}

backbone::TrainPlan plan_from(const json& j, backbone::TrainPlan p) {
  p.lr = j.at("lr").get<double>();
  p.batch = j.at("batch").get<std::size_t>();
  p.steps = j.at("steps").get<std::size_t>();
  p.clip = j.at("clip").get<double>();
  p.eval_every = j.at("eval_every").get<std::size_t>();
  p.patience = j.at("patience").get<std::size_t>();
  const auto t = j.at("trainable").get<std::string>();
  if (t == "all") p.trainable = backbone::Trainable::all;
  else if (t == "embeddings-only") p.trainable = backbone::Trainable::embeddings_only;
  else throw ValidationError("unknown trainable set '" + t + "' (expected all or embeddings-only)");
  return p;
}

void check_keys(const json& given, const json& known, const std::string& where) {
  if (!given.is_object()) {
    throw ValidationError("config " + (where.empty() ? std::string("root") : where) +
                          " must be an object");
  }
  for (const auto& [key, value] : given.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!known.contains(key)) throw ValidationError("unknown config key '" + path + "'");
    if (known.at(key).is_object()) check_keys(value, known.at(key), path);
  }
}

}  // namespace

std::uint64_t RunConfig::stage_seed(const std::string& stage) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stage) h = (h ^ c) * 0x100000001b3ULL;
  return splitmix(seed ^ h);
}

json RunConfig::to_json() const {
  json sines = json::array();
  for (const auto& s : data.synth.sines) {
    sines.push_back({{"amplitude", s.amplitude}, {"frequency", s.frequency}, {"phase", s.phase}});
  }
  const auto& sp = data.synth;
  const auto& tt = tokenizer_train;
  return json{
      {"seed", seed},
      {"data",
       {{"source", data.source},
        {"csv_path", data.csv_path},
        {"synth_kind", data::to_string(data.synth_kind)},
        {"synth",
         {{"length", sp.length},
          {"channels", sp.channels},
          {"noise", sp.noise},
          {"sines", sines},
          {"period", sp.period},
          {"amplitude", sp.amplitude},
          {"harmonic", sp.harmonic},
          {"slope", sp.slope},
          {"level", sp.level},
          {"rho", sp.rho},
          {"sigma", sp.sigma}}},
        {"split", {{"train", data.ratios.train}, {"val", data.ratios.val}, {"test", data.ratios.test}}},
        {"stride", data.stride},
        {"history_len", data.history_len},
        {"horizons", data.horizons}}},
      {"tokenizer", tokenizer.to_json()},
      {"tokenizer_train",
       {{"steps", tt.steps},
        {"batch", tt.batch},
        {"lr", tt.lr},
        {"clip", tt.clip},
        {"init_noise", tt.init_noise},
        {"eval_windows", tt.eval_windows}}},
      {"corpus",
       {{"words", corpus.words},
        {"tokens", corpus.tokens},
        {"seq_len", corpus.seq_len},
        {"val_sequences", corpus.val_sequences}}},
      {"backbone", backbone.to_json()},
      {"pretrain", plan_json(pretrain)},
      {"align", plan_json(align)},
      {"finetune", plan_json(finetune)},
      {"prompt",
       {{"init", vocab::to_string(prompt.init)},
        {"general", prompt.toggles.general},
        {"local", prompt.toggles.local},
        {"val_stride", prompt.val_stride}}},
      {"forecast",
       {{"policy", forecast.policy},
        {"temperature", forecast.temperature},
        {"top_k", forecast.top_k},
        {"samples", forecast.samples},
        {"interval_temperatures", forecast.interval_temperatures},
        {"seasonal_period", forecast.seasonal_period},
        {"window_stride", forecast.window_stride},
        {"max_windows", forecast.max_windows},
        {"plots", forecast.plots}}}};
}

RunConfig RunConfig::from_json(const json& given) {
  const RunConfig defaults;
  json j = defaults.to_json();
  check_keys(given, j, "");
  j.merge_patch(given);

  RunConfig c;
  try {
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& d = j.at("data");
    c.data.source = d.at("source").get<std::string>();
    c.data.csv_path = d.at("csv_path").get<std::string>();
    c.data.synth_kind = data::synth_kind_from_string(d.at("synth_kind").get<std::string>());
    const auto& s = d.at("synth");
    auto& sp = c.data.synth;
    sp.length = s.at("length").get<std::size_t>();
    sp.channels = s.at("channels").get<std::size_t>();
    sp.noise = s.at("noise").get<double>();
    sp.sines.clear();
    for (const auto& e : s.at("sines")) {
      sp.sines.push_back({e.value("amplitude", 1.0), e.value("frequency", 1.0 / 24.0),
                          e.value("phase", 0.0)});
    }
    sp.period = s.at("period").get<double>();
    sp.amplitude = s.at("amplitude").get<double>();
    sp.harmonic = s.at("harmonic").get<double>();
    sp.slope = s.at("slope").get<double>();
    sp.level = s.at("level").get<double>();
    sp.rho = s.at("rho").get<double>();
    sp.sigma = s.at("sigma").get<double>();
    c.data.ratios = {d.at("split").at("train").get<double>(), d.at("split").at("val").get<double>(),
                     d.at("split").at("test").get<double>()};
    c.data.stride = d.at("stride").get<std::size_t>();
    c.data.history_len = d.at("history_len").get<std::size_t>();
    c.data.horizons = d.at("horizons").get<std::vector<std::size_t>>();

    c.tokenizer = tokenizer::TokenizerConfig::from_json(j.at("tokenizer"));
    const auto& tt = j.at("tokenizer_train");
    c.tokenizer_train.steps = tt.at("steps").get<std::size_t>();
    c.tokenizer_train.batch = tt.at("batch").get<std::size_t>();
    c.tokenizer_train.lr = tt.at("lr").get<double>();
    c.tokenizer_train.clip = tt.at("clip").get<double>();
    c.tokenizer_train.init_noise = tt.at("init_noise").get<double>();
    c.tokenizer_train.eval_windows = tt.at("eval_windows").get<std::size_t>();

    const auto& co = j.at("corpus");
    c.corpus.words = co.at("words").get<std::size_t>();
    c.corpus.tokens = co.at("tokens").get<std::size_t>();
    c.corpus.seq_len = co.at("seq_len").get<std::size_t>();
    c.corpus.val_sequences = co.at("val_sequences").get<std::size_t>();

    c.backbone = backbone::BackboneConfig::from_json(j.at("backbone"));
    c.pretrain = plan_from(j.at("pretrain"), c.pretrain);
    c.align = plan_from(j.at("align"), c.align);
    c.finetune = plan_from(j.at("finetune"), c.finetune);

    const auto& p = j.at("prompt");
    c.prompt.init = vocab::init_strategy_from_string(p.at("init").get<std::string>());
    c.prompt.toggles.general = p.at("general").get<bool>();
    c.prompt.toggles.local = p.at("local").get<bool>();
    c.prompt.val_stride = p.at("val_stride").get<std::size_t>();

    const auto& f = j.at("forecast");
    c.forecast.policy = f.at("policy").get<std::string>();
    c.forecast.temperature = f.at("temperature").get<double>();
    c.forecast.top_k = f.at("top_k").get<std::size_t>();
    c.forecast.samples = f.at("samples").get<std::size_t>();
    c.forecast.interval_temperatures = f.at("interval_temperatures").get<std::vector<double>>();
    c.forecast.seasonal_period = f.at("seasonal_period").get<std::size_t>();
    c.forecast.window_stride = f.at("window_stride").get<std::size_t>();
    c.forecast.max_windows = f.at("max_windows").get<std::size_t>();
    c.forecast.plots = f.at("plots").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string RunConfig::digest() const { return io::sha256_hex(to_json().dump()); }

void RunConfig::validate() const {
  if (data.source != "synth" && data.source != "csv") {
    throw ValidationError("data.source must be synth or csv, got '" + data.source + "'");
  }
  if (data.source == "csv" && data.csv_path.empty()) {
    throw ValidationError("data.source is csv but data.csv_path is empty");
  }
  if (data.horizons.empty()) throw ValidationError("data.horizons must list at least one horizon");
  if (data.stride == 0) throw ValidationError("data.stride must be >= 1");
  tokenizer.validate();
  backbone.validate();
  pretrain.validate();
  align.validate();
  finetune.validate();
  if (corpus.words < 32) throw ValidationError("corpus.words must be >= 32");
  if (corpus.seq_len < 2 || corpus.seq_len > backbone.max_seq_len) {
    throw ValidationError("corpus.seq_len must be in [2, backbone.max_seq_len]");
  }
  if (forecast.policy != "greedy" && forecast.policy != "sample") {
    throw ValidationError("forecast.policy must be greedy or sample, got '" + forecast.policy + "'");
  }
  if (forecast.samples < 20) throw ValidationError("forecast.samples must be >= 20");
  if (forecast.window_stride == 0) throw ValidationError("forecast.window_stride must be >= 1");
  if (forecast.seasonal_period == 0 || forecast.seasonal_period > data.history_len) {
    throw ValidationError("forecast.seasonal_period must be in [1, history_len]");
  }
  if (prompt.val_stride == 0) throw ValidationError("prompt.val_stride must be >= 1");
  for (std::size_t h : data.horizons) {
    tokenizer.validate_lengths(data.history_len, h);
    const std::size_t n = sequence_length(*this, h);
    if (n > backbone.max_seq_len) {
      throw ValidationError("horizon " + std::to_string(h) + " needs sequences of " +
                            std::to_string(n) + " tokens but backbone.max_seq_len is " +
                            std::to_string(backbone.max_seq_len));
    }
  }
}

std::size_t sequence_length(const RunConfig& cfg, std::size_t horizon) {
  const std::size_t patch = cfg.tokenizer.patch;
  const vocab::UnifiedVocab v(cfg.corpus.words, cfg.tokenizer.K);
  const vocab::WordTable words(cfg.corpus.words);
  // Widest rendering the statistics normally take.
  data::ContextStats wide{-99.9, -99.9, -99.9, -99.9, data::Trend::flat};
  const std::vector<int> hist(cfg.data.history_len / patch, 0), fut(horizon / patch, 0);
  return vocab::build_prompt(wide, hist, &fut, v, words, vocab::PromptMode::finetune,
                             cfg.prompt.toggles, horizon)
      .ids.size();
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError("override '" + assignment + "' must look like key.path=value");
  }
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* at = &j;
  std::size_t from = 0;
  while (true) {
    const auto dot = path.find('.', from);
    const std::string key = path.substr(from, dot == std::string::npos ? std::string::npos : dot - from);
    if (key.empty()) throw ValidationError("override '" + assignment + "' has an empty key");
    if (dot == std::string::npos) {
      (*at)[key] = value;
      return;
    }
    if (!at->contains(key) || !(*at)[key].is_object()) (*at)[key] = json::object();
    at = &(*at)[key];
    from = dot + 1;
  }
}

}  // namespace tokencast::pipeline
