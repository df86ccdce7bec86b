#include "tokencast/pipeline/ablation.hpp"

#include <functional>
#include <iomanip>
#include <sstream>

#include "tokencast/io/binary.hpp"
#include "tokencast/log.hpp"

namespace tokencast::pipeline {

using nlohmann::json;

const char* to_string(Suite s) {
  switch (s) {
    case Suite::stages: return "stages";
    case Suite::codebook_size: return "codebook-size";
    case Suite::init: return "init";
    case Suite::context_segments: return "context-segments";
    default: return "backbone-size";
  }
}

Suite suite_from_string(const std::string& s) {
  for (Suite x : {Suite::stages, Suite::codebook_size, Suite::init, Suite::context_segments,
                  Suite::backbone_size}) {
    if (s == to_string(x)) return x;
  }
  throw ValidationError("unknown ablation suite '" + s +
                        "' (expected stages, codebook-size, init, context-segments or backbone-size)");
}

const AblationRow& AblationTable::row(const std::string& cell) const {
  for (const auto& r : rows) {
    if (r.cell == cell) return r;
  }
  throw ValidationError("ablation table has no cell '" + cell + "'");
}

namespace {

std::string cell_text(const json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    std::ostringstream os;
    os << std::setprecision(17) << v.get<double>();
    return os.str();
  }
  return v.dump();
}

std::string csv_field(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string AblationTable::csv(const std::string& digest) const {
  std::ostringstream os;
  os << "# config_digest=" << digest << "\n";
  os << "# suite=" << to_string(suite) << " horizon=" << horizon << "\n";
  os << "cell";
  for (const auto& c : columns) os << "," << c;
  os << ",status\n";
  for (const auto& r : rows) {
    os << csv_field(r.cell);
    for (const auto& c : columns) os << "," << csv_field(cell_text(r.values.value(c, json())));
    os << "," << csv_field(r.status) << "\n";
  }
  return os.str();
}

json AblationTable::to_json(const std::string& digest) const {
  json rs = json::array();
  for (const auto& r : rows) rs.push_back({{"cell", r.cell}, {"values", r.values}, {"status", r.status}});
  return json{{"format", "tokencast-ablation"},
              {"config_digest", digest},
              {"suite", to_string(suite)},
              {"horizon", horizon},
              {"columns", columns},
              {"rows", rs}};
}

eval::EvalReport evaluate_points(const RunConfig& cfg, const tokenizer::Tokenizer& tok,
                                 const ExtendedModel& model, const Dataset& ds,
                                 std::size_t horizon) {
  const eval::Forecaster fc(tok, model.lm, model.vocab, model.vocab.words(), cfg.prompt.toggles,
                            horizon);
  eval::EvalOptions opt;
  opt.policy = backbone::SamplingPolicy::make_greedy();
  opt.seasonal_period = cfg.forecast.seasonal_period;
  opt.seed = cfg.stage_seed("evaluate");
  auto rep = eval::evaluate(fc, eval_windows(cfg, ds.test), opt);
  rep.config_digest = cfg.digest();
  return rep;
}

namespace {

void copy_artifact(const fs::path& from, const fs::path& to) {
  io::write_file(to, io::read_file(from));
}

// Loads a matching artifact from the cell, else copies a matching one from
// the base run, else produces it in the cell.
template <typename Load>
auto ensure(const Layout& base, const Layout& cell, Load load,
            const std::function<std::vector<fs::path>(const Layout&)>& files,
            const std::function<void()>& produce) {
  try {
    return load(cell);
  } catch (const MissingUpstream&) {
  }
  try {
    auto v = load(base);
    const auto src = files(base), dst = files(cell);
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (fs::exists(src[i])) copy_artifact(src[i], dst[i]);
    }
    return v;
  } catch (const MissingUpstream&) {
  }
  produce();
  return load(cell);
}

struct Cell {
  std::string name;
  RunConfig cfg;
  bool align = true;
  bool finetune = true;
  json fixed;  // descriptive columns
};

json run_cell(const Cell& c, const Layout& base, const Layout& cl, std::size_t h) {
  const auto& cfg = c.cfg;
  const Dataset ds = ensure(
      base, cl, [&](const Layout& l) { return load_dataset(cfg, l, h); },
      [&](const Layout& l) {
        std::vector<fs::path> f{l.manifest(h)};
        for (auto s : {data::Split::train, data::Split::val, data::Split::test}) {
          auto j = l.windows(h, s);
          f.push_back(j);
          f.push_back(j.replace_extension(".bin"));
        }
        return f;
      },
      [&] { run_prepare(cfg, cl, h); });
  const auto tok = ensure(
      base, cl, [&](const Layout& l) { return load_tokenizer(cfg, l, h); },
      [&](const Layout& l) { return std::vector<fs::path>{l.tokenizer(h), l.tokenizer_metrics(h)}; },
      [&] { run_train_tokenizer(cfg, cl, h); });
  const auto pre = ensure(
      base, cl, [&](const Layout& l) { return load_pretrained(cfg, l); },
      [&](const Layout& l) { return std::vector<fs::path>{l.pretrain(), l.pretrain_curve()}; },
      [&] { run_pretrain(cfg, cl); });

  std::optional<ExtendedModel> model;
  const auto stage_files = [&](backbone::Stage s) {
    return [s, h](const Layout& l) {
      if (s == backbone::Stage::align) {
        return std::vector<fs::path>{l.align(h), l.align_curve(h), l.vocab(h)};
      }
      return std::vector<fs::path>{l.finetune(h), l.finetune_curve(h)};
    };
  };
  if (c.align) {
    model.emplace(ensure(
        base, cl, [&](const Layout& l) { return load_stage_model(cfg, l, h, backbone::Stage::align); },
        stage_files(backbone::Stage::align), [&] { run_align(cfg, cl, h); }));
    if (c.finetune) {
      model.emplace(ensure(
          base, cl,
          [&](const Layout& l) { return load_stage_model(cfg, l, h, backbone::Stage::finetune); },
          stage_files(backbone::Stage::finetune), [&] { run_finetune(cfg, cl, h); }));
    }
  } else {
    model.emplace(extend_model(pre, cfg.tokenizer.K, cfg.prompt.init, cfg.stage_seed("extend")));
    if (c.finetune) {
      const auto mode = vocab::PromptMode::finetune;
      const auto train = build_sequences(tok, ds.train, model->vocab, model->vocab.words(), mode,
                                         cfg.prompt.toggles, h);
      const auto val = build_sequences(tok, ds.val, model->vocab, model->vocab.words(), mode,
                                       cfg.prompt.toggles, h, cfg.prompt.val_stride);
      auto plan = cfg.finetune;
      plan.seed = cfg.stage_seed("finetune");
      plan.pad_id = model->vocab.pad();
      backbone::train_lm(model->lm, train, val, plan);
    }
  }
  const auto rep = evaluate_points(cfg, tok, *model, ds, h);
  json v = c.fixed;
  v["recon"] = rep.recon_mse;
  v["mse"] = rep.model.mse;
  v["mae"] = rep.model.mae;
  v["utilization"] = rep.utilization;
  v["malformed"] = rep.malformed;
  v["windows"] = rep.windows;
  return v;
}

std::vector<Cell> cells_for(const RunConfig& base, Suite suite) {
  std::vector<Cell> cells;
  const auto add = [&](std::string name, json fixed, const std::function<void(Cell&)>& edit) {
    Cell c{std::move(name), base, true, true, std::move(fixed)};
    edit(c);
    cells.push_back(std::move(c));
  };
  switch (suite) {
    case Suite::stages:
      add("align-only", {{"alignment", "yes"}, {"finetuning", "no"}}, [](Cell& c) { c.finetune = false; });
      add("finetune-only", {{"alignment", "no"}, {"finetuning", "yes"}}, [](Cell& c) { c.align = false; });
      add("align+finetune", {{"alignment", "yes"}, {"finetuning", "yes"}}, [](Cell&) {});
      break;
    case Suite::codebook_size:
      for (std::size_t k : {32, 64, 128, 256}) {
        add("K" + std::to_string(k), {{"codebook_size", k}}, [k](Cell& c) { c.cfg.tokenizer.K = k; });
      }
      break;
    case Suite::init:
      for (auto s : {vocab::InitStrategy::mean, vocab::InitStrategy::word_sample,
                     vocab::InitStrategy::random}) {
        add(vocab::to_string(s), {{"init", vocab::to_string(s)}}, [s](Cell& c) { c.cfg.prompt.init = s; });
      }
      break;
    case Suite::context_segments:
      for (auto [name, g, l] : {std::tuple{"none", false, false}, std::tuple{"general-only", true, false},
                                std::tuple{"local-only", false, true}, std::tuple{"full", true, true}}) {
        add(name, {{"general", g}, {"local", l}}, [g = g, l = l](Cell& c) {
          c.cfg.prompt.toggles = {g, l};
        });
      }
      break;
    case Suite::backbone_size:
      for (auto [name, d, layers] : {std::tuple{"small", 64, 2}, std::tuple{"base", 128, 4},
                                     std::tuple{"large", 256, 4}}) {
        add(name, {{"d_model", d}, {"layers", layers}}, [d = d, layers = layers](Cell& c) {
          c.cfg.backbone.d_model = static_cast<std::size_t>(d);
          c.cfg.backbone.layers = static_cast<std::size_t>(layers);
        });
      }
      break;
  }
  return cells;
}

}  // namespace

AblationTable run_ablation(const RunConfig& base, const Layout& layout, Suite suite,
                           std::size_t horizon) {
  AblationTable t;
  t.suite = suite;
  t.horizon = horizon;
  switch (suite) {
    case Suite::stages: t.columns = {"alignment", "finetuning"}; break;
    case Suite::codebook_size: t.columns = {"codebook_size"}; break;
    case Suite::init: t.columns = {"init"}; break;
    case Suite::context_segments: t.columns = {"general", "local"}; break;
    case Suite::backbone_size: t.columns = {"d_model", "layers"}; break;
  }
  for (const char* c : {"recon", "mse", "mae", "utilization", "malformed", "windows"}) {
    t.columns.push_back(c);
  }
  const auto dir = layout.ablation(to_string(suite));
  for (auto& cell : cells_for(base, suite)) {
    AblationRow row;
    row.cell = cell.name;
    row.values = cell.fixed;
    log_info("ablate ", to_string(suite), ": cell ", cell.name);
    try {
      cell.cfg.validate();
      row.values = run_cell(cell, layout, Layout{dir / cell.name}, horizon);
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
      log_warn("ablate ", to_string(suite), ": cell ", cell.name, " ", row.status);
    }
    t.rows.push_back(std::move(row));
  }
  io::write_file(dir / "table.csv", t.csv(base.digest()));
  io::write_file(dir / "table.json", t.to_json(base.digest()).dump(2) + "\n");
  return t;
}

}  // namespace tokencast::pipeline
