#include <filesystem>
#include <set>

#include "doctest.h"
#include "tokencast/eval/report.hpp"
#include "tokencast/io/binary.hpp"
#include "tokencast/pipeline/ablation.hpp"
#include "tokencast/pipeline/pipeline.hpp"

using namespace tokencast;
using namespace tokencast::pipeline;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
  RunConfig c;
  c.data.synth.length = 1400;
  c.tokenizer.d = 16;
  c.tokenizer.K = 16;
  c.tokenizer.decoder_heads = 2;
  c.tokenizer_train.steps = 10;
  c.tokenizer_train.eval_windows = 16;
  c.corpus.tokens = 5000;
  c.backbone.d_model = 32;
  c.backbone.layers = 1;
  c.backbone.heads = 2;
  for (auto* p : {&c.pretrain, &c.align, &c.finetune}) {
    p->steps = 4;
    p->eval_every = 2;
    p->batch = 4;
  }
  c.forecast.max_windows = 4;
  c.forecast.samples = 20;
  return c;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("tokencast_test_pipeline_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("config json round trip preserves the digest") {
  RunConfig c = tiny_config();
  c.seed = 99;
  c.data.horizons = {24, 48};
  c.prompt.init = vocab::InitStrategy::random;
  c.forecast.interval_temperatures = {0.5, 1.0};
  const RunConfig back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.digest() == c.digest());
  CHECK(back.seed == 99);
  CHECK(back.data.horizons == std::vector<std::size_t>{24, 48});
}

TEST_CASE("partial config json takes defaults for missing keys") {
  const RunConfig c = RunConfig::from_json(json{{"seed", 3}, {"finetune", {{"lr", 1e-4}}}});
  const RunConfig d;
  CHECK(c.seed == 3);
  CHECK(c.finetune.lr == 1e-4);
  CHECK(c.finetune.steps == d.finetune.steps);
  CHECK(c.align.trainable == backbone::Trainable::embeddings_only);
}

TEST_CASE("unknown config keys are rejected with their path") {
  CHECK_THROWS_WITH_AS(RunConfig::from_json(json{{"tokenizer", {{"codebook", 3}}}}),
                       doctest::Contains("tokenizer.codebook"), ValidationError);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"bogus", 1}}), ValidationError);
}

TEST_CASE("overrides parse json values and fall back to strings") {
  json j = RunConfig().to_json();
  apply_override(j, "tokenizer.K=128");
  apply_override(j, "forecast.policy=sample");
  apply_override(j, "data.horizons=[24,96]");
  const RunConfig c = RunConfig::from_json(j);
  CHECK(c.tokenizer.K == 128);
  CHECK(c.forecast.policy == "sample");
  CHECK(c.data.horizons == std::vector<std::size_t>{24, 96});
  CHECK_THROWS_AS(apply_override(j, "no-equals-sign"), ValidationError);
  CHECK_THROWS_AS(apply_override(j, "=3"), ValidationError);
}

TEST_CASE("validation rejects inconsistent configurations") {
  CHECK_NOTHROW(RunConfig().validate());
  RunConfig c;
  c.data.horizons = {};
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = RunConfig();
  c.forecast.samples = 5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = RunConfig();
  c.forecast.policy = "beam";
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = RunConfig();
  c.data.horizons = {192};  // prompt outgrows the context window
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = RunConfig();
  c.data.horizons = {22};  // not a multiple of the patch
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = RunConfig();
  c.forecast.seasonal_period = 500;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("stage seeds are distinct and follow the run seed") {
  RunConfig a, b;
  b.seed = a.seed + 1;
  std::set<std::uint64_t> seen;
  for (const char* s : {"synth", "tokenizer", "pretrain", "extend", "align", "finetune", "forecast"}) {
    seen.insert(a.stage_seed(s));
    CHECK(a.stage_seed(s) != b.stage_seed(s));
    CHECK(a.stage_seed(s) == RunConfig(a).stage_seed(s));
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("stage digests track only their dependencies") {
  RunConfig a, b;
  b.finetune.lr = 3e-5;
  CHECK(tokenizer_digest(a, 24) == tokenizer_digest(b, 24));
  CHECK(align_digest(a, 24) == align_digest(b, 24));
  CHECK(finetune_digest(a, 24) != finetune_digest(b, 24));
  b = a;
  b.tokenizer.K = 32;
  CHECK(pretrain_digest(a) == pretrain_digest(b));
  CHECK(tokenizer_digest(a, 24) != tokenizer_digest(b, 24));
  CHECK(data_digest(a, 24) != data_digest(a, 48));
}

TEST_CASE("missing upstream names the producing command") {
  const RunConfig c = tiny_config();
  const Layout l{scratch("missing")};
  CHECK_THROWS_WITH_AS(run_evaluate(c, l, 24), doctest::Contains("tokencast finetune"),
                       MissingUpstream);
  CHECK_THROWS_WITH_AS(run_train_tokenizer(c, l, 24), doctest::Contains("tokencast prepare"),
                       MissingUpstream);
  CHECK_THROWS_WITH_AS(run_align(c, l, 24), doctest::Contains("tokencast"), MissingUpstream);
}

TEST_CASE("select_horizons honours the configured list") {
  RunConfig c;
  c.data.horizons = {24, 48};
  CHECK(select_horizons(c, 0) == std::vector<std::size_t>{24, 48});
  CHECK(select_horizons(c, 48) == std::vector<std::size_t>{48});
  CHECK_THROWS_AS(select_horizons(c, 96), ValidationError);
}

TEST_CASE("eval_windows strides and caps") {
  RunConfig c;
  std::vector<data::TimeSeriesWindow> test(10);
  for (std::size_t i = 0; i < test.size(); ++i) test[i].offset = i;
  c.forecast.window_stride = 3;
  auto w = eval_windows(c, test);
  REQUIRE(w.size() == 4);
  CHECK(w[1].offset == 3);
  c.forecast.max_windows = 2;
  CHECK(eval_windows(c, test).size() == 2);
}

TEST_CASE("heatmap grid is the squarest factorization") {
  CHECK(eval::heatmap_grid(64) == std::pair<std::size_t, std::size_t>{8, 8});
  CHECK(eval::heatmap_grid(128) == std::pair<std::size_t, std::size_t>{8, 16});
  CHECK(eval::heatmap_grid(13) == std::pair<std::size_t, std::size_t>{1, 13});
}

TEST_CASE("tiny pipeline runs end to end and a stale artifact is rejected") {
  RunConfig c = tiny_config();
  const Layout l{scratch("tiny")};
  write_config(c, l);
  run_prepare(c, l, 24);
  run_train_tokenizer(c, l, 24);
  run_pretrain(c, l);
  run_align(c, l, 24);
  run_finetune(c, l, 24);
  run_forecast(c, l, 24, false);
  const auto rep = run_evaluate(c, l, 24);
  CHECK(rep.windows == 4);
  CHECK(rep.horizon == 24);
  CHECK(rep.config_digest == c.digest());
  CHECK(fs::exists(l.eval_dir(24) / "report.json"));

  const auto diag = run_diagnose(c, l, 24);
  std::size_t sum = 0;
  for (auto n : diag.counts) sum += n;
  CHECK(diag.counts.size() == 16);
  CHECK(sum == diag.total);
  CHECK(diag.rows * diag.cols == 16);

  // A changed finetune configuration makes the finetuned model stale.
  RunConfig changed = c;
  changed.finetune.lr = 2e-5;
  CHECK_THROWS_WITH_AS(run_forecast(changed, l, 24, false),
                       doctest::Contains("different configuration"), MissingUpstream);
  // The aligned model is still valid for it.
  CHECK_NOTHROW(run_finetune(changed, l, 24));

  const auto table = run_ablation(c, l, Suite::codebook_size, 24);
  CHECK(table.rows.size() == 4);
  for (const auto& row : table.rows) CHECK_MESSAGE(row.ok(), row.cell << ": " << row.status);
  CHECK(fs::exists(l.ablation("codebook-size") / "table.csv"));
}

TEST_CASE("prepare rejects a series too short for every split") {
  RunConfig c = tiny_config();
  c.data.synth.length = 900;  // the val split is shorter than one window
  const Layout l{scratch("short")};
  CHECK_THROWS_WITH_AS(run_prepare(c, l, 24), doctest::Contains("val split"), ValidationError);
}
