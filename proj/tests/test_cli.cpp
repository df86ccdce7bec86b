#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "tokencast/io/binary.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "tokencast_test_cli";

struct Result {
  int code;
  std::string out;
};

Result cli(const std::string& args) {
  const auto log = kRoot / "last.log";
  const std::string cmd = std::string(TOKENCAST_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, tokencast::io::read_file(log)};
}

std::string tiny_config() {
  const auto path = kRoot / "tiny.json";
  nlohmann::json j = {
      {"data", {{"synth", {{"length", 1400}}}}},
      {"tokenizer", {{"d", 16}, {"K", 16}, {"decoder_heads", 2}}},
      {"tokenizer_train", {{"steps", 10}, {"eval_windows", 16}}},
      {"corpus", {{"tokens", 5000}}},
      {"backbone", {{"d_model", 32}, {"layers", 1}, {"heads", 2}}},
      {"pretrain", {{"steps", 4}, {"eval_every", 2}, {"batch", 4}}},
      {"align", {{"steps", 4}, {"eval_every", 2}, {"batch", 4}}},
      {"finetune", {{"steps", 4}, {"eval_every", 2}, {"batch", 4}}},
      {"forecast", {{"max_windows", 4}, {"samples", 20}}},
  };
  tokencast::io::write_file(path, j.dump(2));
  return path.string();
}

}  // namespace

TEST_CASE("cli stages, exit codes and reproducible forecasts") {
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);
  const std::string cfg = "--config " + tiny_config() + " -q --out " + (kRoot / "run").string();

  auto r = cli("evaluate " + cfg);
  CHECK(r.code == 1);
  CHECK(r.out.find("tokencast finetune") != std::string::npos);

  CHECK(cli("prepare " + cfg + " --bogus").code == 1);
  CHECK(cli("prepare " + cfg + " --set tokenizer.nope=1").code == 1);

  for (const char* stage : {"prepare", "train-tokenizer", "pretrain-lm", "align", "finetune"}) {
    r = cli(std::string(stage) + " " + cfg);
    REQUIRE_MESSAGE(r.code == 0, stage << ": " << r.out);
  }
  const auto csv = kRoot / "run" / "h24" / "forecast" / "forecast.csv";
  REQUIRE(cli("forecast " + cfg + " --policy greedy").code == 0);
  const std::string first = tokencast::io::read_file(csv);
  REQUIRE(cli("forecast " + cfg + " --policy greedy").code == 0);
  CHECK(first == tokencast::io::read_file(csv));
  CHECK(first.rfind("# config_digest=", 0) == 0);

  r = cli("evaluate " + cfg);
  REQUIRE_MESSAGE(r.code == 0, r.out);
  CHECK(r.out.find("\"windows\"") != std::string::npos);
  REQUIRE(cli("diagnose " + cfg).code == 0);
  CHECK(fs::exists(kRoot / "run" / "h24" / "diagnose" / "usage.svg"));

  r = cli("ablate " + cfg + " --suite codebook-size");
  REQUIRE_MESSAGE(r.code == 0, r.out);
  const std::string table =
      tokencast::io::read_file(kRoot / "run" / "ablate" / "codebook-size" / "table.csv");
  std::size_t rows = 0;
  std::size_t at = 0;
  while (at < table.size()) {
    const auto end = table.find('\n', at);
    rows += table[at] != '#';
    at = end == std::string::npos ? table.size() : end + 1;
  }
  CHECK(rows == 1 + 4);  // header and four cells
  CHECK(cli("ablate " + cfg + " --suite nonsense").code == 1);
}
