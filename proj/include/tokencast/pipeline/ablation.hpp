#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "tokencast/pipeline/pipeline.hpp"

namespace tokencast::pipeline {

enum class Suite { stages, codebook_size, init, context_segments, backbone_size };

const char* to_string(Suite s);
Suite suite_from_string(const std::string& s);

struct AblationRow {
  std::string cell;
  nlohmann::json values;  // column name -> value
  std::string status = "ok";
  bool ok() const { return status == "ok"; }
};

struct AblationTable {
  Suite suite = Suite::stages;
  std::size_t horizon = 0;
  std::vector<std::string> columns;
  std::vector<AblationRow> rows;

  const AblationRow& row(const std::string& cell) const;
  std::string csv(const std::string& config_digest) const;
  nlohmann::json to_json(const std::string& config_digest) const;
};

// Runs each cell of the suite with the base seed. Cells reuse the base run's
// artifacts when the stage configuration matches and write their own under
// ablate/<suite>/<cell>/ otherwise. A failing cell is recorded and the suite
// continues. Writes table.csv and table.json.
AblationTable run_ablation(const RunConfig& base, const Layout& layout, Suite suite,
                           std::size_t horizon);

// Greedy point evaluation of a model (no interval sampling).
eval::EvalReport evaluate_points(const RunConfig& cfg, const tokenizer::Tokenizer& tok,
                                 const ExtendedModel& model, const Dataset& ds,
                                 std::size_t horizon);

}  // namespace tokencast::pipeline
