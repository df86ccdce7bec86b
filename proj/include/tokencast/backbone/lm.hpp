#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tokencast/core/nn.hpp"
#include "tokencast/io/checkpoint.hpp"

namespace tokencast::backbone {

using core::Tensor;

struct BackboneConfig {
  std::size_t d_model = 128;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t max_seq_len = 96;
  double dropout = 0.0;
  double init_std = 0.02;

  void validate() const;
  nlohmann::json to_json() const;
  static BackboneConfig from_json(const nlohmann::json& j);
};

// Decoder-only causal transformer with learned positions and a tied output
// projection (logits = h E^T).
class LanguageModel {
 public:
  LanguageModel(const BackboneConfig& cfg, std::size_t vocab_size, std::uint64_t seed);

  const BackboneConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return embedding_.dim(0); }

  // ids: batch sequences of seq_len ids each, flattened. Returns logits
  // [batch*seq_len x |V|].
  Tensor forward(std::span<const int> ids, std::size_t seq_len) const;

  const Tensor& embedding() const { return embedding_; }
  // Replaces the shared embedding matrix (vocabulary extension).
  void set_embedding(Tensor e);

  io::NamedTensors named_tensors() const;
  // Every tensor except the shared embedding matrix.
  io::NamedTensors backbone_tensors() const;

  io::Checkpoint to_checkpoint(const std::string& stage,
                               const nlohmann::json& extra_meta = nlohmann::json::object()) const;
  static LanguageModel from_checkpoint(const io::Checkpoint& ckpt);

  const Tensor& positions() const { return positions_; }
  const std::vector<core::TransformerBlock>& blocks() const { return blocks_; }
  const core::LayerNorm& final_norm() const { return final_ln_; }

 private:
  BackboneConfig cfg_;
  Tensor embedding_;
  Tensor positions_;
  std::vector<core::TransformerBlock> blocks_;
  core::LayerNorm final_ln_;
};

// One training example: ids and per-position target flags (loss_mask[i]
// means ids[i] is predicted from ids[0..i-1]).
struct Sequence {
  std::vector<int> ids;
  std::vector<std::uint8_t> loss_mask;
};

enum class Stage { pretrain, align, finetune };
enum class Trainable { all, embeddings_only };

const char* to_string(Stage s);

struct TrainPlan {
  Stage stage = Stage::pretrain;
  double lr = 1e-3;
  std::size_t batch = 16;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;
  Trainable trainable = Trainable::all;
  double clip = 1.0;
  std::size_t eval_every = 50;  // 0 disables periodic evaluation
  std::size_t patience = 0;     // early stop after this many evals without improvement; 0 = off
  int pad_id = 0;

  // Defaults for each stage.
  static TrainPlan pretrain_defaults();
  static TrainPlan align_defaults();
  static TrainPlan finetune_defaults();
  void validate() const;
};

struct CurvePoint {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean over steps since the previous point
  double val_loss = 0.0;    // NaN when there is no validation set
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  double initial_val_loss = 0.0;
  double best_val_loss = 0.0;
  std::size_t best_step = 0;
  std::size_t steps_run = 0;
  bool early_stopped = false;
};

// Mean masked next-token loss of a set of sequences, evaluated in parallel
// batches.
double evaluate_loss(const LanguageModel& model, const std::vector<Sequence>& seqs, int pad_id,
                     std::size_t batch = 16);

// Padded batch: inputs and next-token targets (-1 where not supervised).
struct LmBatch {
  std::vector<int> ids;
  std::vector<int> targets;
  std::size_t seq_len = 0;
};
LmBatch make_lm_batch(const std::vector<Sequence>& seqs, std::span<const std::size_t> indices,
                      int pad_id);

// Runs the plan's optimizer. With early stopping (patience > 0) the best
// validation state is restored at the end. Throws TrainingAbort when the
// loss becomes non-finite, after restoring the best (or initial) state.
TrainResult train_lm(LanguageModel& model, const std::vector<Sequence>& train,
                     const std::vector<Sequence>& val, const TrainPlan& plan);

void write_curve_csv(const std::filesystem::path& path, const TrainResult& result,
                     const std::string& config_digest);

// Word-only corpus cut into sequences of seq_len supervised after the first.
std::vector<Sequence> corpus_sequences(const std::vector<int>& stream, std::size_t seq_len);

}  // namespace tokencast::backbone
