#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "tokencast/core/nn.hpp"
#include "tokencast/data/window.hpp"
#include "tokencast/io/checkpoint.hpp"

namespace tokencast::tokenizer {

using core::Tensor;

struct TokenizerConfig {
  std::size_t patch = 4;
  std::size_t d = 64;
  std::size_t encoder_layers = 3;  // dilations 1, 2, 4, ...
  std::size_t kernel = 3;
  std::size_t K = 64;
  std::size_t decoder_layers = 2;
  std::size_t decoder_heads = 4;
  std::size_t max_tokens = 64;  // decoder position table size
  double beta = 0.25;
  double gamma = 0.25;
  double diversity_temp = 1.0;

  void validate() const;
  // Also checks that patch divides both lengths and the token count fits.
  void validate_lengths(std::size_t history_len, std::size_t horizon) const;
  nlohmann::json to_json() const;
  static TokenizerConfig from_json(const nlohmann::json& j);
};

struct Quantized {
  std::vector<int> ids;
  Tensor zq;  // codes[ids]; gradient reaches the codebook only
};

// Exhaustive nearest code per row of z [N x d]; ties go to the lowest index.
std::vector<int> nearest_codes(std::span<const double> z, std::span<const double> codes,
                               std::size_t d);

class Tokenizer {
 public:
  Tokenizer(const TokenizerConfig& cfg, std::uint64_t seed);

  const TokenizerConfig& config() const { return cfg_; }

  // x: [B x L] normalized values, L a multiple of patch. Returns Z [B*T x d].
  Tensor encode(const Tensor& x) const;
  Quantized quantize(const Tensor& z) const;
  // zq: [B*T x d] -> [B x T*patch]
  Tensor decode(const Tensor& zq, std::size_t tokens) const;

  const Tensor& codebook() const { return codebook_; }
  Tensor& codebook() { return codebook_; }

  io::NamedTensors named_tensors() const;
  std::vector<Tensor> parameters() const { return core::tensors_of(named_tensors()); }

  io::Checkpoint to_checkpoint(const nlohmann::json& extra_meta = nlohmann::json::object()) const;
  static Tokenizer from_checkpoint(const io::Checkpoint& ckpt);

  // Deterministic inference helpers. Values are raw (not normalized); the
  // window's NormStats map them to and from the model's space.
  std::vector<int> series_to_tokens(std::span<const double> values,
                                    const rin::NormStats& stats) const;
  std::vector<double> tokens_to_series(std::span<const int> ids,
                                       const rin::NormStats& stats) const;

 private:
  struct EncoderBlock {
    Tensor conv_weight;  // {kernel, d, d}
    Tensor conv_bias;
    core::Linear mix;
  };

  TokenizerConfig cfg_;
  core::Linear patch_in_;
  std::vector<EncoderBlock> encoder_;
  Tensor codebook_;
  Tensor positions_;
  std::vector<core::TransformerBlock> decoder_;
  core::LayerNorm final_ln_;
  core::Linear head_;
};

struct LossParts {
  Tensor total;
  double recon = 0.0;
  double commit = 0.0;
  double codebook = 0.0;
  double diversity = 0.0;
};

// recon: row-weighted mean squared error between xhat and x (weights scale
// each window's normalized error back to the standardized series' units).
// codebook = mse(sg[z], zq) and commit = mse(z, sg[zq]); diversity is the
// negentropy ln K - H(p) of the batch mean of soft assignments
// softmax(-||z - e_k||^2 / tau).
LossParts tokenizer_loss(const Tensor& x, const Tensor& xhat, const Tensor& z, const Tensor& zq,
                         const Tensor& codes, std::span<const double> row_weights,
                         const TokenizerConfig& cfg);

Tensor diversity_loss(const Tensor& z, const Tensor& codes, double tau);

struct TrainOptions {
  std::size_t steps = 2000;
  std::size_t batch = 16;
  double lr = 1e-3;
  double clip = 1.0;
  double init_noise = 0.01;
  std::uint64_t seed = 0;
  // Windows used for per-epoch validation and utilization; train when empty.
  std::size_t eval_windows = 256;
  // Where to write the last finite state when the loss diverges.
  std::optional<std::filesystem::path> abort_checkpoint;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  double recon = 0.0;
  double commit = 0.0;
  double codebook = 0.0;
  double diversity = 0.0;
  double eval_recon_mse = 0.0;
  double utilization = 0.0;
};

struct TrainReport {
  std::vector<EpochMetrics> epochs;
  double final_recon_mse = 0.0;
  double final_utilization = 0.0;
};

// Throws TrainingAbort when the loss becomes non-finite.
TrainReport train_tokenizer(Tokenizer& model, const std::vector<data::TimeSeriesWindow>& train,
                            const std::vector<data::TimeSeriesWindow>& eval,
                            const TrainOptions& opt);

void write_metrics_csv(const std::filesystem::path& path, const TrainReport& report,
                       const std::string& config_digest);

// Normalized full windows as a [B x L] tensor and per-row sigma^2 weights.
struct Batch {
  Tensor x;
  std::vector<double> weights;
};
Batch make_batch(const std::vector<data::TimeSeriesWindow>& windows,
                 std::span<const std::size_t> indices);

struct ReconStats {
  double mse = 0.0;  // standardized-series units
  std::vector<std::size_t> usage;  // assignments per code
  double utilization = 0.0;
};

// Reconstruction of full windows and code usage, evaluated in parallel.
ReconStats evaluate_reconstruction(const Tokenizer& model,
                                   const std::vector<data::TimeSeriesWindow>& windows);

// Fraction of codes used at least 1% of the uniform share.
double utilization(std::span<const std::size_t> usage);

}  // namespace tokencast::tokenizer
