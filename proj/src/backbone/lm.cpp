#include "tokencast/backbone/lm.hpp"

#include "tokencast/error.hpp"

namespace tokencast::backbone {

using nlohmann::json;
using namespace tokencast::core;

void BackboneConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0) {
    throw ValidationError("d_model " + std::to_string(d_model) + " must be divisible by heads " +
                          std::to_string(heads));
  }
  if (layers == 0) throw ValidationError("backbone needs at least one layer");
  if (max_seq_len < 2) throw ValidationError("max_seq_len must be >= 2");
  if (dropout != 0.0) throw ValidationError("dropout is not supported; set it to 0");
}

json BackboneConfig::to_json() const {
  return json{{"d_model", d_model},       {"layers", layers},     {"heads", heads},
              {"max_seq_len", max_seq_len}, {"dropout", dropout}, {"init_std", init_std}};
}

BackboneConfig BackboneConfig::from_json(const json& j) {
  BackboneConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.dropout = j.value("dropout", c.dropout);
  c.init_std = j.value("init_std", c.init_std);
  c.validate();
  return c;
}

LanguageModel::LanguageModel(const BackboneConfig& cfg, std::size_t vocab_size,
                             std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  if (vocab_size < 2) throw ValidationError("vocabulary must have at least 2 ids");
  Rng rng(seed);
  embedding_ = truncated_normal_tensor({vocab_size, cfg_.d_model}, cfg_.init_std, rng);
  positions_ = truncated_normal_tensor({cfg_.max_seq_len, cfg_.d_model}, cfg_.init_std, rng);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    blocks_.push_back(make_transformer_block(cfg_.d_model, cfg_.init_std, rng));
  }
  final_ln_ = make_layer_norm(cfg_.d_model);
}

Tensor LanguageModel::forward(std::span<const int> ids, std::size_t seq_len) const {
  if (seq_len == 0 || ids.size() % seq_len != 0) {
    throw ValidationError(std::to_string(ids.size()) + " ids do not form sequences of length " +
                          std::to_string(seq_len));
  }
  if (seq_len > cfg_.max_seq_len) {
    throw ValidationError("sequence length " + std::to_string(seq_len) + " exceeds max_seq_len " +
                          std::to_string(cfg_.max_seq_len));
  }
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size()) {
      throw ValidationError("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(vocab_size()));
    }
  }
  Tensor h = add_periodic_rows(core::embedding(embedding_, ids), positions_, seq_len);
  for (const auto& b : blocks_) h = b(h, seq_len, cfg_.heads);
  return matmul_transposed(final_ln_(h), embedding_);
}

void LanguageModel::set_embedding(Tensor e) {
  if (e.rank() != 2 || e.dim(1) != cfg_.d_model) {
    throw ValidationError("embedding matrix " + shape_str(e.shape()) + " does not have width " +
                          std::to_string(cfg_.d_model));
  }
  embedding_ = std::move(e);
}

io::NamedTensors LanguageModel::backbone_tensors() const {
  io::NamedTensors out;
  out.emplace_back("positions", positions_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    blocks_[l].collect(out, "block" + std::to_string(l));
  }
  final_ln_.collect(out, "final_ln");
  return out;
}

io::NamedTensors LanguageModel::named_tensors() const {
  io::NamedTensors out{{"embedding", embedding_}};
  for (auto& p : backbone_tensors()) out.push_back(std::move(p));
  return out;
}

io::Checkpoint LanguageModel::to_checkpoint(const std::string& stage, const json& extra) const {
  io::Checkpoint ck;
  ck.stage = stage;
  ck.meta = extra;
  ck.meta["backbone"] = cfg_.to_json();
  ck.meta["vocab_size"] = vocab_size();
  for (const auto& [name, t] : named_tensors()) ck.tensors.emplace_back("lm." + name, t.clone());
  return ck;
}

LanguageModel LanguageModel::from_checkpoint(const io::Checkpoint& ckpt) {
  if (!ckpt.meta.contains("backbone")) {
    throw ValidationError("checkpoint (" + ckpt.stage + ") has no language model");
  }
  LanguageModel m(BackboneConfig::from_json(ckpt.meta.at("backbone")),
                  ckpt.meta.at("vocab_size").get<std::size_t>(), 0);
  io::NamedTensors dest;
  for (const auto& [name, t] : m.named_tensors()) dest.emplace_back("lm." + name, t);
  io::restore_tensors(ckpt, dest);
  return m;
}

const char* to_string(Stage s) {
  switch (s) {
    case Stage::pretrain: return "pretrain";
    case Stage::align: return "align";
    default: return "finetune";
  }
}

TrainPlan TrainPlan::pretrain_defaults() {
  TrainPlan p;
  p.stage = Stage::pretrain;
  p.lr = 1e-3;
  p.steps = 600;
  return p;
}

TrainPlan TrainPlan::align_defaults() {
  TrainPlan p;
  p.stage = Stage::align;
  p.lr = 5e-5;
  p.steps = 400;
  p.trainable = Trainable::embeddings_only;
  return p;
}

TrainPlan TrainPlan::finetune_defaults() {
  TrainPlan p;
  p.stage = Stage::finetune;
  p.lr = 1e-5;
  p.steps = 1200;
  p.trainable = Trainable::all;
  p.patience = 5;
  return p;
}

void TrainPlan::validate() const {
  if (stage == Stage::align && trainable != Trainable::embeddings_only) {
    throw ValidationError("align trains the shared embedding matrix only; trainable set must be "
                          "embeddings-only");
  }
  if (stage == Stage::finetune && trainable != Trainable::all) {
    throw ValidationError("finetune updates every parameter; trainable set must be all");
  }
  if (batch == 0) throw ValidationError("batch size must be >= 1");
  if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
}

std::vector<Sequence> corpus_sequences(const std::vector<int>& stream, std::size_t seq_len) {
  if (seq_len < 2) throw ValidationError("corpus sequence length must be >= 2");
  std::vector<Sequence> out;
  for (std::size_t at = 0; at + seq_len <= stream.size(); at += seq_len) {
    Sequence s;
    s.ids.assign(stream.begin() + at, stream.begin() + at + seq_len);
    s.loss_mask.assign(seq_len, 1);
    s.loss_mask[0] = 0;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace tokencast::backbone
