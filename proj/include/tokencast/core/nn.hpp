#pragma once

#include <string>

#include "tokencast/core/ops.hpp"
#include "tokencast/core/random.hpp"
#include "tokencast/io/checkpoint.hpp"

// Parameter bundles shared by the tokenizer decoder and the language model.
namespace tokencast::core {

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out], undefined when the layer has no bias

  Tensor operator()(const Tensor& x) const;
  void collect(io::NamedTensors& out, const std::string& prefix) const;
};

Linear make_linear(std::size_t in, std::size_t out, double init_std, Rng& rng, bool bias = true);

struct LayerNorm {
  Tensor gamma;
  Tensor beta;

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
  void collect(io::NamedTensors& out, const std::string& prefix) const;
};

LayerNorm make_layer_norm(std::size_t width);

// Pre-norm causal self-attention block with a GELU MLP of width 4*d.
struct TransformerBlock {
  LayerNorm ln1;
  Linear q, k, v, o;
  LayerNorm ln2;
  Linear fc1, fc2;

  Tensor operator()(const Tensor& x, std::size_t seq_len, std::size_t heads) const;
  void collect(io::NamedTensors& out, const std::string& prefix) const;
};

TransformerBlock make_transformer_block(std::size_t width, double init_std, Rng& rng);

std::vector<Tensor> tensors_of(const io::NamedTensors& named);

}  // namespace tokencast::core
