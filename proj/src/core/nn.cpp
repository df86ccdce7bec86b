#include "tokencast/core/nn.hpp"

namespace tokencast::core {

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_bias(y, bias) : y;
}

void Linear::collect(io::NamedTensors& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

Linear make_linear(std::size_t in, std::size_t out, double init_std, Rng& rng, bool bias) {
  Linear l;
  l.weight = truncated_normal_tensor({in, out}, init_std, rng);
  if (bias) l.bias = Tensor::zeros({out}, true);
  return l;
}

void LayerNorm::collect(io::NamedTensors& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

LayerNorm make_layer_norm(std::size_t width) {
  return {Tensor::full({width}, 1.0, true), Tensor::zeros({width}, true)};
}

Tensor TransformerBlock::operator()(const Tensor& x, std::size_t seq_len,
                                    std::size_t heads) const {
  const Tensor h = ln1(x);
  const Tensor a = causal_attention(q(h), k(h), v(h), seq_len, heads);
  const Tensor x1 = add(x, o(a));
  return add(x1, fc2(gelu(fc1(ln2(x1)))));
}

void TransformerBlock::collect(io::NamedTensors& out, const std::string& prefix) const {
  ln1.collect(out, prefix + ".ln1");
  q.collect(out, prefix + ".q");
  k.collect(out, prefix + ".k");
  v.collect(out, prefix + ".v");
  o.collect(out, prefix + ".o");
  ln2.collect(out, prefix + ".ln2");
  fc1.collect(out, prefix + ".fc1");
  fc2.collect(out, prefix + ".fc2");
}

TransformerBlock make_transformer_block(std::size_t width, double init_std, Rng& rng) {
  TransformerBlock b;
  b.ln1 = make_layer_norm(width);
  b.q = make_linear(width, width, init_std, rng);
  b.k = make_linear(width, width, init_std, rng);
  b.v = make_linear(width, width, init_std, rng);
  b.o = make_linear(width, width, init_std, rng);
  b.ln2 = make_layer_norm(width);
  b.fc1 = make_linear(width, 4 * width, init_std, rng);
  b.fc2 = make_linear(4 * width, width, init_std, rng);
  return b;
}

std::vector<Tensor> tensors_of(const io::NamedTensors& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& [n, t] : named) out.push_back(t);
  return out;
}

}  // namespace tokencast::core
