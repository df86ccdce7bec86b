#include "tokencast/backbone/generate.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "tokencast/error.hpp"

namespace tokencast::backbone {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::RowVectorXd;

RowMat to_mat(const core::Tensor& t) {
  return Eigen::Map<const RowMat>(t.data().data(), t.rows(), t.cols());
}

Vec to_vec(const core::Tensor& t) { return Eigen::Map<const Vec>(t.data().data(), t.size()); }

struct Dense {
  RowMat w;
  Vec b;
  Dense() = default;
  explicit Dense(const core::Linear& l) : w(to_mat(l.weight)), b(to_vec(l.bias)) {}
  Vec operator()(const Vec& x) const { return x * w + b; }
};

struct Norm {
  Vec gamma, beta;
  Norm() = default;
  explicit Norm(const core::LayerNorm& n) : gamma(to_vec(n.gamma)), beta(to_vec(n.beta)) {}
  Vec operator()(const Vec& x) const {
    const double mu = x.mean();
    const double var = (x.array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + 1e-5);
    return ((x.array() - mu) * is * gamma.array() + beta.array()).matrix();
  }
};

Vec gelu(const Vec& x) {
  constexpr double kC = 0.7978845608028654;
  constexpr double kA = 0.044715;
  Vec out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
  }
  return out;
}

}  // namespace

struct InferenceEngine::Weights {
  struct Block {
    Norm ln1, ln2;
    Dense q, k, v, o, fc1, fc2;
  };
  std::size_t d = 0, heads = 0, max_len = 0;
  RowMat embedding, positions;
  std::vector<Block> blocks;
  Norm final_ln;
};

struct InferenceEngine::State {
  std::vector<RowMat> keys, values;  // per layer, [max_len x d]
  std::size_t len = 0;
  std::vector<double> logits;
};

InferenceEngine::Cursor::Cursor() = default;
InferenceEngine::Cursor::~Cursor() = default;
InferenceEngine::Cursor::Cursor(Cursor&&) noexcept = default;
InferenceEngine::Cursor::Cursor(const Cursor& o)
    : state_(o.state_ ? std::make_unique<State>(*o.state_) : nullptr) {}
InferenceEngine::Cursor& InferenceEngine::Cursor::operator=(const Cursor& o) {
  if (this != &o) state_ = o.state_ ? std::make_unique<State>(*o.state_) : nullptr;
  return *this;
}
std::size_t InferenceEngine::Cursor::length() const { return state_ ? state_->len : 0; }
const std::vector<double>& InferenceEngine::Cursor::logits() const { return state_->logits; }

InferenceEngine::InferenceEngine(const LanguageModel& model) : w_(std::make_unique<Weights>()) {
  const auto& cfg = model.config();
  w_->d = cfg.d_model;
  w_->heads = cfg.heads;
  w_->max_len = cfg.max_seq_len;
  w_->embedding = to_mat(model.embedding());
  w_->positions = to_mat(model.positions());
  for (const auto& b : model.blocks()) {
    w_->blocks.push_back({Norm(b.ln1), Norm(b.ln2), Dense(b.q), Dense(b.k), Dense(b.v), Dense(b.o),
                          Dense(b.fc1), Dense(b.fc2)});
  }
  w_->final_ln = Norm(model.final_norm());
}

InferenceEngine::~InferenceEngine() = default;
InferenceEngine::InferenceEngine(InferenceEngine&&) noexcept = default;

std::size_t InferenceEngine::vocab_size() const {
  return static_cast<std::size_t>(w_->embedding.rows());
}
std::size_t InferenceEngine::max_seq_len() const { return w_->max_len; }

InferenceEngine::Cursor InferenceEngine::start(std::span<const int> prompt) const {
  if (prompt.empty()) throw ValidationError("generation needs a non-empty prompt");
  Cursor c;
  c.state_ = std::make_unique<State>();
  for (std::size_t l = 0; l < w_->blocks.size(); ++l) {
    c.state_->keys.emplace_back(w_->max_len, w_->d);
    c.state_->values.emplace_back(w_->max_len, w_->d);
  }
  for (int id : prompt) feed(c, id);
  return c;
}

void InferenceEngine::feed(Cursor& cursor, int id) const {
  State& s = *cursor.state_;
  if (id < 0 || static_cast<std::size_t>(id) >= vocab_size()) {
    throw ValidationError("token id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(vocab_size()));
  }
  if (s.len >= w_->max_len) {
    throw ValidationError("context of " + std::to_string(w_->max_len) + " tokens is full");
  }
  const std::size_t t = s.len, d = w_->d, dh = d / w_->heads;
  const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
  Vec x = w_->embedding.row(id) + w_->positions.row(static_cast<Eigen::Index>(t));
  std::vector<double> p(t + 1);
  for (std::size_t l = 0; l < w_->blocks.size(); ++l) {
    const auto& b = w_->blocks[l];
    const Vec h = b.ln1(x);
    const Vec q = b.q(h);
    s.keys[l].row(static_cast<Eigen::Index>(t)) = b.k(h);
    s.values[l].row(static_cast<Eigen::Index>(t)) = b.v(h);
    Vec a = Vec::Zero(d);
    for (std::size_t hd = 0; hd < w_->heads; ++hd) {
      const auto off = static_cast<Eigen::Index>(hd * dh);
      const auto n = static_cast<Eigen::Index>(dh);
      double mx = -INFINITY;
      for (std::size_t j = 0; j <= t; ++j) {
        p[j] = q.segment(off, n).dot(s.keys[l].row(static_cast<Eigen::Index>(j)).segment(off, n)) *
               scl;
        mx = std::max(mx, p[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j <= t; ++j) {
        p[j] = std::exp(p[j] - mx);
        z += p[j];
      }
      for (std::size_t j = 0; j <= t; ++j) {
        a.segment(off, n) +=
            (p[j] / z) * s.values[l].row(static_cast<Eigen::Index>(j)).segment(off, n);
      }
    }
    x += b.o(a);
    x += b.fc2(gelu(b.fc1(b.ln2(x))));
  }
  const Vec hf = w_->final_ln(x);
  const Eigen::VectorXd logits = w_->embedding * hf.transpose();
  s.logits.assign(logits.data(), logits.data() + logits.size());
  ++s.len;
}

int choose_token(std::span<const double> logits, const SamplingPolicy& policy, core::Rng& rng) {
  const std::size_t v = logits.size();
  auto argmax = [&] {
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  };
  if (policy.greedy || policy.temperature < SamplingPolicy::kGreedyTemperature ||
      policy.top_k == 1) {
    return argmax();
  }
  std::vector<int> ids(v);
  std::iota(ids.begin(), ids.end(), 0);
  std::size_t keep = v;
  if (policy.top_k > 0 && policy.top_k < v) {
    keep = policy.top_k;
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(),
                      [&](int a, int b) { return logits[a] > logits[b] || (logits[a] == logits[b] && a < b); });
  }
  double mx = -INFINITY;
  for (std::size_t i = 0; i < keep; ++i) mx = std::max(mx, logits[ids[i]]);
  std::vector<double> w(keep);
  double z = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    w[i] = std::exp((logits[ids[i]] - mx) / policy.temperature);
    z += w[i];
  }
  double u = rng.uniform() * z;
  for (std::size_t i = 0; i < keep; ++i) {
    u -= w[i];
    if (u < 0.0) return ids[i];
  }
  return ids[keep - 1];
}

std::vector<int> generate_from(const InferenceEngine& engine, InferenceEngine::Cursor cursor,
                               const SamplingPolicy& policy, std::size_t max_new, int stop_id,
                               core::Rng& rng) {
  std::vector<int> out;
  while (out.size() < max_new) {
    const int id = choose_token(cursor.logits(), policy, rng);
    out.push_back(id);
    if (id == stop_id || cursor.length() >= engine.max_seq_len()) break;
    if (out.size() < max_new) engine.feed(cursor, id);
  }
  return out;
}

std::vector<int> generate(const InferenceEngine& engine, std::span<const int> prompt,
                          const SamplingPolicy& policy, std::size_t max_new, int stop_id,
                          core::Rng& rng) {
  return generate_from(engine, engine.start(prompt), policy, max_new, stop_id, rng);
}

}  // namespace tokencast::backbone
