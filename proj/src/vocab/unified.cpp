#include "tokencast/vocab/unified.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tokencast/core/random.hpp"
#include "tokencast/error.hpp"

namespace tokencast::vocab {

using nlohmann::json;

const std::vector<std::string>& default_specials() {
  static const std::vector<std::string> kSpecials = {
      "bos", "eos", "pad", "ts_start", "ts_end", "ctx_start", "ctx_end", "resp_start"};
  return kSpecials;
}

UnifiedVocab::UnifiedVocab(std::size_t words, std::size_t codes, std::vector<std::string> specials,
                           std::size_t max_size)
    : words_(words), codes_(codes), specials_(std::move(specials)) {
  if (words_ == 0 || codes_ == 0 || specials_.empty()) {
    throw ValidationError("vocabulary needs W, K and S >= 1");
  }
  if (size() > max_size) {
    throw ValidationError("vocabulary of " + std::to_string(size()) +
                          " ids exceeds the configured maximum " + std::to_string(max_size));
  }
  std::set<std::string> seen;
  for (const auto& s : specials_) {
    if (!seen.insert(s).second) throw ValidationError("duplicate special token '" + s + "'");
  }
  for (const auto& required : default_specials()) {
    if (!seen.count(required)) {
      throw ValidationError("special token '" + required + "' is required by the prompt template");
    }
  }
  bos_ = special("bos");
  eos_ = special("eos");
  pad_ = special("pad");
  ts_start_ = special("ts_start");
  ts_end_ = special("ts_end");
  ctx_start_ = special("ctx_start");
  ctx_end_ = special("ctx_end");
  resp_start_ = special("resp_start");
}

int UnifiedVocab::temporal_id(std::size_t code) const {
  if (code >= codes_) {
    throw ValidationError("codebook index " + std::to_string(code) + " outside [0, " +
                          std::to_string(codes_) + ")");
  }
  return static_cast<int>(words_ + code);
}

std::size_t UnifiedVocab::code_index(int id) const {
  if (!is_temporal(id)) throw ValidationError("id " + std::to_string(id) + " is not temporal");
  return static_cast<std::size_t>(id) - words_;
}

int UnifiedVocab::special(const std::string& name) const {
  auto it = std::find(specials_.begin(), specials_.end(), name);
  if (it == specials_.end()) throw ValidationError("unknown special token '" + name + "'");
  return static_cast<int>(words_ + codes_ + static_cast<std::size_t>(it - specials_.begin()));
}

const std::string& UnifiedVocab::special_name(int id) const {
  if (!is_special(id)) throw ValidationError("id " + std::to_string(id) + " is not special");
  return specials_[static_cast<std::size_t>(id) - words_ - codes_];
}

json UnifiedVocab::layout_json() const {
  return json{{"words", words_}, {"codes", codes_}, {"specials", specials_}};
}

UnifiedVocab UnifiedVocab::from_layout(const json& j) {
  return UnifiedVocab(j.at("words").get<std::size_t>(), j.at("codes").get<std::size_t>(),
                      j.at("specials").get<std::vector<std::string>>());
}

json UnifiedVocab::to_json(const WordTable& table) const {
  json tokens = json::array();
  for (std::size_t i = 0; i < size(); ++i) {
    const int id = static_cast<int>(i);
    std::string kind, text;
    if (is_word(id)) {
      kind = "word";
      text = table.word(id);
    } else if (is_temporal(id)) {
      kind = "temporal";
      text = "<t" + std::to_string(code_index(id)) + ">";
    } else {
      kind = "special";
      text = "<" + special_name(id) + ">";
    }
    tokens.push_back({{"id", id}, {"kind", kind}, {"text", text}});
  }
  json j = layout_json();
  j["size"] = size();
  j["template_version"] = kPromptTemplateVersion;
  j["tokens"] = tokens;
  return j;
}

const char* to_string(InitStrategy s) {
  switch (s) {
    case InitStrategy::mean: return "mean";
    case InitStrategy::word_sample: return "word";
    default: return "random";
  }
}

InitStrategy init_strategy_from_string(const std::string& s) {
  if (s == "mean") return InitStrategy::mean;
  if (s == "word" || s == "word-sample") return InitStrategy::word_sample;
  if (s == "random") return InitStrategy::random;
  throw ValidationError("unknown embedding init '" + s + "' (expected mean, word or random)");
}

EmbeddingMoments embedding_moments(const core::Tensor& original, double shrinkage) {
  const std::size_t w = original.rows(), d = original.cols();
  if (w < 2) {
    throw ValidationError("mean initialization needs at least 2 original embedding rows, got " +
                          std::to_string(w));
  }
  const auto e = original.data();
  EmbeddingMoments m;
  // Shifted by the first row so identical rows give their value exactly.
  m.mean.assign(e.begin(), e.begin() + d);
  std::vector<double> shift(d, 0.0);
  for (std::size_t r = 0; r < w; ++r) {
    for (std::size_t j = 0; j < d; ++j) shift[j] += e[r * d + j] - e[j];
  }
  for (std::size_t j = 0; j < d; ++j) m.mean[j] += shift[j] / static_cast<double>(w);
  m.covariance.assign(d * d, 0.0);
  for (std::size_t r = 0; r < w; ++r) {
    for (std::size_t a = 0; a < d; ++a) {
      const double da = e[r * d + a] - m.mean[a];
      for (std::size_t b = 0; b <= a; ++b) m.covariance[a * d + b] += da * (e[r * d + b] - m.mean[b]);
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      double c = m.covariance[a * d + b] / static_cast<double>(w - 1);
      if (a != b) c *= 1.0 - shrinkage;
      m.covariance[a * d + b] = c;
      m.covariance[b * d + a] = c;
    }
  }
  return m;
}

std::vector<double> psd_cholesky(const std::vector<double>& a, std::size_t n) {
  std::vector<double> l(n * n, 0.0);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, a[i * n + i]);
  const double tol = 1e-14 * std::max(max_diag, 1e-300);
  for (std::size_t j = 0; j < n; ++j) {
    double s = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) s -= l[j * n + k] * l[j * n + k];
    if (s <= tol) continue;
    const double pivot = std::sqrt(s);
    l[j * n + j] = pivot;
    for (std::size_t i = j + 1; i < n; ++i) {
      double t = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) t -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = t / pivot;
    }
  }
  return l;
}

core::Tensor init_new_embeddings(const core::Tensor& original, InitStrategy strategy,
                                 std::size_t count, std::uint64_t seed) {
  const std::size_t w = original.rows(), d = original.cols();
  core::Rng rng(seed);
  std::vector<double> out(count * d, 0.0);
  switch (strategy) {
    case InitStrategy::mean: {
      const auto m = embedding_moments(original);
      const auto l = psd_cholesky(m.covariance, d);
      std::vector<double> z(d);
      for (std::size_t r = 0; r < count; ++r) {
        for (auto& v : z) v = rng.normal();
        for (std::size_t i = 0; i < d; ++i) {
          double v = m.mean[i];
          for (std::size_t k = 0; k <= i; ++k) v += l[i * d + k] * z[k];
          out[r * d + i] = v;
        }
      }
      break;
    }
    case InitStrategy::word_sample:
      if (w == 0) throw ValidationError("word-sample initialization needs original rows");
      for (std::size_t r = 0; r < count; ++r) {
        const std::size_t src = rng.index(w);
        std::copy_n(original.data().begin() + src * d, d, out.begin() + r * d);
      }
      break;
    case InitStrategy::random:
      for (auto& v : out) v = rng.truncated_normal(0.02);
      break;
  }
  return core::Tensor::from({count, d}, out);
}

std::size_t Prompt::supervised() const {
  return static_cast<std::size_t>(std::count(loss_mask.begin(), loss_mask.end(), 1));
}

std::vector<int> render_stats(const data::ContextStats& s, const WordTable& words) {
  std::vector<int> out;
  auto value = [&](const char* name, double v) {
    out.push_back(words.id(name));
    const auto ids = encode_decimal(words, v);
    out.insert(out.end(), ids.begin(), ids.end());
  };
  value("min", s.min);
  value("max", s.max);
  value("mean", s.mean);
  value("last", s.last);
  out.push_back(words.id("trend"));
  out.push_back(words.id(data::to_string(s.trend)));
  return out;
}

std::vector<int> render_general(const WordTable& words, std::size_t horizon) {
  auto out = words.encode("domain synthetic seasonal series task forecast next");
  const auto n = encode_integer(words, horizon);
  out.insert(out.end(), n.begin(), n.end());
  out.push_back(words.id("steps"));
  return out;
}

Prompt build_prompt(const data::ContextStats& stats, const std::vector<int>& history,
                    const std::vector<int>* future, const UnifiedVocab& vocab,
                    const WordTable& words, PromptMode mode, const SegmentToggles& toggles,
                    std::size_t horizon) {
  if (mode != PromptMode::infer && future == nullptr) {
    throw ValidationError("training prompts need future tokens");
  }
  if (mode == PromptMode::infer && future != nullptr) {
    throw ValidationError("inference prompts must not contain future tokens");
  }
  Prompt p;
  auto& ids = p.ids;
  ids.push_back(vocab.bos());
  p.general.begin = ids.size();
  if (toggles.general) {
    const auto g = render_general(words, horizon);
    ids.insert(ids.end(), g.begin(), g.end());
  }
  p.general.end = ids.size();
  ids.push_back(vocab.ctx_start());
  p.local.begin = ids.size();
  if (toggles.local) {
    const auto s = render_stats(stats, words);
    ids.insert(ids.end(), s.begin(), s.end());
  }
  p.local.end = ids.size();
  ids.push_back(vocab.ctx_end());
  ids.push_back(vocab.ts_start());
  p.history.begin = ids.size();
  for (int c : history) ids.push_back(vocab.temporal_id(static_cast<std::size_t>(c)));
  p.history.end = ids.size();
  ids.push_back(vocab.ts_end());
  ids.push_back(vocab.resp_start());
  p.response.begin = ids.size();
  if (future) {
    ids.push_back(vocab.ts_start());
    for (int c : *future) ids.push_back(vocab.temporal_id(static_cast<std::size_t>(c)));
    ids.push_back(vocab.ts_end());
    ids.push_back(vocab.eos());
  }
  p.response.end = ids.size();

  p.loss_mask.assign(ids.size(), 0);
  if (mode == PromptMode::align) {
    std::fill(p.loss_mask.begin() + 1, p.loss_mask.end(), 1);
  } else if (mode == PromptMode::finetune) {
    std::fill(p.loss_mask.begin() + static_cast<std::ptrdiff_t>(p.response.begin),
              p.loss_mask.end(), 1);
  }
  if (!toggles.general && !p.general.empty()) throw std::logic_error("general segment toggled off");
  if (!toggles.local && !p.local.empty()) throw std::logic_error("local segment toggled off");
  return p;
}

ResponseTokens extract_response(const std::vector<int>& ids, std::size_t from,
                                const UnifiedVocab& vocab) {
  ResponseTokens r;
  std::size_t i = from;
  while (i < ids.size() && ids[i] != vocab.ts_start()) ++i;
  if (i == ids.size()) return r;
  r.opened = true;
  for (++i; i < ids.size(); ++i) {
    if (ids[i] == vocab.ts_end()) {
      r.closed = true;
      break;
    }
    if (vocab.is_temporal(ids[i])) {
      r.codes.push_back(static_cast<int>(vocab.code_index(ids[i])));
    } else {
      ++r.stray;
    }
  }
  return r;
}

}  // namespace tokencast::vocab
