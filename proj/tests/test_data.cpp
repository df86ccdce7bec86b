#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>

#include "doctest.h"
#include "tokencast/data/synth.hpp"
#include "tokencast/data/window.hpp"
#include "tokencast/error.hpp"
#include "tokencast/vocab/words.hpp"

using namespace tokencast;
using namespace tokencast::data;

TEST_CASE("csv with header and timestamp column") {
  const auto raw = parse_csv("date,a,b\n2020-01-01,1,2\n2020-01-02,3,\n2020-01-03,5,6\n");
  REQUIRE(raw.channel_count() == 2);
  CHECK(raw.channel_names == std::vector<std::string>{"a", "b"});
  CHECK(raw.length() == 3);
  CHECK(*raw.channels[0][2] == 5.0);
  CHECK_FALSE(raw.channels[1][1].has_value());
}

TEST_CASE("csv without header") {
  const auto raw = parse_csv("1.5\n2.5\n-3\n");
  REQUIRE(raw.channel_count() == 1);
  CHECK(*raw.channels[0][2] == -3.0);
}

TEST_CASE("csv errors name the offending cell") {
  CHECK_THROWS_WITH_AS(parse_csv("a,b\n1,2\n3\n"), doctest::Contains("row"), ValidationError);
  CHECK_THROWS_WITH_AS(parse_csv("a\n1\nxyz\n"), doctest::Contains("xyz"), ValidationError);
  CHECK_THROWS_AS(parse_csv("a,b\n"), ValidationError);
}

TEST_CASE("imputation fills forward then backward and keeps observed values") {
  RawSeries raw;
  raw.name = "gaps";
  raw.channel_names = {"x"};
  raw.channels = {{std::nullopt, 2.0, std::nullopt, std::nullopt, 5.0}};
  const auto s = impute(raw);
  CHECK(s.channels[0] == std::vector<double>{2.0, 2.0, 2.0, 2.0, 5.0});
  raw.channels = {{std::nullopt, std::nullopt}};
  CHECK_THROWS_AS(impute(raw), ValidationError);
}

TEST_CASE("z-score uses the fitted prefix and inverts") {
  Series s;
  s.name = "z";
  s.channel_names = {"x"};
  s.channels = {{1.0, 3.0, 100.0}};
  const auto st = fit_zscore(s, 2);
  CHECK(st.mean[0] == doctest::Approx(2.0));
  CHECK(st.stddev[0] == doctest::Approx(1.0));
  const auto z = apply_zscore(s, st);
  CHECK(z.channels[0][2] == doctest::Approx(98.0));
  const auto back = invert_zscore(z, st);
  for (std::size_t i = 0; i < 3; ++i) CHECK(back.channels[0][i] == doctest::Approx(s.channels[0][i]));

  s.channels = {{4.0, 4.0, 4.0}};
  CHECK(fit_zscore(s, 3).stddev[0] == kZScoreFloor);
}

TEST_CASE("windowing of a length-10 ramp") {
  Series s;
  s.name = "ramp";
  s.channel_names = {"x"};
  s.channels = {{}};
  for (int i = 0; i < 10; ++i) s.channels[0].push_back(i);
  const auto w = make_windows(s, 4, 2, 1);
  REQUIRE(w.size() == 5);  // 10 - (4 + 2) + 1
  CHECK(w[0].history == std::vector<double>{0, 1, 2, 3});
  CHECK(w[0].future == std::vector<double>{4, 5});
  CHECK(w[4].history == std::vector<double>{4, 5, 6, 7});
  CHECK(w[4].future == std::vector<double>{8, 9});
  CHECK(make_windows(s, 4, 2, 2).size() == 3);
  CHECK(make_windows(s, 8, 4, 1).empty());
}

TEST_CASE("context statistics") {
  const std::vector<double> h{1, 2, 3, 4};
  const auto st = context_stats(h);
  CHECK(st.min == 1);
  CHECK(st.max == 4);
  CHECK(st.mean == doctest::Approx(2.5));
  CHECK(st.last == 4);
  CHECK(st.trend == Trend::up);
  const std::vector<double> d{4, 3, 2, 1};
  CHECK(context_stats(d).trend == Trend::down);
  const std::vector<double> f{2, 2, 2};
  CHECK(context_stats(f).trend == Trend::flat);
}

TEST_CASE("prepared splits never overlap and stats come from the train prefix") {
  SynthParams p;
  p.length = 600;
  const auto raw = synth_series(SynthKind::seasonal_trend, p, 5);
  PrepareOptions opt;
  opt.history_len = 24;
  opt.horizon = 8;
  const auto ds = prepare(raw, opt, "digest");
  const auto& b = ds.manifest.bounds;
  CHECK(b.train_end == 420);
  CHECK(b.val_end == 480);
  for (const auto& w : ds.train) CHECK(w.offset + 32 <= b.train_end);
  for (const auto& w : ds.val) {
    CHECK(w.offset >= b.train_end);
    CHECK(w.offset + 32 <= b.val_end);
  }
  for (const auto& w : ds.test) CHECK(w.offset >= b.val_end);
  CHECK(ds.train.size() == 420 - 32 + 1);
  CHECK(ds.val.size() == 60 - 32 + 1);
  CHECK(ds.test.size() == 120 - 32 + 1);

  // Train statistics only: the standardized train prefix has mean 0, std 1.
  const auto& x = ds.standardized.channels[0];
  double m = 0.0, v = 0.0;
  for (std::size_t i = 0; i < b.train_end; ++i) m += x[i];
  m /= b.train_end;
  for (std::size_t i = 0; i < b.train_end; ++i) v += (x[i] - m) * (x[i] - m);
  CHECK(m == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(std::sqrt(v / b.train_end) == doctest::Approx(1.0));

  opt.horizon = 7;
  CHECK_THROWS_AS(prepare(raw, opt, "digest"), ValidationError);
}

TEST_CASE("manifest and window archive round trip") {
  SynthParams p;
  p.length = 200;
  const auto ds = prepare(synth_series(SynthKind::ar1, p, 3), {.history_len = 16, .horizon = 4},
                          "abc");
  const auto m = DatasetManifest::from_json(ds.manifest.to_json());
  CHECK(m.to_json() == ds.manifest.to_json());

  const auto dir = std::filesystem::temp_directory_path() / "tokencast_test_windows";
  std::filesystem::remove_all(dir);
  write_window_archive(dir / "test.json", ds.test, "cfg");
  const auto back = read_window_archive(dir / "test.json");
  REQUIRE(back.size() == ds.test.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].history == ds.test[i].history);
    CHECK(back[i].future == ds.test[i].future);
    CHECK(back[i].offset == ds.test[i].offset);
    CHECK(back[i].norm.sigma == ds.test[i].norm.sigma);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic series are deterministic per seed") {
  for (auto kind : {SynthKind::sine_mixture, SynthKind::seasonal_trend, SynthKind::ar1}) {
    SynthParams p;
    p.length = 300;
    const auto a = impute(synth_series(kind, p, 11));
    const auto b = impute(synth_series(kind, p, 11));
    const auto c = impute(synth_series(kind, p, 12));
    CHECK(a.channels == b.channels);
    CHECK(a.channels != c.channels);
  }
}

TEST_CASE("noise-free single sine with period 24 peaks at amplitude 1") {
  SynthParams p;
  p.length = 480;
  p.noise = 0.0;
  p.sines = {{1.0, 1.0 / 24.0, 0.0}};
  const auto s = impute(synth_series(SynthKind::sine_mixture, p, 1));
  double mx = 0.0;
  for (double v : s.channels[0]) mx = std::max(mx, std::abs(v));
  CHECK(mx == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t t = 0; t + 24 < s.length(); ++t) {
    CHECK(s.channels[0][t] == doctest::Approx(s.channels[0][t + 24]).epsilon(1e-9));
  }
}

TEST_CASE("ar1 lag-one autocorrelation is near rho") {
  SynthParams p;
  p.length = 10000;
  const auto x = impute(synth_series(SynthKind::ar1, p, 7)).channels[0];
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    den += (x[t] - m) * (x[t] - m);
    if (t + 1 < x.size()) num += (x[t] - m) * (x[t + 1] - m);
  }
  const double r = num / den;
  CHECK(r >= 0.8);
  CHECK(r <= 0.95);
}

TEST_CASE("markov grammar probabilities are a distribution over four successors") {
  const MarkovGrammar g(64, 2);
  for (int a = 0; a < 8; ++a) {
    for (int b = 0; b < 8; ++b) {
      double total = 0.0;
      int support = 0;
      for (int c = 0; c < 64; ++c) {
        const double pr = g.probability(a, b, c);
        total += pr;
        support += pr > 0.0;
      }
      CHECK(total == doctest::Approx(1.0));
      CHECK(support == 4);
    }
  }
  // Independent entropy of the weight vector.
  const double h = -(0.55 * std::log(0.55) + 0.25 * std::log(0.25) + 0.12 * std::log(0.12) +
                     0.08 * std::log(0.08));
  CHECK(g.conditional_entropy() == doctest::Approx(h));
}

TEST_CASE("markov stream empirical conditional entropy matches the grammar") {
  const MarkovGrammar g(32, 4);
  const auto ids = synth_markov_stream(g, 9, 200000);
  std::map<std::tuple<int, int, int>, double> tri;
  std::map<std::pair<int, int>, double> bi;
  for (std::size_t i = 2; i < ids.size(); ++i) {
    tri[{ids[i - 2], ids[i - 1], ids[i]}] += 1;
    bi[{ids[i - 2], ids[i - 1]}] += 1;
  }
  double h = 0.0;
  const double n = static_cast<double>(ids.size() - 2);
  for (const auto& [k, c] : tri) {
    h -= c / n * std::log(c / bi[{std::get<0>(k), std::get<1>(k)}]);
  }
  CHECK(h == doctest::Approx(g.conditional_entropy()).epsilon(0.03));
}

TEST_CASE("synthetic corpus has exact length, valid ids and is deterministic") {
  const auto a = synth_corpus(256, 1, 5000);
  const auto b = synth_corpus(256, 1, 5000);
  const auto c = synth_corpus(256, 2, 5000);
  REQUIRE(a.size() == 5000);
  CHECK(a == b);
  CHECK(a != c);
  for (int id : a) {
    CHECK(id >= 0);
    CHECK(id < 256);
  }
  // Unigram entropy is high enough to be non-trivial.
  std::vector<double> counts(256, 0.0);
  for (int id : a) counts[id] += 1;
  double h = 0.0;
  for (double cnt : counts) {
    if (cnt > 0) h -= cnt / 5000 * std::log(cnt / 5000);
  }
  CHECK(h >= 0.5 * std::log(256.0));
}

TEST_CASE("decimal rendering") {
  CHECK(vocab::format_decimal(-0.25) == "-0.3");
  CHECK(vocab::format_decimal(0.25) == "0.3");
  CHECK(vocab::format_decimal(-0.04) == "0.0");
  CHECK(vocab::format_decimal(12.349) == "12.3");
  const vocab::WordTable words(64);
  CHECK(words.decode(vocab::encode_decimal(words, -1.05)) == "- 1 . 1");
  CHECK(words.decode(vocab::encode_integer(words, 96)) == "9 6");
  CHECK_THROWS_AS(vocab::WordTable(10), ValidationError);
  CHECK_THROWS_AS(words.id("nope"), ValidationError);
}
