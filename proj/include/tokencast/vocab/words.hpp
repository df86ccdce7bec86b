#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tokencast::vocab {

// The surrogate backbone's word vocabulary: a fixed set of named words used
// by prompts (digits, sign, period, statistic names, domain and instruction
// words) followed by anonymous filler words "w<id>" up to the requested size.
class WordTable {
 public:
  explicit WordTable(std::size_t size);

  std::size_t size() const { return words_.size(); }
  bool contains(std::string_view word) const;
  int id(std::string_view word) const;
  const std::string& word(int id) const;
  // Whitespace-separated words to ids; unknown words throw.
  std::vector<int> encode(std::string_view text) const;
  std::string decode(const std::vector<int>& ids) const;

  static const std::vector<std::string>& named_words();

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

// Digit tokens for a non-negative integer ("24" -> "2" "4").
std::vector<int> encode_integer(const WordTable& words, unsigned long value);

// One-decimal fixed-point rendering, rounding half away from zero:
// -0.25 -> "-" "0" "." "3". Negative zero renders without a sign.
std::string format_decimal(double value);
std::vector<int> encode_decimal(const WordTable& words, double value);

}  // namespace tokencast::vocab
