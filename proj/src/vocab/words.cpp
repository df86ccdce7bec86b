#include "tokencast/vocab/words.hpp"

#include <cmath>
#include <sstream>

#include "tokencast/error.hpp"

namespace tokencast::vocab {

const std::vector<std::string>& WordTable::named_words() {
  static const std::vector<std::string> kWords = {
      "0",      "1",         "2",        "3",      "4",        "5",     "6",    "7",
      "8",      "9",         "-",        ".",      "up",       "down",  "flat", "min",
      "max",    "mean",      "last",     "trend",  "domain",   "synthetic",
      "seasonal", "series",  "values",   "task",   "forecast", "next",  "steps"};
  return kWords;
}

WordTable::WordTable(std::size_t size) {
  const auto& named = named_words();
  if (size < named.size()) {
    throw ValidationError("word vocabulary of " + std::to_string(size) +
                          " cannot hold the " + std::to_string(named.size()) + " named words");
  }
  words_.reserve(size);
  for (const auto& w : named) words_.push_back(w);
  while (words_.size() < size) words_.push_back("w" + std::to_string(words_.size()));
  for (std::size_t i = 0; i < words_.size(); ++i) index_.emplace(words_[i], static_cast<int>(i));
}

bool WordTable::contains(std::string_view word) const {
  return index_.count(std::string(word)) > 0;
}

int WordTable::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) throw ValidationError("unknown word '" + std::string(word) + "'");
  return it->second;
}

const std::string& WordTable::word(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw ValidationError("word id " + std::to_string(id) + " out of range");
  }
  return words_[static_cast<std::size_t>(id)];
}

std::vector<int> WordTable::encode(std::string_view text) const {
  std::istringstream in{std::string(text)};
  std::vector<int> ids;
  std::string w;
  while (in >> w) ids.push_back(id(w));
  return ids;
}

std::string WordTable::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int i : ids) {
    if (!out.empty()) out.push_back(' ');
    out += word(i);
  }
  return out;
}

std::vector<int> encode_integer(const WordTable& words, unsigned long value) {
  std::vector<int> ids;
  for (char c : std::to_string(value)) ids.push_back(words.id(std::string(1, c)));
  return ids;
}

std::string format_decimal(double value) {
  const double tenths = std::round(value * 10.0);
  const bool negative = tenths < 0.0;
  const auto mag = static_cast<unsigned long long>(std::abs(tenths));
  std::string out = negative ? "-" : "";
  out += std::to_string(mag / 10) + "." + std::to_string(mag % 10);
  return out;
}

std::vector<int> encode_decimal(const WordTable& words, double value) {
  std::vector<int> ids;
  for (char c : format_decimal(value)) ids.push_back(words.id(std::string(1, c)));
  return ids;
}

}  // namespace tokencast::vocab
