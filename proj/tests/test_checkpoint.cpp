#include "doctest.h"
#include "tokencast/error.hpp"
#include "tokencast/io/binary.hpp"
#include "tokencast/io/checkpoint.hpp"

using namespace tokencast;
using core::Tensor;

namespace {

io::Checkpoint sample() {
  io::Checkpoint ck;
  ck.stage = "test";
  ck.meta = {{"b", 2}, {"a", {1.5, -0.1}}};
  ck.tensors.emplace_back("x", Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6.25}));
  ck.tensors.emplace_back("y", Tensor::from({1}, {-0.1}));
  return ck;
}

std::string rewrite_header(const std::string& bytes, const std::function<void(nlohmann::json&)>& f,
                           const std::string& payload_override = "\x01") {
  const auto hlen = io::read_u32(bytes, 4);
  auto h = nlohmann::json::parse(bytes.substr(8, hlen));
  f(h);
  const std::string hs = h.dump();
  std::string out = "TKC1";
  io::append_u32(out, static_cast<std::uint32_t>(hs.size()));
  out += hs;
  out += payload_override == "\x01" ? bytes.substr(8 + hlen) : payload_override;
  return out;
}

}  // namespace

TEST_CASE("save/load/save is byte identical") {
  const auto bytes = io::serialize_checkpoint(sample());
  CHECK(bytes.substr(0, 4) == "TKC1");
  const auto back = io::parse_checkpoint(bytes);
  CHECK(back.stage == "test");
  CHECK(back.tensor("x").at(5) == 6.25);
  CHECK(io::serialize_checkpoint(back) == bytes);
}

TEST_CASE("bad magic") {
  auto bytes = io::serialize_checkpoint(sample());
  bytes.replace(0, 4, "XXXX");
  CHECK_THROWS_WITH_AS(io::parse_checkpoint(bytes), doctest::Contains("bad magic"),
                       ValidationError);
}

TEST_CASE("truncated payload") {
  const auto bytes = io::serialize_checkpoint(sample());
  CHECK_THROWS_WITH_AS(io::parse_checkpoint(bytes.substr(0, bytes.size() - 8)),
                       doctest::Contains("truncated"), ValidationError);
  CHECK_THROWS_WITH_AS(io::parse_checkpoint(bytes.substr(0, 6)), doctest::Contains("truncated"),
                       ValidationError);
}

TEST_CASE("declared shape disagreeing with payload length") {
  const auto bytes = io::serialize_checkpoint(sample());
  const auto bad = rewrite_header(bytes, [](auto& h) { h["tensors"][1]["shape"] = {0}; });
  CHECK_THROWS_AS(io::parse_checkpoint(bad), ValidationError);
}

TEST_CASE("overlapping directory") {
  const auto bytes = io::serialize_checkpoint(sample());
  const auto bad = rewrite_header(bytes, [](auto& h) { h["tensors"][1]["offset"] = 8; });
  CHECK_THROWS_WITH_AS(io::parse_checkpoint(bad), doctest::Contains("overlapping"),
                       ValidationError);
}

TEST_CASE("version mismatch names both versions") {
  const auto bytes = io::serialize_checkpoint(sample());
  const auto bad = rewrite_header(bytes, [](auto& h) { h["version"] = 7; });
  CHECK_THROWS_WITH_AS(io::parse_checkpoint(bad), doctest::Contains("version 7"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(io::parse_checkpoint(bad), doctest::Contains("expected 1"),
                       ValidationError);
}

TEST_CASE("restore checks shapes") {
  const auto ck = sample();
  io::NamedTensors dest{{"x", Tensor::zeros({3, 2})}};
  CHECK_THROWS_AS(io::restore_tensors(ck, dest), ValidationError);
  io::NamedTensors ok{{"x", Tensor::zeros({2, 3})}};
  io::restore_tensors(ck, ok);
  CHECK(ok[0].second.at(5) == 6.25);
}
