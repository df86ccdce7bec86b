#include "tokencast/io/checkpoint.hpp"

#include <algorithm>

#include "tokencast/error.hpp"
#include "tokencast/io/binary.hpp"
#include "tokencast/io/digest.hpp"

namespace tokencast::io {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'T', 'K', 'C', '1'};

}  // namespace

const core::Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw ValidationError("checkpoint (" + stage + ") has no tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(), [&](const auto& p) { return p.first == name; });
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  json dir = json::array();
  std::string payload;
  for (const auto& [name, t] : ckpt.tensors) {
    dir.push_back({{"name", name}, {"shape", t.shape()}, {"offset", payload.size()}});
    append_f64(payload, t.data());
  }
  const json header{{"version", ckpt.version},
                    {"stage", ckpt.stage},
                    {"meta", ckpt.meta},
                    {"tensors", dir},
                    {"payload_bytes", payload.size()}};
  const std::string h = header.dump();
  std::string out(kMagic, 4);
  append_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  out += payload;
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin) {
  auto fail = [&](const std::string& msg) { throw ValidationError(origin + ": " + msg); };
  if (bytes.size() < 8) fail("truncated header");
  if (!std::equal(kMagic, kMagic + 4, bytes.begin())) fail("bad magic");
  const std::size_t hlen = read_u32(bytes, 4);
  if (8 + hlen > bytes.size()) fail("truncated header");
  json header;
  try {
    header = json::parse(bytes.substr(8, hlen));
  } catch (const json::exception& e) {
    fail(std::string("malformed header: ") + e.what());
  }
  Checkpoint ck;
  ck.version = header.value("version", -1);
  if (ck.version != kCheckpointVersion) {
    fail("checkpoint version " + std::to_string(ck.version) + " is not supported (expected " +
         std::to_string(kCheckpointVersion) + ")");
  }
  ck.stage = header.value("stage", "");
  ck.meta = header.value("meta", json::object());
  const std::size_t base = 8 + hlen;
  const std::size_t available = bytes.size() - base;
  std::size_t expected_end = 0;
  for (const auto& e : header.at("tensors")) {
    const auto name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<core::Shape>();
    const auto offset = e.at("offset").get<std::size_t>();
    const std::size_t nbytes = core::numel(shape) * sizeof(double);
    if (offset < expected_end) fail("overlapping tensor directory at '" + name + "'");
    if (offset != expected_end) fail("gap in tensor directory before '" + name + "'");
    if (offset + nbytes > available) {
      fail("truncated payload: tensor '" + name + "' " + core::shape_str(shape) + " needs bytes [" +
           std::to_string(offset) + ", " + std::to_string(offset + nbytes) + ") of " +
           std::to_string(available));
    }
    ck.tensors.emplace_back(
        name, core::Tensor::from(shape, read_f64(bytes, base + offset, core::numel(shape))));
    expected_end = offset + nbytes;
  }
  const auto declared = header.value("payload_bytes", expected_end);
  if (declared != expected_end || available != expected_end) {
    fail("payload length " + std::to_string(available) + " does not match the " +
         std::to_string(expected_end) + " bytes declared by the tensor shapes");
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("missing checkpoint " + path.string());
  return parse_checkpoint(read_file(path), path.string());
}

std::string tensor_digest(const core::Tensor& t) { return sha256_doubles(t.data()); }

void restore_tensors(const Checkpoint& ckpt, const NamedTensors& dest) {
  for (const auto& [name, t] : dest) {
    const auto& src = ckpt.tensor(name);
    if (src.shape() != t.shape()) {
      throw ValidationError("tensor '" + name + "' has shape " + core::shape_str(src.shape()) +
                            " in checkpoint, expected " + core::shape_str(t.shape()));
    }
    core::Tensor handle = t;
    auto d = handle.mutable_data();
    std::copy(src.data().begin(), src.data().end(), d.begin());
  }
}

}  // namespace tokencast::io
