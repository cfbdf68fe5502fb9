#include "hurricast/nn/checkpoint.hpp"

#include <set>

#include "hurricast/errors.hpp"
#include "hurricast/io.hpp"

namespace hurricast::nn {

std::vector<std::uint8_t> encode_checkpoint(std::span<const CheckpointBlock> blocks) {
  io::ByteWriter w;
  w.raw("HCKP");
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(blocks.size()));
  std::set<std::string> names;
  for (const auto& b : blocks) {
    if (b.name.size() > 0xFFFF) throw FormatError("checkpoint block name too long: " + b.name.substr(0, 32));
    if (!names.insert(b.name).second) throw FormatError("duplicate checkpoint block " + b.name);
    w.u16(static_cast<std::uint16_t>(b.name.size()));
    w.raw(b.name);
    w.u32(static_cast<std::uint32_t>(b.values.size()));
    for (float v : b.values) w.f32(v);
  }
  return w.take();
}

std::vector<CheckpointBlock> decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (bytes.size() < 4 || r.raw(4) != "HCKP") throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.u16();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.u32();
  if (count > r.remaining() / 6) throw CorruptionError("checkpoint block count exceeds file size");
  std::vector<CheckpointBlock> blocks(count);
  for (auto& b : blocks) {
    b.name = r.raw(r.u16());
    const auto n = r.u32();
    if (n > r.remaining() / 4) throw CorruptionError("checkpoint block " + b.name + " is truncated");
    b.values.resize(n);
    for (auto& v : b.values) v = r.f32();
  }
  if (!r.done()) throw CorruptionError("trailing bytes after checkpoint blocks");
  return blocks;
}

void write_checkpoint(const std::filesystem::path& path, std::span<const CheckpointBlock> blocks) {
  io::write_file(path, encode_checkpoint(blocks));
}

std::vector<CheckpointBlock> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace hurricast::nn
