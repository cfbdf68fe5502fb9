#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hurricast/nn/layers.hpp"

namespace hurricast::nn {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct CheckpointBlock {
  std::string name;
  std::vector<float> values;  // column-major parameter data
};

/// "HCKP", u16 version, u32 block count, then per block: u16 name length,
/// UTF-8 name, u32 element count, float32 payload. All little-endian.
std::vector<std::uint8_t> encode_checkpoint(std::span<const CheckpointBlock> blocks);
std::vector<CheckpointBlock> decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, std::span<const CheckpointBlock> blocks);
std::vector<CheckpointBlock> read_checkpoint(const std::filesystem::path& path);

template <typename T>
std::vector<CheckpointBlock> to_blocks(const std::vector<const Param<T>*>& params) {
  std::vector<CheckpointBlock> out;
  out.reserve(params.size());
  for (const auto* p : params) {
    CheckpointBlock b;
    b.name = p->name;
    b.values.resize(static_cast<std::size_t>(p->value.size()));
    for (Eigen::Index i = 0; i < p->value.size(); ++i) b.values[i] = static_cast<float>(p->value.data()[i]);
    out.push_back(std::move(b));
  }
  return out;
}

/// Copies blocks into parameters by name. Every parameter must be present
/// with a matching element count; throws CorruptionError otherwise.
template <typename T>
void load_blocks(const ParamList<T>& params, std::span<const CheckpointBlock> blocks) {
  for (auto* p : params) {
    const CheckpointBlock* found = nullptr;
    for (const auto& b : blocks) {
      if (b.name == p->name) {
        found = &b;
        break;
      }
    }
    if (!found) throw CorruptionError("checkpoint lacks parameter " + p->name);
    if (static_cast<Eigen::Index>(found->values.size()) != p->value.size()) {
      throw CorruptionError("checkpoint block " + p->name + " has " + std::to_string(found->values.size()) +
                            " values, expected " + std::to_string(p->value.size()));
    }
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = static_cast<T>(found->values[i]);
  }
}

}  // namespace hurricast::nn
