#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "hurricast/pipeline.hpp"
#include "hurricast/storm_data.hpp"
#include "hurricast/synthetic.hpp"

namespace hurricast {

/// Effective settings of a CLI run.
///
/// File format: UTF-8 `key=value` lines, `#` comments, section prefixes such
/// as `gbt.max_depth=6`. Unknown keys are rejected.
struct RunConfig {
  RunConfig() { set_seed(7); }

  std::filesystem::path tracks;
  std::filesystem::path cubes;
  std::filesystem::path operational;
  std::filesystem::path out;
  int ensemble_folds = 5;
  storm::SplitYears split;
  pipeline::PipelineConfig pipeline;
  synthetic::SyntheticSpec synth;

  std::uint64_t seed() const { return pipeline.seed; }
  void set_seed(std::uint64_t s);

  /// Applies one key=value pair. Throws ConfigError on unknown keys or bad values.
  void set(std::string_view key, std::string_view value);

  /// Sorted key=value lines that reproduce this configuration when parsed.
  std::string to_text() const;
  std::map<std::string, std::string> to_map() const;
  /// FNV-1a of to_text(), hex.
  std::string hash() const;

  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// HURICAST_SEED, when set, replaces the configured seed.
  void apply_environment();
};

}  // namespace hurricast
