#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hurricast/datetime.hpp"
#include "hurricast/tensor.hpp"

namespace hurricast {

namespace storm {
struct ForecastCase;
}

/// Per-channel standardization statistics for reanalysis cubes.
struct ChannelStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
};

/// Storm-centered reanalysis slices indexed by storm id and valid time.
///
/// Each entry is a contiguous run of 3-hourly slices (T x 9 x 25 x 25). On
/// disk an entry is one HCUB file named `<sid>_<YYYYMMDDTHHMMSSZ>.hcub`,
/// where the timestamp is the valid time of the last slice, so an 8-slice
/// file is exactly one case window.
class CubeStore {
 public:
  void insert(const std::string& storm_id, TimePoint last_time, Tensor4f slices);

  /// Indexes every *.hcub file in `dir`. Throws FormatError on bad names.
  static CubeStore load_directory(const std::filesystem::path& dir);
  void save_directory(const std::filesystem::path& dir) const;
  static std::string file_name(const std::string& storm_id, TimePoint last_time);

  bool has(const std::string& storm_id, TimePoint t) const;

  /// The 8 slices ending at t0, shape (8, C, H, W). Throws std::out_of_range
  /// naming the first missing step.
  Tensor4f window(const std::string& storm_id, TimePoint t0, int steps = 8) const;

  /// Mean and population std per channel over the slices at the given history
  /// windows. Channels with zero spread get std 1.
  ChannelStats channel_stats(std::span<const storm::ForecastCase> cases) const;

  /// Copy with every slice standardized per channel.
  CubeStore standardized(const ChannelStats& stats) const;

  std::size_t entry_count() const;
  std::size_t slice_count() const;

 private:
  struct Entry {
    TimePoint first;
    TimePoint last;
    Tensor4f slices;
  };
  const Entry* find(const std::string& storm_id, TimePoint t) const;
  std::map<std::string, std::vector<Entry>> entries_;
};

/// Returns (x - mean_c) / std_c per channel.
Tensor4f standardize_channels(const Tensor4f& window, const ChannelStats& stats);

}  // namespace hurricast
