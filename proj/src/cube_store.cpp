#include "hurricast/cube_store.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "hurricast/errors.hpp"
#include "hurricast/storm_data.hpp"

namespace hurricast {

namespace {

constexpr auto kStep = std::chrono::hours{3};

}  // namespace

void CubeStore::insert(const std::string& storm_id, TimePoint last_time, Tensor4f slices) {
  auto first = last_time - kStep * (slices.dim(0) - 1);
  auto& list = entries_[storm_id];
  list.push_back({first, last_time, std::move(slices)});
  std::sort(list.begin(), list.end(), [](const Entry& a, const Entry& b) { return a.first < b.first; });
}

std::string CubeStore::file_name(const std::string& storm_id, TimePoint last_time) {
  return storm_id + "_" + format_compact(last_time) + ".hcub";
}

CubeStore CubeStore::load_directory(const std::filesystem::path& dir) {
  CubeStore store;
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("cube directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".hcub") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    std::string stem = p.stem().string();
    auto us = stem.rfind('_');
    if (us == std::string::npos || us == 0) throw FormatError("cube file name lacks '<sid>_<time>': " + p.string());
    std::string sid = stem.substr(0, us);
    std::string ts = stem.substr(us + 1);
    // YYYYMMDDTHHMMSSZ -> ISO
    if (ts.size() != 16) throw FormatError("bad timestamp in cube file name: " + p.string());
    std::string iso = ts.substr(0, 4) + "-" + ts.substr(4, 2) + "-" + ts.substr(6, 2) + "T" + ts.substr(9, 2) + ":" +
                      ts.substr(11, 2) + ":" + ts.substr(13, 2);
    store.insert(sid, parse_iso8601(iso), read_hcub(p));
  }
  return store;
}

void CubeStore::save_directory(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& [sid, list] : entries_) {
    for (const auto& e : list) write_hcub(dir / file_name(sid, e.last), e.slices);
  }
}

const CubeStore::Entry* CubeStore::find(const std::string& storm_id, TimePoint t) const {
  auto it = entries_.find(storm_id);
  if (it == entries_.end()) return nullptr;
  for (const auto& e : it->second) {
    if (t < e.first || t > e.last) continue;
    if ((t - e.first) % kStep != std::chrono::seconds::zero()) continue;
    return &e;
  }
  return nullptr;
}

bool CubeStore::has(const std::string& storm_id, TimePoint t) const { return find(storm_id, t) != nullptr; }

Tensor4f CubeStore::window(const std::string& storm_id, TimePoint t0, int steps) const {
  const Entry* first = nullptr;
  Tensor4f out;
  for (int k = 0; k < steps; ++k) {
    TimePoint t = t0 - kStep * (steps - 1 - k);
    const Entry* e = find(storm_id, t);
    if (!e) {
      throw std::out_of_range("no cube for storm " + storm_id + " at history step " + std::to_string(k) + " (" +
                              format_iso8601(t) + ")");
    }
    if (!first) {
      first = e;
      out = Tensor4f({steps, e->slices.dim(1), e->slices.dim(2), e->slices.dim(3)});
    }
    const auto slice = e->slices.dim(1) * e->slices.dim(2) * e->slices.dim(3);
    if (slice * steps != out.size()) throw DimensionError("cube slices of storm " + storm_id + " differ in shape");
    auto idx = (t - e->first) / kStep;
    out.data().segment(k * slice, slice) = e->slices.data().segment(idx * slice, slice);
  }
  return out;
}

ChannelStats CubeStore::channel_stats(std::span<const storm::ForecastCase> cases) const {
  std::set<std::pair<std::string, TimePoint>> seen;
  Eigen::VectorXd sum, sumsq;
  double count = 0;
  Eigen::Index channels = 0;
  for (const auto& c : cases) {
    for (int k = 0; k < storm::kHistorySteps; ++k) {
      TimePoint t = c.history_time(k);
      if (!seen.emplace(c.storm_id, t).second) continue;
      const Entry* e = find(c.storm_id, t);
      if (!e) throw std::out_of_range("no cube for " + c.storm_id + " at " + format_iso8601(t));
      if (channels == 0) {
        channels = e->slices.dim(1);
        sum = Eigen::VectorXd::Zero(channels);
        sumsq = Eigen::VectorXd::Zero(channels);
      }
      const auto plane = e->slices.dim(2) * e->slices.dim(3);
      auto idx = (t - e->first) / kStep;
      for (Eigen::Index ch = 0; ch < channels; ++ch) {
        auto seg = e->slices.data().segment((idx * channels + ch) * plane, plane).cast<double>();
        sum[ch] += seg.sum();
        sumsq[ch] += seg.squaredNorm();
      }
      count += static_cast<double>(plane);
    }
  }
  if (count == 0) throw DimensionError("channel statistics need at least one cube slice");
  ChannelStats s;
  s.mean = sum / count;
  s.stddev = (sumsq / count - s.mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  for (Eigen::Index ch = 0; ch < s.stddev.size(); ++ch) {
    if (!(s.stddev[ch] > 1e-12)) s.stddev[ch] = 1.0;
  }
  return s;
}

CubeStore CubeStore::standardized(const ChannelStats& stats) const {
  CubeStore out;
  for (const auto& [sid, list] : entries_) {
    auto& dst = out.entries_[sid];
    for (const auto& e : list) dst.push_back({e.first, e.last, standardize_channels(e.slices, stats)});
  }
  return out;
}

std::size_t CubeStore::entry_count() const {
  std::size_t n = 0;
  for (const auto& [sid, list] : entries_) n += list.size();
  return n;
}

std::size_t CubeStore::slice_count() const {
  std::size_t n = 0;
  for (const auto& [sid, list] : entries_) {
    for (const auto& e : list) n += static_cast<std::size_t>(e.slices.dim(0));
  }
  return n;
}

Tensor4f standardize_channels(const Tensor4f& window, const ChannelStats& stats) {
  const auto channels = window.dim(1);
  if (stats.mean.size() != channels) throw DimensionError("channel stats do not match cube channel count");
  const auto plane = window.dim(2) * window.dim(3);
  Tensor4f out = window;
  for (Eigen::Index t = 0; t < window.dim(0); ++t) {
    for (Eigen::Index ch = 0; ch < channels; ++ch) {
      auto seg = out.data().segment((t * channels + ch) * plane, plane);
      seg = ((seg.array() - static_cast<float>(stats.mean[ch])) / static_cast<float>(stats.stddev[ch])).matrix();
    }
  }
  return out;
}

}  // namespace hurricast
