#include <chrono>

#include "hurricast/errors.hpp"
#include "hurricast/io.hpp"
#include "hurricast/storm_data.hpp"

namespace hurricast::storm {

void save_cases(const std::filesystem::path& path, std::span<const ForecastCase> cases, const FeatureLayout& layout) {
  io::ByteWriter w;
  w.raw("HCAS");
  w.u16(kCaseStoreVersion);
  w.u8(layout.include_raw_position() ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(cases.size()));
  const auto s = static_cast<Eigen::Index>(layout.size());
  for (const auto& c : cases) {
    if (c.history_stat.rows() != kHistorySteps || c.history_stat.cols() != s) {
      throw DimensionError("case " + c.id() + " does not match the feature layout");
    }
    w.str(c.storm_id);
    w.u64(static_cast<std::uint64_t>(c.t0.time_since_epoch().count()));
    w.u8(static_cast<std::uint8_t>(c.provenance));
    w.u8(static_cast<std::uint8_t>(c.basin));
    for (double v : {c.lat0, c.lon0, c.wind0, c.target_intensity, c.target_dlat, c.target_dlon}) w.f64(v);
    for (Eigen::Index i = 0; i < c.history_stat.size(); ++i) w.f64(c.history_stat.data()[i]);
  }
  io::write_file(path, w.buffer());
}

std::vector<ForecastCase> load_cases(const std::filesystem::path& path, FeatureLayout* layout_out) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes);
  if (bytes.size() < 4 || r.raw(4) != "HCAS") throw FormatError(path.string() + ": not a case store");
  const auto version = r.u16();
  if (version != kCaseStoreVersion) {
    throw VersionError("case store version " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kCaseStoreVersion) + ")");
  }
  const FeatureLayout layout(r.u8() != 0);
  const auto n = r.u32();
  const auto s = static_cast<Eigen::Index>(layout.size());
  std::vector<ForecastCase> cases;
  for (std::uint32_t k = 0; k < n; ++k) {
    ForecastCase c;
    c.storm_id = r.str();
    c.t0 = TimePoint(std::chrono::seconds(static_cast<std::int64_t>(r.u64())));
    const auto prov = r.u8();
    const auto basin = r.u8();
    if (prov > static_cast<std::uint8_t>(Provenance::Excluded) || basin >= kBasinLabels.size()) {
      throw CorruptionError(path.string() + ": bad enum value in case " + std::to_string(k));
    }
    c.provenance = static_cast<Provenance>(prov);
    c.basin = static_cast<Basin>(basin);
    for (double* v : {&c.lat0, &c.lon0, &c.wind0, &c.target_intensity, &c.target_dlat, &c.target_dlon}) *v = r.f64();
    c.history_stat.resize(kHistorySteps, s);
    for (Eigen::Index i = 0; i < c.history_stat.size(); ++i) c.history_stat.data()[i] = r.f64();
    cases.push_back(std::move(c));
  }
  if (!r.done()) throw CorruptionError(path.string() + ": trailing bytes");
  if (layout_out) *layout_out = layout;
  return cases;
}

}  // namespace hurricast::storm
