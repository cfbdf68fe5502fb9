#include "hurricast/tensor.hpp"

#include "hurricast/io.hpp"

namespace hurricast {

Eigen::VectorXd extract_vision_features(const Tensor4d& cube) {
  if (cube.dims() != Tensor4d::Dims{kCubeDims[0], kCubeDims[1], kCubeDims[2], kCubeDims[3]}) {
    throw DimensionError("vision features need an (8, 9, 25, 25) cube, got (" + std::to_string(cube.dim(0)) + ", " +
                         std::to_string(cube.dim(1)) + ", " + std::to_string(cube.dim(2)) + ", " +
                         std::to_string(cube.dim(3)) + ")");
  }
  return tucker(cube, kVisionRanks).core.data();
}

Eigen::VectorXd extract_vision_features(const Tensor4f& cube) { return extract_vision_features(cube.cast<double>()); }

std::vector<std::uint8_t> encode_hcub(const Tensor4f& t) {
  io::ByteWriter w;
  w.raw("HCUB");
  w.u16(kHcubVersion);
  for (auto d : t.dims()) w.u32(static_cast<std::uint32_t>(d));
  for (Eigen::Index i = 0; i < t.size(); ++i) w.f32(t.data()[i]);
  return w.take();
}

Tensor4f decode_hcub(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  if (bytes.size() < 4 || r.raw(4) != "HCUB") throw FormatError("not an HCUB file (bad magic)");
  auto version = r.u16();
  if (version != kHcubVersion) {
    throw VersionError("HCUB version " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kHcubVersion) + ")");
  }
  Tensor4f::Dims dims;
  for (auto& d : dims) {
    d = r.u32();
    if (d == 0) throw FormatError("HCUB dimension of zero");
  }
  const auto n = dims[0] * dims[1] * dims[2] * dims[3];
  if (r.remaining() != static_cast<std::size_t>(n) * 4) {
    throw CorruptionError("HCUB payload has " + std::to_string(r.remaining()) + " bytes, expected " +
                          std::to_string(n * 4));
  }
  Tensor4f::Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = r.f32();
  return Tensor4f(dims, std::move(v));
}

void write_hcub(const std::filesystem::path& path, const Tensor4f& t) { io::write_file(path, encode_hcub(t)); }

Tensor4f read_hcub(const std::filesystem::path& path) { return decode_hcub(io::read_file(path)); }

}  // namespace hurricast
