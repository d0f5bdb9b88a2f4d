#pragma once

// SUNW weight files:
//   "SUNW" | version u32 | entry count u32 |
//   per entry: name length u16, UTF-8 name, ndim u8, dims u32 x ndim, f32 payload
// All integers and floats little-endian. Trailing unit dimensions of a
// tensor are not written (a [64,1,1,1] bias is stored as [64]) and are
// restored on read.

#include <filesystem>
#include <string>

#include "vesselforge/binary_io.hpp"
#include "vesselforge/params.hpp"
#include "vesselforge/unet.hpp"

namespace vf {

inline constexpr std::uint32_t kWeightsVersion = 1;

inline std::vector<std::uint8_t> encode_tensors(const ParamSet<float>& entries) {
  bin::Writer w;
  w.bytes("SUNW", 4);
  w.u32(kWeightsVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    require(e.name.size() < 65536, Errc::InvalidArgument, "tensor name too long");
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    const auto& s = e.value.shape();
    int ndim = 4;
    while (ndim > 1 && s[ndim - 1] == 1) --ndim;
    w.u8(static_cast<std::uint8_t>(ndim));
    for (int i = 0; i < ndim; ++i) w.u32(static_cast<std::uint32_t>(s[i]));
    w.f32s(e.value.data(), e.value.size());
  }
  return w.data();
}

inline ParamSet<float> decode_tensors(bin::Reader r) {
  if (r.str(4) != "SUNW") fail(Errc::ParseError, r.source() + ": not a SUNW weight file");
  const auto version = r.u32();
  require(version == kWeightsVersion, Errc::ParseError,
          r.source() + ": unsupported weight file version " + std::to_string(version));
  const auto count = r.u32();
  ParamSet<float> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.u16();
    auto name = r.str(len);
    const auto ndim = r.u8();
    require(ndim >= 1 && ndim <= 4, Errc::ParseError, r.source() + ": bad rank for " + name);
    Shape s{1, 1, 1, 1};
    std::size_t elements = 1;
    for (int d = 0; d < ndim; ++d) {
      s[d] = r.u32();
      require(s[d] > 0 && elements <= (std::size_t{1} << 40) / s[d], Errc::ParseError,
              r.source() + ": implausible dims for " + name);
      elements *= s[d];
    }
    r.need(elements * sizeof(float));
    Tensor<float> t(s);
    r.f32s(t.data(), t.size());
    out.add(std::move(name), std::move(t));
  }
  require(r.done(), Errc::ParseError, r.source() + ": trailing bytes after last entry");
  return out;
}

inline void save_tensors(const std::filesystem::path& path, const ParamSet<float>& entries) {
  bin::write_file_atomic(path, encode_tensors(entries));
}

inline ParamSet<float> load_tensors(const std::filesystem::path& path) {
  return decode_tensors(bin::Reader(bin::read_file(path), path.string()));
}

/// Splits a weight file into model parameters (validated against the spec
/// they imply) and everything else (optimizer state, run metadata).
struct LoadedModel {
  ModelSpec spec;
  ParamSet<float> params;
  ParamSet<float> extras;
};

inline LoadedModel load_model(const std::filesystem::path& path) {
  auto all = load_tensors(path);
  LoadedModel m;
  for (auto& e : all) {
    const bool extra = e.name.starts_with("adam.") || e.name.starts_with("meta.");
    (extra ? m.extras : m.params).add(e.name, std::move(e.value));
  }
  m.spec = infer_spec(m.params);
  return m;
}

}  // namespace vf
