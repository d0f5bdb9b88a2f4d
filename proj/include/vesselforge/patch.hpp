#pragma once

#include <algorithm>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vesselforge/error.hpp"
#include "vesselforge/raster.hpp"
#include "vesselforge/tensor.hpp"

namespace vf {

/// Strided test-patch layout. The image is zero-padded bottom/right to the
/// smallest size where (padded - patch) is a multiple of the stride, so
/// rows = (padded_h - patch_h) / stride + 1 exactly.
struct PatchGrid {
  int image_h = 0, image_w = 0;
  int patch_h = 0, patch_w = 0;
  int stride = 1;
  int padded_h = 0, padded_w = 0;
  int rows = 0, cols = 0;

  int count() const { return rows * cols; }
  int top(int row) const { return row * stride; }
  int left(int col) const { return col * stride; }
};

inline PatchGrid make_test_grid(int H, int W, int h, int w, int s) {
  require(s >= 1, Errc::InvalidStride, "stride must be >= 1, got " + std::to_string(s));
  require(h >= 1 && w >= 1 && h <= H && w <= W, Errc::PatchLargerThanImage,
          std::to_string(h) + "x" + std::to_string(w) + " patch does not fit a " + std::to_string(H) + "x" +
              std::to_string(W) + " image");
  PatchGrid g{H, W, h, w, s};
  g.padded_h = H + (s - (H - h) % s) % s;
  g.padded_w = W + (s - (W - w) % s) % s;
  g.rows = (g.padded_h - h) / s + 1;
  g.cols = (g.padded_w - w) / s + 1;
  return g;
}

struct PatchOrigin {
  std::uint32_t image = 0;
  std::uint32_t top = 0;
  std::uint32_t left = 0;
  bool operator==(const PatchOrigin&) const = default;
};

/// Patches as normalized intensities [n,1,h,w] with matching binary labels.
/// Labels are kept as bytes (n*h*w); unlabeled sets (test patches) leave
/// them empty.
struct PatchSet {
  Tensor<float> patches;
  std::vector<std::uint8_t> labels;
  std::vector<PatchOrigin> origins;

  std::size_t size() const { return patches.n(); }
  std::size_t patch_h() const { return patches.h(); }
  std::size_t patch_w() const { return patches.w(); }
  bool labeled() const { return !labels.empty(); }

  bool operator==(const PatchSet&) const = default;
};

/// Gathers the listed patches (and labels, if any) into a new set.
inline PatchSet subset(const PatchSet& set, const std::vector<std::size_t>& idx) {
  PatchSet out;
  const std::size_t ps = set.patches.sample_size();
  out.patches = Tensor<float>(idx.size(), 1, set.patch_h(), set.patch_w());
  if (set.labeled()) out.labels.resize(idx.size() * ps);
  out.origins.reserve(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const std::size_t i = idx[k];
    require(i < set.size(), Errc::InvalidArgument, "patch index out of range");
    std::copy_n(set.patches.sample(i), ps, out.patches.sample(k));
    if (set.labeled()) std::copy_n(set.labels.begin() + i * ps, ps, out.labels.begin() + k * ps);
    out.origins.push_back(set.origins[i]);
  }
  return out;
}

inline PatchSet concatenate(const std::vector<PatchSet>& parts) {
  std::size_t n = 0, h = 0, w = 0;
  for (const auto& p : parts) {
    if (p.size() == 0) continue;
    require(h == 0 || (p.patch_h() == h && p.patch_w() == w), Errc::DimensionMismatch,
            "cannot concatenate patch sets of different sizes");
    h = p.patch_h();
    w = p.patch_w();
    n += p.size();
  }
  PatchSet out;
  out.patches = Tensor<float>(n, 1, h, w);
  std::size_t at = 0;
  for (const auto& p : parts) {
    if (p.size() == 0) continue;
    std::copy_n(p.patches.data(), p.patches.size(), out.patches.data() + at);
    at += p.patches.size();
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    out.origins.insert(out.origins.end(), p.origins.begin(), p.origins.end());
  }
  require(out.labels.empty() || out.labels.size() == out.patches.size(), Errc::DimensionMismatch,
          "cannot mix labeled and unlabeled patch sets");
  return out;
}

/// Draws `n` patches (with replacement) whose centre pixel lies in the FOV
/// and whose extent lies inside the image. The centre of a patch at
/// (top, left) is (top + size/2, left + size/2).
inline PatchSet sample_train_patches(const Raster& image, const FovMask& mask, const FovMask& gt, std::size_t n,
                                     int size, std::uint64_t seed, std::uint32_t image_id = 0) {
  require_gray(image, "sample_train_patches");
  require(mask.width == image.width && mask.height == image.height && gt.width == image.width &&
              gt.height == image.height,
          Errc::DimensionMismatch, "image, mask and ground truth sizes differ");
  require(size >= 1 && size <= std::min(image.width, image.height), Errc::PatchLargerThanImage,
          "patch size " + std::to_string(size) + " does not fit the image");

  std::vector<std::pair<int, int>> valid;
  for (int top = 0; top + size <= image.height; ++top)
    for (int left = 0; left + size <= image.width; ++left)
      if (mask.at(top + size / 2, left + size / 2)) valid.emplace_back(top, left);
  require(!valid.empty(), Errc::EmptyFov, "no patch centre lies inside the field of view");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
  PatchSet set;
  set.origins.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto [top, left] = valid[pick(rng)];
    set.origins.push_back({image_id, static_cast<std::uint32_t>(top), static_cast<std::uint32_t>(left)});
  }

  const std::size_t ps = static_cast<std::size_t>(size) * size;
  set.patches = Tensor<float>(n, 1, size, size);
  set.labels.resize(n * ps);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& o = set.origins[k];
    float* dst = set.patches.sample(k);
    std::uint8_t* lab = set.labels.data() + k * ps;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const int sy = static_cast<int>(o.top) + y, sx = static_cast<int>(o.left) + x;
        dst[y * size + x] = static_cast<float>(image.at(sy, sx)) / 255.0f;
        lab[y * size + x] = gt.at(sy, sx);
      }
  }
  return set;
}

/// Cuts every grid window row-major by (row, col) from the zero-padded image.
inline PatchSet extract_test_patches(const Raster& image, const PatchGrid& grid, std::uint32_t image_id = 0) {
  require_gray(image, "extract_test_patches");
  require(image.height == grid.image_h && image.width == grid.image_w, Errc::DimensionMismatch,
          "grid was built for a different image size");
  const int h = grid.patch_h, w = grid.patch_w;
  PatchSet set;
  set.patches = Tensor<float>(grid.count(), 1, h, w);
  set.origins.reserve(grid.count());
  std::size_t k = 0;
  for (int r = 0; r < grid.rows; ++r)
    for (int c = 0; c < grid.cols; ++c, ++k) {
      const int top = grid.top(r), left = grid.left(c);
      set.origins.push_back({image_id, static_cast<std::uint32_t>(top), static_cast<std::uint32_t>(left)});
      float* dst = set.patches.sample(k);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int sy = top + y, sx = left + x;
          dst[y * w + x] =
              (sy < image.height && sx < image.width) ? static_cast<float>(image.at(sy, sx)) / 255.0f : 0.0f;
        }
    }
  return set;
}

/// Per-pixel probability map, row-major.
struct ProbMap {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  float at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

/// Averages overlapping patch predictions. Accumulation runs in patch order
/// in double precision, then the padded map is cropped to the image.
inline ProbMap stitch(const Tensor<float>& probs, const PatchGrid& grid) {
  require(probs.n() == static_cast<std::size_t>(grid.count()) && probs.c() == 1 &&
              probs.h() == static_cast<std::size_t>(grid.patch_h) &&
              probs.w() == static_cast<std::size_t>(grid.patch_w),
          Errc::DimensionMismatch,
          "expected " + std::to_string(grid.count()) + " patches, got " + shape_str(probs.shape()));
  const std::size_t PW = grid.padded_w;
  std::vector<double> sum(static_cast<std::size_t>(grid.padded_h) * PW, 0.0);
  std::vector<std::uint32_t> count(sum.size(), 0);
  std::size_t k = 0;
  for (int r = 0; r < grid.rows; ++r)
    for (int c = 0; c < grid.cols; ++c, ++k) {
      const float* src = probs.sample(k);
      for (int y = 0; y < grid.patch_h; ++y)
        for (int x = 0; x < grid.patch_w; ++x) {
          const std::size_t i = static_cast<std::size_t>(grid.top(r) + y) * PW + grid.left(c) + x;
          sum[i] += src[y * grid.patch_w + x];
          ++count[i];
        }
    }
  ProbMap out{grid.image_w, grid.image_h, std::vector<float>(static_cast<std::size_t>(grid.image_w) * grid.image_h)};
  for (int y = 0; y < grid.image_h; ++y)
    for (int x = 0; x < grid.image_w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * PW + x;
      if (count[i] == 0) fail(Errc::InvalidArgument, "internal: uncovered pixel while stitching");
      out.data[static_cast<std::size_t>(y) * grid.image_w + x] = static_cast<float>(sum[i] / count[i]);
    }
  return out;
}

// VFPS patch files:
//   "VFPS" | version u32 | n u32 | h u32 | w u32 |
//   patches f32 x n*h*w | labels u8 x n*h*w | origins (image, top, left) u32 x 3n
inline constexpr std::uint32_t kPatchFileVersion = 1;

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& in, const std::string& src) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) fail(Errc::ParseError, src + ": truncated header");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

static_assert(std::endian::native == std::endian::little, "patch payloads are streamed as native f32");

}  // namespace detail

/// Streams the set to disk (temp file + rename); patch files can be
/// gigabytes, so nothing is staged in memory.
inline void save_patches(const std::filesystem::path& path, const PatchSet& set) {
  require(set.labeled() && set.labels.size() == set.patches.size(), Errc::InvalidArgument,
          "only labeled patch sets can be persisted");
  require(set.origins.size() == set.size(), Errc::DimensionMismatch, "origin count differs from patch count");
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoFailure, "cannot write " + tmp.string());
    out.write("VFPS", 4);
    detail::put_u32(out, kPatchFileVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(set.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(set.patch_h()));
    detail::put_u32(out, static_cast<std::uint32_t>(set.patch_w()));
    out.write(reinterpret_cast<const char*>(set.patches.data()),
              static_cast<std::streamsize>(set.patches.size() * sizeof(float)));
    out.write(reinterpret_cast<const char*>(set.labels.data()), static_cast<std::streamsize>(set.labels.size()));
    for (const auto& o : set.origins) {
      detail::put_u32(out, o.image);
      detail::put_u32(out, o.top);
      detail::put_u32(out, o.left);
    }
    if (!out) fail(Errc::IoFailure, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(Errc::IoFailure, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline PatchSet load_patches(const std::filesystem::path& path) {
  const auto src = path.string();
  if (!std::filesystem::exists(path)) fail(Errc::MissingFiles, "missing file " + src);
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoFailure, "cannot open " + src);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "VFPS") fail(Errc::ParseError, src + ": not a VFPS patch file");
  require(detail::get_u32(in, src) == kPatchFileVersion, Errc::ParseError, src + ": unsupported patch file version");
  const std::size_t n = detail::get_u32(in, src), h = detail::get_u32(in, src), w = detail::get_u32(in, src);
  const std::size_t total = n * h * w;
  const auto expected = 20 + total * (sizeof(float) + 1) + n * 12;
  require(std::filesystem::file_size(path) == expected, Errc::ParseError,
          src + ": file size does not match its header");
  PatchSet set;
  set.patches = Tensor<float>(n, 1, h, w);
  in.read(reinterpret_cast<char*>(set.patches.data()), static_cast<std::streamsize>(total * sizeof(float)));
  set.labels.resize(total);
  in.read(reinterpret_cast<char*>(set.labels.data()), static_cast<std::streamsize>(total));
  set.origins.resize(n);
  for (auto& o : set.origins) {
    o.image = detail::get_u32(in, src);
    o.top = detail::get_u32(in, src);
    o.left = detail::get_u32(in, src);
  }
  if (!in) fail(Errc::ParseError, src + ": truncated payload");
  for (auto l : set.labels) require(l <= 1, Errc::ParseError, src + ": non-binary label");
  return set;
}

}  // namespace vf
