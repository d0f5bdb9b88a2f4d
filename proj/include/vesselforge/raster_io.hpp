#pragma once

// PNG (via libpng) and binary PGM/PPM reading and writing. Samples are
// passed through untouched: no gamma, no colour management, no expansion
// of 16-bit data (that is rejected).

#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "vesselforge/error.hpp"
#include "vesselforge/raster.hpp"

namespace vf {

namespace detail {

inline std::string lower_ext(const std::filesystem::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

inline std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoFailure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Netpbm header token reader: skips whitespace and '#' comments.
class PnmHeader {
 public:
  explicit PnmHeader(const std::vector<std::uint8_t>& bytes) : b_(bytes) {}

  std::string token() {
    skip();
    std::string t;
    while (pos_ < b_.size() && !std::isspace(b_[pos_])) t.push_back(static_cast<char>(b_[pos_++]));
    return t;
  }
  int number(const std::string& path) {
    auto t = token();
    if (t.empty() || !std::all_of(t.begin(), t.end(), ::isdigit))
      fail(Errc::CorruptImage, "bad PNM header field in " + path);
    return std::stoi(t);
  }
  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t payload_offset() const { return pos_ + 1; }

 private:
  void skip() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

inline Raster load_pnm(const std::filesystem::path& path) {
  auto bytes = read_all(path);
  const auto name = path.string();
  if (bytes.size() < 2 || bytes[0] != 'P') fail(Errc::UnsupportedFormat, name + " is not a PNM file");
  int channels = 0;
  if (bytes[1] == '5') channels = 1;
  else if (bytes[1] == '6') channels = 3;
  else fail(Errc::UnsupportedFormat, name + ": only binary P5/P6 are supported");

  PnmHeader hdr(bytes);
  hdr.token();  // magic
  const int w = hdr.number(name);
  const int h = hdr.number(name);
  const int maxval = hdr.number(name);
  if (maxval > 255) fail(Errc::UnsupportedFormat, name + ": 16-bit PNM is not supported");
  if (maxval < 1 || w < 1 || h < 1) fail(Errc::CorruptImage, name + ": invalid header values");

  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  const std::size_t off = hdr.payload_offset();
  if (off > bytes.size() || bytes.size() - off < need)
    fail(Errc::CorruptImage, name + ": payload shorter than header dimensions");
  Raster r(w, h, channels);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(off), need, r.data.begin());
  return r;
}

inline void save_pnm(const Raster& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoFailure, "cannot write " + path.string());
  out << (r.channels == 1 ? "P5" : "P6") << '\n' << r.width << ' ' << r.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(r.data.data()), static_cast<std::streamsize>(r.data.size()));
  if (!out) fail(Errc::IoFailure, "short write to " + path.string());
}

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline Raster load_png(const std::filesystem::path& path) {
  const auto name = path.string();
  FilePtr fp(std::fopen(name.c_str(), "rb"));
  if (!fp) fail(Errc::IoFailure, "cannot open " + name);
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
    fail(Errc::UnsupportedFormat, name + " is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(Errc::IoFailure, "libpng allocation failed");
  }
  // Everything touched after setjmp lives behind a pointer that is set before it.
  struct Ctx {
    Raster r;
    std::vector<png_bytep> rows;
    std::string error;
    Errc code = Errc::CorruptImage;
  };
  const auto ctx = std::make_unique<Ctx>();
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ctx->code, name + (ctx->error.empty() ? ": corrupt PNG data" : ": " + ctx->error));
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const auto w = png_get_image_width(png, info);
  const auto h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (depth == 16) {
    ctx->error = "16-bit PNG is not supported";
    ctx->code = Errc::UnsupportedFormat;
    png_longjmp(png, 1);
  }
  int channels = 0;
  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
    channels = 3;
  } else if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    channels = 1;
  } else {
    channels = 3;
  }
  // Palette transparency would otherwise expand into an alpha channel.
  if ((color & PNG_COLOR_MASK_ALPHA) || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  if (png_get_rowbytes(png, info) != static_cast<png_size_t>(w) * channels) {
    ctx->error = "unexpected row layout";
    png_longjmp(png, 1);
  }

  ctx->r = Raster(static_cast<int>(w), static_cast<int>(h), channels);
  ctx->rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y)
    ctx->rows[y] = ctx->r.data.data() + static_cast<std::size_t>(y) * w * channels;
  png_read_image(png, ctx->rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return std::move(ctx->r);
}

inline void save_png(const Raster& r, const std::filesystem::path& path) {
  const auto name = path.string();
  FilePtr fp(std::fopen(name.c_str(), "wb"));
  if (!fp) fail(Errc::IoFailure, "cannot write " + name);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(Errc::IoFailure, "libpng allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(Errc::IoFailure, "failed writing " + name);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(r.width), static_cast<png_uint_32>(r.height), 8,
               r.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < r.height; ++y)
    png_write_row(png, const_cast<png_bytep>(r.data.data() + static_cast<std::size_t>(y) * r.width * r.channels));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

/// Loads a PNG, binary PGM (P5) or binary PPM (P6). Format is chosen by
/// extension, falling back to content sniffing for unknown extensions.
inline Raster load_raster(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(Errc::FileNotFound, path.string());
  const auto ext = detail::lower_ext(path);
  if (ext == ".png") return detail::load_png(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return detail::load_pnm(path);

  std::ifstream in(path, std::ios::binary);
  char head[2] = {0, 0};
  in.read(head, 2);
  if (static_cast<unsigned char>(head[0]) == 0x89 && head[1] == 'P') return detail::load_png(path);
  if (head[0] == 'P') return detail::load_pnm(path);
  fail(Errc::UnsupportedFormat, path.string() + ": unsupported image format");
}

/// Writes PNG for `.png`, otherwise PGM/PPM according to the channel count.
inline void save_raster(const Raster& raster, const std::filesystem::path& path) {
  require(raster.channels == 1 || raster.channels == 3, Errc::WrongChannelCount, "cannot save raster");
  require(raster.data.size() == raster.pixel_count() * raster.channels, Errc::DimensionMismatch,
          "raster payload does not match its dimensions");
  if (detail::lower_ext(path) == ".png") detail::save_png(raster, path);
  else detail::save_pnm(raster, path);
}

/// pixel > threshold -> 1. Three-channel images are accepted only when all
/// channels agree.
inline FovMask to_mask(const Raster& r, int threshold = 127) {
  FovMask m(r.width, r.height);
  for (std::size_t i = 0; i < r.pixel_count(); ++i) {
    const auto* px = &r.data[i * r.channels];
    if (r.channels == 3 && (px[0] != px[1] || px[1] != px[2]))
      fail(Errc::WrongChannelCount, "mask image has differing colour channels");
    m.data[i] = px[0] > threshold ? 1 : 0;
  }
  return m;
}

inline FovMask load_mask(const std::filesystem::path& path, int threshold = 127) {
  return to_mask(load_raster(path), threshold);
}

inline Raster mask_to_raster(const FovMask& m) {
  Raster r(m.width, m.height, 1);
  for (std::size_t i = 0; i < m.data.size(); ++i) r.data[i] = m.data[i] ? 255 : 0;
  return r;
}

}  // namespace vf
