#pragma once

// DRIVE-style layout: <root>/<split>/{images,mask,1st_manual}/, files
// paired by the leading integer in their names (21_training.png,
// 21_training_mask.png, 21_manual1.png -> id 21).

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vesselforge/error.hpp"

namespace vf {

struct DatasetEntry {
  int id = 0;
  std::filesystem::path image;
  std::filesystem::path mask;
  std::filesystem::path manual;
};

inline std::optional<int> leading_number(const std::string& name) {
  std::size_t i = 0;
  while (i < name.size() && std::isdigit(static_cast<unsigned char>(name[i]))) ++i;
  if (i == 0 || i > 9) return std::nullopt;
  return std::stoi(name.substr(0, i));
}

inline bool is_image_file(const std::filesystem::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ".png" || e == ".pgm" || e == ".ppm";
}

inline std::map<int, std::filesystem::path> index_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(Errc::MissingFiles, "missing directory " + dir.string());
  std::map<int, std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (!e.is_regular_file() || !is_image_file(e.path())) continue;
    const auto id = leading_number(e.path().filename().string());
    if (!id) continue;
    require(!out.contains(*id), Errc::ConfigError,
            "two files with id " + std::to_string(*id) + " in " + dir.string());
    out[*id] = e.path();
  }
  return out;
}

/// Lists every image in `split_dir/images` with its mask and manual
/// annotation. With `need_manual` false the 1st_manual directory may be
/// absent. Ordered by id.
inline std::vector<DatasetEntry> scan_split(const std::filesystem::path& split_dir, bool need_manual = true) {
  const auto images = index_dir(split_dir / "images");
  const auto masks = index_dir(split_dir / "mask");
  std::map<int, std::filesystem::path> manual;
  if (need_manual || std::filesystem::is_directory(split_dir / "1st_manual")) manual = index_dir(split_dir / "1st_manual");
  require(!images.empty(), Errc::MissingFiles, "no images under " + (split_dir / "images").string());
  std::vector<DatasetEntry> out;
  for (const auto& [id, path] : images) {
    DatasetEntry e{id, path, {}, {}};
    const auto m = masks.find(id);
    if (m == masks.end())
      fail(Errc::MissingFiles, "missing mask file for image " + path.filename().string() + " in " +
                                   (split_dir / "mask").string());
    e.mask = m->second;
    const auto g = manual.find(id);
    if (g != manual.end()) e.manual = g->second;
    else if (need_manual)
      fail(Errc::MissingFiles, "missing manual annotation for image " + path.filename().string() + " in " +
                                   (split_dir / "1st_manual").string());
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace vf
