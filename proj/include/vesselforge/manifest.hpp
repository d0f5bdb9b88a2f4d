#pragma once

// Stage manifests: which config and which input files produced which
// outputs. A stage refuses upstream artifacts whose manifest disagrees with
// the current config or whose bytes changed since they were written.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "vesselforge/binary_io.hpp"
#include "vesselforge/error.hpp"

namespace vf {

inline std::string to_hex(const unsigned char* p, std::size_t n) {
  static const char* digits = "0123456789abcdef";
  std::string s(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    s[2 * i] = digits[p[i] >> 4];
    s[2 * i + 1] = digits[p[i] & 15];
  }
  return s;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) fail(Errc::IoFailure, "sha256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* p, std::size_t n) {
    if (EVP_DigestUpdate(ctx_, p, n) != 1) fail(Errc::IoFailure, "sha256 update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, md, &len) != 1) fail(Errc::IoFailure, "sha256 final failed");
    return to_hex(md, len);
  }

 private:
  EVP_MD_CTX* ctx_;
};

inline std::string sha256_text(const std::string& s) {
  Sha256 h;
  h.update(s.data(), s.size());
  return h.hex();
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::MissingFiles, "missing file " + path.string());
  Sha256 h;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

/// Hash of a config fragment; nlohmann's object keys are sorted, so the dump
/// is canonical.
inline std::string config_hash(const nlohmann::json& j) { return sha256_text(j.dump()); }

struct Manifest {
  std::string stage;
  std::string config_hash;
  nlohmann::json config;
  /// Paths relative to the manifest's directory.
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
};

inline std::filesystem::path manifest_path(const std::filesystem::path& dir, const std::string& stage) {
  return dir / (stage + ".manifest.json");
}

inline std::string manifest_key(const std::filesystem::path& file, const std::filesystem::path& base) {
  return std::filesystem::proximate(file, base).generic_string();
}

inline void write_manifest(const std::filesystem::path& dir, const Manifest& m) {
  nlohmann::json j{{"stage", m.stage}, {"config_hash", m.config_hash}, {"config", m.config},
                   {"inputs", m.inputs}, {"outputs", m.outputs}};
  bin::write_text_atomic(manifest_path(dir, m.stage), j.dump(2) + "\n");
}

inline Manifest read_manifest(const std::filesystem::path& dir, const std::string& stage) {
  const auto path = manifest_path(dir, stage);
  std::ifstream in(path);
  if (!in) fail(Errc::StaleArtifact, "no manifest for stage '" + stage + "' (" + path.string() + "); rerun " + stage);
  try {
    const auto j = nlohmann::json::parse(in);
    Manifest m;
    m.stage = j.at("stage").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.config = j.at("config");
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::StaleArtifact, path.string() + ": unreadable manifest: " + e.what());
  }
}

/// Checks that `file` (which must exist) was produced by `stage` under a
/// config hashing to `expected_hash` and is byte-identical to what the stage
/// recorded. Returns the file's hash.
inline std::string verify_artifact(const std::filesystem::path& dir, const std::string& stage,
                                   const std::filesystem::path& file, const std::string& expected_hash) {
  if (!std::filesystem::exists(file))
    fail(Errc::MissingFiles, "missing file " + file.string() + " (run '" + stage + "' first)");
  const auto m = read_manifest(dir, stage);
  require(m.config_hash == expected_hash, Errc::StaleArtifact,
          file.string() + " was produced by '" + stage + "' with a different configuration; rerun " + stage);
  const auto key = manifest_key(file, dir);
  const auto it = m.outputs.find(key);
  require(it != m.outputs.end(), Errc::StaleArtifact, file.string() + " is not listed in the " + stage + " manifest");
  const auto actual = sha256_file(file);
  require(it->second == actual, Errc::StaleArtifact, file.string() + " changed after '" + stage + "' wrote it");
  return actual;
}

}  // namespace vf
