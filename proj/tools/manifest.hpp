#pragma once

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "fraudcl/core.hpp"

namespace fraudctl {

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fraudcl::DataError("cannot hash '" + path.string() + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md.data(), &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

/// Config snapshot, artifact hashes, wall-clock timings and library version.
/// Listed paths are relative to the manifest's directory.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::vector<std::filesystem::path> files;
  nlohmann::json timings = nlohmann::json::object();

  void write(const std::filesystem::path& path) const {
    const auto dir = path.parent_path();
    nlohmann::json listed = nlohmann::json::array();
    for (const auto& f : files) {
      listed.push_back({{"path", std::filesystem::relative(f, dir).generic_string()},
                        {"sha256", sha256_file(f)}});
    }
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    nlohmann::json j{{"format_version", 1},
                     {"command", command},
                     {"library_version", fraudcl::kLibraryVersion},
                     {"config", config},
                     {"files", listed},
                     {"timings", timings},
                     {"created_unix_ms",
                      std::chrono::duration_cast<std::chrono::milliseconds>(now).count()}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw fraudcl::DataError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
  }
};

/// True when every file listed in the manifest exists and matches its hash.
inline bool verify_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return false;
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("files")) return false;
  for (const auto& f : j.at("files")) {
    const auto p = path.parent_path() / f.at("path").get<std::string>();
    if (!std::filesystem::exists(p) || sha256_file(p) != f.at("sha256").get<std::string>()) {
      return false;
    }
  }
  return true;
}

}  // namespace fraudctl
