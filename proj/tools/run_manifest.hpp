#pragma once

// Run manifests: what a command was asked to do, what it read, and what it
// wrote, with content hashes so a run can be replayed and compared.

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "autosamp/numerics.hpp"
#include "nlohmann/json.hpp"

namespace autosamp::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "autosamp 0.1.0";
inline constexpr const char* kManifestName = "manifest.json";

/// Hex SHA-1 of a file's bytes.
inline std::string sha1_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string() + " for hashing");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw IoError("sha1: digest init failed");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char b[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(b, sizeof b, "%02x", md[i]);
    hex += b;
  }
  return hex;
}

/// Regular files under `root`, relative and sorted.
inline std::vector<fs::path> list_files(const fs::path& root, const std::vector<std::string>& exclude = {}) {
  std::vector<fs::path> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root);
    if (std::find(exclude.begin(), exclude.end(), rel.generic_string()) != exclude.end()) continue;
    out.push_back(rel);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// {relative path: sha1} for every file under `root`.
inline ojson hash_tree(const fs::path& root, const std::vector<std::string>& exclude = {}) {
  ojson j = ojson::object();
  for (const auto& rel : list_files(root, exclude)) j[rel.generic_string()] = sha1_file(root / rel);
  return j;
}

/// Hashes of one input: a file, a directory, or a file plus sidecars.
inline ojson hash_input(const fs::path& p) {
  ojson j = ojson::object();
  if (fs::is_directory(p)) {
    j["path"] = fs::absolute(p).lexically_normal().string();
    j["files"] = hash_tree(p);
    return j;
  }
  j["path"] = fs::absolute(p).lexically_normal().string();
  ojson files = ojson::object();
  if (fs::exists(p)) files[p.filename().string()] = sha1_file(p);
  // Sidecars that travel with pattern, model and container files.
  const fs::path stem = p.parent_path() / p.stem();
  for (const char* ext : {".json", ".csv", ".hdr", ".bin"}) {
    const fs::path s = fs::path(stem.string() + ext);
    if (s != p && fs::exists(s)) files[s.filename().string()] = sha1_file(s);
  }
  for (const char* suffix : {"_theta.hdr", "_theta.bin"}) {
    const fs::path s = fs::path(stem.string() + suffix);
    if (fs::exists(s)) files[s.filename().string()] = sha1_file(s);
  }
  if (files.empty()) throw IoError("input not found: " + p.string());
  j["files"] = files;
  return j;
}

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string command;
  ojson config;   // fully resolved; sufficient to rerun
  ojson seeds;    // every seed the run consumed, by role
  ojson inputs = ojson::array();
  ojson outputs = ojson::object();
  std::string tool_version = kToolVersion;
  std::string started;
  double wall_seconds = 0.0;
  int threads = 0;
  int exit_code = 0;

  ojson to_json() const {
    return {{"format", "autosamp-run-1"}, {"tool_version", tool_version}, {"command", command},   {"config", config},
            {"seeds", seeds},             {"inputs", inputs},             {"outputs", outputs}, {"exit_code", exit_code},
            {"timings", {{"started", started}, {"wall_seconds", wall_seconds}}}, {"threads", threads}};
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest m;
    try {
      if (j.at("format") != "autosamp-run-1") throw IoError("manifest: unsupported format");
      m.command = j.at("command").get<std::string>();
      m.config = j.at("config");
      m.seeds = j.value("seeds", nlohmann::json::object());
      m.inputs = j.at("inputs");
      m.outputs = j.at("outputs");
      m.tool_version = j.value("tool_version", "");
      m.exit_code = j.value("exit_code", 0);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("malformed run manifest: ") + e.what());
    }
    return m;
  }

  void write(const fs::path& dir) const {
    std::ofstream out(dir / kManifestName);
    if (!out) throw IoError("cannot write manifest in " + dir.string());
    out << to_json().dump(2) << '\n';
  }
};

inline RunManifest read_manifest(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed run manifest: " + std::string(e.what()));
  }
  return RunManifest::from_json(j);
}

}  // namespace autosamp::cli
