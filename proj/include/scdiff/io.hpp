#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "scdiff/tensor.hpp"

namespace scdiff {

using Json = nlohmann::json;

// Binary container: "SCDF" magic, u32 format version, u64 header length,
// UTF-8 JSON header, then the named tensors as raw little-endian float64 in
// header order. The header's "tensors" array records name/shape/offset.
struct Container {
  Json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
  bool has(const std::string& name) const;
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

uint64_t fnv1a64(const std::string& s);
std::string hash_hex(const std::string& s);

// Config hash + seed + toolkit version, stamped on every output file.
struct RunManifest {
  std::string config_hash;
  uint64_t seed = 0;
  std::string version;

  Json to_json() const;
  // "# config_hash=... seed=... version=..." comment block for text outputs
  std::string comment_block(const std::string& prefix = "# ") const;
};

RunManifest make_manifest(const std::string& canonical_config, uint64_t seed);

std::string format_double(double v);  // canonical %.12g

// Writes manifest comments, a header line, then rows. Refuses to overwrite.
void write_csv(const std::string& path, const RunManifest& manifest,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

void write_text_file(const std::string& path, const std::string& content,
                     bool allow_overwrite = false);
std::string read_text_file(const std::string& path);

}  // namespace scdiff
