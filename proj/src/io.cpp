#include "scdiff/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "scdiff/version.hpp"

namespace scdiff {

namespace {
constexpr char kMagic[4] = {'S', 'C', 'D', 'F'};
constexpr uint32_t kFormatVersion = 1;
}  // namespace

const Tensor& Container::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw std::runtime_error("container: no tensor named " + name);
}

bool Container::has(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

void write_container(const std::string& path, const Container& c) {
  Json meta = c.meta;
  Json dir = Json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : c.tensors) {
    Json e;
    e["name"] = name;
    e["shape"] = t.shape;
    e["offset"] = offset;
    e["count"] = t.numel();
    dir.push_back(e);
    offset += t.numel();
  }
  meta["tensors"] = dir;
  meta["format_version"] = kFormatVersion;
  std::string header = meta.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kMagic, 4);
  uint32_t fv = kFormatVersion;
  uint64_t hl = header.size();
  out.write(reinterpret_cast<const char*>(&fv), sizeof fv);
  out.write(reinterpret_cast<const char*>(&hl), sizeof hl);
  out.write(header.data(), std::streamsize(header.size()));
  for (const auto& [name, t] : c.tensors)
    out.write(reinterpret_cast<const char*>(t.data.data()),
              std::streamsize(t.numel() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  uint32_t fv = 0;
  uint64_t hl = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&fv), sizeof fv);
  in.read(reinterpret_cast<char*>(&hl), sizeof hl);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a container file: " + path);
  if (fv != kFormatVersion)
    throw std::runtime_error("unsupported container version in " + path);
  std::string header(hl, '\0');
  in.read(header.data(), std::streamsize(hl));
  Container c;
  c.meta = Json::parse(header);
  for (const auto& e : c.meta.at("tensors")) {
    std::vector<std::size_t> shape = e.at("shape").get<std::vector<std::size_t>>();
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            std::streamsize(t.numel() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated container: " + path);
    c.tensors.emplace_back(e.at("name").get<std::string>(), std::move(t));
  }
  return c;
}

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(const std::string& s) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(s)));
  return buf;
}

Json RunManifest::to_json() const {
  Json j;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["version"] = version;
  return j;
}

std::string RunManifest::comment_block(const std::string& prefix) const {
  return prefix + "config_hash=" + config_hash + " seed=" + std::to_string(seed) +
         " version=" + version + "\n";
}

RunManifest make_manifest(const std::string& canonical_config, uint64_t seed) {
  RunManifest m;
  m.config_hash = hash_hex(canonical_config);
  m.seed = seed;
  m.version = kVersion;
  return m;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void write_csv(const std::string& path, const RunManifest& manifest,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  if (std::filesystem::exists(path))
    throw std::runtime_error("refusing to overwrite existing output: " + path);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << manifest.comment_block();
  for (std::size_t i = 0; i < header.size(); i++)
    out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); i++)
      out << (i ? "," : "") << row[i];
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_text_file(const std::string& path, const std::string& content,
                     bool allow_overwrite) {
  if (!allow_overwrite && std::filesystem::exists(path))
    throw std::runtime_error("refusing to overwrite existing output: " + path);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string s((std::istreambuf_iterator<char>(in)),
                std::istreambuf_iterator<char>());
  return s;
}

}  // namespace scdiff
