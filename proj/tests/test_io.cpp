#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "scdiff/io.hpp"
#include "scdiff/rng.hpp"
#include "scdiff/version.hpp"

using namespace scdiff;

namespace {

std::string tmp_path(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("scdiff_io_" + name);
  std::filesystem::remove(p);
  return p.string();
}

}  // namespace

TEST_CASE("container roundtrip is bit exact") {
  Rng rng(11);
  Container c;
  c.meta = Json{{"kind", "test"}, {"alpha", 0.25}, {"tags", Json::array({"a", "b"})}};
  c.tensors.emplace_back("vec", rng.normal_tensor({5}));
  c.tensors.emplace_back("mat", rng.normal_tensor({3, 4}));
  c.tensors.emplace_back("scalar", Tensor::scalar(-1.2345678901234e-7));
  c.tensors.emplace_back("cube", rng.normal_tensor({2, 3, 2}));

  std::string path = tmp_path("roundtrip.scdf");
  write_container(path, c);
  Container r = read_container(path);

  CHECK(r.meta.at("kind") == "test");
  CHECK(r.meta.at("alpha").get<double>() == 0.25);
  CHECK(r.meta.at("format_version").get<int>() == 1);
  REQUIRE(r.tensors.size() == 4);
  for (std::size_t i = 0; i < 4; i++) {
    CHECK(r.tensors[i].first == c.tensors[i].first);
    CHECK(r.tensors[i].second.shape == c.tensors[i].second.shape);
    CHECK(r.tensors[i].second.data == c.tensors[i].second.data);
  }
  CHECK(r.has("mat"));
  CHECK(!r.has("missing"));
  CHECK_THROWS_WITH_AS(r.tensor("missing"),
                       "container: no tensor named missing", std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("container rejects foreign files") {
  std::string path = tmp_path("bogus.bin");
  write_text_file(path, "definitely not a container, padded to be long enough");
  CHECK_THROWS_AS(read_container(path), std::runtime_error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_container(tmp_path("never_written.scdf")),
                  std::runtime_error);
}

TEST_CASE("fnv1a64 known values") {
  CHECK(fnv1a64("") == 14695981039346656037ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(hash_hex("") == "cbf29ce484222325");
  CHECK(hash_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("manifest stamps config hash, seed, and version") {
  RunManifest m = make_manifest("lr=0.1\nseed=4\n", 4);
  CHECK(m.config_hash == hash_hex("lr=0.1\nseed=4\n"));
  CHECK(m.seed == 4);
  CHECK(m.version == std::string(kVersion));
  std::string block = m.comment_block();
  CHECK(block.substr(0, 2) == "# ");
  CHECK(block.find("config_hash=" + m.config_hash) != std::string::npos);
  CHECK(block.find("seed=4") != std::string::npos);
  CHECK(block.back() == '\n');
  Json j = m.to_json();
  CHECK(j.at("seed").get<uint64_t>() == 4);
}

TEST_CASE("format_double is canonical") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
  CHECK(format_double(-1e-9) == "-1e-09");
  CHECK(format_double(1234567.25) == "1234567.25");
}

TEST_CASE("csv writing is deterministic and append only") {
  RunManifest m = make_manifest("cfg", 9);
  std::string path = tmp_path("out.csv");
  write_csv(path, m, {"x", "y"}, {{"1", "2"}, {"3", "4"}});
  std::string body = read_text_file(path);
  CHECK(body == m.comment_block() + "x,y\n1,2\n3,4\n");
  CHECK_THROWS_AS(write_csv(path, m, {"x"}, {}), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("text file writing refuses silent overwrite") {
  std::string path = tmp_path("note.txt");
  write_text_file(path, "one");
  CHECK_THROWS_AS(write_text_file(path, "two"), std::runtime_error);
  write_text_file(path, "two", true);
  CHECK(read_text_file(path) == "two");
  std::filesystem::remove(path);
}
