#include <doctest.h>
#include <json.hpp>

#include "opbil/dataset_io.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>

using namespace opbil;
namespace fs = std::filesystem;

namespace {

struct ScratchDir {
  fs::path path;
  explicit ScratchDir(const std::string& name)
      : path(fs::temp_directory_path() / ("opbil_test_" + name)) {
    fs::remove_all(path);
  }
  ~ScratchDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

FieldConfig small_config() {
  FieldConfig c;
  c.seed = 3;
  c.session_seconds = 20.0;
  return c;
}

}  // namespace

TEST_CASE("record size") {
  CHECK(record_bytes(32, 256) == 9 + 4 * (32 * 32 + 256));
  CHECK(record_bytes(0, 0) == 9);
}

TEST_CASE("write then read is byte-exact") {
  ScratchDir dir("roundtrip");
  const FieldConfig c = small_config();
  const SimulatedDataset d = simulate_dataset(c, 60, 20);
  write_dataset(dir.path, d, c);

  CHECK(fs::file_size(dir.path / "train.bin") == 60 * record_bytes(32, 256));
  const LoadedDataset back = read_dataset(dir.path);
  CHECK(back.data.train == d.train);
  CHECK(back.data.test == d.test);
  CHECK(back.data.train_sensors == d.train_sensors);
  CHECK(back.data.test_cameras == d.test_cameras);
  CHECK(back.visual_size == 32);
  CHECK(back.seismic_length == 256);
  CHECK(back.config.seed == 3);
  CHECK(back.config.session_seconds == 20.0);
  CHECK(field_config_to_json(back.config) == field_config_to_json(c));

  ScratchDir again("roundtrip_again");
  write_dataset(again.path, back.data, back.config);
  for (const char* f : {"manifest.json", "train.bin", "test.bin"})
    CHECK(slurp(again.path / f) == slurp(dir.path / f));
}

TEST_CASE("empty splits") {
  ScratchDir dir("empty");
  const FieldConfig c = small_config();
  SimulatedDataset d;
  write_dataset(dir.path, d, c);
  const LoadedDataset back = read_dataset(dir.path);
  CHECK(back.data.train.empty());
  CHECK(back.data.test.empty());
  CHECK(fs::file_size(dir.path / "test.bin") == 0);
}

TEST_CASE("corrupt datasets raise typed errors") {
  ScratchDir dir("corrupt");
  const FieldConfig c = small_config();
  write_dataset(dir.path, simulate_dataset(c, 20, 10), c);
  const std::string manifest = slurp(dir.path / "manifest.json");
  const std::string blob = slurp(dir.path / "train.bin");

  SUBCASE("truncated blob") {
    spit(dir.path / "train.bin", blob.substr(0, blob.size() - 7));
    try {
      read_dataset(dir.path);
      FAIL("expected TruncatedBlobError");
    } catch (const TruncatedBlobError& e) {
      CHECK(std::string(e.what()).find("train.bin") != std::string::npos);
    }
  }
  SUBCASE("malformed manifest") {
    spit(dir.path / "manifest.json", manifest.substr(0, manifest.size() / 2));
    CHECK_THROWS_AS(read_dataset(dir.path), ManifestError);
  }
  SUBCASE("missing field") {
    nlohmann::json m = nlohmann::json::parse(manifest);
    m.erase("counts");
    spit(dir.path / "manifest.json", m.dump());
    CHECK_THROWS_AS(read_dataset(dir.path), ManifestError);
  }
  SUBCASE("inconsistent record size") {
    nlohmann::json m = nlohmann::json::parse(manifest);
    m["record_bytes"] = 12;
    spit(dir.path / "manifest.json", m.dump());
    CHECK_THROWS_AS(read_dataset(dir.path), ManifestError);
  }
  SUBCASE("version mismatch") {
    nlohmann::json m = nlohmann::json::parse(manifest);
    m["format_version"] = kDatasetFormatVersion + 1;
    spit(dir.path / "manifest.json", m.dump());
    CHECK_THROWS_AS(read_dataset(dir.path), VersionMismatchError);
  }
  SUBCASE("missing directory") {
    CHECK_THROWS_AS(read_dataset(dir.path / "nope"), DatasetError);
  }
}
