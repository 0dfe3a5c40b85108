#include "opbil/dataset_io.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace opbil {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "dataset IO assumes little-endian");

constexpr std::size_t kSensorOffset = 0;
constexpr std::size_t kCameraOffset = 2;
constexpr std::size_t kLabelOffset = 4;
constexpr std::size_t kDistanceOffset = 5;
constexpr std::size_t kVisualOffset = 9;

Index seismic_length_of(const FieldConfig& c) {
  return Index(std::lround(c.seismic_rate * c.window_seconds));
}

json config_json(const FieldConfig& c) {
  json sensors = json::array();
  for (const auto& p : c.sensor_positions()) sensors.push_back({p.x(), p.y()});
  return {{"field_size", c.field_size},
          {"sensors", sensors},
          {"test_sensors", c.test_sensors},
          {"cameras", c.cameras},
          {"roi_pixels", c.roi_pixels},
          {"pixels_per_meter", c.pixels_per_meter},
          {"seismic_rate", c.seismic_rate},
          {"frame_rate", c.frame_rate},
          {"radius", c.radius},
          {"window_seconds", c.window_seconds},
          {"overlap", c.overlap},
          {"session_seconds", c.session_seconds},
          {"walker_speed", c.walker_speed},
          {"step_rate", c.step_rate},
          {"positive_fraction", c.positive_fraction},
          {"blob_sigma_px", c.blob_sigma_px},
          {"visual_noise", c.visual_noise},
          {"occlusion_rate", c.occlusion_rate},
          {"clutter_rate", c.clutter_rate},
          {"footstep_amplitude", c.footstep_amplitude},
          {"seismic_noise", c.seismic_noise},
          {"burst_rate", c.burst_rate},
          {"seed", c.seed}};
}

FieldConfig config_from(const json& j) {
  FieldConfig c;
  c.field_size = j.at("field_size").get<double>();
  for (const json& p : j.at("sensors")) c.sensors.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  c.test_sensors = j.at("test_sensors").get<Index>();
  c.cameras = j.at("cameras").get<Index>();
  c.roi_pixels = j.at("roi_pixels").get<Index>();
  c.pixels_per_meter = j.at("pixels_per_meter").get<double>();
  c.seismic_rate = j.at("seismic_rate").get<double>();
  c.frame_rate = j.at("frame_rate").get<double>();
  c.radius = j.at("radius").get<double>();
  c.window_seconds = j.at("window_seconds").get<double>();
  c.overlap = j.at("overlap").get<double>();
  c.session_seconds = j.at("session_seconds").get<double>();
  c.walker_speed = j.at("walker_speed").get<double>();
  c.step_rate = j.at("step_rate").get<double>();
  c.positive_fraction = j.at("positive_fraction").get<double>();
  c.blob_sigma_px = j.at("blob_sigma_px").get<double>();
  c.visual_noise = j.at("visual_noise").get<double>();
  c.occlusion_rate = j.at("occlusion_rate").get<double>();
  c.clutter_rate = j.at("clutter_rate").get<double>();
  c.footstep_amplitude = j.at("footstep_amplitude").get<double>();
  c.seismic_noise = j.at("seismic_noise").get<double>();
  c.burst_rate = j.at("burst_rate").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

template <typename T>
void put(std::string& buf, std::size_t at, T value) {
  std::memcpy(buf.data() + at, &value, sizeof(T));
}

template <typename T>
T get(const char* at) {
  T value;
  std::memcpy(&value, at, sizeof(T));
  return value;
}

void write_split(const fs::path& file, const Dataset& windows, Index size, Index length) {
  const Index hw = size * size;
  const std::size_t stride = record_bytes(size, length);
  std::string buf(stride * windows.size(), '\0');
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const SampleWindow& w = windows[i];
    if (w.visual.size() != hw || w.seismic.size() != length)
      throw DatasetError("window " + std::to_string(i) + " has shape visual " +
                         shape_string(w.visual.shape()) + ", seismic " +
                         shape_string(w.seismic.shape()) + " that disagrees with the config");
    const std::size_t base = i * stride;
    put(buf, base + kSensorOffset, w.sensor_id);
    put(buf, base + kCameraOffset, w.camera_id);
    put(buf, base + kLabelOffset, w.label);
    put(buf, base + kDistanceOffset, w.distance);
    std::memcpy(buf.data() + base + kVisualOffset, w.visual.data().data(), std::size_t(hw) * 4);
    std::memcpy(buf.data() + base + kVisualOffset + std::size_t(hw) * 4, w.seismic.data().data(),
                std::size_t(length) * 4);
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + file.string());
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) throw DatasetError("failed writing " + file.string());
}

Dataset read_split(const fs::path& file, std::size_t count, Index size, Index length) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + file.string());
  const std::string buf(std::istreambuf_iterator<char>(in), {});
  const std::size_t stride = record_bytes(size, length);
  if (buf.size() != stride * count)
    throw TruncatedBlobError(file.string() + ": expected " + std::to_string(count) + " records of " +
                             std::to_string(stride) + " bytes (" + std::to_string(stride * count) +
                             " bytes), found " + std::to_string(buf.size()) + " bytes");
  Dataset out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const char* base = buf.data() + i * stride;
    SampleWindow& w = out[i];
    w.sensor_id = get<std::uint16_t>(base + kSensorOffset);
    w.camera_id = get<std::uint16_t>(base + kCameraOffset);
    w.label = get<std::uint8_t>(base + kLabelOffset);
    w.distance = get<float>(base + kDistanceOffset);
    w.visual = TensorF({size, size});
    w.seismic = TensorF({length});
    std::memcpy(w.visual.data().data(), base + kVisualOffset, std::size_t(size * size) * 4);
    std::memcpy(w.seismic.data().data(), base + kVisualOffset + std::size_t(size * size) * 4,
                std::size_t(length) * 4);
  }
  return out;
}

}  // namespace

std::size_t record_bytes(Index visual_size, Index seismic_length) {
  return kVisualOffset + 4 * std::size_t(visual_size * visual_size + seismic_length);
}

std::string field_config_to_json(const FieldConfig& config) { return config_json(config).dump(); }

FieldConfig field_config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw ManifestError(std::string("field config: ") + e.what());
  }
}

void write_dataset(const fs::path& dir, const SimulatedDataset& data, const FieldConfig& config) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DatasetError("cannot create " + dir.string() + ": " + ec.message());

  const Index size = config.roi_pixels;
  const Index length = seismic_length_of(config);
  const json manifest = {
      {"format_version", kDatasetFormatVersion},
      {"config", config_json(config)},
      {"visual_shape", {size, size}},
      {"seismic_length", length},
      {"counts", {{"train", data.train.size()}, {"test", data.test.size()}}},
      {"splits",
       {{"train", {{"sensors", data.train_sensors}, {"cameras", data.train_cameras}}},
        {"test", {{"sensors", data.test_sensors}, {"cameras", data.test_cameras}}}}},
      {"record_bytes", record_bytes(size, length)},
      {"byte_offsets",
       {{"sensor_id", kSensorOffset},
        {"camera_id", kCameraOffset},
        {"label", kLabelOffset},
        {"distance", kDistanceOffset},
        {"visual", kVisualOffset},
        {"seismic", kVisualOffset + 4 * std::size_t(size * size)}}},
      {"files", {{"train", "train.bin"}, {"test", "test.bin"}}}};

  write_split(dir / "train.bin", data.train, size, length);
  write_split(dir / "test.bin", data.test, size, length);
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw DatasetError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
  if (!out) throw DatasetError("failed writing " + (dir / "manifest.json").string());
}

LoadedDataset read_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw DatasetError("cannot open " + manifest_path.string());

  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw ManifestError(manifest_path.string() + ": not valid JSON: " + e.what());
  }

  LoadedDataset loaded;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  try {
    const int version = m.at("format_version").get<int>();
    if (version != kDatasetFormatVersion)
      throw VersionMismatchError(manifest_path.string() + ": format version " +
                                 std::to_string(version) + ", this build reads version " +
                                 std::to_string(kDatasetFormatVersion));
    loaded.config = config_from(m.at("config"));
    loaded.visual_size = m.at("visual_shape").at(0).get<Index>();
    loaded.seismic_length = m.at("seismic_length").get<Index>();
    if (m.at("visual_shape").at(1).get<Index>() != loaded.visual_size || loaded.visual_size < 0 ||
        loaded.seismic_length < 0)
      throw ManifestError(manifest_path.string() + ": visual shape must be square");
    if (m.at("record_bytes").get<std::size_t>() !=
        record_bytes(loaded.visual_size, loaded.seismic_length))
      throw ManifestError(manifest_path.string() + ": record_bytes disagrees with the shapes");
    n_train = m.at("counts").at("train").get<std::size_t>();
    n_test = m.at("counts").at("test").get<std::size_t>();
    const json& splits = m.at("splits");
    loaded.data.train_sensors = splits.at("train").at("sensors").get<std::vector<std::uint16_t>>();
    loaded.data.train_cameras = splits.at("train").at("cameras").get<std::vector<std::uint16_t>>();
    loaded.data.test_sensors = splits.at("test").at("sensors").get<std::vector<std::uint16_t>>();
    loaded.data.test_cameras = splits.at("test").at("cameras").get<std::vector<std::uint16_t>>();
  } catch (const json::exception& e) {
    throw ManifestError(manifest_path.string() + ": " + e.what());
  }

  loaded.data.train = read_split(dir / "train.bin", n_train, loaded.visual_size, loaded.seismic_length);
  loaded.data.test = read_split(dir / "test.bin", n_test, loaded.visual_size, loaded.seismic_length);
  return loaded;
}

}  // namespace opbil
