#ifndef OPBIL_DATASET_IO_HPP
#define OPBIL_DATASET_IO_HPP

#include "opbil/sim.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace opbil {

inline constexpr int kDatasetFormatVersion = 1;

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ManifestError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class TruncatedBlobError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class VersionMismatchError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

/// Bytes per packed record: sensor u16, camera u16, label u8, distance f32,
/// visual f32[H*W], seismic f32[L], all little-endian.
std::size_t record_bytes(Index visual_size, Index seismic_length);

std::string field_config_to_json(const FieldConfig& config);
FieldConfig field_config_from_json(const std::string& text);

/// Writes manifest.json, train.bin and test.bin into `dir` (created if needed).
void write_dataset(const std::filesystem::path& dir, const SimulatedDataset& data,
                   const FieldConfig& config);

struct LoadedDataset {
  SimulatedDataset data;
  FieldConfig config;
  Index visual_size = 0;
  Index seismic_length = 0;
};

LoadedDataset read_dataset(const std::filesystem::path& dir);

}  // namespace opbil

#endif  // OPBIL_DATASET_IO_HPP
