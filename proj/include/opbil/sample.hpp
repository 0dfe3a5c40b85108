#ifndef OPBIL_SAMPLE_HPP
#define OPBIL_SAMPLE_HPP

#include "opbil/tensor.hpp"

#include <cstdint>
#include <vector>

namespace opbil {

/// One paired example: averaged optical-flow magnitudes over the region
/// around a sensor, the sensor's seismic trace for the same second, and the
/// ground truth. Stored in single precision, as on disk.
struct SampleWindow {
  TensorF visual;   // H x W, nonnegative
  TensorF seismic;  // L
  std::uint8_t label = 0;
  float distance = 0.0f;  // meters from the sensor at window centre
  std::uint16_t sensor_id = 0;
  std::uint16_t camera_id = 0;

  friend bool operator==(const SampleWindow&, const SampleWindow&) = default;
};

using Dataset = std::vector<SampleWindow>;

}  // namespace opbil

#endif  // OPBIL_SAMPLE_HPP
