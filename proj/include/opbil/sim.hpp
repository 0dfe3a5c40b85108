#ifndef OPBIL_SIM_HPP
#define OPBIL_SIM_HPP

#include "opbil/sample.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace opbil {

class SimulationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sensor field and acquisition protocol. Distances are meters, times seconds.
struct FieldConfig {
  double field_size = 80.0;                 // square [0, field_size]^2
  std::vector<Eigen::Vector2d> sensors;     // empty -> 4x4 grid
  Index test_sensors = 4;                   // the last ones form the test split
  Index cameras = 4;                        // sensors map to cameras in contiguous blocks
  Index roi_pixels = 32;
  double pixels_per_meter = 1.0;
  double seismic_rate = 256.0;              // samples per second
  double frame_rate = 10.0;                 // optical-flow frames per second
  double radius = 15.0;                     // positive-label radius
  double window_seconds = 1.0;
  double overlap = 0.5;
  double session_seconds = 60.0;
  double walker_speed = 1.5;
  double step_rate = 2.0;                   // footsteps per second
  double positive_fraction = 0.2;           // 4:1 negative:positive

  // Visual channel.
  double blob_sigma_px = 1.2;
  double visual_noise = 0.35;
  double occlusion_rate = 0.12;             // window-level probability the walker is hidden
  double clutter_rate = 0.12;               // window-level probability of a spurious mover

  // Seismic channel.
  double footstep_amplitude = 20.0;         // peak at d = 0 for unit coupling
  double seismic_noise = 0.02;
  double burst_rate = 0.25;                 // window-level probability of a foreign transient

  std::uint64_t seed = 7;

  /// Sensor positions, filling in the default grid when none were given.
  std::vector<Eigen::Vector2d> sensor_positions() const;
  void validate() const;
};

struct CameraParams {
  std::uint16_t id = 0;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  double gain = 1.0;
  double noise = 0.0;
  double pixels_per_meter = 1.0;
  double rotation = 0.0;  // radians, image axes relative to field axes
  double blob_sigma_px = 1.2;
};

/// Camera parameters drawn from (seed, camera id).
CameraParams camera_params(const FieldConfig& config, std::uint16_t camera);
std::uint16_t camera_of_sensor(const FieldConfig& config, std::uint16_t sensor);

/// Walker path sampled on a uniform grid starting at `start`.
struct Trajectory {
  double start = 0.0;
  double dt = 0.05;
  std::vector<Eigen::Vector2d> positions;
  std::vector<double> step_times;

  double end() const { return start + dt * double(positions.size() - 1); }
  Eigen::Vector2d position_at(double t) const;
  Eigen::Vector2d velocity_at(double t) const;
};

/// Random walk at walking pace with smoothly drifting heading, reflected at the
/// field boundary. Covers [-1, duration + 1] so every window's optical-flow
/// interval is inside it.
Trajectory simulate_trajectory(const FieldConfig& config, double duration, std::mt19937_64& rng);

/// A moving blob in one optical-flow frame; flow magnitude equals its speed.
struct Mover {
  Eigen::Vector2d position;
  double speed = 0.0;
};
using Frame = std::vector<Mover>;

/// Averages per-frame flow magnitudes: every mover inside the crop adds an
/// isotropic Gaussian blob of peak gain * speed; zero-mean pixel noise is added
/// per frame and clipped at 0.
TensorF render_avg_of(std::span<const Frame> frames, const Eigen::Vector2d& sensor,
                      const CameraParams& camera, const FieldConfig& config,
                      std::mt19937_64& rng);

/// Damped oscillation starting at `onset` (seconds, absolute time).
struct SeismicEvent {
  double onset = 0.0;
  double amplitude = 0.0;
  double frequency = 30.0;
  double decay = 0.04;
};

/// Footstep events near a window, amplitude footstep_amplitude * coupling / (1 + d^2).
std::vector<SeismicEvent> footstep_events(const Trajectory& walker, const Eigen::Vector2d& sensor,
                                          double coupling, double window_start,
                                          const FieldConfig& config, std::mt19937_64& rng);

/// Sum of events plus white noise over [start, start + window).
TensorF synthesize_seismic(std::span<const SeismicEvent> events, double start,
                           const FieldConfig& config, std::mt19937_64& rng);

/// Window start times k * window * (1 - overlap) that fit inside the session.
std::vector<double> window_starts(double duration, const FieldConfig& config);

struct Session {
  Trajectory walker;
  double duration = 0.0;
  std::uint64_t index = 0;  // seeds per-window randomness
  bool test_split = false;
};

/// Renders every window of a session for one sensor; the label is
/// distance-at-window-centre < radius.
Dataset window_and_label(const Session& session, std::uint16_t sensor, const FieldConfig& config);

struct SimulatedDataset {
  Dataset train;
  Dataset test;
  std::vector<std::uint16_t> train_sensors;
  std::vector<std::uint16_t> test_sensors;
  std::vector<std::uint16_t> train_cameras;
  std::vector<std::uint16_t> test_cameras;
};

/// Generates sessions per split until enough windows exist, then draws exactly
/// round(n * positive_fraction) positives and the rest negatives. A pure
/// function of the config (including its seed).
SimulatedDataset simulate_dataset(const FieldConfig& config, Index n_train, Index n_test);

}  // namespace opbil

#endif  // OPBIL_SIM_HPP
