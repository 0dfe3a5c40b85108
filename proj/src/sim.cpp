#include "opbil/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

namespace opbil {
namespace {

enum Stream : std::uint64_t {
  kCameraStream = 1,
  kCouplingStream,
  kTrajectoryStream,
  kWindowStream,
  kSelectStream,
};

// Independent generator for a tuple of indices; never depends on the order in
// which windows or sessions are produced.
std::mt19937_64 rng_for(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::vector<std::uint32_t> words{std::uint32_t(seed), std::uint32_t(seed >> 32)};
  for (std::uint64_t t : tags) {
    words.push_back(std::uint32_t(t));
    words.push_back(std::uint32_t(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool bernoulli(std::mt19937_64& rng, double p) {
  return std::bernoulli_distribution(std::clamp(p, 0.0, 1.0))(rng);
}

double sensor_coupling(const FieldConfig& config, std::uint16_t sensor) {
  auto rng = rng_for(config.seed, {kCouplingStream, sensor});
  return uniform(rng, 0.9, 1.1);
}

struct WindowSlot {
  std::uint64_t session;
  std::uint16_t sensor;
  std::size_t k;

  friend auto operator<=>(const WindowSlot&, const WindowSlot&) = default;
};

SampleWindow realize_window(const Session& session, std::uint16_t sensor, std::size_t k,
                            double start, const FieldConfig& config) {
  const Eigen::Vector2d where = config.sensor_positions().at(sensor);
  auto rng = rng_for(config.seed, {kWindowStream, session.test_split, session.index, sensor, k});
  const CameraParams camera = camera_params(config, camera_of_sensor(config, sensor));

  const double centre = start + config.window_seconds / 2.0;
  const double distance = (session.walker.position_at(centre) - where).norm();

  // Visual: optical flow over [centre - 1, centre + 1].
  const bool occluded = bernoulli(rng, config.occlusion_rate);
  const bool clutter = bernoulli(rng, config.clutter_rate);
  const double half = 0.5 * double(config.roi_pixels) / camera.pixels_per_meter;
  const Eigen::Vector2d clutter_at =
      where + Eigen::Vector2d(uniform(rng, -half, half), uniform(rng, -half, half));
  const double clutter_speed = uniform(rng, 0.8, 2.0);

  const auto frame_count = std::max<long>(1, std::lround(2.0 * config.frame_rate));
  std::vector<Frame> frames(static_cast<std::size_t>(frame_count));
  for (long f = 0; f < frame_count; ++f) {
    const double t = centre - 1.0 + (double(f) + 0.5) / config.frame_rate;
    if (!occluded)
      frames[std::size_t(f)].push_back(
          {session.walker.position_at(t), session.walker.velocity_at(t).norm()});
    if (clutter) frames[std::size_t(f)].push_back({clutter_at, clutter_speed});
  }

  SampleWindow w;
  w.visual = render_avg_of(frames, where, camera, config, rng);

  // Seismic: footsteps plus an occasional foreign transient.
  std::vector<SeismicEvent> events =
      footstep_events(session.walker, where, sensor_coupling(config, sensor), start, config, rng);
  if (bernoulli(rng, config.burst_rate)) {
    // A single transient from some other source: a dropped object, a vehicle.
    const double d = uniform(rng, 3.0, 12.0);
    events.push_back({start + uniform(rng, -0.05, 0.9),
                      config.footstep_amplitude / (1.0 + d * d) * uniform(rng, 0.7, 1.3),
                      uniform(rng, 8.0, 24.0), uniform(rng, 0.05, 0.12)});
  }
  w.seismic = synthesize_seismic(events, start, config, rng);

  w.distance = float(distance);
  // Label from the stored single-precision distance so the rule holds on disk.
  w.label = std::uint8_t(double(w.distance) < config.radius);
  w.sensor_id = sensor;
  w.camera_id = camera.id;
  return w;
}

}  // namespace

std::vector<Eigen::Vector2d> FieldConfig::sensor_positions() const {
  if (!sensors.empty()) return sensors;
  std::vector<Eigen::Vector2d> grid;
  const double spacing = field_size / 4.0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      grid.emplace_back(spacing * (c + 0.5), spacing * (r + 0.5));
  return grid;
}

void FieldConfig::validate() const {
  if (!(radius > 0.0)) throw SimulationError("radius must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw SimulationError("overlap must lie in [0, 1)");
  if (!(window_seconds > 0.0)) throw SimulationError("window length must be positive");
  if (!(seismic_rate > 0.0) || !(frame_rate > 0.0))
    throw SimulationError("sample and frame rates must be positive");
  if (roi_pixels <= 0 || !(pixels_per_meter > 0.0))
    throw SimulationError("region of interest must be non-empty");
  if (!(positive_fraction > 0.0 && positive_fraction < 1.0))
    throw SimulationError("positive fraction must lie in (0, 1)");
  const auto where = sensor_positions();
  for (std::size_t i = 0; i < where.size(); ++i)
    if (where[i].minCoeff() < 0.0 || where[i].maxCoeff() > field_size)
      throw SimulationError("sensor " + std::to_string(i) + " lies outside the field");
  if (where.size() < 2) throw SimulationError("need at least 2 sensors to split train and test");
  if (where.size() > 65535) throw SimulationError("too many sensors");
  if (test_sensors < 1 || test_sensors >= Index(where.size()))
    throw SimulationError("test split must leave at least one sensor on each side");
  if (cameras < 2) throw SimulationError("need at least 2 cameras to split train and test");
  const auto first_test = std::uint16_t(where.size() - std::size_t(test_sensors));
  if (camera_of_sensor(*this, first_test) == camera_of_sensor(*this, first_test - 1))
    throw SimulationError("train and test sensors would share a camera");
}

std::uint16_t camera_of_sensor(const FieldConfig& config, std::uint16_t sensor) {
  const auto n = config.sensor_positions().size();
  return std::uint16_t(std::size_t(sensor) * std::size_t(config.cameras) / n);
}

CameraParams camera_params(const FieldConfig& config, std::uint16_t camera) {
  auto rng = rng_for(config.seed, {kCameraStream, camera});
  CameraParams p;
  p.id = camera;
  const double angle =
      2.0 * std::numbers::pi * double(camera) / double(config.cameras) + uniform(rng, -0.3, 0.3);
  const double reach = 0.5 * config.field_size + uniform(rng, 30.0, 50.0);
  p.position = Eigen::Vector2d::Constant(0.5 * config.field_size) +
               reach * Eigen::Vector2d(std::cos(angle), std::sin(angle));
  p.gain = uniform(rng, 0.85, 1.15);
  p.noise = config.visual_noise * uniform(rng, 0.8, 1.25);
  p.pixels_per_meter = config.pixels_per_meter * uniform(rng, 0.93, 1.07);
  p.rotation = uniform(rng, -std::numbers::pi, std::numbers::pi);
  p.blob_sigma_px = config.blob_sigma_px * uniform(rng, 0.85, 1.15);
  return p;
}

Eigen::Vector2d Trajectory::position_at(double t) const {
  if (positions.empty()) throw SimulationError("empty trajectory");
  const double s = std::clamp((t - start) / dt, 0.0, double(positions.size() - 1));
  const auto i = std::min(std::size_t(s), positions.size() - 1);
  if (i + 1 >= positions.size()) return positions.back();
  const double a = s - double(i);
  return (1.0 - a) * positions[i] + a * positions[i + 1];
}

Eigen::Vector2d Trajectory::velocity_at(double t) const {
  if (positions.size() < 2) return Eigen::Vector2d::Zero();
  const double s = std::clamp((t - start) / dt, 0.0, double(positions.size() - 1));
  const auto i = std::min(std::size_t(s), positions.size() - 2);
  return (positions[i + 1] - positions[i]) / dt;
}

Trajectory simulate_trajectory(const FieldConfig& config, double duration, std::mt19937_64& rng) {
  Trajectory path;
  path.start = -1.0;
  path.dt = 0.05;
  const auto steps = std::size_t(std::ceil((duration + 2.0) / path.dt));
  const double size = config.field_size;
  const double speed = config.walker_speed * uniform(rng, 0.85, 1.15);
  std::normal_distribution<double> turn(0.0, 0.6 * std::sqrt(path.dt));

  Eigen::Vector2d p(uniform(rng, 0.0, size), uniform(rng, 0.0, size));
  double heading = uniform(rng, -std::numbers::pi, std::numbers::pi);
  path.positions.reserve(steps + 1);
  path.positions.push_back(p);
  for (std::size_t i = 0; i < steps; ++i) {
    heading += turn(rng);
    p += speed * path.dt * Eigen::Vector2d(std::cos(heading), std::sin(heading));
    // Reflect off the boundary; reflection never lengthens a step.
    if (p.x() < 0.0 || p.x() > size) {
      p.x() = p.x() < 0.0 ? -p.x() : 2.0 * size - p.x();
      heading = std::numbers::pi - heading;
    }
    if (p.y() < 0.0 || p.y() > size) {
      p.y() = p.y() < 0.0 ? -p.y() : 2.0 * size - p.y();
      heading = -heading;
    }
    path.positions.push_back(p);
  }

  const double period = 1.0 / config.step_rate;
  std::normal_distribution<double> jitter(0.0, 0.03 * period);
  for (double t = path.start + uniform(rng, 0.0, period); t < path.end(); t += period + jitter(rng))
    path.step_times.push_back(t);
  return path;
}

TensorF render_avg_of(std::span<const Frame> frames, const Eigen::Vector2d& sensor,
                      const CameraParams& camera, const FieldConfig& config,
                      std::mt19937_64& rng) {
  const Index size = config.roi_pixels;
  Eigen::ArrayXXd sum = Eigen::ArrayXXd::Zero(size, size);
  if (frames.empty()) return TensorF({size, size});

  const Eigen::Rotation2Dd to_image(camera.rotation);
  const double centre = 0.5 * double(size) - 0.5;
  const double inv_two_sigma2 = 1.0 / (2.0 * camera.blob_sigma_px * camera.blob_sigma_px);
  const double falloff =
      1.0 / (1.0 + std::pow((camera.position - sensor).norm() / 200.0, 2.0));
  std::normal_distribution<double> noise(0.0, 1.0);

  Eigen::ArrayXXd frame(size, size);
  for (const Frame& movers : frames) {
    frame.setZero();
    for (const Mover& m : movers) {
      const Eigen::Vector2d px = to_image * (m.position - sensor) * camera.pixels_per_meter;
      const double col = centre + px.x();
      const double row = centre + px.y();
      if (col < -0.5 || col > double(size) - 0.5 || row < -0.5 || row > double(size) - 0.5)
        continue;
      const double peak = camera.gain * falloff * m.speed;
      for (Index r = 0; r < size; ++r)
        for (Index c = 0; c < size; ++c) {
          const double d2 = (double(r) - row) * (double(r) - row) + (double(c) - col) * (double(c) - col);
          frame(r, c) += peak * std::exp(-d2 * inv_two_sigma2);
        }
    }
    if (camera.noise > 0.0)
      for (Index r = 0; r < size; ++r)
        for (Index c = 0; c < size; ++c) frame(r, c) += camera.noise * noise(rng);
    sum += frame.max(0.0);
  }
  sum /= double(frames.size());

  TensorF out({size, size});
  for (Index r = 0; r < size; ++r)
    for (Index c = 0; c < size; ++c) out(r, c) = float(sum(r, c));
  return out;
}

std::vector<SeismicEvent> footstep_events(const Trajectory& walker, const Eigen::Vector2d& sensor,
                                          double coupling, double window_start,
                                          const FieldConfig& config, std::mt19937_64& rng) {
  std::vector<SeismicEvent> events;
  std::lognormal_distribution<double> strength(0.0, 0.15);
  for (double t : walker.step_times) {
    if (t < window_start - 0.5 || t >= window_start + config.window_seconds) continue;
    const double d = (walker.position_at(t) - sensor).norm();
    events.push_back({t, config.footstep_amplitude * coupling * strength(rng) / (1.0 + d * d),
                      uniform(rng, 25.0, 35.0), 0.04});
  }
  return events;
}

TensorF synthesize_seismic(std::span<const SeismicEvent> events, double start,
                           const FieldConfig& config, std::mt19937_64& rng) {
  const auto length = Index(std::lround(config.seismic_rate * config.window_seconds));
  TensorF trace({length});
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Index i = 0; i < length; ++i) {
    const double t = start + double(i) / config.seismic_rate;
    double v = 0.0;
    for (const SeismicEvent& e : events) {
      const double tau = t - e.onset;
      if (tau < 0.0) continue;
      v += e.amplitude * std::exp(-tau / e.decay) * std::sin(2.0 * std::numbers::pi * e.frequency * tau);
    }
    if (config.seismic_noise > 0.0) v += config.seismic_noise * noise(rng);
    trace[i] = float(v);
  }
  return trace;
}

std::vector<double> window_starts(double duration, const FieldConfig& config) {
  std::vector<double> starts;
  const double hop = config.window_seconds * (1.0 - config.overlap);
  if (duration < config.window_seconds) return starts;
  const auto count = std::size_t(std::floor((duration - config.window_seconds) / hop + 1e-9)) + 1;
  for (std::size_t k = 0; k < count; ++k) starts.push_back(double(k) * hop);
  return starts;
}

Dataset window_and_label(const Session& session, std::uint16_t sensor, const FieldConfig& config) {
  Dataset out;
  const auto starts = window_starts(session.duration, config);
  for (std::size_t k = 0; k < starts.size(); ++k)
    out.push_back(realize_window(session, sensor, k, starts[k], config));
  return out;
}

SimulatedDataset simulate_dataset(const FieldConfig& config, Index n_train, Index n_test) {
  config.validate();
  if (n_train < 0 || n_test < 0) throw SimulationError("sample counts must be nonnegative");

  const auto where = config.sensor_positions();
  const auto first_test = std::uint16_t(where.size() - std::size_t(config.test_sensors));
  SimulatedDataset result;
  for (std::uint16_t s = 0; s < where.size(); ++s) {
    const std::uint16_t cam = camera_of_sensor(config, s);
    auto& sensors = s < first_test ? result.train_sensors : result.test_sensors;
    auto& cameras = s < first_test ? result.train_cameras : result.test_cameras;
    sensors.push_back(s);
    if (std::find(cameras.begin(), cameras.end(), cam) == cameras.end()) cameras.push_back(cam);
  }

  const auto starts = window_starts(config.session_seconds, config);
  if (starts.empty()) throw SimulationError("session shorter than one window");

  auto build_split = [&](bool test, Index n, const std::vector<std::uint16_t>& sensors) {
    Dataset out;
    if (n == 0) return out;
    const auto n_pos = std::size_t(std::llround(double(n) * config.positive_fraction));
    const auto n_neg = std::size_t(n) - n_pos;

    std::vector<Session> sessions;
    std::vector<WindowSlot> positives;
    std::vector<WindowSlot> negatives;
    const std::size_t max_sessions = 4096;
    // Oversample so the draw below can pick from several independent encounters.
    while (positives.size() < 3 * n_pos || negatives.size() < 3 * n_neg) {
      if (sessions.size() >= max_sessions)
        throw SimulationError("could not collect enough windows; enlarge the field or radius");
      Session session;
      session.index = sessions.size();
      session.test_split = test;
      session.duration = config.session_seconds;
      auto rng = rng_for(config.seed, {kTrajectoryStream, test, session.index});
      session.walker = simulate_trajectory(config, session.duration, rng);
      for (std::uint16_t s : sensors)
        for (std::size_t k = 0; k < starts.size(); ++k) {
          const double centre = starts[k] + config.window_seconds / 2.0;
          const double d = (session.walker.position_at(centre) - where[s]).norm();
          (d < config.radius ? positives : negatives).push_back({session.index, s, k});
        }
      sessions.push_back(std::move(session));
    }

    auto rng = rng_for(config.seed, {kSelectStream, test});
    std::shuffle(positives.begin(), positives.end(), rng);
    std::shuffle(negatives.begin(), negatives.end(), rng);
    std::vector<WindowSlot> chosen(positives.begin(), positives.begin() + long(n_pos));
    chosen.insert(chosen.end(), negatives.begin(), negatives.begin() + long(n_neg));
    std::sort(chosen.begin(), chosen.end());
    out.reserve(chosen.size());
    for (const WindowSlot& slot : chosen)
      out.push_back(realize_window(sessions[slot.session], slot.sensor, slot.k, starts[slot.k],
                                   config));
    return out;
  };

  result.train = build_split(false, n_train, result.train_sensors);
  result.test = build_split(true, n_test, result.test_sensors);
  return result;
}

}  // namespace opbil
