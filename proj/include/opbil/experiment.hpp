#ifndef OPBIL_EXPERIMENT_HPP
#define OPBIL_EXPERIMENT_HPP

#include "opbil/gradcheck.hpp"
#include "opbil/metrics.hpp"
#include "opbil/model.hpp"
#include "opbil/sim.hpp"
#include "opbil/train.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace opbil {

enum class InitMode { Random, FromCheckpoints };

std::string_view to_string(InitMode mode);
InitMode parse_init_mode(std::string_view name);

/// Builds a model for `spec`. With FromCheckpoints, stream weights are copied
/// from the single-modality models that are given.
Model initial_model(const ModelSpec& spec, InitMode init, const Model* visual,
                    const Model* seismic);

struct VariantRun {
  std::string name;
  Metrics metrics;
  PRCurve curve;
  DistanceBandReport bands;
  std::vector<double> scores;
  TrainResult training;
  Index parameters = 0;
  double sparsity = 0.0;  // reduction weights with |w| < 1e-3
};

struct CompareConfig {
  ModelSpec base;  // variant is overridden per run
  TrainConfig train;
  std::vector<Variant> variants{std::begin(kAllVariants), std::end(kAllVariants)};
  InitMode init = InitMode::FromCheckpoints;
  double u_visual = 0.35;
  double u_seismic = 0.15;
  double radius = 15.0;
  std::function<void(const std::string&)> log;
};

struct CompareResult {
  std::vector<VariantRun> runs;  // variants in request order, then late fusion

  const VariantRun* find(std::string_view name) const;
};

/// Trains every requested variant on data.train and scores it on data.test.
/// Single-modality models train first; when both are present the average and
/// Dempster-Shafer late-fusion rows are appended.
CompareResult compare(const SimulatedDataset& data, const CompareConfig& config);

/// Scores a trained model on a test set: metrics, PR curve and distance bands.
VariantRun score_model(std::string name, const Model& model, const Dataset& test,
                       double threshold, double radius);
VariantRun score_fused(std::string name, std::vector<double> scores, const Dataset& test,
                       double threshold, double radius);

/// Small architecture with every layer type of `variant`, for finite-difference
/// checks that finish in seconds.
ModelSpec gradcheck_spec(Variant variant, std::uint64_t seed);

struct ParameterCheck {
  std::string parameter;
  GradCheckResult result;  // worst over samples
};

struct VariantCheck {
  Variant variant = Variant::OpBilinear;
  std::vector<ParameterCheck> parameters;
  int samples = 0;
  double max_rel_error = 0.0;
};

/// Checks d(cross-entropy + l1)/d(parameter) for every parameter on `samples`
/// seeded inputs. Inputs are redrawn until every relu pre-activation and
/// reduction weight is at least `margin` from its kink.
VariantCheck gradcheck_variant(Variant variant, std::uint64_t seed, int samples = 3,
                               double epsilon = 1e-5, double margin = 1e-3);

}  // namespace opbil

#endif  // OPBIL_EXPERIMENT_HPP
