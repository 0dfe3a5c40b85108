#ifndef OPBIL_TRAIN_HPP
#define OPBIL_TRAIN_HPP

#include "opbil/metrics.hpp"
#include "opbil/model.hpp"

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace opbil {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
};

/// One bias-corrected Adam update. Moment buffers are created on the first
/// call; afterwards every shape must match.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               AdamState& state, const AdamConfig& config);
/// Same update applied to parameter values using their accumulated grads.
void adam_step(std::vector<Parameter>& params, AdamState& state, const AdamConfig& config);

struct TrainConfig {
  int epochs = 40;
  Index batch = 32;
  AdamConfig adam;
  double l1 = 1e-3;              // lambda for every reduction layer
  std::uint64_t seed = 7;        // shuffle order and validation split
  double validation_fraction = 0.1;
  double threshold = 0.5;

  void validate() const;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean over batches of mean cross-entropy + l1
  Metrics validation;       // at config.threshold; zero when no validation set
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;  // 0 means the initial parameters were kept
  double best_f1 = -1.0;
};

/// Mini-batch Adam on mean cross-entropy plus the l1 penalty of the reduction
/// layers. A stratified slice of `data` is held out, and the parameters with
/// the best held-out F1 are restored at the end. Deterministic for a fixed
/// seed. Throws TrainingError naming the batch when the loss is not finite.
TrainResult train(Model& model, const Dataset& data, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Objective on one batch: mean cross-entropy + l1; accumulates parameter grads
/// (which the caller zeroes).
double batch_objective(Model& model, std::span<const SampleWindow* const> batch, double l1);

/// softmax(logits)[1] for every sample.
std::vector<double> confidences(const Model& model, const Dataset& data);
std::vector<std::uint8_t> labels_of(const Dataset& data);
std::vector<double> distances_of(const Dataset& data);

Metrics evaluate(const Model& model, const Dataset& data, double threshold = 0.5);

/// Fraction of reduction-layer weights with |w| < tolerance.
double reduction_sparsity(const Model& model, double tolerance = 1e-3);

/// Keeps large temporaries on the heap instead of fresh mappings. Idempotent.
void tune_allocator();

}  // namespace opbil

#endif  // OPBIL_TRAIN_HPP
