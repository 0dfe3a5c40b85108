#include "opbil/train.hpp"

#include "opbil/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace opbil {

void tune_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 28);
    mallopt(M_TRIM_THRESHOLD, 1 << 29);
    return true;
  }();
  (void)done;
#endif
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               AdamState& state, const AdamConfig& config) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                     std::to_string(grads.size()) + " gradients");
  if (state.m.empty() && state.step == 0) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size())
    throw ShapeError("adam_step: state holds " + std::to_string(state.m.size()) + " moments for " +
                     std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->shape() != grads[i]->shape() || params[i]->shape() != state.m[i].shape())
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " has shape " +
                       shape_string(params[i]->shape()) + ", gradient " +
                       shape_string(grads[i]->shape()) + ", state " +
                       shape_string(state.m[i].shape()));

  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, double(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = grads[i]->data().array();
    auto m = state.m[i].data().array();
    auto v = state.v[i].data().array();
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g.square();
    params[i]->data().array() -= config.lr * (m / c1) / ((v / c2).sqrt() + config.epsilon);
  }
}

void adam_step(std::vector<Parameter>& params, AdamState& state, const AdamConfig& config) {
  std::vector<Tensor*> values;
  std::vector<const Tensor*> grads;
  for (Parameter& p : params) {
    values.push_back(&p.value);
    grads.push_back(&p.grad);
  }
  adam_step(values, grads, state, config);
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be nonnegative");
  if (batch < 1) throw std::invalid_argument("batch size must be positive");
  if (!(adam.lr >= 0.0)) throw std::invalid_argument("learning rate must be nonnegative");
  if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0) || !(adam.beta2 > 0.0 && adam.beta2 < 1.0))
    throw std::invalid_argument("Adam betas must lie in (0, 1)");
  if (!(adam.epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
  if (!(l1 >= 0.0)) throw std::invalid_argument("l1 must be nonnegative");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw std::invalid_argument("validation fraction must lie in [0, 1)");
}

double batch_objective(Model& model, std::span<const SampleWindow* const> batch, double l1) {
  double loss = 0.0;
  const double weight = 1.0 / double(batch.size());
  for (const SampleWindow* sample : batch) {
    Tape tape;
    Var ce = softmax_cross_entropy(model.forward(tape, *sample), sample->label);
    tape.backward(ce, weight);
    loss += weight * ce.value()[0];
  }
  if (l1 > 0.0 && !model.reduction_parameters().empty()) {
    Tape tape;
    Var total;
    bool first = true;
    for (std::size_t i : model.reduction_parameters()) {
      Var term = l1_penalty(tape.parameter(model.parameters()[i]), l1);
      total = first ? term : add(total, term);
      first = false;
    }
    tape.backward(total);
    loss += total.value()[0];
  }
  return loss;
}

TrainResult train(Model& model, const Dataset& data, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (data.empty()) throw TrainingError("training set is empty");
  tune_allocator();

  // Stratified hold-out so the validation slice keeps the class ratio.
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < data.size(); ++i) (data[i].label ? pos : neg).push_back(i);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  const auto hold_pos = std::size_t(std::llround(double(pos.size()) * config.validation_fraction));
  const auto hold_neg = std::size_t(std::llround(double(neg.size()) * config.validation_fraction));
  Dataset validation;
  std::vector<std::size_t> fit;
  for (std::size_t k = 0; k < pos.size(); ++k)
    k < hold_pos ? validation.push_back(data[pos[k]]) : fit.push_back(pos[k]);
  for (std::size_t k = 0; k < neg.size(); ++k)
    k < hold_neg ? validation.push_back(data[neg[k]]) : fit.push_back(neg[k]);
  if (fit.empty()) throw TrainingError("validation split leaves no training samples");
  std::sort(fit.begin(), fit.end());

  TrainResult result;
  std::vector<Tensor> best;
  AdamState state;
  std::vector<const SampleWindow*> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(fit.begin(), fit.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < fit.size(); start += std::size_t(config.batch)) {
      const std::size_t stop = std::min(fit.size(), start + std::size_t(config.batch));
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) batch.push_back(&data[fit[k]]);
      for (Parameter& p : model.parameters()) p.zero_grad();
      const double loss = batch_objective(model, batch, config.l1);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches));
      adam_step(model.parameters(), state, config.adam);
      loss_sum += loss;
      ++batches;
    }

    EpochRecord record{epoch, loss_sum / double(batches), {}};
    if (!validation.empty()) record.validation = evaluate(model, validation, config.threshold);
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    if (validation.empty() || record.validation.f1 > result.best_f1) {
      result.best_f1 = record.validation.f1;
      result.best_epoch = epoch;
      best.clear();
      for (const Parameter& p : model.parameters()) best.push_back(p.value);
    }
  }

  if (!best.empty())
    for (std::size_t i = 0; i < best.size(); ++i) model.parameters()[i].value = std::move(best[i]);
  for (Parameter& p : model.parameters()) p.zero_grad();
  return result;
}

std::vector<double> confidences(const Model& model, const Dataset& data) {
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = model.confidence(data[i]);
  return out;
}

std::vector<std::uint8_t> labels_of(const Dataset& data) {
  std::vector<std::uint8_t> out;
  for (const SampleWindow& w : data) out.push_back(w.label);
  return out;
}

std::vector<double> distances_of(const Dataset& data) {
  std::vector<double> out;
  for (const SampleWindow& w : data) out.push_back(double(w.distance));
  return out;
}

Metrics evaluate(const Model& model, const Dataset& data, double threshold) {
  return score_metrics(confidences(model, data), labels_of(data), threshold);
}

double reduction_sparsity(const Model& model, double tolerance) {
  Index small = 0;
  Index total = 0;
  for (std::size_t i : model.reduction_parameters()) {
    const Tensor& w = model.parameters()[i].value;
    small += (w.data().array().abs() < tolerance).count();
    total += w.size();
  }
  return total == 0 ? 0.0 : double(small) / double(total);
}

}  // namespace opbil
