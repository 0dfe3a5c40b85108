#include "opbil/experiment.hpp"

#include "opbil/late_fusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

namespace opbil {

std::string_view to_string(InitMode mode) {
  return mode == InitMode::Random ? "random" : "from-checkpoints";
}

InitMode parse_init_mode(std::string_view name) {
  if (name == "random") return InitMode::Random;
  if (name == "from-checkpoints") return InitMode::FromCheckpoints;
  throw std::invalid_argument("unknown init mode '" + std::string(name) +
                              "' (expected random or from-checkpoints)");
}

Model initial_model(const ModelSpec& spec, InitMode init, const Model* visual,
                    const Model* seismic) {
  Model model = build_model(spec);
  if (init == InitMode::FromCheckpoints) {
    if (visual && uses_visual(spec.variant)) copy_stream_parameters(model, *visual);
    if (seismic && uses_seismic(spec.variant)) copy_stream_parameters(model, *seismic);
  }
  return model;
}

const VariantRun* CompareResult::find(std::string_view name) const {
  for (const VariantRun& r : runs)
    if (r.name == name) return &r;
  return nullptr;
}

VariantRun score_fused(std::string name, std::vector<double> scores, const Dataset& test,
                       double threshold, double radius) {
  VariantRun run;
  run.name = std::move(name);
  const auto labels = labels_of(test);
  const auto distances = distances_of(test);
  run.metrics = score_metrics(scores, labels, threshold);
  run.curve = pr_curve(scores, labels);
  std::vector<std::uint8_t> predicted;
  for (double s : scores) predicted.push_back(decide(s, threshold));
  const auto bands = default_bands(radius);
  run.bands = distance_stratified_recall(predicted, labels, distances, bands);
  run.scores = std::move(scores);
  return run;
}

VariantRun score_model(std::string name, const Model& model, const Dataset& test,
                       double threshold, double radius) {
  VariantRun run = score_fused(std::move(name), confidences(model, test), test, threshold, radius);
  run.parameters = model.parameter_count();
  run.sparsity = reduction_sparsity(model);
  return run;
}

CompareResult compare(const SimulatedDataset& data, const CompareConfig& config) {
  auto log = [&](const std::string& line) {
    if (config.log) config.log(line);
  };
  const auto wants = [&](Variant v) {
    return std::find(config.variants.begin(), config.variants.end(), v) != config.variants.end();
  };
  bool needs_streams = false;
  for (Variant v : config.variants)
    needs_streams = needs_streams || (is_fusion(v) && config.init == InitMode::FromCheckpoints);

  std::optional<Model> visual;
  std::optional<Model> seismic;
  std::vector<std::pair<Variant, VariantRun>> done;

  auto run_variant = [&](Variant v) -> const Model* {
    ModelSpec spec = config.base;
    spec.variant = v;
    spec.l1 = config.train.l1;
    Model model = initial_model(spec, config.init, visual ? &*visual : nullptr,
                                seismic ? &*seismic : nullptr);
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult tr = train(model, data.train, config.train);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    VariantRun run = score_model(std::string(to_string(v)), model, data.test,
                                 config.train.threshold, config.radius);
    run.training = std::move(tr);
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-18s f1=%.3f precision=%.3f recall=%.3f best_epoch=%d (%.1fs)",
                  run.name.c_str(), run.metrics.f1, run.metrics.precision, run.metrics.recall,
                  run.training.best_epoch, secs);
    log(buf);
    done.emplace_back(v, std::move(run));
    if (v == Variant::VisualOnly) return &visual.emplace(std::move(model));
    if (v == Variant::SeismicOnly) return &seismic.emplace(std::move(model));
    return nullptr;
  };

  // Single-modality models first: fusion variants may start from their streams.
  for (Variant v : {Variant::SeismicOnly, Variant::VisualOnly})
    if (wants(v) || needs_streams) run_variant(v);
  for (Variant v : config.variants)
    if (is_fusion(v)) run_variant(v);

  CompareResult result;
  for (Variant v : config.variants)
    for (auto& [dv, run] : done)
      if (dv == v) result.runs.push_back(run);

  if (visual && seismic && wants(Variant::VisualOnly) && wants(Variant::SeismicOnly)) {
    const auto cv = confidences(*visual, data.test);
    const auto cs = confidences(*seismic, data.test);
    std::vector<double> avg(cv.size());
    std::vector<double> ds(cv.size());
    long conflicts = 0;
    for (std::size_t i = 0; i < cv.size(); ++i) {
      avg[i] = average_fusion(cv[i], cs[i]);
      const DempsterResult r = dempster_shafer_combine(cv[i], config.u_visual, cs[i], config.u_seismic);
      conflicts += r.total_conflict ? 1 : 0;
      ds[i] = r.pignistic;
    }
    if (conflicts > 0)
      log("warning: " + std::to_string(conflicts) + " samples in total conflict scored 0.5");
    result.runs.push_back(
        score_fused("average-fusion", std::move(avg), data.test, config.train.threshold, config.radius));
    result.runs.push_back(
        score_fused("dempster-shafer", std::move(ds), data.test, config.train.threshold, config.radius));
  }
  return result;
}

ModelSpec gradcheck_spec(Variant variant, std::uint64_t seed) {
  ModelSpec s;
  s.variant = variant;
  s.visual_size = 8;
  s.seismic_length = 32;
  s.visual_stream = {{3, 3, 1}, {3, 4, 2}};   // 4 x 4 x 4
  s.seismic_stream = {{4, 3, 2}, {3, 4, 2}};  // 8 x 4
  s.reduced_visual = 2;
  s.reduced_seismic = 3;
  s.head3d = {{2, 3, 1}, {2, 3, 2}};          // 3x3x7 then 1x1x3
  s.fc_hidden = 4;
  s.seed = seed;
  return s;
}

namespace {

SampleWindow random_window(const ModelSpec& spec, std::mt19937_64& rng, std::uint8_t label) {
  // Strictly positive inputs, like optical-flow magnitudes.
  std::uniform_real_distribution<float> u(0.05f, 1.0f);
  SampleWindow w;
  w.visual = TensorF({spec.visual_size, spec.visual_size});
  for (Index i = 0; i < w.visual.size(); ++i) w.visual[i] = u(rng);
  w.seismic = TensorF({spec.seismic_length});
  for (Index i = 0; i < w.seismic.size(); ++i) w.seismic[i] = u(rng);
  w.label = label;
  return w;
}

double objective(Model& model, const SampleWindow& sample, bool with_grad, double* margin) {
  Tape tape;
  Var loss = softmax_cross_entropy(model.forward(tape, sample), sample.label);
  if (!model.reduction_parameters().empty()) loss = add(loss, model.regularizer(tape));
  if (with_grad) tape.backward(loss);
  if (margin) *margin = tape.min_relu_margin();
  return loss.value()[0];
}

double reduction_margin(const Model& model) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i : model.reduction_parameters())
    m = std::min(m, model.parameters()[i].value.data().cwiseAbs().minCoeff());
  return m;
}

}  // namespace

VariantCheck gradcheck_variant(Variant variant, std::uint64_t seed, int samples, double epsilon,
                               double margin) {
  VariantCheck check;
  check.variant = variant;
  check.samples = samples;

  std::uint64_t model_seed = seed;
  Model model = build_model(gradcheck_spec(variant, model_seed));
  while (reduction_margin(model) < margin) model = build_model(gradcheck_spec(variant, ++model_seed));
  // Zero biases would leave exact-zero pre-activations that a bias nudge turns into kinks.
  std::mt19937_64 bias_rng(model_seed);
  std::uniform_real_distribution<double> bias(0.02, 0.1);
  for (Parameter& p : model.parameters())
    if (p.name.ends_with(".bias"))
      for (Index i = 0; i < p.value.size(); ++i) p.value[i] = bias(bias_rng);

  for (const Parameter& p : model.parameters()) check.parameters.push_back({p.name, {}});

  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + std::uint64_t(variant));
  for (int s = 0; s < samples; ++s) {
    SampleWindow sample;
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw std::runtime_error("gradcheck: no sample clear of relu kinks");
      sample = random_window(model.spec(), rng, std::uint8_t(s % 2));
      double m = 0.0;
      objective(model, sample, false, &m);
      if (m >= margin) break;
    }

    for (std::size_t pi = 0; pi < model.parameters().size(); ++pi) {
      Parameter& p = model.parameters()[pi];
      const Tensor original = p.value;
      const ValueAndGradient f = [&](const Tensor& point, Tensor* grad) {
        p.value = point;
        if (!grad) return objective(model, sample, false, nullptr);
        for (Parameter& q : model.parameters()) q.zero_grad();
        const double v = objective(model, sample, true, nullptr);
        *grad = p.grad;
        return v;
      };
      GradCheckResult r = finite_difference_check(f, original, epsilon);
      p.value = original;
      GradCheckResult& worst = check.parameters[pi].result;
      if (s == 0) {
        worst = r;
        continue;
      }
      std::vector<Index> non_finite = worst.non_finite;
      non_finite.insert(non_finite.end(), r.non_finite.begin(), r.non_finite.end());
      if (r.max_rel_error > worst.max_rel_error) worst = r;
      worst.non_finite = std::move(non_finite);
    }
  }
  for (const ParameterCheck& pc : check.parameters)
    check.max_rel_error = std::max(check.max_rel_error, pc.result.max_rel_error);
  return check;
}

}  // namespace opbil
