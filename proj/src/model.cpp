#include "opbil/model.hpp"

#include "opbil/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace opbil {

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::SeismicOnly: return "seismic-only";
    case Variant::VisualOnly: return "visual-only";
    case Variant::OpBilinear: return "op-bilinear";
    case Variant::ConcatFc: return "concat-fc";
    case Variant::OpConcat: return "op-concat";
    case Variant::BilinearFc: return "bilinear-fc";
    case Variant::OrderlessBilinear: return "orderless-bilinear";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (to_string(v) == name) return v;
  throw std::invalid_argument("unknown model variant '" + std::string(name) + "'");
}

bool uses_visual(Variant variant) { return variant != Variant::SeismicOnly; }
bool uses_seismic(Variant variant) { return variant != Variant::VisualOnly; }
bool is_fusion(Variant variant) { return uses_visual(variant) && uses_seismic(variant); }

namespace {

bool has_3d_head(Variant v) { return v == Variant::OpBilinear || v == Variant::OpConcat; }

void fail(const std::string& layer, const std::string& what) {
  throw ModelSpecError("layer " + layer + ": " + what);
}

}  // namespace

std::size_t Model::add_parameter(std::string name, Shape shape) {
  params_.emplace_back(std::move(name), Tensor(std::move(shape)));
  return params_.size() - 1;
}

Parameter* Model::find(std::string_view name) {
  for (Parameter& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

const Parameter* Model::find(std::string_view name) const {
  return const_cast<Model*>(this)->find(name);
}

Index Model::parameter_count() const {
  Index n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

Shape Model::output_shape(std::string_view layer) const {
  for (const LayerShape& s : shapes_)
    if (s.name == layer) return s.shape;
  throw std::out_of_range("no layer named " + std::string(layer));
}

Model build_model(const ModelSpec& spec) {
  Model model;
  model.spec_ = spec;
  const Variant v = spec.variant;
  auto record = [&](std::string name, Shape shape) {
    model.shapes_.push_back({std::move(name), std::move(shape)});
  };

  Shape visual;
  Shape seismic;
  if (uses_visual(v)) {
    if (spec.visual_size <= 0) fail("visual.input", "visual size must be positive");
    visual = {spec.visual_size, spec.visual_size, 1};
    record("visual.input", visual);
    for (std::size_t i = 0; i < spec.visual_stream.size(); ++i) {
      const ConvLayer& c = spec.visual_stream[i];
      const std::string name = "visual.conv" + std::to_string(i);
      if (c.kernel <= 0 || c.channels <= 0 || c.stride <= 0)
        fail(name, "kernel, channels and stride must be positive");
      model.add_parameter(name + ".weight", {c.kernel, c.kernel, visual[2], c.channels});
      model.add_parameter(name + ".bias", {c.channels});
      visual = {conv_output_extent(visual[0], c.kernel, c.stride, Padding::Same),
                conv_output_extent(visual[1], c.kernel, c.stride, Padding::Same), c.channels};
      record(name, visual);
    }
  }
  if (uses_seismic(v)) {
    if (spec.seismic_length <= 0) fail("seismic.input", "seismic length must be positive");
    seismic = {spec.seismic_length, 1};
    record("seismic.input", seismic);
    for (std::size_t i = 0; i < spec.seismic_stream.size(); ++i) {
      const ConvLayer& c = spec.seismic_stream[i];
      const std::string name = "seismic.conv" + std::to_string(i);
      if (c.kernel <= 0 || c.channels <= 0 || c.stride <= 0)
        fail(name, "kernel, channels and stride must be positive");
      model.add_parameter(name + ".weight", {c.kernel, seismic[1], c.channels});
      model.add_parameter(name + ".bias", {c.channels});
      seismic = {conv_output_extent(seismic[0], c.kernel, c.stride, Padding::Same), c.channels};
      record(name, seismic);
    }
  }

  Shape features;
  if (is_fusion(v)) {
    const Index n = spec.reduced_visual, m = spec.reduced_seismic;
    if (n <= 0 || n >= visual[2])
      fail("reduce.visual", "reduced depth " + std::to_string(n) + " must lie in (0, " +
                                std::to_string(visual[2]) + ")");
    if (m <= 0 || m >= seismic[1])
      fail("reduce.seismic", "reduced depth " + std::to_string(m) + " must lie in (0, " +
                                 std::to_string(seismic[1]) + ")");
    if (spec.l1 < 0.0) fail("reduce.visual", "l1 coefficient must be nonnegative");
    model.reduction_.push_back(model.add_parameter("reduce.visual", {n, visual[2]}));
    model.reduction_.push_back(model.add_parameter("reduce.seismic", {m, seismic[1]}));
    record("reduce.visual", {visual[0], visual[1], n});
    record("reduce.seismic", {seismic[0], m});

    const Index u = visual[0], vv = visual[1], t = seismic[0];
    switch (v) {
      case Variant::OpBilinear:
      case Variant::BilinearFc: features = {u, vv, t, n * m}; break;
      case Variant::OpConcat: features = {u, vv, t, n + m}; break;
      case Variant::ConcatFc: features = {u * vv * t * (n + m)}; break;
      case Variant::OrderlessBilinear: features = {n * m}; break;
      default: break;
    }
    record("fusion", features);
  } else {
    features = uses_visual(v) ? visual : seismic;
  }

  if (has_3d_head(v)) {
    for (std::size_t i = 0; i < spec.head3d.size(); ++i) {
      const ConvLayer& c = spec.head3d[i];
      const std::string name = "head.conv3d" + std::to_string(i);
      if (c.kernel <= 0 || c.channels <= 0 || c.stride <= 0)
        fail(name, "kernel, channels and stride must be positive");
      for (int a = 0; a < 3; ++a)
        if (c.kernel > features[std::size_t(a)])
          fail(name, "kernel " + std::to_string(c.kernel) + " exceeds input axis " +
                         std::to_string(a) + " extent " + std::to_string(features[std::size_t(a)]));
      model.add_parameter(name + ".weight",
                          {c.kernel, c.kernel, c.kernel, features[3], c.channels});
      model.add_parameter(name + ".bias", {c.channels});
      for (int a = 0; a < 3; ++a)
        features[std::size_t(a)] =
            conv_output_extent(features[std::size_t(a)], c.kernel, c.stride, Padding::Valid);
      features[3] = c.channels;
      record(name, features);
    }
    record("head.pool", {features[3]});
    model.add_parameter("head.out.weight", {2, features[3]});
    model.add_parameter("head.out.bias", {2});
    record("head.out", {2});
  } else {
    if (spec.fc_hidden <= 0) fail("head.fc0", "hidden width must be positive");
    const Index flat = shape_size(features);
    model.add_parameter("head.fc0.weight", {spec.fc_hidden, flat});
    model.add_parameter("head.fc0.bias", {spec.fc_hidden});
    record("head.fc0", {spec.fc_hidden});
    model.add_parameter("head.fc1.weight", {2, spec.fc_hidden});
    model.add_parameter("head.fc1.bias", {2});
    record("head.fc1", {2});
  }

  std::mt19937_64 rng(spec.seed);
  for (Parameter& p : model.params_) {
    const Shape& s = p.value.shape();
    if (p.name.ends_with(".bias")) continue;
    if (p.name.starts_with("reduce.")) {
      const double a = 1.0 / std::sqrt(double(s.back()));
      std::uniform_real_distribution<double> dist(-a, a);
      for (Index i = 0; i < p.value.size(); ++i) p.value[i] = dist(rng);
      continue;
    }
    // Conv kernels put fan-in in every axis but the last; dense weights are out x in.
    const Index fan_in = s.size() == 2 ? s[1] : shape_size(s) / s.back();
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
    for (Index i = 0; i < p.value.size(); ++i) p.value[i] = dist(rng);
  }
  return model;
}

template <typename Bind>
Var Model::forward_impl(Tape& tape, const SampleWindow& sample, Bind&& bind,
                        StreamOutput* streams) const {
  const Variant v = spec_.variant;
  std::size_t cursor = 0;
  auto next = [&]() { return bind(cursor++); };

  Var visual;
  Var seismic;
  if (uses_visual(v)) {
    if (sample.visual.shape() != Shape{spec_.visual_size, spec_.visual_size})
      throw ShapeError("forward: visual input " + shape_string(sample.visual.shape()) +
                       " does not match model input size " + std::to_string(spec_.visual_size));
    visual = tape.constant(visual_input(sample));
    for (const ConvLayer& c : spec_.visual_stream) {
      Var w = next();
      Var b = next();
      visual = relu(add_bias(conv2d(visual, w, c.stride, Padding::Same), b));
    }
  }
  if (uses_seismic(v)) {
    if (sample.seismic.shape() != Shape{spec_.seismic_length})
      throw ShapeError("forward: seismic input " + shape_string(sample.seismic.shape()) +
                       " does not match model input length " +
                       std::to_string(spec_.seismic_length));
    seismic = tape.constant(seismic_input(sample));
    for (const ConvLayer& c : spec_.seismic_stream) {
      Var w = next();
      Var b = next();
      seismic = relu(add_bias(conv1d(seismic, w, c.stride, Padding::Same), b));
    }
  }
  if (streams) {
    if (uses_visual(v)) streams->visual = visual.value();
    if (uses_seismic(v)) streams->seismic = seismic.value();
  }

  Var features;
  if (is_fusion(v)) {
    Var x = sparse_reduce(visual, next());
    Var z = sparse_reduce(seismic, next());
    switch (v) {
      case Variant::OpBilinear: {
        // First head layer straight from (x, z); same values as conv3d over the fused tensor.
        const ConvLayer& c = spec_.head3d.front();
        Var w = next();
        Var b = next();
        features = relu(add_bias(op_bilinear_conv3d(x, z, w, c.stride), b));
        break;
      }
      case Variant::BilinearFc: features = op_bilinear_fuse(x, z); break;
      case Variant::OpConcat: features = op_concatenate(x, z); break;
      case Variant::ConcatFc: features = flat_concatenate(x, z); break;
      case Variant::OrderlessBilinear: features = orderless_bilinear_pool(x, z); break;
      default: break;
    }
  } else {
    features = uses_visual(v) ? visual : seismic;
  }

  if (has_3d_head(v)) {
    const std::size_t first = v == Variant::OpBilinear ? 1 : 0;
    for (std::size_t l = first; l < spec_.head3d.size(); ++l) {
      const ConvLayer& c = spec_.head3d[l];
      Var w = next();
      Var b = next();
      features = relu(add_bias(conv3d(features, w, c.stride, Padding::Valid), b));
    }
    Var pooled = global_average_pool(features);
    Var w = next();
    Var b = next();
    return dense(pooled, w, b);
  }
  Var flat = reshape(features, {features.value().size()});
  Var w0 = next();
  Var b0 = next();
  Var hidden = relu(dense(flat, w0, b0));
  Var w1 = next();
  Var b1 = next();
  return dense(hidden, w1, b1);
}

Var Model::forward(Tape& tape, const SampleWindow& sample) {
  return forward_impl(
      tape, sample, [&](std::size_t i) { return tape.parameter(params_.at(i)); }, nullptr);
}

Tensor Model::logits(const SampleWindow& sample) const {
  Tape tape;
  return forward_impl(
             tape, sample, [&](std::size_t i) { return tape.constant_ref(params_.at(i).value); },
             nullptr)
      .value();
}

double Model::confidence(const SampleWindow& sample) const { return softmax(logits(sample))[1]; }

StreamOutput Model::streams(const SampleWindow& sample) const {
  Tape tape;
  StreamOutput out;
  forward_impl(
      tape, sample, [&](std::size_t i) { return tape.constant_ref(params_.at(i).value); }, &out);
  return out;
}

Var Model::regularizer(Tape& tape) {
  Var total;
  bool first = true;
  for (std::size_t i : reduction_) {
    Var term = l1_penalty(tape.parameter(params_[i]), spec_.l1);
    total = first ? term : add(total, term);
    first = false;
  }
  return total;
}

std::size_t copy_stream_parameters(Model& target, const Model& source) {
  std::size_t copied = 0;
  for (Parameter& p : target.parameters()) {
    if (!p.name.starts_with("visual.") && !p.name.starts_with("seismic.")) continue;
    const Parameter* src = source.find(p.name);
    if (!src || src->value.shape() != p.value.shape()) continue;
    p.value = src->value;
    ++copied;
  }
  return copied;
}

Tensor visual_input(const SampleWindow& sample) {
  const TensorF& img = sample.visual;
  if (img.rank() != 2) throw ShapeError("visual input must be H x W");
  return img.cast<double>().reshaped({img.dim(0), img.dim(1), 1});
}

Tensor seismic_input(const SampleWindow& sample) {
  const TensorF& trace = sample.seismic;
  if (trace.rank() != 1) throw ShapeError("seismic input must be a 1-D trace");
  return trace.cast<double>().reshaped({trace.dim(0), 1});
}

}  // namespace opbil
