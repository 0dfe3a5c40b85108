#include <doctest.h>

#include "opbil/experiment.hpp"
#include "opbil/fusion.hpp"
#include "opbil/model.hpp"
#include "opbil/ops.hpp"

#include <cmath>
#include <random>

using namespace opbil;

namespace {

SampleWindow random_sample(const ModelSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  SampleWindow w;
  w.visual = TensorF({spec.visual_size, spec.visual_size});
  for (Index i = 0; i < w.visual.size(); ++i) w.visual[i] = u(rng);
  w.seismic = TensorF({spec.seismic_length});
  for (Index i = 0; i < w.seismic.size(); ++i) w.seismic[i] = u(rng) - 0.5f;
  return w;
}

const Tensor& param(const Model& m, const std::string& name) {
  const Parameter* p = m.find(name);
  REQUIRE(p != nullptr);
  return p->value;
}

Tensor conv_relu2(const Tensor& x, const Model& m, const std::string& layer, Index stride) {
  return relu(add_bias(conv2d(x, param(m, layer + ".weight"), stride, Padding::Same),
                       param(m, layer + ".bias")));
}

Tensor conv_relu1(const Tensor& x, const Model& m, const std::string& layer, Index stride) {
  return relu(add_bias(conv1d(x, param(m, layer + ".weight"), stride, Padding::Same),
                       param(m, layer + ".bias")));
}

}  // namespace

TEST_CASE("default op-bilinear shapes") {
  const Model m = build_model(ModelSpec{});
  CHECK(m.output_shape("visual.conv2") == Shape{8, 8, 32});
  CHECK(m.output_shape("seismic.conv2") == Shape{16, 32});
  CHECK(m.output_shape("reduce.visual") == Shape{8, 8, 8});
  CHECK(m.output_shape("reduce.seismic") == Shape{16, 8});
  CHECK(m.output_shape("fusion") == Shape{8, 8, 16, 64});
  CHECK(m.output_shape("head.conv3d0") == Shape{6, 6, 14, 8});
  CHECK(m.output_shape("head.conv3d1") == Shape{2, 2, 6, 8});
  CHECK(m.output_shape("head.out") == Shape{2});
  Index total = 0;
  for (const Parameter& p : m.parameters()) total += p.value.size();
  CHECK(m.parameter_count() == total);
}

TEST_CASE("identical spec and seed give bit-identical parameters") {
  for (Variant v : kAllVariants) {
    ModelSpec spec;
    spec.variant = v;
    const Model a = build_model(spec), b = build_model(spec);
    REQUIRE(a.parameters().size() == b.parameters().size());
    for (std::size_t i = 0; i < a.parameters().size(); ++i)
      CHECK(a.parameters()[i].value == b.parameters()[i].value);
  }
  ModelSpec other;
  other.seed = 8;
  CHECK_FALSE(build_model(other).parameters()[0].value == build_model(ModelSpec{}).parameters()[0].value);
}

TEST_CASE("single-modality models carry only their own stream") {
  ModelSpec spec;
  spec.variant = Variant::VisualOnly;
  for (const Parameter& p : build_model(spec).parameters()) {
    CHECK_FALSE(p.name.starts_with("seismic."));
    CHECK_FALSE(p.name.starts_with("reduce."));
  }
  spec.variant = Variant::SeismicOnly;
  for (const Parameter& p : build_model(spec).parameters()) CHECK_FALSE(p.name.starts_with("visual."));
}

TEST_CASE("variant names round-trip") {
  for (Variant v : kAllVariants) CHECK(parse_variant(to_string(v)) == v);
  CHECK(to_string(Variant::OpBilinear) == "op-bilinear");
  CHECK_THROWS_AS(parse_variant("op_bilinear"), std::invalid_argument);
}

TEST_CASE("every variant gives finite, deterministic logits") {
  for (Variant v : kAllVariants) {
    ModelSpec spec;
    spec.variant = v;
    const Model m = build_model(spec);
    SampleWindow zero;
    zero.visual = TensorF({32, 32});
    zero.seismic = TensorF({256});
    CHECK(m.logits(zero).all_finite());
    const SampleWindow s = random_sample(spec, 3);
    const Tensor a = m.logits(s);
    CHECK(a == m.logits(s));
    CHECK(a.shape() == Shape{2});
    const double c = m.confidence(s);
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);

    Model trainable = build_model(spec);
    Tape tape;
    CHECK(trainable.forward(tape, s).value() == a);
  }
}

TEST_CASE("op-bilinear forward equals a straight-line evaluation") {
  const ModelSpec spec;
  const Model m = build_model(spec);
  const SampleWindow s = random_sample(spec, 9);

  Tensor x = s.visual.cast<double>().reshaped({32, 32, 1});
  x = conv_relu2(x, m, "visual.conv0", 1);
  x = conv_relu2(x, m, "visual.conv1", 2);
  x = conv_relu2(x, m, "visual.conv2", 2);
  Tensor z = s.seismic.cast<double>().reshaped({256, 1});
  z = conv_relu1(z, m, "seismic.conv0", 4);
  z = conv_relu1(z, m, "seismic.conv1", 2);
  z = conv_relu1(z, m, "seismic.conv2", 2);

  // Reduction and fusion written out by hand.
  const Tensor& wx = param(m, "reduce.visual");
  const Tensor& wz = param(m, "reduce.seismic");
  Tensor xr({8, 8, 8}), zr({16, 8});
  for (Index u = 0; u < 8; ++u)
    for (Index v = 0; v < 8; ++v)
      for (Index i = 0; i < 8; ++i) {
        double acc = 0.0;
        for (Index k = 0; k < 32; ++k) acc += wx(i, k) * x(u, v, k);
        xr(u, v, i) = std::max(0.0, acc);
      }
  for (Index t = 0; t < 16; ++t)
    for (Index j = 0; j < 8; ++j) {
      double acc = 0.0;
      for (Index k = 0; k < 32; ++k) acc += wz(j, k) * z(t, k);
      zr(t, j) = std::max(0.0, acc);
    }
  Tensor fused({8, 8, 16, 64});
  for (Index u = 0; u < 8; ++u)
    for (Index v = 0; v < 8; ++v)
      for (Index t = 0; t < 16; ++t)
        for (Index i = 0; i < 8; ++i)
          for (Index j = 0; j < 8; ++j) fused(u, v, t, i * 8 + j) = xr(u, v, i) * zr(t, j);

  Tensor h = relu(add_bias(conv3d(fused, param(m, "head.conv3d0.weight"), 1), param(m, "head.conv3d0.bias")));
  h = relu(add_bias(conv3d(h, param(m, "head.conv3d1.weight"), 2), param(m, "head.conv3d1.bias")));
  const Tensor pooled = global_average_pool(h);
  const Tensor logits = dense(pooled, param(m, "head.out.weight"), param(m, "head.out.bias"));
  CHECK(max_abs_diff(logits, m.logits(s)) < 1e-10);
}

TEST_CASE("inconsistent specs name the first failing layer") {
  ModelSpec spec;
  spec.head3d = {{3, 8, 1}, {9, 8, 1}};
  try {
    build_model(spec);
    FAIL("expected ModelSpecError");
  } catch (const ModelSpecError& e) {
    CHECK(std::string(e.what()).find("head.conv3d1") != std::string::npos);
  }
  spec = ModelSpec{};
  spec.reduced_visual = 64;
  CHECK_THROWS_WITH_AS(build_model(spec), doctest::Contains("reduce.visual"), ModelSpecError);
}

TEST_CASE("wrong input size is rejected") {
  const Model m = build_model(ModelSpec{});
  SampleWindow s;
  s.visual = TensorF({16, 16});
  s.seismic = TensorF({256});
  CHECK_THROWS_AS(m.logits(s), ShapeError);
}

TEST_CASE("stream parameters copy between variants") {
  ModelSpec spec;
  spec.variant = Variant::VisualOnly;
  spec.seed = 99;
  const Model visual = build_model(spec);
  Model fused = build_model(ModelSpec{});
  CHECK(copy_stream_parameters(fused, visual) == 6);
  CHECK(param(fused, "visual.conv1.weight") == param(visual, "visual.conv1.weight"));
}

TEST_CASE("initialisation scales") {
  const Model m = build_model(ModelSpec{});
  const Tensor& w = param(m, "head.conv3d0.weight");  // fan_in = 27 * 64
  const double var = w.data().squaredNorm() / double(w.size());
  CHECK(var == doctest::Approx(2.0 / (27.0 * 64.0)).epsilon(0.1));
  const Tensor& r = param(m, "reduce.visual");
  CHECK(r.data().cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(32.0));
  CHECK(param(m, "visual.conv0.bias") == Tensor({8}));
}

TEST_CASE("every parameter gradient of a small model matches finite differences") {
  for (Variant v : kAllVariants) {
    const VariantCheck check = gradcheck_variant(v, 5, 1);
    for (const ParameterCheck& p : check.parameters) {
      INFO(to_string(v), " ", p.parameter);
      CHECK(p.result.passed(1e-4));
    }
  }
}
