#ifndef OPBIL_MODEL_HPP
#define OPBIL_MODEL_HPP

#include "opbil/sample.hpp"
#include "opbil/tape.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace opbil {

enum class Variant {
  SeismicOnly,
  VisualOnly,
  OpBilinear,
  ConcatFc,
  OpConcat,
  BilinearFc,
  OrderlessBilinear,
};

inline constexpr Variant kAllVariants[] = {
    Variant::SeismicOnly, Variant::VisualOnly,  Variant::OpBilinear,        Variant::ConcatFc,
    Variant::OpConcat,    Variant::BilinearFc, Variant::OrderlessBilinear,
};

std::string_view to_string(Variant variant);
/// Accepts the dashed names used on the command line, e.g. "op-bilinear".
Variant parse_variant(std::string_view name);

bool uses_visual(Variant variant);
bool uses_seismic(Variant variant);
/// Variants that reduce both streams and fuse them.
bool is_fusion(Variant variant);

class ModelSpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ConvLayer {
  Index kernel = 3;
  Index channels = 8;
  Index stride = 1;

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

/// Declarative description of one model variant. Streams use same padding;
/// the 3D head uses valid padding.
struct ModelSpec {
  Variant variant = Variant::OpBilinear;
  Index visual_size = 32;
  Index seismic_length = 256;
  std::vector<ConvLayer> visual_stream{{3, 8, 1}, {3, 16, 2}, {3, 32, 2}};
  std::vector<ConvLayer> seismic_stream{{8, 8, 4}, {5, 16, 2}, {5, 32, 2}};
  Index reduced_visual = 8;   // N
  Index reduced_seismic = 8;  // M
  double l1 = 1e-3;
  std::vector<ConvLayer> head3d{{3, 8, 1}, {3, 8, 2}};
  Index fc_hidden = 16;
  std::uint64_t seed = 7;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct LayerShape {
  std::string name;
  Shape shape;
};

/// Stream outputs before feature selection.
struct StreamOutput {
  Tensor visual;   // U x V x N'
  Tensor seismic;  // T x M'
};

class Model {
 public:
  const ModelSpec& spec() const { return spec_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Index parameter_count() const;

  /// Output shape of every layer, in evaluation order.
  const std::vector<LayerShape>& layer_shapes() const { return shapes_; }
  Shape output_shape(std::string_view layer) const;

  /// Records the forward pass with trainable parameters; returns 2 logits.
  Var forward(Tape& tape, const SampleWindow& sample);
  /// Inference without gradient bookkeeping. Safe to call concurrently.
  Tensor logits(const SampleWindow& sample) const;
  /// softmax(logits)[1]
  double confidence(const SampleWindow& sample) const;
  StreamOutput streams(const SampleWindow& sample) const;

  /// Sum of l1 penalties over the reduction layers, or an empty Var when the
  /// variant has none.
  std::vector<std::size_t> reduction_parameters() const { return reduction_; }
  Var regularizer(Tape& tape);

 private:
  friend Model build_model(const ModelSpec& spec);

  template <typename Bind>
  Var forward_impl(Tape& tape, const SampleWindow& sample, Bind&& bind,
                   StreamOutput* streams) const;

  std::size_t add_parameter(std::string name, Shape shape);

  ModelSpec spec_;
  std::vector<Parameter> params_;
  std::vector<LayerShape> shapes_;
  std::vector<std::size_t> reduction_;
};

/// Validates the ModelSpec by propagating shapes, then creates parameters in
/// declaration order. Conv and dense weights are He-normal, biases zero,
/// reduction weights uniform in +-1/sqrt(fan_in). The seed fully determines
/// the result.
Model build_model(const ModelSpec& spec);

/// Copies every stream parameter ("visual.*" / "seismic.*") from `source` into
/// `target` when names and shapes agree. Returns the number copied.
std::size_t copy_stream_parameters(Model& target, const Model& source);

Tensor visual_input(const SampleWindow& sample);
Tensor seismic_input(const SampleWindow& sample);

}  // namespace opbil

#endif  // OPBIL_MODEL_HPP
