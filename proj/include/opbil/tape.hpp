#ifndef OPBIL_TAPE_HPP
#define OPBIL_TAPE_HPP

#include "opbil/ops.hpp"
#include "opbil/tensor.hpp"

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace opbil {

/// A trainable tensor together with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string name_, Tensor value_)
      : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

  void zero_grad() { grad.data().setZero(); }
};

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Gradient after Tape::backward; empty when the node was not reached.
  const Tensor& grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Everything a primitive's backward rule can see. `grads[i]` is null when
/// input i does not require a gradient; otherwise it is a zero-initialised (or
/// partially accumulated) buffer the rule must add into.
struct BackwardContext {
  std::span<const Tensor* const> inputs;
  const Tensor& output;
  const Tensor& upstream;
  std::span<Tensor* const> grads;
};

/// Linear record of a forward computation. Nodes are appended in evaluation
/// order, so the entry list is already topologically sorted and backward is a
/// single reverse sweep that visits each node once.
class Tape {
 public:
  using BackwardFn = std::function<void(const BackwardContext&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that owns its value and takes no gradient.
  Var constant(Tensor value);
  /// Leaf that refers to an external tensor; the referent must outlive the tape.
  Var constant_ref(const Tensor& value);
  /// Leaf bound to a Parameter; backward adds into parameter.grad.
  Var parameter(Parameter& parameter);
  /// Leaf whose gradient is kept on the tape (used by gradient checks).
  Var variable(Tensor value);

  Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = seed and propagates to every leaf. Parameter
  /// accumulators receive the gradient; node gradients are reset first, so
  /// calling backward twice yields identical node gradients.
  void backward(Var loss, double seed = 1.0);

  const Tensor& value(std::size_t id) const;
  const Tensor& grad(std::size_t id) const;
  std::size_t size() const { return entries_.size(); }
  const std::string& op(std::size_t id) const { return entries_.at(id).op; }

  /// Smallest nonzero |pre-activation| seen by any relu on this tape. Exact
  /// zeros come from all-zero receptive fields of bias-free or zero-bias units.
  double min_relu_margin() const { return min_relu_margin_; }
  void note_relu_input(const Tensor& input);

 private:
  struct Entry {
    std::string op;
    std::vector<std::size_t> inputs;
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Parameter* parameter = nullptr;
    BackwardFn backward;

    const Tensor& value() const { return external ? *external : owned; }
  };

  Var push(Entry entry);

  std::vector<Entry> entries_;
  double min_relu_margin_ = std::numeric_limits<double>::infinity();
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline const Tensor& Var::grad() const { return tape_->grad(id_); }

// Differentiable primitives. Each records one tape entry whose backward rule
// calls the matching kernel in ops.hpp.

Var conv1d(Var input, Var kernel, Index stride = 1, Padding padding = Padding::Valid);
Var conv2d(Var input, Var kernel, Index stride = 1, Padding padding = Padding::Valid);
Var conv3d(Var input, Var kernel, Index stride = 1, Padding padding = Padding::Valid);
Var add_bias(Var input, Var bias);
Var relu(Var input);
Var dense(Var input, Var weights, Var bias);
Var reshape(Var input, Shape shape);
Var global_average_pool(Var input);
Var softmax_cross_entropy(Var logits, int label);
Var sum(Var input);
Var add(Var a, Var b);
Var scale(Var input, double factor);

}  // namespace opbil

#endif  // OPBIL_TAPE_HPP
