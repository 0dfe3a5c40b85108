#include "opbil/tape.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace opbil {

Var Tape::push(Entry entry) {
  entries_.push_back(std::move(entry));
  return Var(this, entries_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Entry e;
  e.op = "constant";
  e.owned = std::move(value);
  return push(std::move(e));
}

Var Tape::constant_ref(const Tensor& value) {
  Entry e;
  e.op = "constant";
  e.external = &value;
  return push(std::move(e));
}

Var Tape::parameter(Parameter& parameter) {
  Entry e;
  e.op = "parameter:" + parameter.name;
  e.external = &parameter.value;
  e.parameter = &parameter;
  e.requires_grad = true;
  return push(std::move(e));
}

Var Tape::variable(Tensor value) {
  Entry e;
  e.op = "variable";
  e.owned = std::move(value);
  e.requires_grad = true;
  return push(std::move(e));
}

Var Tape::record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Entry e;
  e.op = std::move(op);
  e.owned = std::move(value);
  e.backward = std::move(backward);
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw std::logic_error("record: input from another tape");
    e.inputs.push_back(in.id());
    e.requires_grad = e.requires_grad || entries_[in.id()].requires_grad;
  }
  return push(std::move(e));
}

const Tensor& Tape::value(std::size_t id) const { return entries_.at(id).value(); }
const Tensor& Tape::grad(std::size_t id) const { return entries_.at(id).grad; }

void Tape::note_relu_input(const Tensor& input) {
  if (input.size() == 0) return;
  for (double v : input.data())
    if (v != 0.0) min_relu_margin_ = std::min(min_relu_margin_, std::abs(v));
}

void Tape::backward(Var loss, double seed) {
  if (&loss.tape() != this) throw std::logic_error("backward: loss from another tape");
  if (loss.value().size() != 1)
    throw ShapeError("backward: loss must be scalar, got " + shape_string(loss.shape()));
  for (Entry& e : entries_) e.grad = Tensor();

  entries_[loss.id()].grad = Tensor::constant(loss.shape(), seed);
  std::vector<const Tensor*> inputs;
  std::vector<Tensor*> grads;

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Entry& e = entries_[id];
    if (e.grad.empty() || !e.requires_grad) continue;
    if (e.parameter) {
      e.parameter->grad.data() += e.grad.data();
      continue;
    }
    if (!e.backward) continue;

    inputs.clear();
    grads.clear();
    for (std::size_t in : e.inputs) {
      if (in >= id) throw std::logic_error("backward: tape is not topologically ordered");
      Entry& src = entries_[in];
      inputs.push_back(&src.value());
      if (src.requires_grad) {
        if (src.grad.empty()) src.grad = Tensor(src.value().shape());
        grads.push_back(&src.grad);
      } else {
        grads.push_back(nullptr);
      }
    }
    e.backward(BackwardContext{inputs, e.value(), e.grad, grads});
  }
}

namespace {

template <typename ConvFn, typename BackFn>
Var conv_node(const char* name, Var input, Var kernel, Index stride, Padding padding,
              ConvFn&& fwd, BackFn&& bwd) {
  // The patch matrix is the saved forward value this node needs in backward.
  auto patches = std::make_shared<ConvPatches>();
  Tensor out = fwd(input.value(), kernel.value(), stride, padding, patches.get());
  return input.tape().record(
      name, std::move(out), {input, kernel},
      [stride, padding, bwd, patches](const BackwardContext& ctx) {
        ConvGrads g =
            bwd(*ctx.inputs[0], *ctx.inputs[1], ctx.upstream, stride, padding, patches.get());
        if (ctx.grads[0]) ctx.grads[0]->data() += g.input.data();
        if (ctx.grads[1]) ctx.grads[1]->data() += g.kernel.data();
      });
}

}  // namespace

Var conv1d(Var input, Var kernel, Index stride, Padding padding) {
  return conv_node(
      "conv1d", input, kernel, stride, padding,
      [](const Tensor& x, const Tensor& k, Index s, Padding p, ConvPatches* keep) {
        return conv1d(x, k, s, p, keep);
      },
      [](const Tensor& x, const Tensor& k, const Tensor& u, Index s, Padding p,
         const ConvPatches* cached) { return conv1d_backward(x, k, u, s, p, cached); });
}

Var conv2d(Var input, Var kernel, Index stride, Padding padding) {
  return conv_node(
      "conv2d", input, kernel, stride, padding,
      [](const Tensor& x, const Tensor& k, Index s, Padding p, ConvPatches* keep) {
        return conv2d(x, k, s, p, keep);
      },
      [](const Tensor& x, const Tensor& k, const Tensor& u, Index s, Padding p,
         const ConvPatches* cached) { return conv2d_backward(x, k, u, s, p, cached); });
}

Var conv3d(Var input, Var kernel, Index stride, Padding padding) {
  return conv_node(
      "conv3d", input, kernel, stride, padding,
      [](const Tensor& x, const Tensor& k, Index s, Padding p, ConvPatches* keep) {
        return conv3d(x, k, s, p, keep);
      },
      [](const Tensor& x, const Tensor& k, const Tensor& u, Index s, Padding p,
         const ConvPatches* cached) { return conv3d_backward(x, k, u, s, p, cached); });
}

Var add_bias(Var input, Var bias) {
  return input.tape().record("add_bias", add_bias(input.value(), bias.value()), {input, bias},
                             [](const BackwardContext& ctx) {
                               if (ctx.grads[0]) ctx.grads[0]->data() += ctx.upstream.data();
                               if (ctx.grads[1])
                                 ctx.grads[1]->data() += add_bias_backward(ctx.upstream).data();
                             });
}

Var relu(Var input) {
  input.tape().note_relu_input(input.value());
  return input.tape().record("relu", relu(input.value()), {input},
                             [](const BackwardContext& ctx) {
                               if (ctx.grads[0])
                                 ctx.grads[0]->data() +=
                                     relu_backward(*ctx.inputs[0], ctx.upstream).data();
                             });
}

Var dense(Var input, Var weights, Var bias) {
  return input.tape().record(
      "dense", dense(input.value(), weights.value(), bias.value()), {input, weights, bias},
      [](const BackwardContext& ctx) {
        DenseGrads g = dense_backward(*ctx.inputs[0], *ctx.inputs[1], ctx.upstream);
        if (ctx.grads[0]) ctx.grads[0]->data() += g.input.data();
        if (ctx.grads[1]) ctx.grads[1]->data() += g.weights.data();
        if (ctx.grads[2]) ctx.grads[2]->data() += g.bias.data();
      });
}

Var reshape(Var input, Shape shape) {
  return input.tape().record("reshape", input.value().reshaped(std::move(shape)), {input},
                             [](const BackwardContext& ctx) {
                               if (ctx.grads[0]) ctx.grads[0]->data() += ctx.upstream.data();
                             });
}

Var global_average_pool(Var input) {
  return input.tape().record(
      "global_average_pool", global_average_pool(input.value()), {input},
      [](const BackwardContext& ctx) {
        if (ctx.grads[0])
          ctx.grads[0]->data() +=
              global_average_pool_backward(ctx.inputs[0]->shape(), ctx.upstream).data();
      });
}

Var softmax_cross_entropy(Var logits, int label) {
  Tensor loss({1}, {softmax_cross_entropy(logits.value(), label)});
  return logits.tape().record("softmax_cross_entropy", std::move(loss), {logits},
                              [label](const BackwardContext& ctx) {
                                if (ctx.grads[0])
                                  ctx.grads[0]->data() +=
                                      ctx.upstream[0] *
                                      softmax_cross_entropy_backward(*ctx.inputs[0], label).data();
                              });
}

Var sum(Var input) {
  Tensor total({1}, {input.value().data().sum()});
  return input.tape().record("sum", std::move(total), {input}, [](const BackwardContext& ctx) {
    if (ctx.grads[0]) ctx.grads[0]->data().array() += ctx.upstream[0];
  });
}

Var add(Var a, Var b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor out = a.value();
  out.data() += b.value().data();
  return a.tape().record("add", std::move(out), {a, b}, [](const BackwardContext& ctx) {
    for (Tensor* g : ctx.grads)
      if (g) g->data() += ctx.upstream.data();
  });
}

Var scale(Var input, double factor) {
  Tensor out = input.value();
  out.data() *= factor;
  return input.tape().record("scale", std::move(out), {input},
                             [factor](const BackwardContext& ctx) {
                               if (ctx.grads[0]) ctx.grads[0]->data() += factor * ctx.upstream.data();
                             });
}

}  // namespace opbil
