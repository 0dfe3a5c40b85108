#include <doctest.h>

#include "opbil/gradcheck.hpp"
#include "opbil/tape.hpp"

#include <cmath>
#include <random>

using namespace opbil;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

}  // namespace

TEST_CASE("sum of a scaled variable") {
  Tape tape;
  Var x = tape.variable(Tensor({3}, {1.0, 2.0, 3.0}));
  Var loss = sum(scale(x, 2.5));
  CHECK(loss.value()[0] == doctest::Approx(15.0));
  tape.backward(loss);
  CHECK(x.grad() == Tensor::constant({3}, 2.5));
}

TEST_CASE("a reused node accumulates both paths") {
  Tape tape;
  Var x = tape.variable(Tensor({2}, {1.0, -2.0}));
  Var y = add(x, x);
  tape.backward(sum(y));
  CHECK(x.grad() == Tensor::constant({2}, 2.0));
}

TEST_CASE("backward twice gives the same node gradients") {
  std::mt19937_64 rng(1);
  Tape tape;
  Var x = tape.variable(random_tensor({4}, rng));
  Var w = tape.constant(random_tensor({3, 4}, rng));
  Var b = tape.constant(random_tensor({3}, rng));
  Var loss = softmax_cross_entropy(dense(relu(dense(x, w, b)), tape.constant(random_tensor({2, 3}, rng)),
                                         tape.constant(Tensor({2}))),
                                   1);
  tape.backward(loss);
  const Tensor first = x.grad();
  tape.backward(loss);
  CHECK(x.grad() == first);
}

TEST_CASE("parameters accumulate across tapes until zeroed") {
  Parameter p("w", Tensor({2}, {1.0, 1.0}));
  for (int i = 0; i < 3; ++i) {
    Tape tape;
    tape.backward(sum(tape.parameter(p)));
  }
  CHECK(p.grad == Tensor::constant({2}, 3.0));
  p.zero_grad();
  CHECK(p.grad == Tensor({2}));
}

TEST_CASE("constants receive no gradient and the seed scales everything") {
  Tape tape;
  Var c = tape.constant(Tensor({2}, {1.0, 2.0}));
  Var x = tape.variable(Tensor({2}, {3.0, 4.0}));
  tape.backward(sum(add(c, x)), 0.25);
  CHECK(c.grad().empty());
  CHECK(x.grad() == Tensor::constant({2}, 0.25));
}

TEST_CASE("the tape is a linear record in evaluation order") {
  Tape tape;
  Var x = tape.variable(Tensor({1}, {1.0}));
  Var y = scale(x, 2.0);
  Var z = sum(y);
  CHECK(tape.size() == 3);
  CHECK(x.id() < y.id());
  CHECK(y.id() < z.id());
  CHECK(tape.op(z.id()) == "sum");
}

TEST_CASE("relu margin tracks the closest pre-activation to zero") {
  Tape tape;
  relu(tape.constant(Tensor({3}, {-0.5, 0.02, 3.0})));
  CHECK(tape.min_relu_margin() == doctest::Approx(0.02));
}

TEST_CASE("non-scalar loss is rejected") {
  Tape tape;
  Var x = tape.variable(Tensor({2}));
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
}

TEST_CASE("conv stack through the tape matches finite differences") {
  std::mt19937_64 rng(21);
  const Tensor k1 = random_tensor({3, 3, 1, 3}, rng);
  const Tensor k3 = random_tensor({2, 2, 2, 2, 2}, rng);
  const Tensor wd = random_tensor({2, 2}, rng);
  const Tensor seq_kernel = random_tensor({3, 3, 2}, rng);

  SUBCASE("2d conv, bias, relu, pooling, dense") {
    const Tensor x = random_tensor({6, 6, 1}, rng);
    const Tensor head = random_tensor({2, 3}, rng);
    auto build = [&](Var in) {
      Tape& t = in.tape();
      Var h = relu(add_bias(conv2d(in, t.constant_ref(k1), 2, Padding::Same),
                            t.constant(Tensor({3}, {0.1, -0.1, 0.2}))));
      Var pooled = global_average_pool(h);
      Var logits = dense(pooled, t.constant_ref(head), t.constant(Tensor({2})));
      return softmax_cross_entropy(logits, 0);
    };
    CHECK(finite_difference_check(build, x).passed(1e-5));
  }
  SUBCASE("1d conv then reshape then 3d conv") {
    const Tensor x = random_tensor({8, 3}, rng);
    auto build = [&](Var in) {
      Tape& t = in.tape();
      Var h = conv1d(in, t.constant_ref(seq_kernel), 1, Padding::Valid);  // 6 x 2
      Var cube = reshape(h, {3, 2, 1, 2});
      Var y = conv3d(cube, t.constant_ref(k3), 1, Padding::Same);
      Var v = reshape(y, {y.value().size()});
      return sum(scale(add(v, v), 0.5));
    };
    CHECK(finite_difference_check(build, x).passed(1e-6));
  }
  SUBCASE("dense weights as the variable") {
    const Tensor in = random_tensor({2}, rng);
    auto build = [&](Var w) {
      Tape& t = w.tape();
      return softmax_cross_entropy(dense(t.constant(in), w, t.constant(Tensor({2}))), 1);
    };
    CHECK(finite_difference_check(build, wd).passed(1e-6));
  }
}

TEST_CASE("gradcheck flags a wrong gradient") {
  const ValueAndGradient wrong = [](const Tensor& p, Tensor* g) {
    if (g) *g = Tensor::constant(p.shape(), 1.0);
    return p.data().squaredNorm();
  };
  const auto r = finite_difference_check(wrong, Tensor({2}, {1.0, 2.0}));
  CHECK_FALSE(r.passed(1e-4));
  CHECK(r.worst_index == 1);
}
