#include <cmath>
#include <functional>

#include "doctest.h"
#include "restorekit/error.hpp"
#include "restorekit/nn.hpp"
#include "restorekit/rng.hpp"

using namespace restorekit;
using namespace restorekit::nn;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, double scale = 1.0) {
  Tensor t(s);
  Rng rng(seed);
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

// Scalar <x, w> with a fixed random w, so every output element gets a distinct
// upstream gradient.
Var weighted_sum(const Var& x, std::uint64_t seed) {
  auto w = std::make_shared<Tensor>(random_tensor(x->value.shape(), seed));
  double s = 0;
  for (std::size_t i = 0; i < w->numel(); ++i) s += w->values()[i] * x->value.values()[i];
  auto node = std::make_shared<Node>();
  node->value = Tensor({1, 1, 1, 1}, s);
  node->requires_grad = x->requires_grad;
  node->parents = {x};
  node->backward_fn = [w](Node& self) {
    Tensor& d = self.parents[0]->grad_buffer();
    const double g = self.grad.values()[0];
    for (std::size_t i = 0; i < d.numel(); ++i) d.values()[i] += g * w->values()[i];
  };
  return node;
}

// Compare analytic gradients of f(inputs) against central differences.
void check_gradients(std::vector<Var> inputs, const std::function<Var(const std::vector<Var>&)>& f,
                     double tol = 1e-6) {
  Var loss = f(inputs);
  backward(loss);
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Var in = inputs[k];
    REQUIRE(in->grad.numel() == in->value.numel());
    for (std::size_t i = 0; i < in->value.numel(); ++i) {
      const double orig = in->value.values()[i];
      in->value.values()[i] = orig + h;
      const double up = f(inputs)->value.values()[0];
      in->value.values()[i] = orig - h;
      const double down = f(inputs)->value.values()[0];
      in->value.values()[i] = orig;
      const double fd = (up - down) / (2 * h);
      CAPTURE(k);
      CAPTURE(i);
      CHECK(std::abs(fd - in->grad.values()[i]) <= tol * (1.0 + std::abs(fd)));
    }
  }
}

}  // namespace

TEST_CASE("conv2d forward matches a direct loop") {
  const Tensor x = random_tensor({2, 3, 5, 4}, 1);
  const Tensor w = random_tensor({4, 3, 3, 3}, 2);
  const Tensor b = random_tensor({1, 4, 1, 1}, 3);
  Var y = conv2d(constant(x), constant(w), constant(b));
  REQUIRE(y->value.shape() == Shape{2, 4, 5, 4});
  for (int n = 0; n < 2; ++n)
    for (int co = 0; co < 4; ++co)
      for (int yy = 0; yy < 5; ++yy)
        for (int xx = 0; xx < 4; ++xx) {
          double acc = b.at(0, co, 0, 0);
          for (int ci = 0; ci < 3; ++ci)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int sy = yy + ky - 1, sx = xx + kx - 1;
                if (sy < 0 || sy >= 5 || sx < 0 || sx >= 4) continue;
                acc += w.at(co, ci, ky, kx) * x.at(n, ci, sy, sx);
              }
          CHECK(y->value.at(n, co, yy, xx) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("conv2d gradients") {
  for (int k : {1, 3}) {
    check_gradients({parameter(random_tensor({2, 2, 4, 5}, 1)), parameter(random_tensor({3, 2, k, k}, 2)),
                     parameter(random_tensor({1, 3, 1, 1}, 3))},
                    [](const std::vector<Var>& v) { return weighted_sum(conv2d(v[0], v[1], v[2]), 9); });
  }
}

TEST_CASE("conv2d rejects bad kernels") {
  CHECK_THROWS_AS(conv2d(constant(Tensor({1, 2, 4, 4})), constant(Tensor({3, 2, 2, 2})),
                         constant(Tensor({1, 3, 1, 1}))),
                  ShapeError);
  CHECK_THROWS_AS(conv2d(constant(Tensor({1, 2, 4, 4})), constant(Tensor({3, 1, 3, 3})),
                         constant(Tensor({1, 3, 1, 1}))),
                  ShapeError);
}

TEST_CASE("silu, pooling, upsampling and concat gradients") {
  check_gradients({parameter(random_tensor({2, 2, 3, 3}, 4, 3.0))},
                  [](const std::vector<Var>& v) { return weighted_sum(silu(v[0]), 1); });
  check_gradients({parameter(random_tensor({2, 2, 4, 6}, 5))},
                  [](const std::vector<Var>& v) { return weighted_sum(avg_pool2(v[0]), 2); });
  check_gradients({parameter(random_tensor({2, 2, 3, 2}, 6))},
                  [](const std::vector<Var>& v) { return weighted_sum(upsample2(v[0]), 3); });
  check_gradients({parameter(random_tensor({2, 2, 3, 3}, 7)), parameter(random_tensor({2, 1, 3, 3}, 8))},
                  [](const std::vector<Var>& v) { return weighted_sum(concat_channels(v[0], v[1]), 4); });
  check_gradients({parameter(random_tensor({2, 2, 3, 3}, 9)), parameter(random_tensor({2, 2, 3, 3}, 10))},
                  [](const std::vector<Var>& v) { return weighted_sum(add(v[0], v[1]), 5); });
}

TEST_CASE("square and log1p gradients") {
  check_gradients({parameter(random_tensor({2, 2, 3, 3}, 40, 2.0))},
                  [](const std::vector<Var>& v) { return weighted_sum(square(v[0]), 41); });
  check_gradients({parameter(random_tensor({2, 2, 3, 3}, 42, 0.9))},
                  [](const std::vector<Var>& v) { return weighted_sum(log1p(v[0]), 43); });
  CHECK_THROWS_AS(log1p(constant(Tensor({1, 1, 1, 1}, -1.0))), ShapeError);
}

TEST_CASE("bias, dense and pooling gradients") {
  check_gradients({parameter(random_tensor({2, 3, 2, 2}, 11)), parameter(random_tensor({2, 3, 1, 1}, 12))},
                  [](const std::vector<Var>& v) { return weighted_sum(add_channel_bias(v[0], v[1]), 6); });
  check_gradients({parameter(random_tensor({3, 4, 1, 1}, 13)), parameter(random_tensor({5, 4, 1, 1}, 14)),
                   parameter(random_tensor({1, 5, 1, 1}, 15))},
                  [](const std::vector<Var>& v) { return weighted_sum(linear(v[0], v[1], v[2]), 7); });
  check_gradients({parameter(random_tensor({2, 3, 4, 3}, 16))},
                  [](const std::vector<Var>& v) { return weighted_sum(global_avg_pool(v[0]), 8); });
}

TEST_CASE("softmax cross-entropy gradient") {
  const std::vector<int> labels{0, 3, 2};
  check_gradients({parameter(random_tensor({3, 4, 1, 1}, 17, 2.0))},
                  [&](const std::vector<Var>& v) { return softmax_cross_entropy(v[0], labels); });
  // Uniform logits: loss is log K.
  Var l = softmax_cross_entropy(constant(Tensor({3, 4, 1, 1})), labels);
  CHECK(l->value.values()[0] == doctest::Approx(std::log(4.0)));
}

TEST_CASE("softmax is shift-invariant and normalized") {
  const std::vector<double> a{1.0, 2.0, -3.0, 0.5};
  std::vector<double> b = a;
  for (double& v : b) v += 1000.0;
  const auto pa = softmax(a);
  const auto pb = softmax(b);
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-12));
    s += pa[i];
  }
  CHECK(s == doctest::Approx(1.0));
}

TEST_CASE("grouped l1 loss value and gradient") {
  const Tensor target = random_tensor({4, 1, 2, 2}, 20);
  Tensor pred_t = target;
  // Offsets chosen so no element sits on a kink.
  for (int n = 0; n < 4; ++n)
    for (int i = 0; i < 4; ++i) pred_t.sample(n)[i] += (n + 1) * 0.1 * (i % 2 ? 1 : -1);
  const std::vector<std::vector<int>> groups{{0, 1}, {2, 3}};
  Var pred = parameter(pred_t);
  Var loss = l1_loss(pred, target, groups);
  // group means: (0.1+0.2)/2 and (0.3+0.4)/2
  CHECK(loss->value.values()[0] == doctest::Approx(0.15 + 0.35).epsilon(1e-12));
  check_gradients({pred}, [&](const std::vector<Var>& v) { return l1_loss(v[0], target, groups); });

  Var all = l1_loss(constant(pred_t), target);
  CHECK(all->value.values()[0] == doctest::Approx(0.25).epsilon(1e-12));
  // A group with one sample weighs it as much as a group with three.
  Var uneven = l1_loss(constant(pred_t), target, {{0}, {1, 2, 3}});
  CHECK(uneven->value.values()[0] == doctest::Approx(0.1 + 0.3).epsilon(1e-12));
}

TEST_CASE("shared subexpressions accumulate gradients") {
  Var x = parameter(random_tensor({1, 2, 2, 2}, 30));
  check_gradients({x}, [](const std::vector<Var>& v) {
    Var s = silu(v[0]);
    return weighted_sum(add(s, add(s, v[0])), 31);
  });
}

TEST_CASE("backward requires a scalar") {
  CHECK_THROWS_AS(backward(parameter(Tensor({1, 1, 2, 2}))), ShapeError);
}

TEST_CASE("parameter sets") {
  ParameterSet ps;
  ps.add("a", init_uniform({2, 3, 1, 1}, 0.5, 1));
  ps.add("b", init_uniform({4, 1, 1, 1}, 0.5, 2));
  CHECK_THROWS_AS(ps.add("a", Tensor({1, 1, 1, 1})), ConfigError);
  CHECK(ps.count() == 10);
  CHECK(ps.find("b") != nullptr);
  CHECK(ps.find("c") == nullptr);
  ParameterSet copy = clone(ps);
  CHECK(copy == ps);
  copy.items()[0].var->value.values()[0] += 1.0;
  CHECK(!(copy == ps));
  for (const auto& p : ps.items())
    for (double v : p.var->value.values()) {
      CHECK(v == to_f32(v));
      CHECK(std::abs(v) <= 0.5);
    }
  CHECK(init_uniform({3, 3, 3, 3}, 1.0, 7).values()[5] == init_uniform({3, 3, 3, 3}, 1.0, 7).values()[5]);
}

TEST_CASE("adam minimizes a quadratic and keeps parameters float32") {
  ParameterSet ps;
  Var p = ps.add("p", Tensor({1, 1, 1, 4}, 1.0));
  Adam opt(ps, {});
  const Tensor target({1, 1, 1, 4}, -0.5);
  for (int it = 0; it < 1000; ++it) {
    ps.zero_grad();
    // Smooth objective sum (p - target)^2 through the tape.
    Var d = add(p, constant(Tensor({1, 1, 1, 4}, 0.5)));
    Var sq = std::make_shared<Node>();
    double s = 0;
    for (double v : d->value.values()) s += v * v;
    sq->value = Tensor({1, 1, 1, 1}, s);
    sq->requires_grad = true;
    sq->parents = {d};
    sq->backward_fn = [](Node& self) {
      Node& dn = *self.parents[0];
      for (std::size_t i = 0; i < dn.value.numel(); ++i)
        dn.grad_buffer().values()[i] += 2 * dn.value.values()[i] * self.grad.values()[0];
    };
    backward(sq);
    opt.step(0.01);
  }
  for (double v : p->value.values()) {
    CHECK(v == doctest::Approx(-0.5).epsilon(0.01));
    CHECK(v == to_f32(v));
  }
}

TEST_CASE("image tensor round trip") {
  Image a(3, 4), b(3, 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a.values()[i] = 0.01 * i;
    b.values()[i] = -0.02 * i;
  }
  const std::vector<Image> imgs{a, b};
  const Tensor t = stack_images(imgs);
  CHECK(t.shape() == Shape{2, 3, 3, 4});
  CHECK(image_from_tensor(t, 0) == a);
  CHECK(image_from_tensor(t, 1) == b);
  const std::vector<Image> mixed{a, Image(2, 2)};
  CHECK_THROWS_AS(stack_images(mixed), ShapeError);
}
