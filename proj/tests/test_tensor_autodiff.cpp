#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "brightvae/ops.hpp"
#include "test_util.hpp"

using namespace brightvae;

TEST_CASE("tensor shape and access") {
  Tensor<double> t({2, 3});
  CHECK(t.rank() == 2);
  CHECK(t.numel() == 6);
  t[5] = 4.5;
  CHECK(t[5] == 4.5);
  CHECK(t.shape_str() == "(2,3)");

  Tensor<double> r = t.reshaped({3, 2});
  CHECK(r.dim(0) == 3);
  CHECK(r[5] == 4.5);
  CHECK_THROWS_AS(t.reshaped({4, 2}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor<double>({2, 3}, {1.0}), std::invalid_argument);

  Tensor<double> s = Tensor<double>::scalar(7.0);
  CHECK(s.rank() == 0);
  CHECK(s.item() == 7.0);
  CHECK_THROWS_AS(t.item(), std::logic_error);
}

TEST_CASE("tensor 4d accessor and finiteness") {
  Tensor<double> t({2, 3, 4, 5});
  t.at(1, 2, 3, 4) = 9.0;
  CHECK(t[t.numel() - 1] == 9.0);
  CHECK(t.all_finite());
  t[0] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("rng determinism and stream derivation") {
  Rng a(123), b(123), c(124);
  for (int i = 0; i < 100; ++i) {
    const double va = a.uniform(), vb = b.uniform();
    CHECK(va == vb);
    CHECK(va >= 0.0);
    CHECK(va < 1.0);
  }
  CHECK(a.uniform() != c.uniform());

  Rng d1 = Rng::derive(7, 0), d2 = Rng::derive(7, 0), d3 = Rng::derive(7, 1);
  CHECK(d1.next_u64() == d2.next_u64());
  CHECK(d1.next_u64() != d3.next_u64());
}

TEST_CASE("rng normal has roughly standard moments") {
  Rng rng(5);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("backward through a composed scalar expression") {
  // f(x) = sum((2x + 3)^2), df/dx_i = 4 * (2x_i + 3)
  Var<double> x = Var<double>::leaf(Tensor<double>({3}, {1.0, -2.0, 0.5}), true);
  Var<double> y =
      ops::sum_all(ops::square(ops::add_scalar(ops::scale(x, 2.0), 3.0)));
  backward(y);
  for (int64_t i = 0; i < 3; ++i)
    CHECK(x.grad()[i] == doctest::Approx(4.0 * (2.0 * x.value()[i] + 3.0)));
}

TEST_CASE("gradients accumulate across shared subexpressions") {
  // f = sum(x * x) reuses x twice; grad = 2x.
  Var<double> x = Var<double>::leaf(Tensor<double>({2}, {3.0, -1.0}), true);
  backward(ops::sum_all(ops::mul(x, x)));
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  CHECK(x.grad()[1] == doctest::Approx(-2.0));
}

TEST_CASE("no-grad mode skips graph construction") {
  Var<double> x = Var<double>::leaf(Tensor<double>({2}, {1.0, 2.0}), true);
  {
    NoGradGuard ng;
    Var<double> y = ops::sum_all(ops::square(x));
    CHECK_FALSE(y.requires_grad());
    CHECK(y.value().item() == doctest::Approx(5.0));
  }
  CHECK(grad_enabled());
}

TEST_CASE("constants never require grad") {
  Var<double> c = Var<double>::constant(Tensor<double>({2}, {1.0, 2.0}));
  Var<double> y = ops::sum_all(c);
  CHECK_FALSE(y.requires_grad());
  backward(y);  // no-op, must not throw
}

TEST_CASE("backward rejects non-scalar roots") {
  Var<double> x = Var<double>::leaf(Tensor<double>({2}, {1.0, 2.0}), true);
  CHECK_THROWS_AS(backward(ops::square(x)), std::logic_error);
  CHECK_THROWS_AS(backward(Var<double>()), std::logic_error);
}

TEST_CASE("stop_gradient blocks the tape") {
  Var<double> x = Var<double>::leaf(Tensor<double>({2}, {1.0, 2.0}), true);
  Var<double> y = ops::sum_all(ops::mul(x, ops::stop_gradient(ops::scale(x, 2.0))));
  backward(y);
  // Only the direct factor contributes: d/dx_i x_i * c_i = c_i = 2 x_i.
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}
