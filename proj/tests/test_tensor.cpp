#include "doctest.h"

#include "nilmformer/errors.hpp"
#include "nilmformer/ops.hpp"
#include "nilmformer/rng.hpp"
#include "nilmformer/tensor.hpp"

using namespace nilmformer;

TEST_CASE("backward accumulates through a consumed-twice tensor") {
  Tensor x(Matrix::Constant(1, 1, 3.0), true);
  // y = x*x + x  =>  dy/dx = 2x + 1 = 7
  Tensor y = add(mul(x, x), x);
  backward(y);
  CHECK(x.grad()(0, 0) == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("replaying records twice doubles every gradient") {
  Tensor x(Matrix::Constant(2, 2, 2.0), true);
  Tensor mid = mul(x, x);
  Tensor y = sum(mid);
  backward(y);
  Matrix once_x = x.grad();
  Matrix once_mid = mid.grad();
  backward(y);
  CHECK((x.grad() - 2.0 * once_x).norm() == 0.0);
  CHECK((mid.grad() - 2.0 * once_mid).norm() == 0.0);
}

TEST_CASE("backward requires a scalar root") {
  Tensor x(Matrix::Ones(2, 2), true);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(backward(y), ShapeError);
}

TEST_CASE("no-grad guard suppresses graph construction") {
  Tensor x(Matrix::Ones(2, 2), true);
  {
    NoGradGuard guard;
    Tensor y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->record == nullptr);
  }
  Tensor y = mul(x, x);
  CHECK(y.requires_grad());
}

TEST_CASE("constants receive no gradient buffers") {
  Tensor x(Matrix::Ones(2, 2), true);
  Tensor c(Matrix::Ones(2, 2));
  Tensor y = sum(mul(x, c));
  backward(y);
  CHECK(x.grad().sum() == doctest::Approx(4.0));
  CHECK(c.node()->grad.size() == 0);
}

TEST_CASE("rng stream is deterministic and seed-sensitive") {
  RngStream a(42), b(42), c(7);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  bool differs = false;
  RngStream a2(42);
  for (int i = 0; i < 10; ++i) {
    if (a2.next_u64() != c.next_u64()) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("rng uniform stays in [0,1) and has sane mean") {
  RngStream rng(123);
  double acc = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    acc += u;
  }
  CHECK(acc / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("rng normal moments") {
  RngStream rng(99);
  double s = 0, s2 = 0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal();
    s += v;
    s2 += v * v;
  }
  CHECK(s / n == doctest::Approx(0.0).epsilon(0.02));
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("forked streams diverge from parent") {
  RngStream parent(5);
  RngStream child = parent.fork(1);
  RngStream child2 = parent.fork(2);
  CHECK(child.next_u64() != child2.next_u64());
  // Forking is a pure function of (seed, salt).
  CHECK(RngStream(5).fork(1).next_u64() == RngStream(5).fork(1).next_u64());
}
