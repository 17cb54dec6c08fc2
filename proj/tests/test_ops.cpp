#include <cmath>
#include <vector>

#include "doctest.h"
#include "nilmformer/errors.hpp"
#include "nilmformer/grad_check.hpp"
#include "nilmformer/ops.hpp"
#include "test_util.hpp"

using namespace nilmformer;
using testutil::mat;
using testutil::randm;

namespace {

// Contracts an op output against fixed random weights so gradient errors
// cannot cancel in a plain sum.
Tensor contract(const Tensor& t, const Matrix& w) { return sum(mul(t, Tensor(w))); }

// Dense matrix of the linear map x -> conv1d(x, w) for single-channel
// signals, built by probing basis vectors. Used as the deconv oracle.
Matrix conv_matrix(const Matrix& w, int kernel, int stride, Index l_in) {
  Index l_out = (l_in - kernel) / stride + 1;
  Matrix a = Matrix::Zero(l_out, l_in);
  for (Index i = 0; i < l_in; ++i) {
    Matrix e = Matrix::Zero(l_in, 1);
    e(i, 0) = 1.0;
    NoGradGuard guard;
    Tensor y = conv1d(Tensor(e), Tensor(w), Tensor(), kernel, stride, Padding::kNone);
    a.col(i) = y.value().col(0);
  }
  return a;
}

}  // namespace

TEST_CASE("matmul examples") {
  Tensor id(mat({{1, 0}, {0, 1}}));
  Tensor v(mat({{3}, {4}}));
  CHECK((matmul(id, v).value() - mat({{3}, {4}})).norm() == 0.0);

  Tensor a(mat({{1, 2}}));
  CHECK(matmul(a, v).item() == doctest::Approx(11.0));

  CHECK_THROWS_WITH_AS(matmul(v, v), doctest::Contains("[2 x 1]"), ShapeError);
}

TEST_CASE("matmul gradient of sum equals ones * b^T and passes fd") {
  RngStream rng(11);
  Tensor a(randm(4, 5, rng), true);
  Tensor b(randm(5, 3, rng), true);
  Tensor out = sum(matmul(a, b));
  backward(out);
  Matrix expected = Matrix::Ones(4, 3) * b.value().transpose();
  CHECK((a.grad() - expected).cwiseAbs().maxCoeff() < 1e-12);

  std::vector<Tensor> params{a, b};
  double err = grad_check([&] { return sum(matmul(a, b)); }, params);
  CHECK(err <= 1e-6);
}

TEST_CASE("softmax_rows closed forms") {
  Tensor u(mat({{0, 0, 0}}));
  CHECK((softmax_rows(u).value() - mat({{1.0 / 3, 1.0 / 3, 1.0 / 3}})).cwiseAbs().maxCoeff() <
        1e-15);

  Tensor t(mat({{0, std::log(2.0)}}));
  Matrix want = mat({{1.0 / 3, 2.0 / 3}});
  CHECK((softmax_rows(t).value() - want).cwiseAbs().maxCoeff() < 1e-12);

  Tensor big(mat({{1000, 1000}}));
  Matrix got = softmax_rows(big).value();
  CHECK(got.allFinite());
  CHECK(got(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("softmax rows sum to one on random inputs") {
  RngStream rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    Index r = 1 + static_cast<Index>(rng.next_u64() % 6);
    Index c = 1 + static_cast<Index>(rng.next_u64() % 8);
    Matrix sums = softmax_rows(Tensor(randm(r, c, rng, 3.0))).value().rowwise().sum();
    CHECK((sums.array() - 1.0).abs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("softmax_rows backward vs fd") {
  RngStream rng(17);
  Tensor x(randm(3, 5, rng), true);
  Matrix w = randm(3, 5, rng);
  std::vector<Tensor> params{x};
  CHECK(grad_check([&] { return contract(softmax_rows(x), w); }, params) <= 1e-6);
}

TEST_CASE("layer_norm closed forms") {
  Tensor g(mat({{1, 1}}));
  Tensor b(mat({{0, 0}}));
  Tensor x(mat({{1, 3}}));
  Matrix out = layer_norm(x, g, b, 1e-12).value();
  CHECK(out(0, 0) == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(out(0, 1) == doctest::Approx(1.0).epsilon(1e-6));

  Tensor g3(mat({{1, 1, 1}}));
  Tensor b3(mat({{0, 0, 0}}));
  Tensor flat(mat({{5, 5, 5}}));
  CHECK(layer_norm(flat, g3, b3).value().cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("layer_norm backward vs fd") {
  RngStream rng(23);
  Tensor x(randm(3, 8, rng), true);
  Tensor g(randm(1, 8, rng), true);
  Tensor b(randm(1, 8, rng), true);
  Matrix w = randm(3, 8, rng);
  std::vector<Tensor> params{x, g, b};
  CHECK(grad_check([&] { return contract(layer_norm(x, g, b), w); }, params) <= 1e-6);
}

TEST_CASE("conv1d sliding sum and unit kernel") {
  Tensor x(mat({{1}, {2}, {3}}));
  Tensor w(mat({{1}, {1}}));  // k=2, c_in=1, c_out=1
  Matrix got = conv1d(x, w, Tensor(), 2).value();
  CHECK((got - mat({{3}, {5}})).norm() == 0.0);

  Tensor unit(mat({{1}}));
  CHECK((conv1d(x, unit, Tensor(), 1).value() - x.value()).norm() == 0.0);
}

TEST_CASE("conv1d same padding preserves length") {
  RngStream rng(5);
  Tensor x(randm(16, 2, rng));
  Tensor w(randm(5 * 2, 3, rng));
  Tensor b(randm(1, 3, rng));
  Tensor y = conv1d(x, w, b, 5, 1, Padding::kSame);
  CHECK(y.rows() == 16);
  CHECK(y.cols() == 3);
}

TEST_CASE("conv1d geometry errors") {
  Tensor x(mat({{1}, {2}}));
  Tensor w(Matrix::Ones(7, 1));
  CHECK_THROWS_WITH_AS(conv1d(x, w, Tensor(), 7), doctest::Contains("longer"), ShapeError);
  CHECK_THROWS_AS(conv1d(x, w, Tensor(), 3), ShapeError);  // weight rows mismatch
}

TEST_CASE("conv1d backward vs fd") {
  RngStream rng(31);
  Tensor x(randm(16, 2, rng), true);
  Tensor w(randm(5 * 2, 3, rng), true);
  Tensor b(randm(1, 3, rng), true);
  Matrix cw = randm(16, 3, rng);
  std::vector<Tensor> params{x, w, b};
  auto f = [&] { return contract(conv1d(x, w, b, 5, 1, Padding::kSame), cw); };
  CHECK(grad_check(f, params) <= 1e-6);

  Matrix cw2 = randm(6, 3, rng);
  auto f2 = [&] { return contract(conv1d(x, w, b, 5, 2, Padding::kNone), cw2); };
  CHECK(grad_check(f2, params) <= 1e-6);
}

TEST_CASE("pool1d examples and tie-break") {
  Tensor x(mat({{1}, {3}, {2}, {5}}));
  CHECK((pool1d(x, 2).value() - mat({{3}, {5}})).norm() == 0.0);
  CHECK((pool1d(x, 1).value() - x.value()).norm() == 0.0);

  Tensor tie(mat({{2}, {2}}), true);
  Tensor y = sum(pool1d(tie, 2));
  backward(y);
  CHECK(tie.grad()(0, 0) == 1.0);
  CHECK(tie.grad()(1, 0) == 0.0);

  CHECK_THROWS_AS(pool1d(Tensor(mat({{1}, {2}, {3}})), 2), ShapeError);
}

TEST_CASE("pool1d backward vs fd") {
  RngStream rng(41);
  Tensor x(randm(12, 3, rng), true);
  Matrix w = randm(4, 3, rng);
  std::vector<Tensor> params{x};
  CHECK(grad_check([&] { return contract(pool1d(x, 3), w); }, params) <= 1e-6);
}

TEST_CASE("deconv1d examples") {
  Tensor x(mat({{1}, {2}}));
  Tensor w(mat({{1}, {1}}));
  Matrix got = deconv1d(x, w, 2, 2).value();
  CHECK((got - mat({{1}, {1}, {2}, {2}})).norm() == 0.0);

  Tensor one(mat({{1}}));
  Tensor uw(mat({{1}}));
  CHECK(deconv1d(one, uw, 1, 1).item() == doctest::Approx(1.0));
}

TEST_CASE("deconv1d equals explicit conv-matrix transpose") {
  RngStream rng(51);
  for (int rep = 0; rep < 10; ++rep) {
    int k = 1 + static_cast<int>(rng.next_u64() % 4);
    int s = 1 + static_cast<int>(rng.next_u64() % 3);
    Index l = 2 + static_cast<Index>(rng.next_u64() % 5);
    Index l_in = (l - 1) * s + k;
    Matrix w = randm(k, 1, rng);
    Matrix a = conv_matrix(w, k, s, l_in);
    Matrix y = randm(l, 1, rng);
    Matrix want = a.transpose() * y;
    Matrix got = deconv1d(Tensor(y), Tensor(w), k, s).value();
    CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("deconv1d is the adjoint of conv1d") {
  RngStream rng(61);
  for (int rep = 0; rep < 100; ++rep) {
    int k = 1 + static_cast<int>(rng.next_u64() % 5);
    int s = 1 + static_cast<int>(rng.next_u64() % 3);
    Index l_out = 1 + static_cast<Index>(rng.next_u64() % 8);
    Index c_in = 1 + static_cast<Index>(rng.next_u64() % 3);
    Index c_out = 1 + static_cast<Index>(rng.next_u64() % 3);
    Index l_in = (l_out - 1) * s + k;

    Matrix x = randm(l_in, c_in, rng);
    Matrix w = randm(k * c_in, c_out, rng);
    Matrix y = randm(l_out, c_out, rng);

    NoGradGuard guard;
    Matrix cx = conv1d(Tensor(x), Tensor(w), Tensor(), k, s, Padding::kNone).value();
    Matrix dy = deconv1d(Tensor(y), Tensor(w), k, s).value();
    Scalar lhs = cx.cwiseProduct(y).sum();
    Scalar rhs = x.cwiseProduct(dy).sum();
    CHECK(std::fabs(lhs - rhs) <= 1e-10);
  }
}

TEST_CASE("deconv1d backward vs fd") {
  RngStream rng(71);
  Tensor x(randm(6, 2, rng), true);
  Tensor w(randm(4 * 3, 2, rng), true);  // k=4, c_up=3
  Matrix cw = randm((6 - 1) * 2 + 4, 3, rng);
  std::vector<Tensor> params{x, w};
  CHECK(grad_check([&] { return contract(deconv1d(x, w, 4, 2), cw); }, params) <= 1e-6);
}

TEST_CASE("dropout identity paths") {
  RngStream rng(81);
  Tensor x(randm(4, 4, rng));
  Tensor same = dropout(x, 0.0, rng, true);
  CHECK((same.value() - x.value()).norm() == 0.0);
  Tensor eval = dropout(x, 0.7, rng, false);
  CHECK((eval.value() - x.value()).norm() == 0.0);
  CHECK_THROWS_AS(dropout(x, 1.0, rng, true), ConfigError);
}

TEST_CASE("dropout survival statistics at p=0.5") {
  RngStream rng(91);
  Tensor x(Matrix::Ones(400, 250));  // 1e5 elements
  Tensor y = dropout(x, 0.5, rng, true);
  Index survivors = 0;
  for (Index i = 0; i < y.rows(); ++i) {
    for (Index j = 0; j < y.cols(); ++j) {
      if (y.value()(i, j) != 0.0) ++survivors;
    }
  }
  double frac = static_cast<double>(survivors) / 1e5;
  CHECK(frac == doctest::Approx(0.5).epsilon(0.02));
  // Inverted scaling keeps the mean.
  CHECK(y.value().mean() == doctest::Approx(x.value().mean()).epsilon(0.02));
}

TEST_CASE("dropout backward with frozen pattern vs fd") {
  RngStream data_rng(101);
  Tensor x(randm(5, 5, data_rng), true);
  Matrix w = randm(5, 5, data_rng);
  std::vector<Tensor> params{x};
  auto f = [&] {
    RngStream frozen(7);
    return contract(dropout(x, 0.3, frozen, true), w);
  };
  CHECK(grad_check(f, params) <= 1e-6);
}

TEST_CASE("activation closed forms") {
  Tensor z(mat({{0.0}}));
  CHECK(activation(z, Activation::kTanh).item() == 0.0);
  Tensor neg(mat({{-3.0}}));
  Tensor pos(mat({{3.0}}));
  CHECK(activation(neg, Activation::kRelu).item() == 0.0);
  CHECK(activation(pos, Activation::kRelu).item() == 3.0);
  CHECK_THROWS_AS(parse_activation("swish"), ConfigError);
  CHECK(parse_activation("gelu") == Activation::kGelu);
}

TEST_CASE("gelu backward vs fd at pinned points") {
  Matrix pts = mat({{-2.0, -0.5, 0.0, 0.5, 2.0}});
  Tensor x(pts, true);
  Matrix w = mat({{0.7, -1.2, 0.9, 1.1, -0.4}});
  std::vector<Tensor> params{x};
  CHECK(grad_check([&] { return contract(activation(x, Activation::kGelu), w); }, params) <=
        1e-6);
}

TEST_CASE("tanh and relu backward vs fd") {
  RngStream rng(111);
  Tensor x(randm(4, 4, rng), true);
  Matrix w = randm(4, 4, rng);
  std::vector<Tensor> params{x};
  CHECK(grad_check([&] { return contract(activation(x, Activation::kTanh), w); }, params) <=
        1e-6);
  // Keep relu inputs away from the kink.
  Tensor far(x.value().unaryExpr([](Scalar v) { return v + (v >= 0 ? 0.5 : -0.5); }), true);
  std::vector<Tensor> params2{far};
  CHECK(grad_check([&] { return contract(activation(far, Activation::kRelu), w); },
                   params2) <= 1e-6);
}

TEST_CASE("softplus, abs, clamp, log backward vs fd") {
  RngStream rng(121);
  Tensor x(randm(3, 4, rng), true);
  Matrix w = randm(3, 4, rng);
  std::vector<Tensor> params{x};
  CHECK(grad_check([&] { return contract(softplus(x), w); }, params) <= 1e-6);
  CHECK(grad_check([&] { return contract(abs(x), w); }, params) <= 1e-6);

  Tensor inside(Matrix(x.value().unaryExpr(
                    [](Scalar v) { return 0.5 + 0.3 * std::tanh(v); })),
                true);
  std::vector<Tensor> params3{inside};
  CHECK(grad_check([&] { return contract(clamp01(inside), w); }, params3) <= 1e-6);

  Tensor positive(Matrix(x.value().cwiseAbs().array() + 0.5), true);
  std::vector<Tensor> params4{positive};
  CHECK(grad_check([&] { return contract(log(positive), w); }, params4) <= 1e-6);
}

TEST_CASE("clamp01 clamps and kills gradient outside") {
  Tensor x(mat({{-0.5, 0.5, 1.5}}), true);
  Tensor y = sum(clamp01(x));
  CHECK((clamp01(x).value() - mat({{0.0, 0.5, 1.0}})).norm() == 0.0);
  backward(y);
  CHECK(x.grad()(0, 0) == 0.0);
  CHECK(x.grad()(0, 1) == 1.0);
  CHECK(x.grad()(0, 2) == 0.0);
}

TEST_CASE("slice, concat, gather, replace backward vs fd") {
  RngStream rng(131);
  Tensor x(randm(6, 6, rng), true);
  Matrix w = randm(6, 2, rng);
  std::vector<Tensor> params{x};
  CHECK(grad_check([&] { return contract(slice_cols(x, 2, 2), w); }, params) <= 1e-6);

  Matrix w2 = randm(2, 6, rng);
  CHECK(grad_check([&] { return contract(slice_rows(x, 1, 2), w2); }, params) <= 1e-6);

  Matrix w3 = randm(3, 6, rng);
  std::vector<Index> idx{5, 0, 3};
  CHECK(grad_check([&] { return contract(gather_rows(x, idx), w3); }, params) <= 1e-6);

  Tensor token(randm(1, 6, rng), true);
  std::vector<std::uint8_t> mask{1, 0, 0, 1, 0, 1};
  Matrix w4 = randm(6, 6, rng);
  std::vector<Tensor> params2{x, token};
  CHECK(grad_check([&] { return contract(replace_masked_rows(x, mask, token), w4); },
                   params2) <= 1e-6);

  Tensor a(randm(4, 2, rng), true);
  Tensor b(randm(4, 3, rng), true);
  Matrix w5 = randm(4, 5, rng);
  std::vector<Tensor> params3{a, b};
  auto f = [&] {
    std::vector<Tensor> parts{a, b};
    return contract(concat_cols(parts), w5);
  };
  CHECK(grad_check(f, params3) <= 1e-6);
}

TEST_CASE("grad_check certifies simple closed forms") {
  Tensor theta(Matrix::Constant(1, 1, 3.0), true);
  std::vector<Tensor> params{theta};
  // f = theta^2: analytic 6, central differences are exact for quadratics.
  CHECK(grad_check([&] { return mul(theta, theta); }, params) <= 1e-10);

  RngStream rng(141);
  Tensor v(randm(4, 4, rng), true);
  std::vector<Tensor> params2{v};
  CHECK(grad_check([&] { return sum(v); }, params2) <= 1e-10);
  v.zero_grad();
  backward(sum(v));
  CHECK((v.grad().array() - 1.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("grad_check rejects non-finite objectives") {
  Tensor x(mat({{-1.0}}), true);
  std::vector<Tensor> params{x};
  CHECK_THROWS_AS(grad_check([&] { return log(x); }, params), DivergenceError);
}
