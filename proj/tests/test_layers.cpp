#include <doctest.h>

#include "emberflow/layers.hpp"
#include "support/oracles.hpp"

using namespace emberflow;

namespace {

// Max |analytic - numeric| / max(1, |numeric|) over every element of `param`.
double worst_gradient_gap(TensorD& param, const TensorD& analytic, const std::function<double()>& loss) {
  double worst = 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double numeric = oracle::central_difference(loss, param[i]);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace

TEST_CASE("conv forward equals the naive loop") {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t b = 1 + gen() % 3, c = 1 + gen() % 4, o = 1 + gen() % 4;
    const std::size_t k = gen() % 2 ? 3 : 1, pad = gen() % 2, h = 3 + gen() % 7, w = 3 + gen() % 7;
    const Tensor x = oracle::random_tensor<float>({b, c, h, w}, gen);
    const Tensor wt = oracle::random_tensor<float>({o, c, k, k}, gen);
    const Tensor bias = oracle::random_tensor<float>({o}, gen);
    const Tensor y = conv2d_forward(x, wt, bias, 1, pad);
    const Tensor ref = oracle::naive_conv(x, wt, bias, 1, pad);
    REQUIRE(y.shape() == ref.shape());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - ref[i]) < 1e-5f);
  }
}

TEST_CASE("conv rejects mismatched shapes") {
  CHECK_THROWS_AS(conv2d_forward(Tensor({1, 2, 5, 5}), Tensor({3, 1, 3, 3}), Tensor({3}), 1, 1), ShapeError);
  CHECK_THROWS_AS(conv2d_forward(Tensor({1, 1, 5, 5}), Tensor({3, 1, 3, 3}), Tensor({2}), 1, 1), ShapeError);
  CHECK_THROWS_AS(conv2d_forward(Tensor({1, 1, 6, 6}), Tensor({3, 1, 3, 3}), Tensor({3}), 2, 0), GeometryError);
}

TEST_CASE("conv backward matches finite differences") {
  std::mt19937_64 gen(2);
  for (std::size_t stride : {1, 2}) {
    TensorD x = oracle::random_tensor<double>({2, 2, 5, 5}, gen);
    TensorD w = oracle::random_tensor<double>({3, 2, 3, 3}, gen);
    TensorD b = oracle::random_tensor<double>({3}, gen);
    const TensorD r = oracle::random_tensor<double>(conv2d_forward(x, w, b, stride, 1).shape(), gen);
    const auto loss = [&] { return dot(oracle::naive_conv(x, w, b, stride, 1), r); };
    const ConvGrads<double> g = conv2d_backward(r, x, w, stride, 1);
    CHECK(worst_gradient_gap(x, g.dx, loss) < 1e-7);
    CHECK(worst_gradient_gap(w, g.dweight, loss) < 1e-7);
    CHECK(worst_gradient_gap(b, g.dbias, loss) < 1e-7);
  }
}

TEST_CASE("batch norm train mode standardizes and updates running statistics") {
  std::mt19937_64 gen(3);
  const TensorD x = oracle::random_tensor<double>({4, 2, 3, 3}, gen, 2.0, 5.0);
  BatchNormStats<double> stats(2);
  const TensorD y = batchnorm_forward(x, full<double>({2}, 1.0), zeros<double>({2}), stats, Mode::train);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0, var = 0.0, ym = 0.0, yv = 0.0;
    const std::size_t n = 4 * 9;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 9; ++i) mean += x[(b * 2 + c) * 9 + i] / n, ym += y[(b * 2 + c) * 9 + i] / n;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 9; ++i) {
        var += std::pow(x[(b * 2 + c) * 9 + i] - mean, 2) / n;
        yv += std::pow(y[(b * 2 + c) * 9 + i] - ym, 2) / n;
      }
    CHECK(std::abs(ym) < 1e-12);
    CHECK(yv == doctest::Approx(var / (var + 1e-5)));
    CHECK(stats.running_mean[c] == doctest::Approx(0.1 * mean));
    CHECK(stats.running_var[c] == doctest::Approx(0.9 + 0.1 * var * n / (n - 1)));
  }
}

TEST_CASE("batch norm eval mode uses running statistics") {
  BatchNormStats<double> stats(1);
  stats.running_mean[0] = 2.0;
  stats.running_var[0] = 4.0;
  const TensorD x({1, 1, 1, 2}, {2.0, 6.0});
  const TensorD y = batchnorm_forward(x, full<double>({1}, 3.0), full<double>({1}, 1.0), stats, Mode::eval);
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(y[1] == doctest::Approx(3.0 * 4.0 / std::sqrt(4.0 + 1e-5) + 1.0));
  CHECK(stats.running_mean[0] == 2.0);
}

TEST_CASE("batch norm maps a constant channel to exactly beta") {
  // 0.1 is not representable, so a naive sum / n leaves a rounding residue
  // that 1 / sqrt(eps) would amplify.
  for (double v : {0.1, 1.0 / 3.0, 1e6 + 0.7}) {
    BatchNormStats<double> stats(1);
    const TensorD x = full<double>({3, 1, 7, 5}, v);
    const TensorD y = batchnorm_forward(x, full<double>({1}, 2.0), full<double>({1}, 0.25), stats, Mode::train);
    for (double out : y.values()) CHECK(out == 0.25);
  }
}

TEST_CASE("batch norm needs two values per channel in train mode") {
  BatchNormStats<float> stats(3);
  CHECK_THROWS_AS(batchnorm_forward(Tensor({1, 3, 1, 1}), full<float>({3}, 1), zeros<float>({3}), stats, Mode::train),
                  UsageError);
  CHECK_NOTHROW(batchnorm_forward(Tensor({1, 3, 1, 1}), full<float>({3}, 1), zeros<float>({3}), stats, Mode::eval));
}

TEST_CASE("batch norm backward matches finite differences") {
  std::mt19937_64 gen(4);
  TensorD x = oracle::random_tensor<double>({3, 2, 2, 2}, gen);
  TensorD gamma = oracle::random_tensor<double>({2}, gen, 0.5, 1.5);
  TensorD beta = oracle::random_tensor<double>({2}, gen);
  const TensorD r = oracle::random_tensor<double>(x.shape(), gen);
  for (Mode mode : {Mode::train, Mode::eval}) {
    BatchNormStats<double> stats(2);
    stats.running_mean = oracle::random_tensor<double>({2}, gen);
    stats.running_var = oracle::random_tensor<double>({2}, gen, 0.5, 2.0);
    const BatchNormStats<double> frozen = stats;
    BatchNormCache<double> cache;
    batchnorm_forward(x, gamma, beta, stats, mode, {}, &cache);
    const BatchNormGrads<double> g = batchnorm_backward(r, gamma, cache);
    const auto loss = [&] {
      BatchNormStats<double> s = frozen;
      return dot(batchnorm_forward(x, gamma, beta, s, mode), r);
    };
    CHECK(worst_gradient_gap(x, g.dx, loss) < 1e-7);
    CHECK(worst_gradient_gap(gamma, g.dgamma, loss) < 1e-7);
    CHECK(worst_gradient_gap(beta, g.dbeta, loss) < 1e-7);
  }
}

TEST_CASE("relu and its subgradient at zero") {
  const Tensor x({4}, {-1.0f, 0.0f, 0.5f, 2.0f});
  CHECK(relu_forward(x).values() == std::vector<float>{0, 0, 0.5f, 2});
  CHECK(relu_backward(full<float>({4}, 1.0f), x).values() == std::vector<float>{0, 0, 1, 1});
}

TEST_CASE("max pool picks the first maximum and routes gradients to it") {
  // One 4x4 plane; the top-left window has a tie between (0,0) and (1,1).
  const Tensor x({1, 1, 4, 4}, {5, 1, 2, 3,   //
                                0, 5, 4, 1,   //
                                1, 1, 9, 9,   //
                                7, 1, 9, 9});
  const PoolResult<float> p = maxpool_forward(x, 2, 2);
  CHECK(p.y.values() == std::vector<float>{5, 4, 7, 9});
  CHECK(p.argmax == std::vector<std::size_t>{0, 6, 12, 10});
  const Tensor dx = maxpool_backward(Tensor({1, 1, 2, 2}, {1, 2, 3, 4}), p.argmax, x.shape());
  CHECK(dx[0] == 1.0f);
  CHECK(dx[5] == 0.0f);
  CHECK(dx[6] == 2.0f);
  CHECK(dx[12] == 3.0f);
  CHECK(dx[10] == 4.0f);
  float total = 0.0f;
  for (float v : dx.values()) total += v;
  CHECK(total == 10.0f);
}

TEST_CASE("dropout") {
  Rng rng(5);
  const Tensor x = full<float>({100, 100}, 1.0f);

  SUBCASE("eval mode is the identity and draws nothing") {
    const Rng::State before = rng.state();
    const DropoutResult<float> r = dropout_forward(x, 0.2, rng, Mode::eval);
    CHECK(r.y == x);
    CHECK(rng.state() == before);
  }
  SUBCASE("rate zero is the identity") {
    CHECK(dropout_forward(x, 0.0, rng, Mode::train).y == x);
  }
  SUBCASE("train mode scales survivors by 1/(1-rate)") {
    const DropoutResult<float> r = dropout_forward(x, 0.2, rng, Mode::train);
    std::size_t zeros_seen = 0;
    for (float m : r.mask.values()) {
      CHECK((m == 0.0f || m == doctest::Approx(1.25f)));
      zeros_seen += m == 0.0f;
    }
    CHECK(static_cast<double>(zeros_seen) / x.size() == doctest::Approx(0.2).epsilon(0.1));
    CHECK(dropout_backward(x, r.mask) == r.y);
  }
  SUBCASE("invalid rates") {
    CHECK_THROWS_AS(dropout_forward(x, 1.0, rng, Mode::train), UsageError);
    CHECK_THROWS_AS(dropout_forward(x, -0.1, rng, Mode::train), UsageError);
  }
}

TEST_CASE("linear forward and backward") {
  std::mt19937_64 gen(6);
  TensorD x = oracle::random_tensor<double>({3, 4}, gen);
  TensorD w = oracle::random_tensor<double>({4, 5}, gen);
  TensorD b = oracle::random_tensor<double>({5}, gen);
  const TensorD y = linear_forward(x, w, b);
  const std::vector<double> xw = oracle::naive_matmul(x.values(), w.values(), 3, 5, 4);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(y.at({i, j}) == doctest::Approx(xw[i * 5 + j] + b[j]));
  const TensorD r = oracle::random_tensor<double>({3, 5}, gen);
  const LinearGrads<double> g = linear_backward(r, x, w);
  const auto loss = [&] { return dot(linear_forward(x, w, b), r); };
  CHECK(worst_gradient_gap(x, g.dx, loss) < 1e-8);
  CHECK(worst_gradient_gap(w, g.dweight, loss) < 1e-8);
  CHECK(worst_gradient_gap(b, g.dbias, loss) < 1e-8);
  CHECK_THROWS_AS(linear_forward(x, TensorD({3, 5}), b), ShapeError);
}

TEST_CASE("softmax cross-entropy") {
  SUBCASE("matches -log softmax and its gradient") {
    const TensorD logits({2, 3}, {1.0, 2.0, 3.0, 0.5, 0.5, -1.0});
    const std::vector<int> labels{2, 0};
    const LossResult<double> r = softmax_cross_entropy(logits, labels);
    const double z0 = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    const double z1 = 2 * std::exp(0.5) + std::exp(-1.0);
    const double expect = (-(3.0 - std::log(z0)) - (0.5 - std::log(z1))) / 2.0;
    CHECK(r.loss == doctest::Approx(expect));
    CHECK(r.dlogits.at({0, 2}) == doctest::Approx((std::exp(3.0) / z0 - 1.0) / 2.0));
    CHECK(r.dlogits.at({1, 1}) == doctest::Approx(std::exp(0.5) / z1 / 2.0));
  }
  SUBCASE("softmax rows sum to one") {
    std::mt19937_64 gen(7);
    const Tensor p = softmax(oracle::random_tensor<float>({4, 7}, gen, -20, 20));
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) s += p.at({i, j});
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  SUBCASE("logits of magnitude 1000 stay finite") {
    const Tensor logits({2, 7}, {1000, -1000, 0, 0, 0, 0, 0, -1000, 1000, 999, 0, 0, 0, 0});
    const LossResult<float> r = softmax_cross_entropy(logits, std::vector<int>{1, 0});
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss == doctest::Approx((2000.0 + 2000.0 + std::log1p(std::exp(-1.0))) / 2.0).epsilon(1e-5));
    CHECK(all_finite(r.dlogits));
  }
  SUBCASE("bad labels") {
    CHECK_THROWS_AS(softmax_cross_entropy(Tensor({2, 7}), std::vector<int>{0, 7}), UsageError);
    CHECK_THROWS_AS(softmax_cross_entropy(Tensor({2, 7}), std::vector<int>{0}), ShapeError);
  }
}
