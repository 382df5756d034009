#include <doctest.h>

#include <atomic>
#include <numeric>

#include "emberflow/gemm.hpp"
#include "emberflow/parallel.hpp"
#include "emberflow/rng.hpp"
#include "emberflow/tensor.hpp"
#include "support/oracles.hpp"

using namespace emberflow;

TEST_CASE("shape validation") {
  CHECK(shape_numel({2, 3, 4}) == 24);
  CHECK_THROWS_AS(shape_numel({}), ShapeError);
  CHECK_THROWS_AS(shape_numel({3, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), ShapeError);
  CHECK(shape_string({1, 48, 48}) == "[1,48,48]");
}

TEST_CASE("row-major indexing and reshape") {
  Tensor t({2, 3, 4});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i);
  CHECK(t.at({1, 2, 3}) == 23.0f);
  CHECK(t.at({0, 1, 0}) == 4.0f);
  CHECK_THROWS_AS(t.at({2, 0, 0}), ShapeError);
  const Tensor r = t.reshaped({6, 4});
  CHECK(r.at({5, 3}) == 23.0f);
  CHECK_THROWS_AS(t.reshaped({5, 5}), ShapeError);
}

TEST_CASE("elementwise ops and shape mismatch") {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 2}, {4, 3, 2, 1});
  CHECK(add(a, b).values() == std::vector<float>{5, 5, 5, 5});
  CHECK(sub(a, b).values() == std::vector<float>{-3, -1, 1, 3});
  CHECK(mul(a, b).values() == std::vector<float>{4, 6, 6, 4});
  CHECK(scale(a, 2.0f).values() == std::vector<float>{2, 4, 6, 8});
  CHECK(maximum(sub(a, b), 0.0f).values() == std::vector<float>{0, 0, 1, 3});
  CHECK_THROWS_AS(add(a, Tensor({4})), ShapeError);
  CHECK(dot(a, b) == doctest::Approx(20.0));
  Tensor c = a;
  c[2] = std::numeric_limits<float>::quiet_NaN();
  CHECK(all_finite(a));
  CHECK_FALSE(all_finite(c));
}

TEST_CASE("reductions agree with direct loops") {
  std::mt19937_64 gen(11);
  const TensorD t = oracle::random_tensor<double>({3, 4, 5}, gen);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const TensorD s = reduce(t, ReduceOp::sum, axis);
    const TensorD m = reduce(t, ReduceOp::max, axis);
    const TensorD am = reduce(t, ReduceOp::argmax, axis);
    const TensorD mean = reduce(t, ReduceOp::mean, axis);
    std::size_t dims[3] = {3, 4, 5};
    std::size_t out = 0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 5; ++k) {
          std::size_t idx[3] = {i, j, k};
          if (idx[axis] != 0) continue;
          double sum = 0.0, best = -1e300;
          std::size_t best_at = 0;
          for (std::size_t r = 0; r < dims[axis]; ++r) {
            idx[axis] = r;
            const double v = t.at({idx[0], idx[1], idx[2]});
            sum += v;
            if (v > best) best = v, best_at = r;
          }
          CHECK(s[out] == doctest::Approx(sum));
          CHECK(mean[out] == doctest::Approx(sum / dims[axis]));
          CHECK(m[out] == best);
          CHECK(am[out] == static_cast<double>(best_at));
          ++out;
        }
  }
  CHECK_THROWS_AS(reduce(t, ReduceOp::sum, 3), ShapeError);
}

TEST_CASE("argmax ties resolve to the lowest index") {
  const Tensor t({2, 4}, {1, 3, 3, 0, 2, 2, 2, 2});
  CHECK(argmax_rows(t) == std::vector<std::size_t>{1, 0});
  CHECK(reduce(t, ReduceOp::argmax, 1).values() == std::vector<float>{1, 0});
}

TEST_CASE("matmul matches a naive triple loop for every transpose combination") {
  std::mt19937_64 gen(3);
  for (auto [m, n, k] : {std::array<std::size_t, 3>{1, 1, 1}, {5, 7, 3}, {17, 33, 65}, {64, 48, 129}, {130, 9, 260}}) {
    for (Transpose ta : {Transpose::no, Transpose::yes}) {
      for (Transpose tb : {Transpose::no, Transpose::yes}) {
        const TensorD a = oracle::random_tensor<double>(ta == Transpose::no ? Shape{m, k} : Shape{k, m}, gen);
        const TensorD b = oracle::random_tensor<double>(tb == Transpose::no ? Shape{k, n} : Shape{n, k}, gen);
        const TensorD an = ta == Transpose::no ? a : transpose(a);
        const TensorD bn = tb == Transpose::no ? b : transpose(b);
        const std::vector<double> expect = oracle::naive_matmul(an.values(), bn.values(), m, n, k);
        const TensorD c = matmul(a, b, ta, tb);
        REQUIRE(c.shape() == Shape{m, n});
        double worst = 0.0;
        for (std::size_t i = 0; i < expect.size(); ++i) worst = std::max(worst, std::abs(c[i] - expect[i]));
        CHECK(worst < 1e-10);
      }
    }
  }
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
}

TEST_CASE("gemm accumulate adds onto the existing output") {
  std::mt19937_64 gen(5);
  const Tensor a = oracle::random_tensor<float>({37, 21}, gen);
  const Tensor b = oracle::random_tensor<float>({21, 45}, gen);
  Tensor c = oracle::random_tensor<float>({37, 45}, gen);
  const Tensor before = c;
  gemm<float>(Transpose::no, Transpose::no, 37, 45, 21, a.data(), 21, b.data(), 45, c.data(), 45, true);
  const Tensor prod = matmul(a, b);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(before[i] + prod[i]).epsilon(1e-5));
}

TEST_CASE("matmul is deterministic across thread counts") {
  std::mt19937_64 gen(9);
  const Tensor a = oracle::random_tensor<float>({300, 200}, gen);
  const Tensor b = oracle::random_tensor<float>({200, 150}, gen);
  set_thread_count(1);
  const Tensor one = matmul(a, b);
  set_thread_count(3);
  const Tensor three = matmul(a, b);
  set_thread_count(0);
  CHECK(one == three);
}

TEST_CASE("conv output extent") {
  CHECK(conv_output_extent(48, {3, 1, 1}) == 48);
  CHECK(conv_output_extent(48, {2, 2, 0}) == 24);
  CHECK(conv_output_extent(5, {3, 2, 0}) == 2);
  CHECK_THROWS_AS(conv_output_extent(6, {3, 2, 0}), GeometryError);
  CHECK_THROWS_AS(conv_output_extent(2, {5, 1, 0}), GeometryError);
}

TEST_CASE("col2im is the adjoint of im2col") {
  std::mt19937_64 gen(21);
  for (std::size_t kernel : {1, 2, 3}) {
    for (std::size_t pad : {0, 1}) {
      for (std::size_t stride : {1, 2}) {
        const PlaneExtent in{2, 7, 7};
        const ConvGeometry g{kernel, stride, pad};
        if ((in.height + 2 * pad - kernel) % stride != 0) continue;
        const TensorD x = oracle::random_tensor<double>({2, 7, 7}, gen);
        const TensorD cols = im2col(x, g);
        const TensorD y = oracle::random_tensor<double>(cols.shape(), gen);
        // <im2col(x), y> == <x, col2im(y)>
        CHECK(dot(cols, y) == doctest::Approx(dot(x, col2im(y, in, g))).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("rng is deterministic and in range") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
  }
  CHECK(Rng(42).next_u64() != c.next_u64());
  Rng r(7);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(r.below(7) < 7u);
    const double z = r.normal(0.0, 1.0);
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);

  Rng parent(1);
  const Rng::State before = parent.state();
  Rng child = parent.split();
  CHECK(parent.state() != before);
  CHECK(child.next_u64() != parent.next_u64());
  Rng restored(0);
  restored.set_state(before);
  CHECK(restored.next_u64() == Rng(1).next_u64());
}

TEST_CASE("parallel_for visits every index exactly once") {
  for (std::size_t threads : {1, 2, 4}) {
    set_thread_count(threads);
    std::vector<std::atomic<int>> hits(1001);
    parallel_for(hits.size(), 7, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) hits[i]++;
    });
    CHECK(std::all_of(hits.begin(), hits.end(), [](const auto& h) { return h.load() == 1; }));
  }
  set_thread_count(0);
}
