#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "meteocast/errors.hpp"
#include "meteocast/gradcheck.hpp"
#include "meteocast/rng.hpp"
#include "meteocast/tensor.hpp"

using namespace meteo;

TEST_CASE("tensor shape and data length must agree") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.at(i) == 0.0);
}

TEST_CASE("row-major indexing survives reshape and transpose round-trips") {
  Tensor a({3, 4});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) a.at2(i, j) = 10.0 * static_cast<double>(i) + static_cast<double>(j);

  CHECK(a.data()[1 * 4 + 2] == 12.0);

  Tensor flat = a.reshaped({12});
  Tensor back = flat.reshaped({3, 4});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(back.at2(i, j) == a.at2(i, j));

  Tensor tt = transpose(transpose(a));
  CHECK(tt.same_shape(a));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(tt.at(i) == a.at(i));

  CHECK_THROWS_AS(a.reshaped({5, 2}), ShapeError);
}

TEST_CASE("matmul identity, hand arithmetic, zero") {
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at2(i, i) = 1.0;
  Tensor b = Tensor::row_major({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  Tensor ib = matmul(eye, b);
  for (std::size_t i = 0; i < 9; ++i) CHECK(ib.at(i) == b.at(i));

  Tensor a = Tensor::row_major({{1, 2}, {3, 4}});
  Tensor v = Tensor::row_major({{0}, {1}});
  Tensor av = matmul(a, v);
  CHECK(av.dim(0) == 2);
  CHECK(av.dim(1) == 1);
  CHECK(av.at2(0, 0) == 2.0);
  CHECK(av.at2(1, 0) == 4.0);

  Tensor z({2, 2});
  Tensor az = matmul(a, z);
  for (std::size_t i = 0; i < az.size(); ++i) CHECK(az.at(i) == 0.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions, naming both shapes") {
  Tensor a({2, 3});
  Tensor b({4, 2});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
}

TEST_CASE("softmax equal logits give 1/T") {
  Tensor x = Tensor::full({5}, 3.7);
  Tensor s = softmax(x, 0);
  for (std::size_t i = 0; i < 5; ++i) CHECK(s.at(i) == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("softmax saturates toward the dominant logit") {
  Tensor x({2}, {0.0, 60.0});
  Tensor s = softmax(x, 0);
  CHECK(s.at(0) < 1e-20);
  CHECK(s.at(1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax is shift invariant and slices sum to one") {
  RngStream rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor x({6, 4});
    for (std::size_t i = 0; i < x.size(); ++i) x.at(i) = (rng.next_uniform() * 2.0 - 1.0) * 50.0;
    for (std::size_t axis : {std::size_t{0}, std::size_t{1}}) {
      Tensor s = softmax(x, axis);
      Tensor shifted = x;
      for (std::size_t i = 0; i < shifted.size(); ++i) shifted.at(i) += 13.25;
      Tensor s2 = softmax(shifted, axis);
      for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(s.at(i) > 0.0);
        CHECK(std::abs(s.at(i) - s2.at(i)) < 1e-12);
      }
      const std::size_t outer = axis == 0 ? x.dim(1) : x.dim(0);
      for (std::size_t o = 0; o < outer; ++o) {
        double sum = 0.0;
        for (std::size_t k = 0; k < x.dim(axis); ++k) {
          sum += axis == 0 ? s.at2(k, o) : s.at2(o, k);
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("activations at their anchor points") {
  Tensor x({3}, {0.0, 2.0, -2.0});
  Tensor s = activate(x, Activation::Sigmoid);
  CHECK(s.at(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.at(1) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));
  CHECK(s.at(1) + s.at(2) == doctest::Approx(1.0).epsilon(1e-14));

  Tensor t = activate(x, Activation::Tanh);
  CHECK(t.at(0) == 0.0);
  CHECK(t.at(1) == doctest::Approx(std::tanh(2.0)).epsilon(1e-15));

  Tensor l = activate(x, Activation::Linear);
  for (std::size_t i = 0; i < 3; ++i) CHECK(l.at(i) == x.at(i));
}

TEST_CASE("sigmoid stays finite and ordered far into the tails") {
  CHECK(sigmoid(-745.0) >= 0.0);
  CHECK(sigmoid(-745.0) < 1e-300);
  CHECK(sigmoid(745.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::isfinite(sigmoid(-1e8)));
}

TEST_CASE("activation names round-trip, unknown name rejected") {
  for (auto kind : {Activation::Sigmoid, Activation::Tanh, Activation::Linear}) {
    CHECK(activation_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(activation_from_string("relu6"), ConfigError);
}

TEST_CASE("finite differences recover analytic gradients") {
  auto quad = [](const Tensor& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v.at(i) * v.at(i);
    return s;
  };
  Tensor x({4}, {0.5, -1.25, 2.0, 0.0});
  Tensor g = finite_difference_gradient(quad, x, 1e-5);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(g.at(i) == doctest::Approx(2.0 * x.at(i)).epsilon(1e-8));
  }

  auto constant = [](const Tensor&) { return 4.0; };
  Tensor gc = finite_difference_gradient(constant, x, 1e-5);
  for (std::size_t i = 0; i < 4; ++i) CHECK(gc.at(i) == 0.0);

  auto sine = [](const Tensor& v) { return std::sin(v.at(0)); };
  Tensor origin({1});
  Tensor gs = finite_difference_gradient(sine, origin, 1e-5);
  CHECK(std::abs(gs.at(0) - 1.0) < 1e-8);
}

TEST_CASE("finite differences reject non-finite evaluations") {
  auto bad = [](const Tensor& v) { return std::log(v.at(0)); };
  Tensor x({1}, {5e-6});  // stencil reaches x - h < 0, where log is NaN
  CHECK_THROWS_AS(finite_difference_gradient(bad, x, 1e-5), NumericError);
}

TEST_CASE("max_relative_error floors tiny denominators") {
  Tensor a({2}, {1.0, 0.0});
  Tensor b({2}, {1.0 + 1e-5, 1e-9});
  double e = max_relative_error(a, b);
  CHECK(e == doctest::Approx(1e-5).epsilon(1e-3));
  CHECK(max_relative_error(a, a) == 0.0);
}

TEST_CASE("rng stream reproduces identical sequences from the same seed") {
  RngStream a(123456789), b(123456789);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  RngStream c(123456789), d(123456789);
  for (int i = 0; i < 1000; ++i) {
    CHECK(c.next_uniform() == d.next_uniform());
    CHECK(c.next_normal() == d.next_normal());
  }
  CHECK(RngStream(1).next_u64() != RngStream(2).next_u64());
}

TEST_CASE("rng uniform range and bounded integers") {
  RngStream rng(7);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.next_uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    std::uint64_t k = rng.next_below(7);
    CHECK(k < 7);
    ++counts[static_cast<std::size_t>(k)];
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 600);
}

TEST_CASE("rng normals have the right first two moments") {
  RngStream rng(42);
  const int n = 200000;
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    double z = rng.next_normal();
    sum += z;
    sumsq += z * z;
  }
  double mean = sum / n;
  double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("rng shuffle is a permutation and is seed-deterministic") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  RngStream a(99), b(99);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
  CHECK(v != sorted);  // astronomically unlikely to shuffle into identity
}

TEST_CASE("symmetric eigendecomposition on a known matrix") {
  Tensor a = Tensor::row_major({{2, 1}, {1, 2}});
  SymEig e = sym_eig(a);
  CHECK(e.values.at(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e.values.at(1) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("symmetric eigendecomposition reconstructs and is orthonormal") {
  RngStream rng(5);
  const std::size_t n = 6;
  Tensor a({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double v = rng.next_normal();
      a.at2(i, j) = v;
      a.at2(j, i) = v;
    }
  }
  SymEig e = sym_eig(a);
  for (std::size_t i = 0; i + 1 < n; ++i) CHECK(e.values.at(i) <= e.values.at(i + 1));

  // V diag(w) V^T == A
  Tensor vd({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) vd.at2(i, j) = e.vectors.at2(i, j) * e.values.at(j);
  Tensor rec = matmul(vd, transpose(e.vectors));
  for (std::size_t i = 0; i < n * n; ++i) CHECK(std::abs(rec.at(i) - a.at(i)) < 1e-10);

  Tensor vtv = matmul(transpose(e.vectors), e.vectors);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      CHECK(std::abs(vtv.at2(i, j) - (i == j ? 1.0 : 0.0)) < 1e-10);
}

TEST_CASE("all_finite flags NaN and infinity") {
  Tensor t({3}, {1.0, 2.0, 3.0});
  CHECK(t.all_finite());
  t.at(1) = std::nan("");
  CHECK(!t.all_finite());
  t.at(1) = std::numeric_limits<double>::infinity();
  CHECK(!t.all_finite());
}
