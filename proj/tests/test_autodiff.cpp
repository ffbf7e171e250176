#include <cmath>
#include <numeric>

#include "doctest.h"
#include "sensia/errors.hpp"
#include "sensia/ops.hpp"
#include "support.hpp"

using namespace sensia;
using ad::Tensor;
using testing::all_coords;
using testing::finite_difference_check;
using testing::random_tensor;

namespace {

void check_primitive(const char* name, std::vector<Tensor> leaves,
                     const std::function<Tensor()>& op, std::uint64_t seed = 11) {
  Rng rng(seed);
  const Tensor sample = op();
  std::vector<double> w(sample.size());
  for (double& x : w) x = rng.uniform(-1.0, 1.0);
  const Tensor weights = Tensor::from(sample.shape(), w);
  auto f = [&] { return ad::sum(ad::mul(op(), weights)); };
  const auto r = finite_difference_check(f, leaves, all_coords(leaves));
  INFO(name);
  CHECK(r.worst <= 1e-4);
}

}  // namespace

TEST_CASE("softmax helper") {
  const std::vector<double> v{1.0, 2.0, 3.0};
  const auto p = softmax(v);
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p[2] > p[1]);
  const std::vector<double> same{5.0, 5.0, 5.0, 5.0};
  for (double x : softmax(same)) CHECK(x == doctest::Approx(0.25));
  // Large inputs stay finite thanks to max subtraction.
  const std::vector<double> big{1000.0, 1000.0};
  for (double x : softmax(big)) CHECK(x == doctest::Approx(0.5));
  CHECK_THROWS_AS(softmax(v, 0.0), InvalidArgument);
  const std::vector<double> bad{1.0, NAN};
  CHECK_THROWS_AS(softmax(bad), InvalidArgument);
}

TEST_CASE("l2_normalize helper") {
  const std::vector<double> v{3.0, 4.0};
  const auto n = l2_normalize(v);
  CHECK(n[0] == doctest::Approx(0.6));
  CHECK(n[1] == doctest::Approx(0.8));
  const std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS_AS(l2_normalize(zero), DegenerateVector);
}

TEST_CASE("primitive gradients match finite differences") {
  Rng rng(7);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng), c = random_tensor({3, 4}, rng);
  Tensor row = random_tensor({1, 4}, rng), col = random_tensor({3, 1}, rng), s = random_tensor({1}, rng);
  Tensor bt = random_tensor({5, 4}, rng);
  Tensor pos = random_tensor({3, 4}, rng, 0.5, 2.0);
  Tensor gamma = random_tensor({1, 4}, rng), beta = random_tensor({1, 4}, rng);
  Tensor table = random_tensor({6, 4}, rng);

  check_primitive("matmul", {a, b}, [&] { return ad::matmul(a, b); });
  check_primitive("matmul_nt", {a, bt}, [&] { return ad::matmul_nt(a, bt); });
  check_primitive("add", {a, c}, [&] { return ad::add(a, c); });
  check_primitive("add row", {a, row}, [&] { return ad::add(a, row); });
  check_primitive("add col", {a, col}, [&] { return ad::add(a, col); });
  check_primitive("add scalar", {a, s}, [&] { return ad::add(a, s); });
  check_primitive("sub", {a, c}, [&] { return ad::sub(a, c); });
  check_primitive("sub row", {a, row}, [&] { return ad::sub(a, row); });
  check_primitive("mul", {a, c}, [&] { return ad::mul(a, c); });
  check_primitive("mul col", {a, col}, [&] { return ad::mul(a, col); });
  check_primitive("mul scalar", {a, s}, [&] { return ad::mul(a, s); });
  check_primitive("scale", {a}, [&] { return ad::scale(a, -1.7); });
  check_primitive("sum", {a}, [&] { return ad::sum(a); });
  check_primitive("mean", {a}, [&] { return ad::mean(a); });
  check_primitive("softmax_rows", {a}, [&] { return ad::softmax_rows(a, 0.7); });
  ad::Mask mask{1, 1, 0, 1, 1, 0, 1, 1, 0, 1, 1, 1};
  check_primitive("softmax_rows masked", {a}, [&] { return ad::softmax_rows(a, 1.0, &mask); });
  check_primitive("log_softmax_rows", {a}, [&] { return ad::log_softmax_rows(a); });
  check_primitive("layer_norm_rows", {a, gamma, beta}, [&] { return ad::layer_norm_rows(a, gamma, beta); });
  check_primitive("gelu", {a}, [&] { return ad::gelu(a); });
  const std::vector<int> ids{0, 3, 3, 5};
  check_primitive("embedding", {table}, [&] { return ad::embedding(table, ids); });
  check_primitive("row_norms", {a}, [&] { return ad::row_norms(a); });
  check_primitive("l2_normalize_rows", {a}, [&] { return ad::l2_normalize_rows(a); });
  check_primitive("cosine_similarity", {a, bt}, [&] { return ad::cosine_similarity(a, bt); });
  const ad::Mask rows{1, 0, 1};
  check_primitive("masked_mean_rows", {a}, [&] { return ad::masked_mean_rows(a, rows); });
  const std::vector<std::size_t> pick_idx{2, 0, 3};
  check_primitive("pick", {a}, [&] { return ad::pick(a, pick_idx); });
  const std::vector<std::size_t> gather_idx{3, 3, 0, 1, 2};
  check_primitive("gather_cols", {a}, [&] { return ad::gather_cols(a, gather_idx); });
  check_primitive("slice_rows", {a}, [&] { return ad::slice_rows(a, 1, 2); });
  check_primitive("slice_cols", {a}, [&] { return ad::slice_cols(a, 1, 2); });
  check_primitive("concat_rows", {a, c}, [&] { return ad::concat_rows({a, c}); });
  check_primitive("concat_cols", {a, c}, [&] { return ad::concat_cols({a, c}); });
  check_primitive("transpose", {a}, [&] { return ad::transpose(a); });
  check_primitive("reshape", {a}, [&] { return ad::reshape(a, {2, 6}); });
  check_primitive("composite", {a, b, pos}, [&] {
    return ad::log_softmax_rows(ad::mul(ad::matmul(ad::gelu(a), b), ad::row_norms(pos)));
  });
}

TEST_CASE("masked softmax gives exact zeros and handles fully masked rows") {
  const Tensor a = Tensor::from({2, 3}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
  const ad::Mask mask{1, 0, 1, 0, 0, 0};
  const Tensor p = ad::softmax_rows(a, 1.0, &mask);
  CHECK(p.at(0, 1) == 0.0);
  CHECK(p.at(0, 0) + p.at(0, 2) == doctest::Approx(1.0));
  for (std::size_t j = 0; j < 3; ++j) CHECK(p.at(1, j) == 0.0);
  const Tensor bad = Tensor::from({1, 2}, {1.0, INFINITY});
  CHECK_THROWS_AS(ad::softmax_rows(bad), InvalidArgument);
}

TEST_CASE("leaf gradients accumulate until zero_grad") {
  Tensor x = Tensor::from({2}, {1.0, -2.0}, true);
  auto f = [&] { return ad::sum(ad::mul(x, x)); };
  f().backward();
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  f().backward();
  CHECK(x.grad()[0] == doctest::Approx(4.0));
  CHECK(x.grad()[1] == doctest::Approx(-8.0));
  x.zero_grad();
  f().backward();
  CHECK(x.grad()[1] == doctest::Approx(-4.0));
}

TEST_CASE("shared subexpressions receive the sum of their uses") {
  Tensor x = Tensor::from({1}, {3.0}, true);
  const Tensor y = ad::mul(x, x);
  const Tensor z = ad::add(y, y);  // 2x^2
  z.backward();
  CHECK(x.grad()[0] == doctest::Approx(12.0));
}

TEST_CASE("backward requires a scalar and no-grad records nothing") {
  Tensor x = Tensor::from({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(ad::scale(x, 2.0).backward(), InvalidArgument);
  Tensor y;
  {
    ad::NoGradGuard guard;
    CHECK_FALSE(ad::grad_enabled());
    y = ad::sum(ad::mul(x, x));
  }
  CHECK(ad::grad_enabled());
  y.backward();
  CHECK(x.grad().empty());
}

TEST_CASE("detach cuts history") {
  Tensor x = Tensor::from({1}, {2.0}, true);
  const Tensor d = ad::mul(x, x).detach();
  Tensor w = Tensor::from({1}, {1.0}, true);
  ad::sum(ad::mul(d, w)).backward();
  CHECK(x.grad().empty());
  CHECK(w.grad()[0] == doctest::Approx(4.0));
}

TEST_CASE("errors from ops") {
  Rng rng(3);
  const Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
  CHECK_THROWS_AS(ad::matmul(a, b), InvalidArgument);
  const Tensor table = random_tensor({4, 3}, rng);
  const std::vector<int> bad{0, 4};
  CHECK_THROWS_AS(ad::embedding(table, bad), InvalidToken);
  const Tensor zero_row = Tensor::from({2, 2}, {1.0, 0.0, 0.0, 0.0});
  try {
    ad::l2_normalize_rows(zero_row);
    FAIL("expected DegenerateVector");
  } catch (const DegenerateVector& e) {
    CHECK(e.index() == 1);
  }
  const ad::Mask none{0, 0};
  CHECK_THROWS_AS(ad::masked_mean_rows(a, none), EmptySequence);
}

TEST_CASE("values stay finite after forward passes on random inputs") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_tensor({4, 6}, rng, -30.0, 30.0, false);
    for (const Tensor& t : {ad::softmax_rows(a), ad::log_softmax_rows(a), ad::gelu(a)}) {
      for (double v : t.values()) CHECK(std::isfinite(v));
    }
  }
}
