#include <doctest.h>

#include <cstring>
#include <vector>

#include "wenet/kernels.hpp"
#include "wenet/rng.hpp"

using namespace wenet;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

// Plain triple loop, independent of the kernel implementations.
std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                 std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
      c[i * n + j] = acc;
    }
  }
  return c;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("serial matmul matches the naive triple loop") {
  Rng rng(41);
  for (int round = 0; round < 20; ++round) {
    const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6), n = 1 + rng.below(6);
    const auto a = random_values(m * k, rng);
    const auto b = random_values(k * n, rng);
    std::vector<double> c(m * n);
    kernels::serial::matmul(a.data(), b.data(), c.data(), m, k, n);
    const auto expect = naive_matmul(a, b, m, k, n);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("parallel kernels are bit-identical to serial kernels") {
  Rng rng(17);
  for (int round = 0; round < 40; ++round) {
    // Mix tiny and wide shapes, including single-row inputs that exercise
    // the column-partitioned path.
    const std::size_t m = 1 + rng.below(round % 3 == 0 ? 1 : 33);
    const std::size_t k = 1 + rng.below(48);
    const std::size_t n = 1 + rng.below(300);
    const auto a = random_values(m * k, rng);
    const auto b = random_values(k * n, rng);

    std::vector<double> c_serial(m * n), c_par(m * n);
    kernels::serial::matmul(a.data(), b.data(), c_serial.data(), m, k, n);
    kernels::parallel::matmul(a.data(), b.data(), c_par.data(), m, k, n);
    CHECK(bit_equal(c_serial, c_par));

    std::vector<double> at_serial(k * n), at_par(k * n);
    const auto a2 = random_values(m * k, rng);
    const auto b2 = random_values(m * n, rng);
    kernels::serial::matmul_at(a2.data(), b2.data(), at_serial.data(), m, k, n);
    kernels::parallel::matmul_at(a2.data(), b2.data(), at_par.data(), m, k, n);
    CHECK(bit_equal(at_serial, at_par));

    std::vector<double> bt_serial(m * n), bt_par(m * n);
    const auto a3 = random_values(m * k, rng);
    const auto b3 = random_values(n * k, rng);
    kernels::serial::matmul_bt(a3.data(), b3.data(), bt_serial.data(), m, k, n);
    kernels::parallel::matmul_bt(a3.data(), b3.data(), bt_par.data(), m, k, n);
    CHECK(bit_equal(bt_serial, bt_par));
  }
}

TEST_CASE("transposed kernels match naive formulations") {
  Rng rng(29);
  const std::size_t m = 5, k = 4, n = 3;
  const auto a = random_values(m * k, rng);
  const auto b = random_values(m * n, rng);
  std::vector<double> c(k * n);
  kernels::matmul_at(a.data(), b.data(), c.data(), m, k, n);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += a[i * k + p] * b[i * n + j];
      CHECK(c[p * n + j] == doctest::Approx(acc).epsilon(1e-12));
    }
  }

  const auto a2 = random_values(m * k, rng);
  const auto b2 = random_values(n * k, rng);
  std::vector<double> c2(m * n);
  kernels::matmul_bt(a2.data(), b2.data(), c2.data(), m, k, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a2[i * k + t] * b2[j * k + t];
      CHECK(c2[i * n + j] == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("mode switch routes through both implementations") {
  const kernels::Mode saved = kernels::mode();
  kernels::set_mode(kernels::Mode::Serial);
  CHECK(kernels::mode() == kernels::Mode::Serial);
  kernels::set_mode(kernels::Mode::Parallel);
  CHECK(kernels::mode() == kernels::Mode::Parallel);

  // Dispatched result must not depend on the mode.
  Rng rng(7);
  const std::size_t m = 4, k = 9, n = 11;
  const auto a = random_values(m * k, rng);
  const auto b = random_values(k * n, rng);
  std::vector<double> c1(m * n), c2(m * n);
  kernels::set_mode(kernels::Mode::Serial);
  kernels::matmul(a.data(), b.data(), c1.data(), m, k, n);
  kernels::set_mode(kernels::Mode::Parallel);
  kernels::matmul(a.data(), b.data(), c2.data(), m, k, n);
  CHECK(bit_equal(c1, c2));

  kernels::set_mode(saved);
}
