#include "wenet/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace wenet::kernels {

namespace {

std::atomic<Mode> g_mode{Mode::Auto};

// Work threshold below which threading overhead dominates.
constexpr std::size_t kAutoFlopThreshold = 1u << 19;

bool use_parallel(std::size_t m, std::size_t k, std::size_t n) {
#ifndef _OPENMP
  (void)m;
  (void)k;
  (void)n;
  return false;
#else
  switch (g_mode.load(std::memory_order_relaxed)) {
    case Mode::Serial:
      return false;
    case Mode::Parallel:
      return true;
    case Mode::Auto:
      return omp_get_max_threads() > 1 && m * k * n >= kAutoFlopThreshold;
  }
  return false;
#endif
}

}  // namespace

void set_mode(Mode mode) { g_mode.store(mode, std::memory_order_relaxed); }

Mode mode() { return g_mode.load(std::memory_order_relaxed); }

bool openmp_enabled() {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

namespace serial {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  // Row-by-row with the inner dimension outermost per row; each c[i][j]
  // accumulates over t in ascending order.
  std::memset(c, 0, m * n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = arow[t];
      const double* brow = b + t * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

void matmul_at(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  std::memset(c, 0, k * n * sizeof(double));
  for (std::size_t p = 0; p < k; ++p) {
    double* crow = c + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      const double* brow = b + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

void matmul_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        acc += arow[t] * brow[t];
      }
      crow[j] = acc;
    }
  }
}

}  // namespace serial

namespace parallel {

#ifdef _OPENMP

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  if (m > 1) {
    // Partition output rows; per-row work matches the serial kernel exactly.
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
      serial::matmul(a + i * k, b, c + i * n, 1, k, n);
    }
  } else {
    // Single row: partition output columns instead. Each c[j] still
    // accumulates over t in ascending order.
#pragma omp parallel
    {
      const int nth = omp_get_num_threads();
      const int tid = omp_get_thread_num();
      const std::size_t chunk = (n + nth - 1) / nth;
      const std::size_t lo = std::min(n, chunk * static_cast<std::size_t>(tid));
      const std::size_t hi = std::min(n, lo + chunk);
      if (lo < hi) {
        for (std::size_t j = lo; j < hi; ++j) c[j] = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
          const double av = a[t];
          const double* brow = b + t * n;
          for (std::size_t j = lo; j < hi; ++j) {
            c[j] += av * brow[j];
          }
        }
      }
    }
  }
}

void matmul_at(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(k); ++p) {
    double* crow = c + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      const double* brow = b + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

void matmul_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static) collapse(2)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(n); ++j) {
      const double* arow = a + i * k;
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        acc += arow[t] * brow[t];
      }
      c[i * n + j] = acc;
    }
  }
}

#else

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  serial::matmul(a, b, c, m, k, n);
}
void matmul_at(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  serial::matmul_at(a, b, c, m, k, n);
}
void matmul_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  serial::matmul_bt(a, b, c, m, k, n);
}

#endif  // _OPENMP

}  // namespace parallel

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m, k, n)) {
    parallel::matmul(a, b, c, m, k, n);
  } else {
    serial::matmul(a, b, c, m, k, n);
  }
}

void matmul_at(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m, k, n)) {
    parallel::matmul_at(a, b, c, m, k, n);
  } else {
    serial::matmul_at(a, b, c, m, k, n);
  }
}

void matmul_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  if (use_parallel(m, k, n)) {
    parallel::matmul_bt(a, b, c, m, k, n);
  } else {
    serial::matmul_bt(a, b, c, m, k, n);
  }
}

}  // namespace wenet::kernels
