#pragma once

#include <cstddef>

// Dense matrix kernels behind the tensor primitives. Each kernel exists in a
// serial reference form and an OpenMP form. The parallel form partitions
// output elements across threads but keeps the per-element accumulation order
// identical to the serial form, so results are bit-identical for any thread
// count. All matrices are row-major.
namespace wenet::kernels {

enum class Mode {
  Serial,    // always run the reference kernels
  Parallel,  // always run the OpenMP kernels
  Auto,      // OpenMP when the problem is large enough to pay for it
};

void set_mode(Mode mode);
Mode mode();

// True when the library was built with OpenMP support.
bool openmp_enabled();

namespace serial {

// c[m x n] = a[m x k] * b[k x n]
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// c[k x n] = a^T * b with a[m x k], b[m x n]
void matmul_at(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// c[m x n] = a * b^T with a[m x k], b[n x k]
void matmul_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

}  // namespace serial

namespace parallel {

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void matmul_at(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void matmul_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

}  // namespace parallel

// Dispatching entry points used by the tensor layer.
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void matmul_at(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
void matmul_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

}  // namespace wenet::kernels
