#pragma once

#include <cstddef>
#include <span>

#include "emberflow/tensor.hpp"

namespace emberflow {

// Row-major GEMM: C[m,n] (+)= op(A)[m,k] * op(B)[k,n].
//
// op(A) is A (lda = row stride) or, with Transpose::yes, the transpose of a
// row-major [k,m] matrix. Same for B. With accumulate = false C is
// overwritten; otherwise products are added to the existing values.
//
// Every C element sums its k products in ascending order starting from its
// initial value, irrespective of blocking or the number of workers, so two
// runs of the same binary produce identical bits.
template <typename T>
void gemm(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k,
          std::span<const T> a, std::size_t lda, std::span<const T> b, std::size_t ldb, std::span<T> c,
          std::size_t ldc, bool accumulate);

}  // namespace emberflow
