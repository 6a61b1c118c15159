#pragma once

#include <cstddef>

namespace ucomp::kernels {

// Row-major dense kernels. Every output element is accumulated with fused
// multiply-adds in increasing k order starting from zero, whichever code path
// (blocked or tail) computes it. Results are therefore independent of the
// row position of an operand, which keeps max-pooled encoders bit-exactly
// permutation invariant.

/// C(m×n) = A(m×k) · B(k×n), or C += A·B when accumulate is set.
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate = false);

/// C(m×n) = Aᵀ · B for A stored row-major as (k×m) and B as (k×n), or
/// C += Aᵀ·B when accumulate is set.
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate = false);

/// C(m×n) = A(m×k) · Bᵀ for B stored row-major as (n×k), or C += A·Bᵀ.
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate = false);

/// out(n×m) = in(m×n)ᵀ
void transpose(const double* in, double* out, std::size_t m, std::size_t n);

}  // namespace ucomp::kernels
