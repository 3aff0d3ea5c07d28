// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace rose::ad::kernels {

// C[m x n] (+)= A[m x k] * B[k x n], all row-major and contiguous.
//
// Every output element is accumulated in increasing k order regardless of
// how rows and columns are blocked, so the result for a given row does not
// depend on m. Batched rendering relies on this for chunk-size invariance.
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate);

// C[k x n] (+)= A[m x k]^T * B[m x n] without materializing A^T. Each
// output element is accumulated in increasing m order, matching
// gemm(transpose(A), B) bit for bit.
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate);

// out[n x m] = in[m x n]^T
void transpose(const double* in, double* out, std::size_t m, std::size_t n);

}  // namespace rose::ad::kernels
