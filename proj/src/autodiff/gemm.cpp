// SPDX-License-Identifier: Apache-2.0
#include "gemm.hpp"

#include <algorithm>
#include <cstring>

namespace rose::ad::kernels {

namespace {

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 32;

// Eight doubles; lanes are independent, so per-element arithmetic is the
// same as the scalar loop.
typedef double v8d __attribute__((vector_size(64)));
constexpr std::size_t kLanes = 8;
constexpr std::size_t kVecs = kColBlock / kLanes;

inline v8d load(const double* p) {
  v8d v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store(double* p, v8d v) { std::memcpy(p, &v, sizeof(v)); }

// Full kColBlock-wide tile with accumulators held in registers.
// Element (r, kk) of A is a[r * a_row + kk * a_col].
template <std::size_t Rows>
void tile(const double* a, std::size_t a_row, std::size_t a_col, const double* b, std::size_t ldb, double* c,
          std::size_t ldc, std::size_t steps, bool accumulate) {
  v8d acc[Rows][kVecs];
  for (std::size_t r = 0; r < Rows; ++r) {
    for (std::size_t v = 0; v < kVecs; ++v) acc[r][v] = accumulate ? load(c + r * ldc + v * kLanes) : v8d{};
  }
  for (std::size_t kk = 0; kk < steps; ++kk) {
    const double* brow = b + kk * ldb;
    v8d bv[kVecs];
    for (std::size_t v = 0; v < kVecs; ++v) bv[v] = load(brow + v * kLanes);
    for (std::size_t r = 0; r < Rows; ++r) {
      const double av = a[r * a_row + kk * a_col];
      const v8d as = {av, av, av, av, av, av, av, av};
      for (std::size_t v = 0; v < kVecs; ++v) acc[r][v] += as * bv[v];
    }
  }
  for (std::size_t r = 0; r < Rows; ++r) {
    for (std::size_t v = 0; v < kVecs; ++v) store(c + r * ldc + v * kLanes, acc[r][v]);
  }
}

template <std::size_t Rows>
void block(const double* a, const double* b, double* c, std::size_t k, std::size_t n, std::size_t j0,
           std::size_t width, bool accumulate) {
  double acc[Rows][kColBlock];
  for (std::size_t r = 0; r < Rows; ++r) {
    for (std::size_t j = 0; j < width; ++j) acc[r][j] = accumulate ? c[r * n + j0 + j] : 0.0;
  }
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* brow = b + kk * n + j0;
    for (std::size_t r = 0; r < Rows; ++r) {
      const double av = a[r * k + kk];
      if (width == kColBlock) {
        for (std::size_t j = 0; j < kColBlock; ++j) acc[r][j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < width; ++j) acc[r][j] += av * brow[j];
      }
    }
  }
  for (std::size_t r = 0; r < Rows; ++r) {
    for (std::size_t j = 0; j < width; ++j) c[r * n + j0 + j] = acc[r][j];
  }
}

template <std::size_t Rows>
void block_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
              std::size_t r0, std::size_t j0, std::size_t width, bool accumulate) {
  double acc[Rows][kColBlock];
  for (std::size_t r = 0; r < Rows; ++r) {
    for (std::size_t j = 0; j < width; ++j) acc[r][j] = accumulate ? c[(r0 + r) * n + j0 + j] : 0.0;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n + j0;
    const double* arow = a + i * k + r0;
    for (std::size_t r = 0; r < Rows; ++r) {
      const double av = arow[r];
      if (width == kColBlock) {
        for (std::size_t j = 0; j < kColBlock; ++j) acc[r][j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < width; ++j) acc[r][j] += av * brow[j];
      }
    }
  }
  for (std::size_t r = 0; r < Rows; ++r) {
    for (std::size_t j = 0; j < width; ++j) c[(r0 + r) * n + j0 + j] = acc[r][j];
  }
}

}  // namespace

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  std::size_t r = 0;
  for (; r + kRowBlock <= k; r += kRowBlock) {
    std::size_t j0 = 0;
    for (; j0 + kColBlock <= n; j0 += kColBlock) {
      tile<kRowBlock>(a + r, 1, k, b + j0, n, c + r * n + j0, n, m, accumulate);
    }
    if (j0 < n) block_tn<kRowBlock>(a, b, c, m, k, n, r, j0, n - j0, accumulate);
  }
  for (; r < k; ++r) {
    for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
      block_tn<1>(a, b, c, m, k, n, r, j0, std::min(kColBlock, n - j0), accumulate);
    }
  }
}

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool accumulate) {
  std::size_t i = 0;
  for (; i + kRowBlock <= m; i += kRowBlock) {
    std::size_t j0 = 0;
    for (; j0 + kColBlock <= n; j0 += kColBlock) {
      tile<kRowBlock>(a + i * k, k, 1, b + j0, n, c + i * n + j0, n, k, accumulate);
    }
    if (j0 < n) block<kRowBlock>(a + i * k, b, c + i * n, k, n, j0, n - j0, accumulate);
  }
  for (; i < m; ++i) {
    for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
      block<1>(a + i * k, b, c + i * n, k, n, j0, std::min(kColBlock, n - j0), accumulate);
    }
  }
}

void transpose(const double* in, double* out, std::size_t m, std::size_t n) {
  constexpr std::size_t kTile = 16;
  for (std::size_t i0 = 0; i0 < m; i0 += kTile) {
    for (std::size_t j0 = 0; j0 < n; j0 += kTile) {
      const std::size_t i1 = std::min(m, i0 + kTile);
      const std::size_t j1 = std::min(n, j0 + kTile);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) out[j * m + i] = in[i * n + j];
      }
    }
  }
}

}  // namespace rose::ad::kernels
