#include "ucomp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#if defined(__AVX512F__) || defined(__FMA__)
#include <immintrin.h>
#endif

namespace ucomp::kernels {
namespace {

constexpr std::size_t kDepthBlock = 256;

#if defined(__AVX512F__)
using Vec = __m512d;
constexpr std::size_t kLanes = 8;
inline Vec vload(const double* p) { return _mm512_loadu_pd(p); }
inline void vstore(double* p, Vec v) { _mm512_storeu_pd(p, v); }
inline Vec vset(double x) { return _mm512_set1_pd(x); }
inline Vec vfma(Vec a, Vec b, Vec c) { return _mm512_fmadd_pd(a, b, c); }
#elif defined(__FMA__)
using Vec = __m256d;
constexpr std::size_t kLanes = 4;
inline Vec vload(const double* p) { return _mm256_loadu_pd(p); }
inline void vstore(double* p, Vec v) { _mm256_storeu_pd(p, v); }
inline Vec vset(double x) { return _mm256_set1_pd(x); }
inline Vec vfma(Vec a, Vec b, Vec c) { return _mm256_fmadd_pd(a, b, c); }
#else
using Vec = double;
constexpr std::size_t kLanes = 1;
inline Vec vload(const double* p) { return *p; }
inline void vstore(double* p, Vec v) { *p = v; }
inline Vec vset(double x) { return x; }
inline Vec vfma(Vec a, Vec b, Vec c) { return std::fma(a, b, c); }
#endif

constexpr std::size_t kRows = 6;

// Element (r, p) of the left operand lives at a[r * rs + p * ps]. Partial
// sums are parked in `acc` between depth blocks, so every output is still a
// single fma chain in increasing p order, whatever the vector width.
struct Left {
  const double* a;
  std::size_t rs, ps;
  double at(std::size_t r, std::size_t p) const { return a[r * rs + p * ps]; }
};

struct Block {
  const Left& a;
  const double* b;
  double* acc;
  std::size_t p0, p1, n;
};

// R rows by V vectors of columns starting at (i0, j0).
template <std::size_t R, std::size_t V>
void micro(const Block& k, std::size_t i0, std::size_t j0) {
  Vec t[R][V];
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < V; ++v) t[r][v] = vload(k.acc + (i0 + r) * k.n + j0 + v * kLanes);
  for (std::size_t p = k.p0; p < k.p1; ++p) {
    const double* bp = k.b + p * k.n + j0;
    Vec bv[V];
    for (std::size_t v = 0; v < V; ++v) bv[v] = vload(bp + v * kLanes);
    for (std::size_t r = 0; r < R; ++r) {
      const Vec x = vset(k.a.at(i0 + r, p));
      for (std::size_t v = 0; v < V; ++v) t[r][v] = vfma(x, bv[v], t[r][v]);
    }
  }
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t v = 0; v < V; ++v) vstore(k.acc + (i0 + r) * k.n + j0 + v * kLanes, t[r][v]);
}

// The hot 6x2 case spelled out: GCC spills the array form every iteration.
void micro_main(const Block& k, std::size_t i0, std::size_t j0) {
  double* c0 = k.acc + i0 * k.n + j0;
  const std::size_t n = k.n;
  Vec t00 = vload(c0), t01 = vload(c0 + kLanes);
  Vec t10 = vload(c0 + n), t11 = vload(c0 + n + kLanes);
  Vec t20 = vload(c0 + 2 * n), t21 = vload(c0 + 2 * n + kLanes);
  Vec t30 = vload(c0 + 3 * n), t31 = vload(c0 + 3 * n + kLanes);
  Vec t40 = vload(c0 + 4 * n), t41 = vload(c0 + 4 * n + kLanes);
  Vec t50 = vload(c0 + 5 * n), t51 = vload(c0 + 5 * n + kLanes);
  const double* a0 = k.a.a + i0 * k.a.rs;
  const std::size_t rs = k.a.rs, ps = k.a.ps;
  for (std::size_t p = k.p0; p < k.p1; ++p) {
    const double* bp = k.b + p * n + j0;
    const Vec b0 = vload(bp), b1 = vload(bp + kLanes);
    const double* ap = a0 + p * ps;
    Vec x = vset(ap[0]);
    t00 = vfma(x, b0, t00);
    t01 = vfma(x, b1, t01);
    x = vset(ap[rs]);
    t10 = vfma(x, b0, t10);
    t11 = vfma(x, b1, t11);
    x = vset(ap[2 * rs]);
    t20 = vfma(x, b0, t20);
    t21 = vfma(x, b1, t21);
    x = vset(ap[3 * rs]);
    t30 = vfma(x, b0, t30);
    t31 = vfma(x, b1, t31);
    x = vset(ap[4 * rs]);
    t40 = vfma(x, b0, t40);
    t41 = vfma(x, b1, t41);
    x = vset(ap[5 * rs]);
    t50 = vfma(x, b0, t50);
    t51 = vfma(x, b1, t51);
  }
  vstore(c0, t00), vstore(c0 + kLanes, t01);
  vstore(c0 + n, t10), vstore(c0 + n + kLanes, t11);
  vstore(c0 + 2 * n, t20), vstore(c0 + 2 * n + kLanes, t21);
  vstore(c0 + 3 * n, t30), vstore(c0 + 3 * n + kLanes, t31);
  vstore(c0 + 4 * n, t40), vstore(c0 + 4 * n + kLanes, t41);
  vstore(c0 + 5 * n, t50), vstore(c0 + 5 * n + kLanes, t51);
}

template <std::size_t R>
void row_panel(const Block& k, std::size_t i0) {
  std::size_t j = 0;
  for (; j + 2 * kLanes <= k.n; j += 2 * kLanes) {
    if constexpr (R == kRows) {
      micro_main(k, i0, j);
    } else {
      micro<R, 2>(k, i0, j);
    }
  }
  for (; j + kLanes <= k.n; j += kLanes) micro<R, 1>(k, i0, j);
  for (; j < k.n; ++j)
    for (std::size_t r = i0; r < i0 + R; ++r) {
      double s = k.acc[r * k.n + j];
      for (std::size_t p = k.p0; p < k.p1; ++p) s = std::fma(k.a.at(r, p), k.b[p * k.n + j], s);
      k.acc[r * k.n + j] = s;
    }
}

void block_product(const Left& a, const double* b, double* acc, std::size_t m, std::size_t p0,
                   std::size_t p1, std::size_t n) {
  const Block k{a, b, acc, p0, p1, n};
  std::size_t i = 0;
  for (; i + kRows <= m; i += kRows) row_panel<kRows>(k, i);
  switch (m - i) {
    case 5: row_panel<5>(k, i); break;
    case 4: row_panel<4>(k, i); break;
    case 3: row_panel<3>(k, i); break;
    case 2: row_panel<2>(k, i); break;
    case 1: row_panel<1>(k, i); break;
    default: break;
  }
}

void product(const Left& a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  thread_local std::vector<double> scratch;
  double* acc = c;
  if (accumulate) {
    scratch.assign(m * n, 0.0);
    acc = scratch.data();
  } else {
    std::fill(c, c + m * n, 0.0);
  }
  for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock)
    block_product(a, b, acc, m, p0, std::min(k, p0 + kDepthBlock), n);
  if (accumulate)
    for (std::size_t i = 0; i < m * n; ++i) c[i] += acc[i];
}

}  // namespace

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n, bool accumulate) {
  product(Left{a, k, 1}, b, c, m, k, n, accumulate);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  product(Left{a, 1, m}, b, c, m, k, n, accumulate);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  // Large m amortises one transpose of B; small m (decoder batches) would
  // spend more on the transpose than on the product.
  if (m >= 64) {
    thread_local std::vector<double> bt;
    bt.resize(k * n);
    transpose(b, bt.data(), n, k);
    gemm(a, bt.data(), c, m, k, n, accumulate);
    return;
  }
  constexpr std::size_t kR = 4;
  auto finish = [&](std::size_t i, std::size_t j, double v) {
    double& dst = c[i * n + j];
    dst = accumulate ? dst + v : v;
  };
  for (std::size_t i0 = 0; i0 < m; i0 += kR) {
    const std::size_t i1 = std::min(m, i0 + kR);
    std::size_t j0 = 0;
    for (; j0 + kR <= n; j0 += kR) {
      if (i1 - i0 == kR) {
        double t[kR][kR] = {};
        for (std::size_t p = 0; p < k; ++p) {
          const double b0 = b[j0 * k + p], b1 = b[(j0 + 1) * k + p], b2 = b[(j0 + 2) * k + p],
                       b3 = b[(j0 + 3) * k + p];
          for (std::size_t r = 0; r < kR; ++r) {
            const double x = a[(i0 + r) * k + p];
            t[r][0] = std::fma(x, b0, t[r][0]);
            t[r][1] = std::fma(x, b1, t[r][1]);
            t[r][2] = std::fma(x, b2, t[r][2]);
            t[r][3] = std::fma(x, b3, t[r][3]);
          }
        }
        for (std::size_t r = 0; r < kR; ++r)
          for (std::size_t q = 0; q < kR; ++q) finish(i0 + r, j0 + q, t[r][q]);
      } else {
        for (std::size_t i = i0; i < i1; ++i)
          for (std::size_t j = j0; j < j0 + kR; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s = std::fma(a[i * k + p], b[j * k + p], s);
            finish(i, j, s);
          }
      }
    }
    for (std::size_t i = i0; i < i1; ++i)
      for (std::size_t j = j0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s = std::fma(a[i * k + p], b[j * k + p], s);
        finish(i, j, s);
      }
  }
}

void transpose(const double* in, double* out, std::size_t m, std::size_t n) {
  constexpr std::size_t kTile = 32;
  for (std::size_t i0 = 0; i0 < m; i0 += kTile) {
    for (std::size_t j0 = 0; j0 < n; j0 += kTile) {
      const std::size_t i1 = i0 + kTile < m ? i0 + kTile : m;
      const std::size_t j1 = j0 + kTile < n ? j0 + kTile : n;
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) out[j * m + i] = in[i * n + j];
      }
    }
  }
}

}  // namespace ucomp::kernels
