// AVX2/FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma; it is only entered when CPUID reports both features.
#include "homlab/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#endif

namespace homlab::kern::detail {

#if defined(__x86_64__) || defined(__i386__)

double dot_avx2(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  std::size_t i = 0;
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x.data() + i),
                           _mm256_loadu_pd(y.data() + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x.data() + i + 4),
                           _mm256_loadu_pd(y.data() + i + 4), acc1);
  }
  __m256d acc = _mm256_add_pd(acc0, acc1);
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  double s = ((lane[0] + lane[1]) + (lane[2] + lane[3]));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(double a, std::span<const double> x, std::span<double> y) {
  const std::size_t n = x.size();
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y.data() + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x.data() + i), vy);
    _mm256_storeu_pd(y.data() + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void xpby_avx2(std::span<const double> x, double b, std::span<double> y) {
  const std::size_t n = x.size();
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y.data() + i);
    vy = _mm256_fmadd_pd(vb, vy, _mm256_loadu_pd(x.data() + i));
    _mm256_storeu_pd(y.data() + i, vy);
  }
  for (; i < n; ++i) y[i] = x[i] + b * y[i];
}

void hadamard_avx2(std::span<const double> x, std::span<const double> d,
                   std::span<double> y) {
  const std::size_t n = x.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y.data() + i,
                     _mm256_mul_pd(_mm256_loadu_pd(x.data() + i),
                                   _mm256_loadu_pd(d.data() + i)));
  }
  for (; i < n; ++i) y[i] = x[i] * d[i];
}

void spmv_avx2(const Csr& a, std::span<const double> x, std::span<double> y) {
  for (int r = 0; r < a.n; ++r) {
    const int lo = a.rowptr[r], hi = a.rowptr[r + 1];
    int k = lo;
    __m256d acc = _mm256_setzero_pd();
    for (; k + 4 <= hi; k += 4) {
      const __m256d vx =
          _mm256_set_pd(x[a.col[k + 3]], x[a.col[k + 2]], x[a.col[k + 1]],
                        x[a.col[k]]);
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(a.val.data() + k), vx, acc);
    }
    alignas(32) double lane[4];
    _mm256_store_pd(lane, acc);
    double s = ((lane[0] + lane[1]) + (lane[2] + lane[3]));
    for (; k < hi; ++k) s += a.val[k] * x[a.col[k]];
    y[r] = s;
  }
}

#else  // non-x86: never dispatched, keep the linker happy

double dot_avx2(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}
void axpy_avx2(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}
void xpby_avx2(std::span<const double> x, double b, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + b * y[i];
}
void hadamard_avx2(std::span<const double> x, std::span<const double> d,
                   std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * d[i];
}
void spmv_avx2(const Csr& a, std::span<const double> x, std::span<double> y) {
  for (int r = 0; r < a.n; ++r) {
    double s = 0.0;
    for (int k = a.rowptr[r]; k < a.rowptr[r + 1]; ++k)
      s += a.val[k] * x[a.col[k]];
    y[r] = s;
  }
}

#endif

}  // namespace homlab::kern::detail
