#include "homlab/kernels.hpp"

#include <cassert>
#include <stdexcept>

namespace homlab::kern {

namespace detail {
double dot_scalar(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void xpby_scalar(std::span<const double> x, double b, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + b * y[i];
}

void hadamard_scalar(std::span<const double> x, std::span<const double> d,
                     std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * d[i];
}

void spmv_scalar(const Csr& a, std::span<const double> x, std::span<double> y) {
  for (int r = 0; r < a.n; ++r) {
    double s = 0.0;
    for (int k = a.rowptr[r]; k < a.rowptr[r + 1]; ++k)
      s += a.val[k] * x[a.col[k]];
    y[r] = s;
  }
}

// Implemented in kernels_avx2.cpp (compiled with -mavx2 -mfma).
double dot_avx2(std::span<const double> x, std::span<const double> y);
void axpy_avx2(double a, std::span<const double> x, std::span<double> y);
void xpby_avx2(std::span<const double> x, double b, std::span<double> y);
void hadamard_avx2(std::span<const double> x, std::span<const double> d,
                   std::span<double> y);
void spmv_avx2(const Csr& a, std::span<const double> x, std::span<double> y);
}  // namespace detail

namespace {
Isa detect() {
#if defined(__x86_64__) || defined(__i386__)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return Isa::Avx2;
#endif
  return Isa::Scalar;
}

Isa g_isa = detect();
}  // namespace

Isa active() { return g_isa; }

std::string isa_name(Isa isa) {
  return isa == Isa::Avx2 ? "avx2" : "scalar";
}

void force(Isa isa) {
  if (isa == Isa::Avx2 && detect() != Isa::Avx2)
    throw std::runtime_error("AVX2 not available on this CPU");
  g_isa = isa;
}

double dot(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  if (g_isa == Isa::Avx2) return detail::dot_avx2(x, y);
  return detail::dot_scalar(x, y);
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  if (g_isa == Isa::Avx2) return detail::axpy_avx2(a, x, y);
  detail::axpy_scalar(a, x, y);
}

void xpby(std::span<const double> x, double b, std::span<double> y) {
  assert(x.size() == y.size());
  if (g_isa == Isa::Avx2) return detail::xpby_avx2(x, b, y);
  detail::xpby_scalar(x, b, y);
}

void hadamard(std::span<const double> x, std::span<const double> d,
              std::span<double> y) {
  assert(x.size() == d.size() && x.size() == y.size());
  if (g_isa == Isa::Avx2) return detail::hadamard_avx2(x, d, y);
  detail::hadamard_scalar(x, d, y);
}

void spmv(const Csr& a, std::span<const double> x, std::span<double> y) {
  assert(static_cast<int>(y.size()) == a.n);
  if (g_isa == Isa::Avx2) return detail::spmv_avx2(a, x, y);
  detail::spmv_scalar(a, x, y);
}

}  // namespace homlab::kern
