// Vector and sparse matrix-vector kernels used by the CG solver.
// Scalar reference implementations plus AVX2/FMA variants, selected once at
// startup from CPUID. Lane order is fixed, so results are deterministic on a
// given machine.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace homlab::kern {

enum class Isa { Scalar, Avx2 };

// Active instruction set; detected at first use.
Isa active();
std::string isa_name(Isa isa);

// Force a particular implementation (equivalence tests); throws if the
// requested ISA is not available on this CPU.
void force(Isa isa);

double dot(std::span<const double> x, std::span<const double> y);

// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);

// y = x + b * y
void xpby(std::span<const double> x, double b, std::span<double> y);

// y[i] = x[i] * d[i] (pointwise, used for Jacobi preconditioning)
void hadamard(std::span<const double> x, std::span<const double> d,
              std::span<double> y);

struct Csr {
  int n = 0;
  std::vector<int> rowptr;  // size n+1
  std::vector<int> col;
  std::vector<double> val;
};

// y = A x
void spmv(const Csr& a, std::span<const double> x, std::span<double> y);

}  // namespace homlab::kern
