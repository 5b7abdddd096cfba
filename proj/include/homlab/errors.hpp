// Error types shared across the solver stack. Each class maps to a stable
// CLI exit code (see tools/homlab.cpp).
#pragma once

#include <stdexcept>
#include <string>

namespace homlab {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Contraction condition kappa_p = C_p * L / alpha >= 1.
struct KappaError : std::runtime_error {
  double kappa_p;
  double c_p;
  KappaError(double kappa, double cp)
      : std::runtime_error("KAPPA: contraction condition violated, kappa_p = " +
                           std::to_string(kappa) + " (C_p = " + std::to_string(cp) +
                           "); rescale L or alpha"),
        kappa_p(kappa), c_p(cp) {}
};

// Pure Neumann/periodic solvability violated: source has nonzero mean.
struct CompatError : std::runtime_error {
  double defect;
  explicit CompatError(double d, const std::string& what)
      : std::runtime_error("COMPAT: " + what), defect(d) {}
};

struct NoConvError : std::runtime_error {
  double residual;
  explicit NoConvError(double r, const std::string& what)
      : std::runtime_error("NOCONV: " + what), residual(r) {}
};

}  // namespace homlab
