// Direct solve of the full microscale problem on the perforated domain:
// div(-d(x/eps) grad u) = R(u) in Omega^eps, u = 0 on the outer boundary,
// zero flux on hole boundaries. Ground truth for the corrector estimates.
#pragma once

#include <vector>

#include "homlab/correctors.hpp"
#include "homlab/fem.hpp"
#include "homlab/mesh.hpp"

namespace homlab {

struct MicroProblem {
  const QuadMesh* pmesh = nullptr;
  const CoefficientSpec* cell_coeff = nullptr;  // d(y) on the unit cell
  const ReactionSpec* reaction = nullptr;
  int K = 0;  // eps = 1/K

  // d at a macro point: cell coefficient at y = x/eps mod 1.
  double d_eps(double x1, double x2) const;
};

struct MicroResult {
  ScalarField u;           // Dirichlet gauge on the outer boundary
  IterationTrace trace;
  double energy_lhs = 0;   // int d |grad u|^2
  double energy_rhs = 0;   // int R(u) u
  double apriori_rhs = 0;  // C_Omega ||R(u)||_L2 / alpha (Dirichlet Poincare)
  double v_norm = 0;       // ||u||_{V^eps}
};

MicroResult solve_microscale(const MicroProblem& prob, const PicardOptions& opt);

struct FluxReport {
  double total_abs = 0;  // sum over Gamma^eps faces of |d grad u . n| * len
  double max_abs = 0;
};

// Weak residual of the zero-flux condition on hole faces, midpoint rule.
FluxReport flux_check(const MicroProblem& prob,
                      const std::vector<double>& field);

}  // namespace homlab
