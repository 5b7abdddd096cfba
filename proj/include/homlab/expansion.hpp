// Two-scale expansion assembly on the perforated mesh, corrector error in
// the V^eps norm, convergence-order fitting and residual diagnostics.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "homlab/correctors.hpp"
#include "homlab/fem.hpp"
#include "homlab/mesh.hpp"

namespace homlab {

// Recovered macro derivatives of u0 on the (unperforated) macro mesh:
// nodal gradient G and symmetrized second derivatives H (grid differencing
// of the recovered gradient).
struct MacroDerivatives {
  std::vector<std::array<double, 2>> grad;
  std::vector<double> h11, h12, h22;
};

MacroDerivatives macro_derivatives(const QuadMesh& macro_mesh,
                                   const std::vector<double>& u0);

// Grid central differences of a nodal field on a full structured mesh.
std::vector<std::array<double, 2>> grid_diff(const QuadMesh& mesh,
                                             const std::vector<double>& v);

struct ExpansionEvaluation {
  double eps = 0.0;
  int M = 2;
  std::vector<double> values;                 // nodal, on the perforated mesh
  std::vector<std::array<double, 2>> grad;    // per element, at the centroid
};

// Classical mode: u0(x) + eps chi_j(y) d_j u0 + eps^2 theta_ij(y) d_ij u0.
// Nonlinear mode: sum_m eps^m u_m(y). Node resolutions must align; the macro
// mesh (classical) must share the perforated mesh's global grid.
ExpansionEvaluation evaluate_expansion(const CorrectorHierarchy& hier,
                                       double eps, const QuadMesh& pmesh,
                                       const QuadMesh& cmesh,
                                       const QuadMesh* macro_mesh = nullptr);

// || u_eps - expansion ||_{V^eps}
double corrector_error(const QuadMesh& pmesh, const ScalarField& u_eps,
                       const ExpansionEvaluation& eval);

struct ConvergenceReport {
  std::vector<std::pair<double, double>> samples;  // (eps, error), eps desc
  double slope = 0.0;
  double constant = 0.0;  // fitted prefactor
  double r2 = 0.0;
  double theory_order = 0.0;  // (M-1)/2
  std::vector<std::string> flags;
  bool order_gate = false;  // slope >= theory_order - 0.1
  bool fitted = false;
};

// Least-squares fit of log(error) against log(eps); needs >= 3 samples with
// strictly decreasing eps. Errors below 1e-12 flag DEGENERATE and skip the
// fit; R^2 < 0.95 flags PRE-ASYMPTOTIC.
ConvergenceReport fit_convergence_order(
    const std::vector<std::pair<double, double>>& samples, int M);

struct ResidualDiagnostics {
  double reaction_term = 0.0;     // ||R(u_eps) - R(expansion)||_L2(Omega^eps)
  double volume_remainder = 0.0;  // eps^{M-1} scaled operator remainder loads
  double surface_term = 0.0;      // eps^M scaled hole-boundary flux of u_M
};

ResidualDiagnostics residual_diagnostics(const CorrectorHierarchy& hier,
                                         const QuadMesh& pmesh,
                                         const QuadMesh& cmesh,
                                         const QuadMesh* macro_mesh,
                                         const ScalarField& u_eps,
                                         const ExpansionEvaluation& eval,
                                         const ReactionSpec& reaction,
                                         const CoefficientSpec& coeff,
                                         double eps, Vec2 g = {});

}  // namespace homlab
