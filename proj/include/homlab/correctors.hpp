// Auxiliary cell problems: classical linear correctors (chi_j, second-order
// theta_ij, effective tensor, homogenized macro problem) and the nonlinear
// hierarchy solved level by level with Picard linearization.
#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "homlab/fem.hpp"
#include "homlab/mesh.hpp"

namespace homlab {

struct Vec2 {
  double x = 0.0, y = 0.0;
};

struct IterationTrace {
  int level = 0;
  double kappa_p = 0.0, c_p = 0.0;
  std::vector<double> increments;      // H1(Y1) increment per iteration
  std::vector<double> compat_defects;  // zero-mean projection defect per iter
  double norm_u1 = 0.0;                // H1 norm of the first iterate
  bool converged = false;

  // Median of successive increment ratios; 0 if fewer than 2 increments.
  double median_ratio() const;
};

struct PicardOptions {
  double tol = 1e-10;        // H1 increment tolerance
  int n_max = 200;
  double cg_tol = 1e-10;
  double compat_tol = 1e-8;           // genuine Neumann solvability checks
  double reaction_compat_tol = 1e-6;  // projected reaction-load defect
  bool record_iterates = false;
};

struct PicardResult {
  ScalarField u;
  IterationTrace trace;
  std::vector<std::vector<double>> iterates;  // if record_iterates
};

// Weak loads of the two-scale operators with the macro gradient replaced by
// the constant context vector g:
//   <A1 u, phi> = int -d (g . grad_y u) phi + int d u (g . grad phi)
//   <A2 u, phi> = int -d (g . g) u phi
std::vector<double> operator_A1_load(const QuadMesh& mesh,
                                     const CoefficientSpec& coeff,
                                     std::span<const double> u, Vec2 g);
std::vector<double> operator_A2_load(const QuadMesh& mesh,
                                     const CoefficientSpec& coeff,
                                     std::span<const double> u, Vec2 g);

// First-order cell correctors: grad_y . (-d (grad chi_j + e_j)) = 0 in Y1,
// zero-flux on the hole, periodic, zero mean.
std::array<ScalarField, 2> solve_classical_correctors(
    const PeriodicCellOperator& op, double cg_tol = 1e-10);

// d_hom_ij = (1/|Y|) int_{Y1} d (delta_ij + d chi_j / d y_i) dy
Matrix2 effective_tensor(const QuadMesh& mesh, const CoefficientSpec& coeff,
                         const std::array<ScalarField, 2>& chi);

// Second-order correctors theta_ij; the solvability condition of the rhs is
// exactly the definition of d_hom, so a COMPAT failure flags an inconsistent
// tensor.
std::array<std::array<ScalarField, 2>, 2> solve_second_order_correctors(
    const PeriodicCellOperator& op, const std::array<ScalarField, 2>& chi,
    const Matrix2& d_hom, double cg_tol = 1e-10, double compat_tol = 1e-8);

// Homogenized macro problem: div(-d_hom grad u0) = porosity * R(u0) on the
// unperforated macro mesh, u0 = 0 on the outer boundary; Picard iteration.
ScalarField solve_homogenized_macro(const QuadMesh& macro_mesh,
                                    const Matrix2& d_hom,
                                    const ReactionSpec& reaction,
                                    double porosity, const PicardOptions& opt,
                                    IterationTrace* trace = nullptr);

// One level of the nonlinear hierarchy. priors holds levels 0..m-1 already
// solved; g is the macro-gradient context. Throws KappaError when
// kappa_p = C_p L / alpha >= 1, CompatError on projection defects above
// reaction_compat_tol, NoConvError when n_max is exhausted.
PicardResult picard_solve_auxiliary_level(const PeriodicCellOperator& op,
                                          int level,
                                          std::span<const ScalarField> priors,
                                          const ReactionSpec& reaction,
                                          Vec2 g, const PicardOptions& opt);

// kappa^n / (1 - kappa^n) * ||u^(1)||
double contraction_tail_bound(double kappa, int n, double norm_u1);

enum class HierarchyMode { Classical, Nonlinear };

struct ExpansionConfig {
  int M = 2;  // expansion order, >= 2
  int r = 0;  // structural exponent; r <= 0 classical, r in {1,2} nonlinear
  HierarchyMode mode() const {
    return r >= 1 ? HierarchyMode::Nonlinear : HierarchyMode::Classical;
  }
  void validate() const;
};

struct CorrectorHierarchy {
  HierarchyMode mode = HierarchyMode::Classical;
  int M = 2, r = 0;
  double porosity = 1.0;
  double kappa_p = 0.0, c_p = 0.0;
  // classical
  std::array<ScalarField, 2> chi;
  std::array<std::array<ScalarField, 2>, 2> theta;
  Matrix2 d_hom = Matrix2::identity();
  std::optional<ScalarField> u0_macro;  // set per macro mesh by the caller
  // nonlinear
  std::vector<ScalarField> u_levels;  // m = 0..M
  std::vector<IterationTrace> traces;
};

// Cell-level part of the hierarchy (u0_macro left empty in classical mode).
CorrectorHierarchy build_cell_hierarchy(const PeriodicCellOperator& op,
                                        const ExpansionConfig& cfg,
                                        const ReactionSpec& reaction, Vec2 g,
                                        const PicardOptions& opt);

}  // namespace homlab
