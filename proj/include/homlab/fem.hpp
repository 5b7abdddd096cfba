// Q1 finite element assembly, constraint handling and sparse solves on the
// structured meshes, plus the norms used throughout.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "homlab/kernels.hpp"
#include "homlab/mesh.hpp"

namespace homlab {

struct Matrix2 {
  double a11 = 0, a12 = 0, a21 = 0, a22 = 0;
  static Matrix2 identity() { return {1, 0, 0, 1}; }
  std::array<double, 2> eigenvalues() const;  // symmetric part assumed
};

// Scalar diffusion coefficient d(y) on the unit cell, Y-periodic.
struct CoefficientSpec {
  std::function<double(double, double)> d;
  double alpha = 1.0;  // ellipticity lower bound
  double beta = 1.0;   // ess-sup

  static CoefficientSpec constant(double c);
  // d = a for y1 < 1/2, b otherwise.
  static CoefficientSpec layered(double a, double b);
  // One value per grid cell of an n x n layout, row-major, j-major.
  static CoefficientSpec tabulated(int n, std::vector<double> values);

  // Samples every element centroid; throws ConfigError on a bound violation.
  void check(const QuadMesh& mesh) const;
};

// Reaction R(p, u) with p a spatial point; L is user-declared.
struct ReactionSpec {
  std::function<double(double, double, double)> R;  // (p1, p2, u)
  double lipschitz = 0.0;
  bool spatial_in_y = false;  // evaluate spatial argument at y = x/eps mod 1

  static ReactionSpec zero();
  static ReactionSpec constant(double lambda);
  static ReactionSpec linear(double lambda);          // R = lambda * u
  static ReactionSpec affine(double lambda);          // R = lambda * (1 + u)
  // R = lambda * sin(2 pi y1) * (1 + tanh u), L = lambda.
  static ReactionSpec tanh_sin(double lambda);

  // Spot-check |R(p,u)-R(p,v)| <= L|u-v| + tol over random samples.
  void sampled_lipschitz_check(std::mt19937_64& rng, double range,
                               int samples = 256, double tol = 1e-9) const;
};

enum class Gauge { None, ZeroMean, Dirichlet };

struct ScalarField {
  std::uint64_t mesh_hash = 0;
  Gauge gauge = Gauge::None;
  std::vector<double> v;
};

void dump_field(const ScalarField& f, std::ostream& out);

struct SolveStats {
  int iterations = 0;
  double residual = 0.0;     // final relative residual
  double compat_defect = 0;  // relative zero-mean projection defect (gauged)
};

// Symmetric sparse system assembled at node indices, with periodic
// master/slave folding and Dirichlet elimination applied before the solve.
class SparseSystem {
 public:
  explicit SparseSystem(int n_nodes);

  void add(int i, int j, double v);
  std::vector<double> rhs;

  // Fold slave DOFs onto masters. swap_roles exchanges master and slave in
  // every pair (used to test relabeling invariance).
  void apply_periodic(const QuadMesh& mesh, bool swap_roles = false);
  void apply_dirichlet(const std::vector<int>& nodes, double value);

  // Compress to reduced CSR over free DOFs. Idempotent.
  void finalize();

  // Replace the full-length rhs without recompressing the matrix.
  void set_rhs(const std::vector<double>& full);

  int n_nodes() const { return n_; }
  int n_free() const;
  const kern::Csr& matrix();  // finalizes if needed
  // max |A_ij - A_ji| / max|A_ij| over stored entries.
  double symmetry_defect();

  // Preconditioned CG; relative residual <= tol, cap 50*sqrt(DOF) iterations
  // (at least 200). Throws NoConvError on failure. warm_start, if given, is a
  // full-length nodal vector used as initial guess.
  std::vector<double> solve_spd(double tol, SolveStats* stats = nullptr,
                                const std::vector<double>* warm_start = nullptr);

  // Pure Neumann/periodic solve, gauged to zero integral mean against the
  // given weights (lumped mass, full length). Checks the compatibility
  // condition |1^T rhs| <= compat_tol * ||rhs||; throws CompatError.
  std::vector<double> solve_neumann_gauged(
      const std::vector<double>& weights, double tol, double compat_tol,
      SolveStats* stats = nullptr,
      const std::vector<double>* warm_start = nullptr);

 private:
  int n_;
  std::vector<int> ti_, tj_;
  std::vector<double> tv_;
  std::vector<int> master_;     // node -> representative node
  std::vector<char> dirichlet_;
  std::vector<double> dval_;
  bool finalized_ = false;
  kern::Csr csr_;
  std::vector<int> dof_of_node_;  // -1 if eliminated
  std::vector<int> node_of_dof_;
  std::vector<double> reduced_rhs_;
  std::vector<double> dirichlet_corr_;  // rhs correction from eliminated DOFs

  std::vector<double> expand(const std::vector<double>& x) const;
  std::vector<double> reduce_sum(const std::vector<double>& full) const;
  std::vector<double> cg(const std::vector<double>& b, double tol,
                         SolveStats* stats, const std::vector<double>* x0,
                         bool project_constants);
  friend class PeriodicCellOperator;
};

// Assembly --------------------------------------------------------------

SparseSystem assemble_stiffness(const QuadMesh& mesh,
                                const CoefficientSpec& coeff);
SparseSystem assemble_stiffness_tensor(const QuadMesh& mesh,
                                       const Matrix2& d);
// Consistent mass matrix in a reduced DOF numbering (dof_of_node maps every
// node, slaves included, to its free DOF or -1).
kern::Csr assemble_mass_csr(const QuadMesh& mesh,
                            const std::vector<int>& dof_of_node, int n_free);

std::vector<double> assemble_load(
    const QuadMesh& mesh, const std::function<double(double, double)>& f);
// Consistent load of the bilinear interpolant of nodal values, optionally
// composed with a pointwise map g(p, u).
std::vector<double> assemble_load_field(
    const QuadMesh& mesh, std::span<const double> nodal,
    const std::function<double(double, double, double)>& g = nullptr);

// Integral weights: w_i = int phi_i (lumped mass row sums).
std::vector<double> integral_weights(const QuadMesh& mesh);

// Norms (2x2 Gauss) ------------------------------------------------------

double l2_norm(const QuadMesh& mesh, std::span<const double> v);
double h1_seminorm(const QuadMesh& mesh, std::span<const double> v);
double h1_norm(const QuadMesh& mesh, std::span<const double> v);
// Gradient L2 norm on the perforated mesh (the V^eps norm of Remark-1 type).
double v_eps_norm(const QuadMesh& pmesh, std::span<const double> v);
double mean(const QuadMesh& mesh, std::span<const double> v);  // int v / |dom|

// Element gradient of the bilinear interpolant at local coords (xi,eta) in
// [-1,1]^2.
std::array<double, 2> element_gradient(const QuadMesh& mesh, int elem,
                                       std::span<const double> v, double xi,
                                       double eta);

// Averaged element gradients at nodes.
std::vector<std::array<double, 2>> recover_nodal_gradient(
    const QuadMesh& mesh, std::span<const double> v);

// Cell operator ----------------------------------------------------------

// Stiffness on a cell mesh with periodic constraints, gauged solves and the
// Poincare constant of Y1.
class PeriodicCellOperator {
 public:
  PeriodicCellOperator(const QuadMesh& mesh, const CoefficientSpec& coeff,
                       bool swap_master_slave = false);

  const QuadMesh& mesh() const { return *mesh_; }
  const CoefficientSpec& coeff() const { return coeff_; }

  ScalarField solve_gauged(const std::vector<double>& load, double tol,
                           double compat_tol, SolveStats* stats = nullptr,
                           const std::vector<double>* warm_start = nullptr) const;

  // C_p = lambda_1^{-1/2}, lambda_1 the smallest nonzero eigenvalue of the
  // periodic-Neumann Laplacian (d = 1) on this mesh; inverse power iteration.
  double poincare_constant(double tol = 1e-8) const;

 private:
  const QuadMesh* mesh_;
  CoefficientSpec coeff_;  // by value: callers may pass temporaries
  bool swap_;
  mutable SparseSystem sys_;         // folded stiffness, rhs unused
  std::vector<double> weights_;
  mutable std::optional<double> c_p_;
};

}  // namespace homlab
