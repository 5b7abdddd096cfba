#include "homlab/correctors.hpp"

#include <algorithm>
#include <cmath>

#include "homlab/errors.hpp"

namespace homlab {

namespace {

constexpr double kGaussP = 0.57735026918962576;
const double kGx[4] = {-kGaussP, kGaussP, kGaussP, -kGaussP};
const double kGy[4] = {-kGaussP, -kGaussP, kGaussP, kGaussP};

void basis(double xi, double eta, double n[4]) {
  n[0] = 0.25 * (1 - xi) * (1 - eta);
  n[1] = 0.25 * (1 + xi) * (1 - eta);
  n[2] = 0.25 * (1 + xi) * (1 + eta);
  n[3] = 0.25 * (1 - xi) * (1 + eta);
}

void phys_grad(const QuadMesh& m, double xi, double eta, double gx[4],
               double gy[4]) {
  gx[0] = -0.25 * (1 - eta) * 2.0 / m.hx;
  gx[1] = 0.25 * (1 - eta) * 2.0 / m.hx;
  gx[2] = 0.25 * (1 + eta) * 2.0 / m.hx;
  gx[3] = -0.25 * (1 + eta) * 2.0 / m.hx;
  gy[0] = -0.25 * (1 - xi) * 2.0 / m.hy;
  gy[1] = -0.25 * (1 + xi) * 2.0 / m.hy;
  gy[2] = 0.25 * (1 + xi) * 2.0 / m.hy;
  gy[3] = 0.25 * (1 - xi) * 2.0 / m.hy;
}

void gauss_point(const QuadMesh& m, int e, int g, double* px, double* py) {
  const auto [i, j] = m.elem_ij[e];
  *px = (i + 0.5 * (1 + kGx[g])) * m.hx;
  *py = (j + 0.5 * (1 + kGy[g])) * m.hy;
}

std::vector<double> subtract(const std::vector<double>& a,
                             const std::vector<double>& b) {
  std::vector<double> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

}  // namespace

double IterationTrace::median_ratio() const {
  if (increments.size() < 2) return 0.0;
  std::vector<double> ratios;
  for (std::size_t k = 1; k < increments.size(); ++k)
    if (increments[k - 1] > 0)
      ratios.push_back(increments[k] / increments[k - 1]);
  if (ratios.empty()) return 0.0;
  std::sort(ratios.begin(), ratios.end());
  const std::size_t n = ratios.size();
  return n % 2 ? ratios[n / 2] : 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]);
}

void ExpansionConfig::validate() const {
  if (M < 2) throw ConfigError("expansion order M must be >= 2");
  if (r > 2) throw ConfigError("structural exponent r must be <= 2");
}

std::vector<double> operator_A1_load(const QuadMesh& mesh,
                                     const CoefficientSpec& coeff,
                                     std::span<const double> u, Vec2 g) {
  std::vector<double> load(mesh.n_nodes(), 0.0);
  const double jac = mesh.hx * mesh.hy / 4.0;
  for (int e = 0; e < mesh.n_elems(); ++e) {
    const auto& nd = mesh.elems[e];
    for (int q = 0; q < 4; ++q) {
      double n[4], gx[4], gy[4];
      basis(kGx[q], kGy[q], n);
      phys_grad(mesh, kGx[q], kGy[q], gx, gy);
      double px, py;
      gauss_point(mesh, e, q, &px, &py);
      const double d = coeff.d(px, py);
      double uval = 0.0, ux = 0.0, uy = 0.0;
      for (int a = 0; a < 4; ++a) {
        uval += n[a] * u[nd[a]];
        ux += gx[a] * u[nd[a]];
        uy += gy[a] * u[nd[a]];
      }
      const double gdotgrad = g.x * ux + g.y * uy;
      for (int a = 0; a < 4; ++a)
        load[nd[a]] += jac * (-d * gdotgrad * n[a] +
                              d * uval * (g.x * gx[a] + g.y * gy[a]));
    }
  }
  return load;
}

std::vector<double> operator_A2_load(const QuadMesh& mesh,
                                     const CoefficientSpec& coeff,
                                     std::span<const double> u, Vec2 g) {
  std::vector<double> load(mesh.n_nodes(), 0.0);
  const double jac = mesh.hx * mesh.hy / 4.0;
  const double g2 = g.x * g.x + g.y * g.y;
  for (int e = 0; e < mesh.n_elems(); ++e) {
    const auto& nd = mesh.elems[e];
    for (int q = 0; q < 4; ++q) {
      double n[4];
      basis(kGx[q], kGy[q], n);
      double px, py;
      gauss_point(mesh, e, q, &px, &py);
      const double d = coeff.d(px, py);
      double uval = 0.0;
      for (int a = 0; a < 4; ++a) uval += n[a] * u[nd[a]];
      for (int a = 0; a < 4; ++a) load[nd[a]] += jac * (-d * g2 * uval * n[a]);
    }
  }
  return load;
}

std::array<ScalarField, 2> solve_classical_correctors(
    const PeriodicCellOperator& op, double cg_tol) {
  const QuadMesh& mesh = op.mesh();
  std::array<ScalarField, 2> chi;
  for (int j = 0; j < 2; ++j) {
    // Weak form: int d grad(chi_j) . grad(phi) = -int d e_j . grad(phi)
    std::vector<double> load(mesh.n_nodes(), 0.0);
    const double jac = mesh.hx * mesh.hy / 4.0;
    for (int e = 0; e < mesh.n_elems(); ++e) {
      const auto& nd = mesh.elems[e];
      for (int q = 0; q < 4; ++q) {
        double gx[4], gy[4];
        phys_grad(mesh, kGx[q], kGy[q], gx, gy);
        double px, py;
        gauss_point(mesh, e, q, &px, &py);
        const double d = op.coeff().d(px, py);
        for (int a = 0; a < 4; ++a)
          load[nd[a]] -= jac * d * (j == 0 ? gx[a] : gy[a]);
      }
    }
    chi[j] = op.solve_gauged(load, cg_tol, 1e-8);
  }
  return chi;
}

Matrix2 effective_tensor(const QuadMesh& mesh, const CoefficientSpec& coeff,
                         const std::array<ScalarField, 2>& chi) {
  Matrix2 t{};
  const double jac = mesh.hx * mesh.hy / 4.0;
  for (int e = 0; e < mesh.n_elems(); ++e) {
    const auto& nd = mesh.elems[e];
    for (int q = 0; q < 4; ++q) {
      double gx[4], gy[4];
      phys_grad(mesh, kGx[q], kGy[q], gx, gy);
      double px, py;
      gauss_point(mesh, e, q, &px, &py);
      const double d = coeff.d(px, py);
      for (int j = 0; j < 2; ++j) {
        double grad[2] = {0.0, 0.0};
        for (int a = 0; a < 4; ++a) {
          grad[0] += gx[a] * chi[j].v[nd[a]];
          grad[1] += gy[a] * chi[j].v[nd[a]];
        }
        const double c0 = jac * d * ((j == 0 ? 1.0 : 0.0) + grad[0]);
        const double c1 = jac * d * ((j == 1 ? 1.0 : 0.0) + grad[1]);
        if (j == 0) {
          t.a11 += c0;
          t.a21 += c1;
        } else {
          t.a12 += c0;
          t.a22 += c1;
        }
      }
    }
  }
  return t;
}

std::array<std::array<ScalarField, 2>, 2> solve_second_order_correctors(
    const PeriodicCellOperator& op, const std::array<ScalarField, 2>& chi,
    const Matrix2& d_hom, double cg_tol, double compat_tol) {
  const QuadMesh& mesh = op.mesh();
  const double y1_area = mesh.domain_area();
  const double dh[2][2] = {{d_hom.a11, d_hom.a12}, {d_hom.a21, d_hom.a22}};
  std::array<std::array<ScalarField, 2>, 2> theta;
  const double jac = mesh.hx * mesh.hy / 4.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      // int d grad(theta).grad(phi) = -int d chi_j (e_i . grad phi)
      //   + int [ d_hom_ij |Y|/|Y1| - d delta_ij - d dchi_j/dy_i ] phi
      std::vector<double> load(mesh.n_nodes(), 0.0);
      for (int e = 0; e < mesh.n_elems(); ++e) {
        const auto& nd = mesh.elems[e];
        for (int q = 0; q < 4; ++q) {
          double n[4], gx[4], gy[4];
          basis(kGx[q], kGy[q], n);
          phys_grad(mesh, kGx[q], kGy[q], gx, gy);
          double px, py;
          gauss_point(mesh, e, q, &px, &py);
          const double d = op.coeff().d(px, py);
          double chival = 0.0, dchi_dyi = 0.0;
          for (int a = 0; a < 4; ++a) {
            chival += n[a] * chi[j].v[nd[a]];
            dchi_dyi += (i == 0 ? gx[a] : gy[a]) * chi[j].v[nd[a]];
          }
          const double f = dh[i][j] / y1_area - d * (i == j ? 1.0 : 0.0) -
                           d * dchi_dyi;
          for (int a = 0; a < 4; ++a)
            load[nd[a]] += jac * (-d * chival * (i == 0 ? gx[a] : gy[a]) +
                                  f * n[a]);
        }
      }
      theta[i][j] = op.solve_gauged(load, cg_tol, compat_tol);
    }
  }
  return theta;
}

ScalarField solve_homogenized_macro(const QuadMesh& macro_mesh,
                                    const Matrix2& d_hom,
                                    const ReactionSpec& reaction,
                                    double porosity, const PicardOptions& opt,
                                    IterationTrace* trace) {
  SparseSystem sys = assemble_stiffness_tensor(macro_mesh, d_hom);
  std::vector<int> bnodes;
  for (const auto& f : macro_mesh.faces)
    if (f.tag == FaceTag::Outer) {
      bnodes.push_back(f.a);
      bnodes.push_back(f.b);
    }
  sys.apply_dirichlet(bnodes, 0.0);
  sys.finalize();

  IterationTrace tr;
  tr.level = -1;  // macro problem
  std::vector<double> u(macro_mesh.n_nodes(), 0.0);
  bool converged = false;
  for (int k = 1; k <= opt.n_max; ++k) {
    std::vector<double> load = assemble_load_field(
        macro_mesh, u, [&](double p1, double p2, double uv) {
          return porosity * reaction.R(p1, p2, uv);
        });
    sys.set_rhs(load);
    std::vector<double> next = sys.solve_spd(opt.cg_tol, nullptr, &u);
    const double inc = h1_norm(macro_mesh, subtract(next, u));
    tr.increments.push_back(inc);
    if (k == 1) tr.norm_u1 = h1_norm(macro_mesh, next);
    u = std::move(next);
    if (inc <= opt.tol) {
      converged = true;
      break;
    }
  }
  tr.converged = converged;
  if (trace) *trace = tr;
  if (!converged)
    throw NoConvError(tr.increments.back(),
                      "NOCONV-PICARD: homogenized macro problem did not "
                      "converge within " + std::to_string(opt.n_max) +
                          " iterations");
  ScalarField f;
  f.mesh_hash = macro_mesh.hash();
  f.gauge = Gauge::Dirichlet;
  f.v = std::move(u);
  return f;
}

PicardResult picard_solve_auxiliary_level(const PeriodicCellOperator& op,
                                          int level,
                                          std::span<const ScalarField> priors,
                                          const ReactionSpec& reaction,
                                          Vec2 g, const PicardOptions& opt) {
  const QuadMesh& mesh = op.mesh();
  const double c_p = op.poincare_constant();
  const double kappa = c_p * reaction.lipschitz / op.coeff().alpha;
  if (kappa >= 1.0) throw KappaError(kappa, c_p);

  // Loads from already-solved lower levels are iteration independent.
  std::vector<double> fixed(mesh.n_nodes(), 0.0);
  if (level >= 1) {
    const auto a1 = operator_A1_load(mesh, op.coeff(), priors[level - 1].v, g);
    for (int i = 0; i < mesh.n_nodes(); ++i) fixed[i] -= a1[i];
  }
  if (level >= 2) {
    const auto a2 = operator_A2_load(mesh, op.coeff(), priors[level - 2].v, g);
    for (int i = 0; i < mesh.n_nodes(); ++i) fixed[i] -= a2[i];
  }

  PicardResult res;
  res.trace.level = level;
  res.trace.kappa_p = kappa;
  res.trace.c_p = c_p;
  std::vector<double> u(mesh.n_nodes(), 0.0);
  for (int k = 1; k <= opt.n_max; ++k) {
    std::vector<double> load = assemble_load_field(mesh, u, reaction.R);
    for (int i = 0; i < mesh.n_nodes(); ++i) load[i] += fixed[i];
    SolveStats stats;
    ScalarField sol = op.solve_gauged(load, opt.cg_tol,
                                      opt.reaction_compat_tol, &stats, &u);
    res.trace.compat_defects.push_back(stats.compat_defect);
    const double inc = h1_norm(mesh, subtract(sol.v, u));
    res.trace.increments.push_back(inc);
    if (k == 1) res.trace.norm_u1 = h1_norm(mesh, sol.v);
    u = sol.v;
    if (opt.record_iterates) res.iterates.push_back(u);
    if (inc <= opt.tol) {
      res.trace.converged = true;
      res.u = std::move(sol);
      break;
    }
  }
  if (!res.trace.converged)
    throw NoConvError(res.trace.increments.back(),
                      "NOCONV-PICARD: auxiliary level " +
                          std::to_string(level) + " did not converge within " +
                          std::to_string(opt.n_max) + " iterations");
  return res;
}

double contraction_tail_bound(double kappa, int n, double norm_u1) {
  const double kn = std::pow(kappa, n);
  return kn / (1.0 - kn) * norm_u1;
}

CorrectorHierarchy build_cell_hierarchy(const PeriodicCellOperator& op,
                                        const ExpansionConfig& cfg,
                                        const ReactionSpec& reaction, Vec2 g,
                                        const PicardOptions& opt) {
  cfg.validate();
  CorrectorHierarchy h;
  h.mode = cfg.mode();
  h.M = cfg.M;
  h.r = cfg.r;
  h.porosity = op.mesh().domain_area();
  h.c_p = op.poincare_constant();
  h.kappa_p = h.c_p * reaction.lipschitz / op.coeff().alpha;
  if (h.mode == HierarchyMode::Classical) {
    h.chi = solve_classical_correctors(op, opt.cg_tol);
    h.d_hom = effective_tensor(op.mesh(), op.coeff(), h.chi);
    h.theta = solve_second_order_correctors(op, h.chi, h.d_hom, opt.cg_tol,
                                            opt.compat_tol);
  } else {
    for (int m = 0; m <= cfg.M; ++m) {
      PicardResult r =
          picard_solve_auxiliary_level(op, m, h.u_levels, reaction, g, opt);
      h.u_levels.push_back(std::move(r.u));
      h.traces.push_back(std::move(r.trace));
    }
  }
  return h;
}

}  // namespace homlab
