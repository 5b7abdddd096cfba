#include "homlab/expansion.hpp"

#include <cmath>

#include "homlab/errors.hpp"

namespace homlab {

namespace {

double frac(double t) {
  const double f = t - std::floor(t);
  return f >= 1.0 ? 0.0 : f;
}

}  // namespace

std::vector<std::array<double, 2>> grid_diff(const QuadMesh& mesh,
                                             const std::vector<double>& v) {
  std::vector<std::array<double, 2>> d(mesh.n_nodes(), {0.0, 0.0});
  for (int p = 0; p < mesh.n_nodes(); ++p) {
    const auto [i, j] = mesh.node_grid[p];
    const auto at = [&](int ii, int jj) { return v[mesh.grid_id(ii, jj)]; };
    // Second-order one-sided stencils at the boundary keep quadratics exact.
    if (i == 0)
      d[p][0] = (-3.0 * at(0, j) + 4.0 * at(1, j) - at(2, j)) / (2.0 * mesh.hx);
    else if (i == mesh.nx)
      d[p][0] =
          (3.0 * at(i, j) - 4.0 * at(i - 1, j) + at(i - 2, j)) / (2.0 * mesh.hx);
    else
      d[p][0] = (at(i + 1, j) - at(i - 1, j)) / (2.0 * mesh.hx);
    if (j == 0)
      d[p][1] = (-3.0 * at(i, 0) + 4.0 * at(i, 1) - at(i, 2)) / (2.0 * mesh.hy);
    else if (j == mesh.ny)
      d[p][1] =
          (3.0 * at(i, j) - 4.0 * at(i, j - 1) + at(i, j - 2)) / (2.0 * mesh.hy);
    else
      d[p][1] = (at(i, j + 1) - at(i, j - 1)) / (2.0 * mesh.hy);
  }
  return d;
}

MacroDerivatives macro_derivatives(const QuadMesh& macro_mesh,
                                   const std::vector<double>& u0) {
  MacroDerivatives md;
  // Grid stencils instead of element averaging: second order up to the
  // boundary, so quadratic profiles give exact Hessians.
  md.grad = grid_diff(macro_mesh, u0);
  std::vector<double> gx(macro_mesh.n_nodes()), gy(macro_mesh.n_nodes());
  for (int p = 0; p < macro_mesh.n_nodes(); ++p) {
    gx[p] = md.grad[p][0];
    gy[p] = md.grad[p][1];
  }
  const auto dgx = grid_diff(macro_mesh, gx);
  const auto dgy = grid_diff(macro_mesh, gy);
  md.h11.resize(macro_mesh.n_nodes());
  md.h12.resize(macro_mesh.n_nodes());
  md.h22.resize(macro_mesh.n_nodes());
  for (int p = 0; p < macro_mesh.n_nodes(); ++p) {
    md.h11[p] = dgx[p][0];
    md.h22[p] = dgy[p][1];
    md.h12[p] = 0.5 * (dgx[p][1] + dgy[p][0]);
  }
  return md;
}

ExpansionEvaluation evaluate_expansion(const CorrectorHierarchy& hier,
                                       double eps, const QuadMesh& pmesh,
                                       const QuadMesh& cmesh,
                                       const QuadMesh* macro_mesh) {
  ExpansionEvaluation ev;
  ev.eps = eps;
  ev.M = hier.M;
  const std::vector<int> y_of = micro_to_cell_map(pmesh, cmesh);
  ev.values.assign(pmesh.n_nodes(), 0.0);
  ev.grad.assign(pmesh.n_elems(), {0.0, 0.0});
  const int n = cmesh.nx;

  // Cell element under a perforated element (same local grid layout).
  std::vector<int> cell_elem_grid(cmesh.nx * cmesh.ny, -1);
  for (int e = 0; e < cmesh.n_elems(); ++e) {
    const auto [i, j] = cmesh.elem_ij[e];
    cell_elem_grid[j * cmesh.nx + i] = e;
  }
  auto cell_elem_of = [&](int pe) {
    const auto [i, j] = pmesh.elem_ij[pe];
    return cell_elem_grid[(j % n) * cmesh.nx + (i % n)];
  };

  if (hier.mode == HierarchyMode::Nonlinear) {
    if (static_cast<int>(hier.u_levels.size()) != hier.M + 1)
      throw ConfigError("hierarchy is missing levels for the requested M");
    for (int p = 0; p < pmesh.n_nodes(); ++p) {
      double s = 0.0, ep = 1.0;
      for (int m = 0; m <= hier.M; ++m) {
        s += ep * hier.u_levels[m].v[y_of[p]];
        ep *= eps;
      }
      ev.values[p] = s;
    }
    for (int pe = 0; pe < pmesh.n_elems(); ++pe) {
      const int ce = cell_elem_of(pe);
      double ep = 1.0 / eps;
      for (int m = 0; m <= hier.M; ++m) {
        const auto gy = element_gradient(cmesh, ce, hier.u_levels[m].v, 0, 0);
        ev.grad[pe][0] += ep * gy[0];
        ev.grad[pe][1] += ep * gy[1];
        ep *= eps;
      }
    }
    return ev;
  }

  // Classical mode: needs u0 on a macro mesh sharing the global grid.
  if (!macro_mesh || !hier.u0_macro)
    throw ConfigError("classical expansion needs the macro mesh and u0");
  if (macro_mesh->nx != pmesh.nx)
    throw ConfigError("macro mesh resolution must match the perforated grid");
  const std::vector<double>& u0 = hier.u0_macro->v;
  const MacroDerivatives md = macro_derivatives(*macro_mesh, u0);

  auto macro_node_of = [&](int p) {
    const auto [i, j] = pmesh.node_grid[p];
    return macro_mesh->grid_id(i, j);
  };

  for (int p = 0; p < pmesh.n_nodes(); ++p) {
    const int ma = macro_node_of(p);
    const int c = y_of[p];
    double s = u0[ma];
    for (int j = 0; j < 2; ++j) s += eps * hier.chi[j].v[c] * md.grad[ma][j];
    const double hmat[2][2] = {{md.h11[ma], md.h12[ma]},
                               {md.h12[ma], md.h22[ma]}};
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        s += eps * eps * hier.theta[i][j].v[c] * hmat[i][j];
    ev.values[p] = s;
  }

  // Element-centroid gradients, macro part + eps^{-1} cell part.
  std::vector<double> gcomp[2];
  for (int j = 0; j < 2; ++j) {
    gcomp[j].resize(macro_mesh->n_nodes());
    for (int p = 0; p < macro_mesh->n_nodes(); ++p)
      gcomp[j][p] = md.grad[p][j];
  }
  const std::vector<double>* hcomp[2][2] = {{&md.h11, &md.h12},
                                            {&md.h12, &md.h22}};
  std::vector<int> macro_elem_grid(macro_mesh->nx * macro_mesh->ny, -1);
  for (int e = 0; e < macro_mesh->n_elems(); ++e) {
    const auto [i, j] = macro_mesh->elem_ij[e];
    macro_elem_grid[j * macro_mesh->nx + i] = e;
  }
  for (int pe = 0; pe < pmesh.n_elems(); ++pe) {
    const auto [gi, gj] = pmesh.elem_ij[pe];
    const int me = macro_elem_grid[gj * macro_mesh->nx + gi];
    const int ce = cell_elem_of(pe);
    auto interp_center = [&](const QuadMesh& m, int e,
                             const std::vector<double>& v) {
      const auto& nd = m.elems[e];
      return 0.25 * (v[nd[0]] + v[nd[1]] + v[nd[2]] + v[nd[3]]);
    };
    auto g0 = element_gradient(*macro_mesh, me, u0, 0, 0);
    double gx = g0[0], gyv = g0[1];
    for (int j = 0; j < 2; ++j) {
      const auto dgj = element_gradient(*macro_mesh, me, gcomp[j], 0, 0);
      const auto dchij = element_gradient(cmesh, ce, hier.chi[j].v, 0, 0);
      const double chival = interp_center(cmesh, ce, hier.chi[j].v);
      const double gval = interp_center(*macro_mesh, me, gcomp[j]);
      gx += eps * dgj[0] * chival + dchij[0] * gval;
      gyv += eps * dgj[1] * chival + dchij[1] * gval;
    }
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const auto dh = element_gradient(*macro_mesh, me, *hcomp[i][j], 0, 0);
        const auto dth = element_gradient(cmesh, ce, hier.theta[i][j].v, 0, 0);
        const double thval = interp_center(cmesh, ce, hier.theta[i][j].v);
        const double hval = interp_center(*macro_mesh, me, *hcomp[i][j]);
        gx += eps * eps * dh[0] * thval + eps * dth[0] * hval;
        gyv += eps * eps * dh[1] * thval + eps * dth[1] * hval;
      }
    ev.grad[pe] = {gx, gyv};
  }
  return ev;
}

double corrector_error(const QuadMesh& pmesh, const ScalarField& u_eps,
                       const ExpansionEvaluation& eval) {
  std::vector<double> diff(pmesh.n_nodes());
  for (int p = 0; p < pmesh.n_nodes(); ++p)
    diff[p] = u_eps.v[p] - eval.values[p];
  return v_eps_norm(pmesh, diff);
}

ConvergenceReport fit_convergence_order(
    const std::vector<std::pair<double, double>>& samples, int M) {
  ConvergenceReport rep;
  rep.samples = samples;
  rep.theory_order = 0.5 * (M - 1);
  if (samples.size() < 3)
    throw ConfigError("convergence fit needs at least 3 samples");
  for (std::size_t k = 1; k < samples.size(); ++k)
    if (!(samples[k].first < samples[k - 1].first))
      throw ConfigError("eps samples must be strictly decreasing");
  bool degenerate = false;
  for (const auto& [e, err] : samples) {
    if (err < 0.0) throw ConfigError("negative corrector error");
    if (err < 1e-12) degenerate = true;
  }
  if (degenerate) {
    rep.flags.push_back("DEGENERATE");
    rep.order_gate = true;  // nothing to gate: errors at rounding scale
    return rep;
  }
  const std::size_t n = samples.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (const auto& [e, err] : samples) {
    const double x = std::log(e), y = std::log(err);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const double denom = n * sxx - sx * sx;
  rep.slope = (n * sxy - sx * sy) / denom;
  const double intercept = (sy - rep.slope * sx) / n;
  rep.constant = std::exp(intercept);
  const double ss_tot = syy - sy * sy / n;
  double ss_res = 0;
  for (const auto& [e, err] : samples) {
    const double pred = rep.slope * std::log(e) + intercept;
    ss_res += (std::log(err) - pred) * (std::log(err) - pred);
  }
  rep.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  rep.fitted = true;
  if (rep.r2 < 0.95) rep.flags.push_back("PRE-ASYMPTOTIC");
  rep.order_gate = rep.slope >= rep.theory_order - 0.1;
  if (!rep.order_gate) rep.flags.push_back("ORDER-BELOW-THEORY");
  return rep;
}

ResidualDiagnostics residual_diagnostics(const CorrectorHierarchy& hier,
                                         const QuadMesh& pmesh,
                                         const QuadMesh& cmesh,
                                         const QuadMesh* macro_mesh,
                                         const ScalarField& u_eps,
                                         const ExpansionEvaluation& eval,
                                         const ReactionSpec& reaction,
                                         const CoefficientSpec& coeff,
                                         double eps, Vec2 g) {
  ResidualDiagnostics diag;
  const int K = static_cast<int>(std::lround(1.0 / eps));

  // Reaction mismatch, nodal composition.
  std::vector<double> rdiff(pmesh.n_nodes());
  for (int p = 0; p < pmesh.n_nodes(); ++p) {
    double p1 = pmesh.xs[p], p2 = pmesh.ys[p];
    if (reaction.spatial_in_y) {
      p1 = frac(p1 * K);
      p2 = frac(p2 * K);
    }
    rdiff[p] = reaction.R(p1, p2, u_eps.v[p]) -
               reaction.R(p1, p2, eval.values[p]);
  }
  diag.reaction_term = l2_norm(pmesh, rdiff);

  // Operator remainder loads on the cell mesh, unit axis contexts.
  auto load_norm = [&](const std::vector<double>& l) {
    double s = 0;
    for (double v : l) s += v * v;
    return std::sqrt(s);
  };
  std::vector<const ScalarField*> top, second;
  if (hier.mode == HierarchyMode::Classical) {
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) top.push_back(&hier.theta[i][j]);
    for (int j = 0; j < 2; ++j) second.push_back(&hier.chi[j]);
  } else {
    top.push_back(&hier.u_levels[hier.M]);
    second.push_back(&hier.u_levels[hier.M - 1]);
  }
  const Vec2 contexts[2] = {{1, 0}, {0, 1}};
  double vol = 0.0;
  for (const auto* f : top)
    for (const Vec2& c : contexts) {
      vol += load_norm(operator_A1_load(cmesh, coeff, f->v, c));
      vol += eps * load_norm(operator_A2_load(cmesh, coeff, f->v, c));
    }
  for (const auto* f : second)
    for (const Vec2& c : contexts)
      vol += load_norm(operator_A2_load(cmesh, coeff, f->v, c));
  diag.volume_remainder = std::pow(eps, hier.M - 1) * vol;

  // Hole-boundary flux of the top-order term, midpoint rule over Gamma^eps.
  const std::vector<int> y_of = micro_to_cell_map(pmesh, cmesh);
  double surf = 0.0;
  const double len = pmesh.hx;
  if (hier.mode == HierarchyMode::Classical && macro_mesh &&
      hier.u0_macro) {
    const MacroDerivatives md = macro_derivatives(*macro_mesh, hier.u0_macro->v);
    // grad_x u_M = theta_ij(y) grad(H_ij)(x), by further grid differencing.
    const std::vector<double>* hcomp[3] = {&md.h11, &md.h12, &md.h22};
    const int pairs[3][2] = {{0, 0}, {0, 1}, {1, 1}};
    std::vector<std::array<double, 2>> dh[3];
    for (int c = 0; c < 3; ++c) dh[c] = grid_diff(*macro_mesh, *hcomp[c]);
    for (const auto& f : pmesh.faces) {
      if (f.tag != FaceTag::Hole) continue;
      double fx = 0.0, fy = 0.0;
      for (int c = 0; c < 3; ++c) {
        const int i = pairs[c][0], j = pairs[c][1];
        const double mult = (i == j) ? 1.0 : 2.0;  // symmetric pair
        const double th = 0.5 * (hier.theta[i][j].v[y_of[f.a]] +
                                 hier.theta[i][j].v[y_of[f.b]]);
        const auto [gi, gj] = pmesh.node_grid[f.a];
        const int mn = macro_mesh->grid_id(gi, gj);
        fx += mult * th * dh[c][mn][0];
        fy += mult * th * dh[c][mn][1];
      }
      const double d = coeff.d(frac(0.5 * (pmesh.xs[f.a] + pmesh.xs[f.b]) * K),
                               frac(0.5 * (pmesh.ys[f.a] + pmesh.ys[f.b]) * K));
      surf += std::abs(d * (fx * f.nx + fy * f.ny)) * len;
    }
  } else if (hier.mode == HierarchyMode::Nonlinear) {
    // grad_x u_M under the constant context: g * u_M.
    const ScalarField& um = hier.u_levels[hier.M];
    for (const auto& f : pmesh.faces) {
      if (f.tag != FaceTag::Hole) continue;
      const double uv = 0.5 * (um.v[y_of[f.a]] + um.v[y_of[f.b]]);
      const double d = coeff.d(frac(0.5 * (pmesh.xs[f.a] + pmesh.xs[f.b]) * K),
                               frac(0.5 * (pmesh.ys[f.a] + pmesh.ys[f.b]) * K));
      surf += std::abs(d * uv * (g.x * f.nx + g.y * f.ny)) * len;
    }
  }
  diag.surface_term = std::pow(eps, hier.M) * surf;
  return diag;
}

}  // namespace homlab
