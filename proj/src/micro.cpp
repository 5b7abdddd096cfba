#include "homlab/micro.hpp"

#include <cmath>

#include "homlab/errors.hpp"
#include "homlab/kernels.hpp"

namespace homlab {

namespace {

std::vector<double> subtract(const std::vector<double>& a,
                             const std::vector<double>& b) {
  std::vector<double> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

double frac(double t) {
  const double f = t - std::floor(t);
  return f >= 1.0 ? 0.0 : f;
}

}  // namespace

double MicroProblem::d_eps(double x1, double x2) const {
  return cell_coeff->d(frac(x1 * K), frac(x2 * K));
}

MicroResult solve_microscale(const MicroProblem& prob,
                             const PicardOptions& opt) {
  const QuadMesh& mesh = *prob.pmesh;
  const ReactionSpec& reaction = *prob.reaction;
  const int K = prob.K;

  CoefficientSpec deps;
  deps.d = [&prob](double x1, double x2) { return prob.d_eps(x1, x2); };
  deps.alpha = prob.cell_coeff->alpha;
  deps.beta = prob.cell_coeff->beta;

  SparseSystem sys = assemble_stiffness(mesh, deps);
  std::vector<int> ext;
  for (const auto& f : mesh.faces)
    if (f.tag == FaceTag::Outer) {
      ext.push_back(f.a);
      ext.push_back(f.b);
    }
  sys.apply_dirichlet(ext, 0.0);
  sys.finalize();

  // Reaction evaluated at y = x/eps for cell-type reactions, else at x.
  auto rx = [&](double x1, double x2, double u) {
    if (reaction.spatial_in_y)
      return reaction.R(frac(x1 * K), frac(x2 * K), u);
    return reaction.R(x1, x2, u);
  };

  MicroResult res;
  res.trace.level = -2;
  std::vector<double> u(mesh.n_nodes(), 0.0);
  std::vector<double> load;
  for (int k = 1; k <= opt.n_max; ++k) {
    load = assemble_load_field(mesh, u, rx);
    sys.set_rhs(load);
    std::vector<double> next = sys.solve_spd(opt.cg_tol, nullptr, &u);
    const double inc = h1_norm(mesh, subtract(next, u));
    res.trace.increments.push_back(inc);
    if (k == 1) res.trace.norm_u1 = h1_norm(mesh, next);
    u = std::move(next);
    if (inc <= opt.tol) {
      res.trace.converged = true;
      break;
    }
  }
  if (!res.trace.converged)
    throw NoConvError(res.trace.increments.back(),
                      "NOCONV-PICARD: microscale solve did not converge");

  // Energy identity u^T A u = u^T b, evaluated on the final iterate.
  load = assemble_load_field(mesh, u, rx);
  {
    SparseSystem energy = assemble_stiffness(mesh, deps);
    energy.finalize();
    std::vector<double> au(mesh.n_nodes());
    kern::spmv(energy.matrix(), u, au);
    res.energy_lhs = kern::dot(u, au);
  }
  res.energy_rhs = kern::dot(u, load);

  std::vector<double> rvals(mesh.n_nodes());
  for (int i = 0; i < mesh.n_nodes(); ++i)
    rvals[i] = rx(mesh.xs[i], mesh.ys[i], u[i]);
  // Dirichlet Poincare constant of the unit square bounds the perforated one.
  const double c_omega = 1.0 / (M_PI * std::sqrt(2.0));
  res.apriori_rhs = c_omega * l2_norm(mesh, rvals) / deps.alpha;
  res.v_norm = v_eps_norm(mesh, u);

  res.u.mesh_hash = mesh.hash();
  res.u.gauge = Gauge::Dirichlet;
  res.u.v = std::move(u);
  return res;
}

FluxReport flux_check(const MicroProblem& prob,
                      const std::vector<double>& field) {
  const QuadMesh& mesh = *prob.pmesh;
  FluxReport rep;
  const double len = mesh.hx;  // uniform square cells
  for (const auto& f : mesh.faces) {
    if (f.tag != FaceTag::Hole) continue;
    const double mx = 0.5 * (mesh.xs[f.a] + mesh.xs[f.b]);
    const double my = 0.5 * (mesh.ys[f.a] + mesh.ys[f.b]);
    // Midpoint of the face in the owning element's reference coordinates.
    const auto [i, j] = mesh.elem_ij[f.elem];
    const double xi = 2.0 * (mx / mesh.hx - i) - 1.0;
    const double eta = 2.0 * (my / mesh.hy - j) - 1.0;
    const auto g = element_gradient(mesh, f.elem, field, xi, eta);
    const double d = prob.d_eps(
        (i + 0.5) * mesh.hx, (j + 0.5) * mesh.hy);  // element centroid
    const double flux = d * (g[0] * f.nx + g[1] * f.ny);
    rep.total_abs += std::abs(flux) * len;
    rep.max_abs = std::max(rep.max_abs, std::abs(flux));
  }
  return rep;
}

}  // namespace homlab
