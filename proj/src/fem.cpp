#include "homlab/fem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "homlab/errors.hpp"

namespace homlab {

namespace {

constexpr double kGaussP = 0.57735026918962576;  // 1/sqrt(3)
const double kGx[4] = {-kGaussP, kGaussP, kGaussP, -kGaussP};
const double kGy[4] = {-kGaussP, -kGaussP, kGaussP, kGaussP};

void basis(double xi, double eta, double n[4]) {
  n[0] = 0.25 * (1 - xi) * (1 - eta);
  n[1] = 0.25 * (1 + xi) * (1 - eta);
  n[2] = 0.25 * (1 + xi) * (1 + eta);
  n[3] = 0.25 * (1 - xi) * (1 + eta);
}

void basis_grad(double xi, double eta, double dxi[4], double deta[4]) {
  dxi[0] = -0.25 * (1 - eta);
  dxi[1] = 0.25 * (1 - eta);
  dxi[2] = 0.25 * (1 + eta);
  dxi[3] = -0.25 * (1 + eta);
  deta[0] = -0.25 * (1 - xi);
  deta[1] = -0.25 * (1 + xi);
  deta[2] = 0.25 * (1 + xi);
  deta[3] = 0.25 * (1 - xi);
}

// Physical coordinates of a reference point inside an element.
void phys_point(const QuadMesh& m, int e, double xi, double eta, double* px,
                double* py) {
  const auto [i, j] = m.elem_ij[e];
  *px = (i + 0.5 * (1 + xi)) * m.hx;
  *py = (j + 0.5 * (1 + eta)) * m.hy;
}

kern::Csr compress(int n, const std::vector<int>& ti, const std::vector<int>& tj,
                   const std::vector<double>& tv) {
  kern::Csr a;
  a.n = n;
  a.rowptr.assign(n + 1, 0);
  for (int r : ti) ++a.rowptr[r + 1];
  for (int r = 0; r < n; ++r) a.rowptr[r + 1] += a.rowptr[r];
  std::vector<int> cursor(a.rowptr.begin(), a.rowptr.end() - 1);
  std::vector<int> col(ti.size());
  std::vector<double> val(ti.size());
  for (std::size_t k = 0; k < ti.size(); ++k) {
    const int at = cursor[ti[k]]++;
    col[at] = tj[k];
    val[at] = tv[k];
  }
  // Sort each row and merge duplicates.
  a.col.reserve(ti.size());
  a.val.reserve(ti.size());
  std::vector<int> newptr(n + 1, 0);
  std::vector<std::pair<int, double>> row;
  for (int r = 0; r < n; ++r) {
    row.clear();
    for (int k = a.rowptr[r]; k < a.rowptr[r + 1]; ++k)
      row.emplace_back(col[k], val[k]);
    std::sort(row.begin(), row.end(),
              [](const auto& x, const auto& y) { return x.first < y.first; });
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (!a.col.empty() && static_cast<int>(a.col.size()) > newptr[r] &&
          a.col.back() == row[k].first) {
        a.val.back() += row[k].second;
      } else {
        a.col.push_back(row[k].first);
        a.val.push_back(row[k].second);
      }
    }
    newptr[r + 1] = static_cast<int>(a.col.size());
  }
  a.rowptr = std::move(newptr);
  return a;
}

}  // namespace

std::array<double, 2> Matrix2::eigenvalues() const {
  const double tr = a11 + a22;
  const double off = 0.5 * (a12 + a21);
  const double disc = std::sqrt(0.25 * (a11 - a22) * (a11 - a22) + off * off);
  return {0.5 * tr - disc, 0.5 * tr + disc};
}

CoefficientSpec CoefficientSpec::constant(double c) {
  return {[c](double, double) { return c; }, c, c};
}

CoefficientSpec CoefficientSpec::layered(double a, double b) {
  return {[a, b](double y1, double) { return y1 < 0.5 ? a : b; },
          std::min(a, b), std::max(a, b)};
}

CoefficientSpec CoefficientSpec::tabulated(int n, std::vector<double> values) {
  if (static_cast<int>(values.size()) != n * n)
    throw ConfigError("tabulated coefficient needs n*n values");
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  auto d = [n, vals = std::move(values)](double y1, double y2) {
    const int i = std::min(static_cast<int>(y1 * n), n - 1);
    const int j = std::min(static_cast<int>(y2 * n), n - 1);
    return vals[j * n + i];
  };
  return {std::move(d), lo, hi};
}

void CoefficientSpec::check(const QuadMesh& mesh) const {
  for (int e = 0; e < mesh.n_elems(); ++e) {
    double cx, cy;
    phys_point(mesh, e, 0, 0, &cx, &cy);
    const double v = d(cx, cy);
    if (!(v >= alpha - 1e-14) || !(v <= beta + 1e-14) || !(alpha > 0))
      throw ConfigError("coefficient violates ellipticity bounds at element " +
                        std::to_string(e) + ": d = " + std::to_string(v));
  }
}

ReactionSpec ReactionSpec::zero() {
  return {[](double, double, double) { return 0.0; }, 0.0, false};
}

ReactionSpec ReactionSpec::constant(double lambda) {
  return {[lambda](double, double, double) { return lambda; }, 0.0, false};
}

ReactionSpec ReactionSpec::linear(double lambda) {
  return {[lambda](double, double, double u) { return lambda * u; },
          std::abs(lambda), false};
}

ReactionSpec ReactionSpec::affine(double lambda) {
  return {[lambda](double, double, double u) { return lambda * (1.0 + u); },
          std::abs(lambda), false};
}

ReactionSpec ReactionSpec::tanh_sin(double lambda) {
  // sup_u |d/du sin(2 pi y1)(1 + tanh u)| = sup |sin * sech^2| <= 1.
  return {[lambda](double y1, double, double u) {
            return lambda * std::sin(2.0 * M_PI * y1) * (1.0 + std::tanh(u));
          },
          std::abs(lambda), true};
}

void ReactionSpec::sampled_lipschitz_check(std::mt19937_64& rng, double range,
                                           int samples, double tol) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> val(-range, range);
  for (int s = 0; s < samples; ++s) {
    const double p1 = unit(rng), p2 = unit(rng);
    const double u = val(rng), v = val(rng);
    const double diff = std::abs(R(p1, p2, u) - R(p1, p2, v));
    if (diff > lipschitz * std::abs(u - v) + tol)
      throw ConfigError(
          "declared Lipschitz constant violated by sampling: |R(u)-R(v)| = " +
          std::to_string(diff) + " > L|u-v| at u=" + std::to_string(u) +
          ", v=" + std::to_string(v));
  }
}

void dump_field(const ScalarField& f, std::ostream& out) {
  const char* g = f.gauge == Gauge::ZeroMean    ? "zero-mean"
                  : f.gauge == Gauge::Dirichlet ? "dirichlet"
                                                : "none";
  char buf[64];
  std::snprintf(buf, sizeof buf, "FIELD %016llx %s\n",
                static_cast<unsigned long long>(f.mesh_hash), g);
  out << buf;
  for (double v : f.v) {
    std::snprintf(buf, sizeof buf, "%.17g\n", v);
    out << buf;
  }
}

// SparseSystem ------------------------------------------------------------

SparseSystem::SparseSystem(int n_nodes)
    : rhs(n_nodes, 0.0), n_(n_nodes), master_(n_nodes),
      dirichlet_(n_nodes, 0), dval_(n_nodes, 0.0) {
  std::iota(master_.begin(), master_.end(), 0);
}

void SparseSystem::add(int i, int j, double v) {
  ti_.push_back(i);
  tj_.push_back(j);
  tv_.push_back(v);
  finalized_ = false;
}

void SparseSystem::apply_periodic(const QuadMesh& mesh, bool swap_roles) {
  auto find = [&](int a) {
    while (master_[a] != a) a = master_[a];
    return a;
  };
  auto unite = [&](int master, int slave) {
    if (swap_roles) std::swap(master, slave);
    const int rm = find(master), rs = find(slave);
    if (rm != rs) master_[rs] = rm;
  };
  for (const auto& [a, b] : mesh.periodic_x) unite(a, b);
  for (const auto& [a, b] : mesh.periodic_y) unite(a, b);
  for (int i = 0; i < n_; ++i) master_[i] = find(i);
  finalized_ = false;
}

void SparseSystem::apply_dirichlet(const std::vector<int>& nodes,
                                   double value) {
  for (int nd : nodes) {
    dirichlet_[master_[nd]] = 1;
    dval_[master_[nd]] = value;
  }
  finalized_ = false;
}

void SparseSystem::finalize() {
  if (finalized_) return;
  dof_of_node_.assign(n_, -1);
  node_of_dof_.clear();
  std::vector<int> dof_of_rep(n_, -1);
  for (int i = 0; i < n_; ++i) {
    const int r = master_[i];
    if (r != i || dirichlet_[r]) continue;
    dof_of_rep[r] = static_cast<int>(node_of_dof_.size());
    node_of_dof_.push_back(r);
  }
  for (int i = 0; i < n_; ++i) dof_of_node_[i] = dof_of_rep[master_[i]];

  const int nf = n_free();
  dirichlet_corr_.assign(nf, 0.0);
  std::vector<int> ri, rj;
  std::vector<double> rv;
  ri.reserve(ti_.size());
  rj.reserve(ti_.size());
  rv.reserve(ti_.size());
  for (std::size_t k = 0; k < ti_.size(); ++k) {
    const int di = dof_of_node_[ti_[k]];
    const int mj = master_[tj_[k]];
    if (di < 0) continue;
    if (dirichlet_[mj]) {
      dirichlet_corr_[di] -= tv_[k] * dval_[mj];
    } else {
      ri.push_back(di);
      rj.push_back(dof_of_node_[tj_[k]]);
      rv.push_back(tv_[k]);
    }
  }
  csr_ = compress(nf, ri, rj, rv);
  finalized_ = true;
  set_rhs(rhs);
}

void SparseSystem::set_rhs(const std::vector<double>& full) {
  finalize();
  reduced_rhs_ = dirichlet_corr_;
  for (int i = 0; i < n_; ++i) {
    const int d = dof_of_node_[i];
    if (d >= 0) reduced_rhs_[d] += full[i];
  }
}

int SparseSystem::n_free() const { return static_cast<int>(node_of_dof_.size()); }

const kern::Csr& SparseSystem::matrix() {
  finalize();
  return csr_;
}

double SparseSystem::symmetry_defect() {
  finalize();
  double worst = 0.0, scale = 0.0;
  for (int r = 0; r < csr_.n; ++r) {
    for (int k = csr_.rowptr[r]; k < csr_.rowptr[r + 1]; ++k) {
      const int c = csr_.col[k];
      scale = std::max(scale, std::abs(csr_.val[k]));
      if (c < r) continue;
      double sym = 0.0;
      for (int k2 = csr_.rowptr[c]; k2 < csr_.rowptr[c + 1]; ++k2)
        if (csr_.col[k2] == r) sym = csr_.val[k2];
      worst = std::max(worst, std::abs(csr_.val[k] - sym));
    }
  }
  return scale > 0 ? worst / scale : 0.0;
}

std::vector<double> SparseSystem::expand(const std::vector<double>& x) const {
  std::vector<double> full(n_, 0.0);
  for (int i = 0; i < n_; ++i) {
    const int d = dof_of_node_[i];
    full[i] = d >= 0 ? x[d] : dval_[master_[i]];
  }
  return full;
}

std::vector<double> SparseSystem::reduce_sum(
    const std::vector<double>& full) const {
  std::vector<double> r(n_free(), 0.0);
  for (int i = 0; i < n_; ++i) {
    const int d = dof_of_node_[i];
    if (d >= 0) r[d] += full[i];
  }
  return r;
}

std::vector<double> SparseSystem::cg(const std::vector<double>& b, double tol,
                                     SolveStats* stats,
                                     const std::vector<double>* x0,
                                     bool project_constants) {
  const int n = csr_.n;
  auto project = [n](std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    for (double& e : v) e -= m;
  };

  std::vector<double> diag(n, 0.0);
  for (int r = 0; r < n; ++r)
    for (int k = csr_.rowptr[r]; k < csr_.rowptr[r + 1]; ++k)
      if (csr_.col[k] == r) diag[r] = csr_.val[k];
  std::vector<double> invdiag(n);
  for (int i = 0; i < n; ++i) invdiag[i] = diag[i] > 0 ? 1.0 / diag[i] : 1.0;

  std::vector<double> x = x0 ? *x0 : std::vector<double>(n, 0.0);
  if (project_constants && x0) project(x);
  std::vector<double> r(n), z(n), p(n), q(n);
  kern::spmv(csr_, x, r);
  for (int i = 0; i < n; ++i) r[i] = b[i] - r[i];
  if (project_constants) project(r);

  const double bnorm = std::sqrt(kern::dot(b, b));
  const double stop = tol * std::max(bnorm, 1e-300);
  double rnorm = std::sqrt(kern::dot(r, r));
  const int cap =
      std::max(200, static_cast<int>(50.0 * std::sqrt(static_cast<double>(n))));
  int it = 0;
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    rnorm = 0.0;
  } else {
    kern::hadamard(r, invdiag, z);
    p = z;
    double rho = kern::dot(r, z);
    while (rnorm > stop) {
      if (++it > cap)
        throw NoConvError(rnorm / bnorm,
                          "CG failed to converge in " + std::to_string(cap) +
                              " iterations; relative residual " +
                              std::to_string(rnorm / bnorm));
      kern::spmv(csr_, p, q);
      const double alpha = rho / kern::dot(p, q);
      kern::axpy(alpha, p, x);
      kern::axpy(-alpha, q, r);
      if (project_constants) project(r);
      kern::hadamard(r, invdiag, z);
      const double rho_new = kern::dot(r, z);
      kern::xpby(z, rho_new / rho, p);
      rho = rho_new;
      rnorm = std::sqrt(kern::dot(r, r));
    }
  }
  if (stats) {
    stats->iterations = it;
    stats->residual = bnorm > 0 ? rnorm / bnorm : 0.0;
  }
  return x;
}

std::vector<double> SparseSystem::solve_spd(
    double tol, SolveStats* stats, const std::vector<double>* warm_start) {
  finalize();
  std::vector<double> x0;
  const std::vector<double>* x0p = nullptr;
  if (warm_start) {
    x0.resize(n_free());
    for (int d = 0; d < n_free(); ++d) x0[d] = (*warm_start)[node_of_dof_[d]];
    x0p = &x0;
  }
  return expand(cg(reduced_rhs_, tol, stats, x0p, false));
}

std::vector<double> SparseSystem::solve_neumann_gauged(
    const std::vector<double>& weights, double tol, double compat_tol,
    SolveStats* stats, const std::vector<double>* warm_start) {
  finalize();
  std::vector<double> b = reduced_rhs_;
  const double sum = std::accumulate(b.begin(), b.end(), 0.0);
  const double bnorm = std::sqrt(kern::dot(b, b));
  // A load at roundoff level is treated as zero; the ratio is meaningless.
  const double floor = 1e-13 * std::sqrt(static_cast<double>(n_free()));
  const double defect = bnorm > floor ? std::abs(sum) / bnorm : 0.0;
  if (stats) stats->compat_defect = defect;
  if (defect > compat_tol)
    throw CompatError(defect,
                      "incompatible source for pure Neumann/periodic problem: "
                      "|1^T rhs| / ||rhs|| = " +
                          std::to_string(defect) + " > compat_tol = " +
                          std::to_string(compat_tol));
  const double shift = sum / n_free();
  for (double& e : b) e -= shift;

  std::vector<double> x0;
  const std::vector<double>* x0p = nullptr;
  if (warm_start) {
    x0.resize(n_free());
    for (int d = 0; d < n_free(); ++d) x0[d] = (*warm_start)[node_of_dof_[d]];
    x0p = &x0;
  }
  std::vector<double> x = cg(b, tol, stats, x0p, true);

  // Gauge: zero integral mean against the supplied weights.
  std::vector<double> wr = reduce_sum(weights);
  const double wsum = std::accumulate(wr.begin(), wr.end(), 0.0);
  const double wmean = kern::dot(wr, x) / wsum;
  for (double& e : x) e -= wmean;
  return expand(x);
}

// Assembly ----------------------------------------------------------------

namespace {

template <typename ElemCoeff>
SparseSystem assemble_stiffness_impl(const QuadMesh& mesh, ElemCoeff dval) {
  SparseSystem sys(mesh.n_nodes());
  const double jac = mesh.hx * mesh.hy / 4.0;
  const double sx = 2.0 / mesh.hx, sy = 2.0 / mesh.hy;
  for (int e = 0; e < mesh.n_elems(); ++e) {
    double ke[4][4] = {};
    for (int g = 0; g < 4; ++g) {
      double dxi[4], deta[4];
      basis_grad(kGx[g], kGy[g], dxi, deta);
      double gx[4], gy[4];
      for (int a = 0; a < 4; ++a) {
        gx[a] = sx * dxi[a];
        gy[a] = sy * deta[a];
      }
      Matrix2 dmat = dval(e, kGx[g], kGy[g]);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          ke[a][b] += jac * (gx[a] * (dmat.a11 * gx[b] + dmat.a12 * gy[b]) +
                             gy[a] * (dmat.a21 * gx[b] + dmat.a22 * gy[b]));
    }
    const auto& nd = mesh.elems[e];
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) sys.add(nd[a], nd[b], ke[a][b]);
  }
  return sys;
}

}  // namespace

SparseSystem assemble_stiffness(const QuadMesh& mesh,
                                const CoefficientSpec& coeff) {
  return assemble_stiffness_impl(mesh, [&](int e, double xi, double eta) {
    double px, py;
    phys_point(mesh, e, xi, eta, &px, &py);
    const double d = coeff.d(px, py);
    return Matrix2{d, 0, 0, d};
  });
}

SparseSystem assemble_stiffness_tensor(const QuadMesh& mesh,
                                       const Matrix2& d) {
  return assemble_stiffness_impl(mesh,
                                 [&](int, double, double) { return d; });
}

kern::Csr assemble_mass_csr(const QuadMesh& mesh,
                            const std::vector<int>& dof_of_node, int n_free) {
  std::vector<int> ti, tj;
  std::vector<double> tv;
  const double jac = mesh.hx * mesh.hy / 4.0;
  for (int e = 0; e < mesh.n_elems(); ++e) {
    double me[4][4] = {};
    for (int g = 0; g < 4; ++g) {
      double n[4];
      basis(kGx[g], kGy[g], n);
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) me[a][b] += jac * n[a] * n[b];
    }
    const auto& nd = mesh.elems[e];
    for (int a = 0; a < 4; ++a) {
      const int da = dof_of_node[nd[a]];
      if (da < 0) continue;
      for (int b = 0; b < 4; ++b) {
        const int db = dof_of_node[nd[b]];
        if (db < 0) continue;
        ti.push_back(da);
        tj.push_back(db);
        tv.push_back(me[a][b]);
      }
    }
  }
  return compress(n_free, ti, tj, tv);
}

std::vector<double> assemble_load(
    const QuadMesh& mesh, const std::function<double(double, double)>& f) {
  std::vector<double> load(mesh.n_nodes(), 0.0);
  const double jac = mesh.hx * mesh.hy / 4.0;
  for (int e = 0; e < mesh.n_elems(); ++e) {
    const auto& nd = mesh.elems[e];
    for (int g = 0; g < 4; ++g) {
      double n[4];
      basis(kGx[g], kGy[g], n);
      double px, py;
      phys_point(mesh, e, kGx[g], kGy[g], &px, &py);
      const double fv = f(px, py);
      for (int a = 0; a < 4; ++a) load[nd[a]] += jac * fv * n[a];
    }
  }
  return load;
}

std::vector<double> assemble_load_field(
    const QuadMesh& mesh, std::span<const double> nodal,
    const std::function<double(double, double, double)>& g) {
  std::vector<double> load(mesh.n_nodes(), 0.0);
  const double jac = mesh.hx * mesh.hy / 4.0;
  for (int e = 0; e < mesh.n_elems(); ++e) {
    const auto& nd = mesh.elems[e];
    for (int gq = 0; gq < 4; ++gq) {
      double n[4];
      basis(kGx[gq], kGy[gq], n);
      double u = 0.0;
      for (int a = 0; a < 4; ++a) u += n[a] * nodal[nd[a]];
      double val = u;
      if (g) {
        double px, py;
        phys_point(mesh, e, kGx[gq], kGy[gq], &px, &py);
        val = g(px, py, u);
      }
      for (int a = 0; a < 4; ++a) load[nd[a]] += jac * val * n[a];
    }
  }
  return load;
}

std::vector<double> integral_weights(const QuadMesh& mesh) {
  return assemble_load(mesh, [](double, double) { return 1.0; });
}

// Norms ---------------------------------------------------------------------

double l2_norm(const QuadMesh& mesh, std::span<const double> v) {
  double acc = 0.0;
  const double jac = mesh.hx * mesh.hy / 4.0;
  for (int e = 0; e < mesh.n_elems(); ++e) {
    const auto& nd = mesh.elems[e];
    for (int g = 0; g < 4; ++g) {
      double n[4];
      basis(kGx[g], kGy[g], n);
      double u = 0.0;
      for (int a = 0; a < 4; ++a) u += n[a] * v[nd[a]];
      acc += jac * u * u;
    }
  }
  return std::sqrt(acc);
}

double h1_seminorm(const QuadMesh& mesh, std::span<const double> v) {
  double acc = 0.0;
  const double jac = mesh.hx * mesh.hy / 4.0;
  const double sx = 2.0 / mesh.hx, sy = 2.0 / mesh.hy;
  for (int e = 0; e < mesh.n_elems(); ++e) {
    const auto& nd = mesh.elems[e];
    for (int g = 0; g < 4; ++g) {
      double dxi[4], deta[4];
      basis_grad(kGx[g], kGy[g], dxi, deta);
      double gx = 0.0, gy = 0.0;
      for (int a = 0; a < 4; ++a) {
        gx += sx * dxi[a] * v[nd[a]];
        gy += sy * deta[a] * v[nd[a]];
      }
      acc += jac * (gx * gx + gy * gy);
    }
  }
  return std::sqrt(acc);
}

double h1_norm(const QuadMesh& mesh, std::span<const double> v) {
  const double l2 = l2_norm(mesh, v);
  const double h1 = h1_seminorm(mesh, v);
  return std::sqrt(l2 * l2 + h1 * h1);
}

double v_eps_norm(const QuadMesh& pmesh, std::span<const double> v) {
  return h1_seminorm(pmesh, v);
}

double mean(const QuadMesh& mesh, std::span<const double> v) {
  double acc = 0.0;
  const double jac = mesh.hx * mesh.hy / 4.0;
  for (int e = 0; e < mesh.n_elems(); ++e) {
    const auto& nd = mesh.elems[e];
    for (int g = 0; g < 4; ++g) {
      double n[4];
      basis(kGx[g], kGy[g], n);
      for (int a = 0; a < 4; ++a) acc += jac * n[a] * v[nd[a]];
    }
  }
  return acc / mesh.domain_area();
}

std::array<double, 2> element_gradient(const QuadMesh& mesh, int elem,
                                       std::span<const double> v, double xi,
                                       double eta) {
  double dxi[4], deta[4];
  basis_grad(xi, eta, dxi, deta);
  const auto& nd = mesh.elems[elem];
  double gx = 0.0, gy = 0.0;
  for (int a = 0; a < 4; ++a) {
    gx += (2.0 / mesh.hx) * dxi[a] * v[nd[a]];
    gy += (2.0 / mesh.hy) * deta[a] * v[nd[a]];
  }
  return {gx, gy};
}

std::vector<std::array<double, 2>> recover_nodal_gradient(
    const QuadMesh& mesh, std::span<const double> v) {
  std::vector<std::array<double, 2>> g(mesh.n_nodes(), {0.0, 0.0});
  std::vector<int> count(mesh.n_nodes(), 0);
  const double corner_xi[4] = {-1, 1, 1, -1};
  const double corner_eta[4] = {-1, -1, 1, 1};
  for (int e = 0; e < mesh.n_elems(); ++e) {
    const auto& nd = mesh.elems[e];
    for (int a = 0; a < 4; ++a) {
      const auto ge =
          element_gradient(mesh, e, v, corner_xi[a], corner_eta[a]);
      g[nd[a]][0] += ge[0];
      g[nd[a]][1] += ge[1];
      ++count[nd[a]];
    }
  }
  for (int i = 0; i < mesh.n_nodes(); ++i) {
    if (count[i] > 0) {
      g[i][0] /= count[i];
      g[i][1] /= count[i];
    }
  }
  return g;
}

// PeriodicCellOperator -------------------------------------------------------

PeriodicCellOperator::PeriodicCellOperator(const QuadMesh& mesh,
                                           const CoefficientSpec& coeff,
                                           bool swap_master_slave)
    : mesh_(&mesh), coeff_(coeff), swap_(swap_master_slave),
      sys_(assemble_stiffness(mesh, coeff)) {
  coeff.check(mesh);
  sys_.apply_periodic(mesh, swap_);
  sys_.finalize();
  weights_ = integral_weights(mesh);
}

ScalarField PeriodicCellOperator::solve_gauged(
    const std::vector<double>& load, double tol, double compat_tol,
    SolveStats* stats, const std::vector<double>* warm_start) const {
  SparseSystem& sys = sys_;
  sys.set_rhs(load);
  ScalarField f;
  f.mesh_hash = mesh_->hash();
  f.gauge = Gauge::ZeroMean;
  f.v = sys.solve_neumann_gauged(weights_, tol, compat_tol, stats, warm_start);
  return f;
}

double PeriodicCellOperator::poincare_constant(double tol) const {
  if (c_p_) return *c_p_;
  // d = 1 operator regardless of the coefficient: C_p is geometric.
  SparseSystem lap = assemble_stiffness(*mesh_, CoefficientSpec::constant(1.0));
  lap.apply_periodic(*mesh_, swap_);
  lap.finalize();
  const kern::Csr& a = lap.matrix();
  const kern::Csr mass =
      assemble_mass_csr(*mesh_, lap.dof_of_node_, lap.n_free());
  const int n = a.n;

  std::vector<double> m1(n);  // M * 1
  {
    std::vector<double> ones(n, 1.0);
    kern::spmv(mass, ones, m1);
  }
  const double m11 = std::accumulate(m1.begin(), m1.end(), 0.0);

  // Deterministic start with components on the first eigenspace.
  std::vector<double> x(n);
  for (int d = 0; d < n; ++d) {
    const int node = lap.node_of_dof_[d];
    const double px = mesh_->xs[node], py = mesh_->ys[node];
    x[d] = std::cos(2 * M_PI * px) + 0.37 * std::sin(2 * M_PI * py) +
           0.11 * std::cos(2 * M_PI * (px + py));
  }

  auto m_project = [&](std::vector<double>& v) {
    const double c = kern::dot(m1, v) / m11;
    for (double& e : v) e -= c;
  };
  m_project(x);

  double lambda = 0.0, lambda_prev = -1.0;
  std::vector<double> y(n), z(n), az(n), mz(n);
  for (int it = 0; it < 500; ++it) {
    kern::spmv(mass, x, y);
    // Euclidean projection puts y in range(A).
    const double s = std::accumulate(y.begin(), y.end(), 0.0) / n;
    for (double& e : y) e -= s;
    SolveStats st;
    z = lap.cg(y, 1e-12, &st, it > 0 ? &z : nullptr, true);
    m_project(z);
    kern::spmv(a, z, az);
    kern::spmv(mass, z, mz);
    lambda = kern::dot(z, az) / kern::dot(z, mz);
    const double zm = std::sqrt(kern::dot(z, mz));
    for (int i = 0; i < n; ++i) x[i] = z[i] / zm;
    if (lambda_prev > 0 && std::abs(lambda - lambda_prev) <= tol * lambda)
      break;
    lambda_prev = lambda;
  }
  c_p_ = 1.0 / std::sqrt(lambda);
  return *c_p_;
}

}  // namespace homlab
