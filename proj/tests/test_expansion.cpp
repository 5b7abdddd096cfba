#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "homlab/expansion.hpp"
#include "homlab/micro.hpp"

using namespace homlab;

namespace {

CorrectorHierarchy zero_classical(const QuadMesh& cmesh,
                                  const QuadMesh& macro) {
  CorrectorHierarchy h;
  h.mode = HierarchyMode::Classical;
  h.M = 2;
  for (int j = 0; j < 2; ++j)
    h.chi[j] = {cmesh.hash(), Gauge::ZeroMean,
                std::vector<double>(cmesh.n_nodes(), 0.0)};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      h.theta[i][j] = {cmesh.hash(), Gauge::ZeroMean,
                       std::vector<double>(cmesh.n_nodes(), 0.0)};
  h.u0_macro = ScalarField{macro.hash(), Gauge::Dirichlet,
                           std::vector<double>(macro.n_nodes(), 0.0)};
  return h;
}

}  // namespace

TEST_CASE("power-law data is fitted exactly") {
  std::vector<std::pair<double, double>> samples;
  for (int k : {4, 8, 16, 32})
    samples.emplace_back(1.0 / k, 3.0 * std::pow(1.0 / k, 0.5));
  const ConvergenceReport rep = fit_convergence_order(samples, 2);
  CHECK(rep.fitted);
  CHECK(rep.slope == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(rep.constant == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(rep.r2 == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(rep.theory_order == doctest::Approx(0.5));
  CHECK(rep.order_gate);
  CHECK(rep.flags.empty());
}

TEST_CASE("vanishing errors are flagged degenerate, not fitted") {
  std::vector<std::pair<double, double>> samples = {
      {0.25, 1e-15}, {0.125, 1e-15}, {0.0625, 1e-16}};
  const ConvergenceReport rep = fit_convergence_order(samples, 2);
  CHECK(!rep.fitted);
  CHECK(rep.order_gate);  // nothing to gate at rounding scale
  CHECK(std::find(rep.flags.begin(), rep.flags.end(), "DEGENERATE") !=
        rep.flags.end());
}

TEST_CASE("non-decreasing errors are flagged pre-asymptotic") {
  std::vector<std::pair<double, double>> samples = {
      {0.25, 0.01}, {0.125, 0.012}, {0.0625, 0.011}};
  const ConvergenceReport rep = fit_convergence_order(samples, 2);
  CHECK(std::find(rep.flags.begin(), rep.flags.end(), "PRE-ASYMPTOTIC") !=
        rep.flags.end());
}

TEST_CASE("fit rejects short or unordered inputs") {
  CHECK_THROWS(fit_convergence_order({{0.25, 1.0}, {0.125, 0.5}}, 2));
  CHECK_THROWS(
      fit_convergence_order({{0.125, 0.5}, {0.25, 1.0}, {0.5, 2.0}}, 2));
}

TEST_CASE("grid differences are exact on linear fields") {
  const QuadMesh m = build_square_mesh(8);
  std::vector<double> v(m.n_nodes());
  for (int p = 0; p < m.n_nodes(); ++p) v[p] = 2.0 * m.xs[p] - m.ys[p];
  const auto g = grid_diff(m, v);
  for (int p = 0; p < m.n_nodes(); ++p) {
    CHECK(g[p][0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(g[p][1] == doctest::Approx(-1.0).epsilon(1e-12));
  }
}

TEST_CASE("macro derivatives of a quadratic are exact up to the boundary") {
  const QuadMesh m = build_square_mesh(16);
  std::vector<double> v(m.n_nodes());
  for (int p = 0; p < m.n_nodes(); ++p)
    v[p] = m.xs[p] * m.xs[p] + 0.5 * m.xs[p] * m.ys[p];
  const MacroDerivatives md = macro_derivatives(m, v);
  for (int p = 0; p < m.n_nodes(); ++p) {
    CHECK(md.h11[p] == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(md.h12[p] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(std::abs(md.h22[p]) <= 1e-10);
  }
}

TEST_CASE("zero hierarchy evaluates to the zero expansion") {
  const QuadMesh cmesh = build_cell_mesh({0.25, 8});
  const QuadMesh pmesh = build_perforated_mesh({0.25, 8}, 2, 8);
  const QuadMesh macro = build_square_mesh(16);
  const CorrectorHierarchy h = zero_classical(cmesh, macro);
  const ExpansionEvaluation ev =
      evaluate_expansion(h, 0.5, pmesh, cmesh, &macro);
  for (double v : ev.values) CHECK(v == 0.0);
  ScalarField u{pmesh.hash(), Gauge::Dirichlet,
                std::vector<double>(pmesh.n_nodes(), 0.0)};
  CHECK(corrector_error(pmesh, u, ev) == 0.0);
}

TEST_CASE("expansion gradient is consistent with its nodal values") {
  // Real hierarchy on a perforated geometry; the composed gradient must
  // match the element gradient of the interpolated values since cell
  // fields restrict to bilinear functions on the fine elements.
  const CellGeometry geom{0.25, 8};
  const QuadMesh cmesh = build_cell_mesh(geom);
  const QuadMesh pmesh = build_perforated_mesh(geom, 4, 8);
  const QuadMesh macro = build_square_mesh(32);
  const CoefficientSpec coeff = CoefficientSpec::constant(1.0);
  const ReactionSpec reaction = ReactionSpec::affine(0.1);
  PeriodicCellOperator op(cmesh, coeff);
  CorrectorHierarchy h =
      build_cell_hierarchy(op, {2, 0}, reaction, {}, {});
  h.u0_macro = solve_homogenized_macro(macro, h.d_hom, reaction,
                                       h.porosity, {});
  const ExpansionEvaluation ev =
      evaluate_expansion(h, 0.25, pmesh, cmesh, &macro);
  REQUIRE(static_cast<int>(ev.values.size()) == pmesh.n_nodes());
  REQUIRE(static_cast<int>(ev.grad.size()) == pmesh.n_elems());
  double max_dev = 0.0, max_grad = 0.0;
  for (int e = 0; e < pmesh.n_elems(); ++e) {
    const auto g = element_gradient(pmesh, e, ev.values, 0.0, 0.0);
    max_dev = std::max({max_dev, std::abs(g[0] - ev.grad[e][0]),
                        std::abs(g[1] - ev.grad[e][1])});
    max_grad = std::max({max_grad, std::abs(ev.grad[e][0]),
                         std::abs(ev.grad[e][1])});
  }
  CHECK(max_grad > 0.0);
  // Deviation comes only from the recovered macro gradient, O(h) small.
  CHECK(max_dev <= 0.2 * max_grad);
}

TEST_CASE("corrector error decreases with eps for a real problem") {
  const CellGeometry geom{0.25, 8};
  const QuadMesh cmesh = build_cell_mesh(geom);
  const CoefficientSpec coeff = CoefficientSpec::constant(1.0);
  const ReactionSpec reaction = ReactionSpec::affine(0.1);
  PeriodicCellOperator op(cmesh, coeff);
  CorrectorHierarchy h =
      build_cell_hierarchy(op, {2, 0}, reaction, {}, {});
  double prev = 0.0;
  bool first = true;
  for (int K : {2, 4, 8}) {
    const QuadMesh pmesh = build_perforated_mesh(geom, K, 8);
    const QuadMesh macro = build_square_mesh(K * 8);
    CorrectorHierarchy local = h;
    local.u0_macro =
        solve_homogenized_macro(macro, h.d_hom, reaction, h.porosity, {});
    const MicroProblem prob{&pmesh, &coeff, &reaction, K};
    const MicroResult micro = solve_microscale(prob, {});
    const ExpansionEvaluation ev =
        evaluate_expansion(local, 1.0 / K, pmesh, cmesh, &macro);
    const double err = corrector_error(pmesh, micro.u, ev);
    CHECK(err > 0.0);
    if (!first) CHECK(err < prev);
    prev = err;
    first = false;
  }
}

TEST_CASE("residual diagnostics scale down with eps") {
  const CellGeometry geom{0.25, 8};
  const QuadMesh cmesh = build_cell_mesh(geom);
  const CoefficientSpec coeff = CoefficientSpec::constant(1.0);
  const ReactionSpec reaction = ReactionSpec::affine(0.1);
  PeriodicCellOperator op(cmesh, coeff);
  CorrectorHierarchy h =
      build_cell_hierarchy(op, {2, 0}, reaction, {}, {});
  ResidualDiagnostics coarse, fine;
  for (int K : {2, 8}) {
    const QuadMesh pmesh = build_perforated_mesh(geom, K, 8);
    const QuadMesh macro = build_square_mesh(K * 8);
    CorrectorHierarchy local = h;
    local.u0_macro =
        solve_homogenized_macro(macro, h.d_hom, reaction, h.porosity, {});
    const MicroProblem prob{&pmesh, &coeff, &reaction, K};
    const MicroResult micro = solve_microscale(prob, {});
    const ExpansionEvaluation ev =
        evaluate_expansion(local, 1.0 / K, pmesh, cmesh, &macro);
    const ResidualDiagnostics d =
        residual_diagnostics(local, pmesh, cmesh, &macro, micro.u, ev,
                             reaction, coeff, 1.0 / K);
    (K == 2 ? coarse : fine) = d;
  }
  CHECK(fine.surface_term < coarse.surface_term);
  CHECK(fine.reaction_term < coarse.reaction_term);
}
