// Experiment configuration: versioned JSON schema, fail-closed parsing
// (unknown keys are rejected).
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "homlab/correctors.hpp"
#include "homlab/fem.hpp"
#include "homlab/mesh.hpp"

namespace homlab {

enum class CoeffKind { Constant, Layered, Tabulated };
enum class ReactionKind { Zero, Constant, Linear, Affine, TanhSin };

struct SolverConfig {
  double cg_tol = 1e-10;
  double picard_tol = 1e-10;
  int picard_max = 200;
  double compat_tol = 1e-8;
  double reaction_compat_tol = 1e-6;
};

struct ExperimentConfig {
  int schema_version = 1;
  CellGeometry geometry;          // hole_half_width, n (cell resolution)
  int n_per_cell = 8;

  CoeffKind coeff_kind = CoeffKind::Constant;
  double coeff_value = 1.0;       // constant
  double coeff_a = 1.0, coeff_b = 1.0;  // layered
  std::vector<double> coeff_table;      // tabulated, n*n values

  ReactionKind reaction_kind = ReactionKind::Zero;
  double reaction_lambda = 0.0;
  std::optional<double> lipschitz_override;

  ExpansionConfig expansion;
  std::vector<int> sweep_denominators = {4, 8, 16, 32};
  int macro_n = 64;               // macro resolution for standalone cell runs
  Vec2 macro_gradient;
  SolverConfig solver;
  std::string output_dir = "out";
  std::optional<std::string> run_name;
  std::uint64_t seed = 42;

  CoefficientSpec make_coefficient() const;
  ReactionSpec make_reaction() const;  // runs the sampled Lipschitz check
  PicardOptions picard_options() const;
  void validate() const;

  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::ordered_json to_json() const;
  static ExperimentConfig load(const std::string& path);
};

}  // namespace homlab
