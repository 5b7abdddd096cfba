// Experiment orchestration shared by the CLI and the acceptance suite:
// cell runs, micro runs, eps sweeps, verification checks, artifact writers.
#pragma once

#include <string>
#include <vector>

#include "homlab/config.hpp"
#include "homlab/expansion.hpp"
#include "homlab/micro.hpp"

namespace homlab {

struct CellRunResult {
  CorrectorHierarchy hierarchy;
  QuadMesh cell_mesh;
  IterationTrace macro_trace;  // classical mode only
};

CellRunResult run_cell(const ExperimentConfig& cfg);

struct MicroRunResult {
  MicroResult micro;
  QuadMesh pmesh;
  double eps = 0.0;
};

MicroRunResult run_micro(const ExperimentConfig& cfg, int K);

struct SweepPoint {
  double eps = 0.0;
  double error = 0.0;
  ResidualDiagnostics diagnostics;
  IterationTrace micro_trace;
  double energy_defect = 0.0;
};

struct SweepResult {
  ConvergenceReport report;
  std::vector<SweepPoint> points;
  double kappa_p = 0.0, c_p = 0.0;
  bool gated = false;  // classical mode: order gate applies
};

SweepResult run_sweep(const ExperimentConfig& cfg, int jobs = 1);

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<VerifyCheck> run_verify(const ExperimentConfig& cfg);

// Manufactured-solution convergence study on unperforated grids.
struct ManufacturedOrders {
  double l2_order = 0.0, h1_order = 0.0;
  std::vector<double> l2_errors, h1_errors;
};
ManufacturedOrders manufactured_study(const std::vector<int>& ns,
                                      double cg_tol = 1e-12);

// Artifact writers ---------------------------------------------------------

std::string sweep_csv(const SweepResult& res);
std::string sweep_summary_json(const SweepResult& res);

// Creates dir (parents included); refuses to reuse an existing directory
// unless force. Returns the directory path.
std::string prepare_run_dir(const std::string& output_dir,
                            const std::string& run_name, bool force);

void write_cell_archive(const std::string& dir, const ExperimentConfig& cfg,
                        const CellRunResult& res);
void write_micro_outputs(const std::string& dir, const ExperimentConfig& cfg,
                         const MicroRunResult& res);
void write_sweep_outputs(const std::string& dir, const ExperimentConfig& cfg,
                         const SweepResult& res);

}  // namespace homlab
