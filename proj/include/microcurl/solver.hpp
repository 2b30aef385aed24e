#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "microcurl/grid_fields.hpp"
#include "microcurl/linalg.hpp"
#include "microcurl/materials.hpp"

namespace microcurl {

struct Scenario {
    std::string name = "custom";
    Grid grid;
    Variant variant = Variant::PC_ISO;
    MaterialParams params;
    Vec3 body_force{0.0, 0.0, 0.0};
    // Displacement prescribed on each Gamma_D face at full load.
    std::array<Vec3, 6> face_displacement{};
    // When set, Gamma_D data is u = s * A x instead of the face values.
    bool affine_dirichlet = false;
    Tensor3 affine_gradient;
    int steps = 20;
    // s(t_n) for n = 0..steps; empty means linear ramp n/steps.
    std::vector<double> load_curve;

    double load_level(int n) const;
    Vec3 dirichlet_value(std::size_t node, double s) const;
};

enum class InitMode { Zero, Random };

struct SolverConfig {
    double tol_outer = 1e-8;
    double tol_cg = 1e-12;
    int max_outer_iters = 20000;
    int max_cg_iters = 20000;
    int max_local_iters = 20000;
    double reg_eps = 0.0;
    // history depth of the accelerated outer iteration; 0 gives plain alternation
    int anderson_depth = 8;
    bool abort_on_failure = true;
    InitMode init = InitMode::Zero;
    std::uint64_t seed = 1;
    double init_amplitude = 1e-3;
    int snapshot_every = 0;
};

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FieldState {
    VectorField3 u;
    TensorField3 chi;
    CellState cells;

    static FieldState zeros(const Scenario& sc);
};

struct LinearSolveInfo {
    int iterations = 0;
    double relative_residual = 0.0;
    double ritz_min = 0.0;
    double ritz_max = 0.0;
};

struct StepResult {
    int step = 0;
    double load = 0.0;
    bool converged = false;
    int outer_iterations = 0;
    std::vector<double> residual_history;
    std::vector<double> objective_history;
    EnergyParts energy;
    double energy_increment = 0.0;
    // trapezoidal work of the driving forces on the plastic increment
    double dissipation_increment = 0.0;
    // sigma0 times the plastic increment measure
    double dissipation_primal = 0.0;
    // sum over cells of <Sigma_E, dp> at the end of the step
    double dissipation_power = 0.0;
    double external_work_increment = 0.0;
    double balance_residual = 0.0;
    double balance_relative = 0.0;
    double max_eta = 0.0;
    double max_phi = 0.0;
    double max_complementarity = 0.0;
    double microbalance_residual = 0.0;
    double chi_ritz_min = 0.0;
    int cg_iterations = 0;
};

struct RunReport {
    std::string scenario;
    Variant variant = Variant::PC_ISO;
    std::vector<StepResult> steps;
    bool completed = false;
    std::string failure;
    std::vector<std::string> warnings;
    double wall_seconds = 0.0;
};

// Equilibrium with the plastic state frozen; u_guess carries the warm start.
VectorField3 solve_displacement(const Scenario& sc, const CellState& cells, double s, const VectorField3& u_guess,
                                const SolverConfig& cfg, LinearSolveInfo* info = nullptr);

// Microbalance with the plastic state frozen; chi_guess carries the warm start.
TensorField3 solve_microdistortion(const Scenario& sc, const CellState& cells, const TensorField3& chi_guess,
                                   const SolverConfig& cfg, LinearSolveInfo* info = nullptr);

struct SweepStats {
    double max_phi = 0.0;
    double max_complementarity = 0.0;
    int max_local_iterations = 0;
};

CellState plastic_update_sweep(const Scenario& sc, const VectorField3& u, const TensorField3& chi,
                               const CellState& prev, const SolverConfig& cfg, SweepStats* stats = nullptr);

// Relaxed micromorphic static solve for (u, chi).
void solve_rm(const Scenario& sc, double s, FieldState& state, const SolverConfig& cfg, LinearSolveInfo* info = nullptr);

EnergyParts total_energy(const Scenario& sc, const FieldState& st);
// Driving force on the plastic variables paired with (dp, d eta): Sigma_E per cell.
TensorField3 eshelby_field(const Scenario& sc, const FieldState& st);
// Weak-form residual of the microbalance, relative to the right-hand side.
double microbalance_residual(const Scenario& sc, const FieldState& st, const SolverConfig& cfg);

StepResult incremental_step(const Scenario& sc, const SolverConfig& cfg, const FieldState& prev, int step, FieldState& next);

using SnapshotFn = std::function<void(int step, const FieldState&)>;

RunReport run_quasistatic(const Scenario& sc, const SolverConfig& cfg, FieldState* final_state = nullptr,
                          const SnapshotFn& snapshot = {});

}  // namespace microcurl
