#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "microcurl/grid_fields.hpp"
#include "microcurl/linalg.hpp"
#include "microcurl/materials.hpp"
#include "microcurl/solver.hpp"

namespace microcurl {

// ---- generalized eigenvalue estimation -------------------------------------

// Symmetric pencil (A, B) on a flat vector space of nodal unknowns; project()
// maps onto the admissible subspace (boundary masks, trace/symmetry
// constraints). A and B couple nodes at most one index apart per axis.
struct QuadraticPencil {
    std::size_t dim = 0;
    std::array<int, 3> dims{};
    // grid node carrying each unknown
    std::vector<std::uint32_t> dof_node;
    LinOp apply_a;
    LinOp apply_b;
    std::function<void(Vector&)> project;
};

struct EigenOptions {
    // A + shift B is factored; shift keeps the factorization definite on kernels
    double shift = 1e-6;
    // stop when the Ritz value moves by less than tol (relative) with a residual
    // bound below sqrt(tol), or when the bound itself is below tol
    double tol = 1e-8;
    // per Lanczos pass; a second pass with a shift near the bottom follows if needed
    int max_iters = 150;
    std::uint64_t seed = 1;
};

struct EigenEstimate {
    double lambda = 0.0;
    double residual = 0.0;
    int iterations = 0;
    int probes = 0;
    // max |A - A^T| over max |A| of the assembled projected operator
    double asymmetry = 0.0;
    bool converged = false;
    Vector vector;
};

// Smallest eigenvalue of A x = lambda B x over the projected space. The
// projected pencil is assembled by colored probing, A + shift B is factored
// by sparse Cholesky, and Lanczos in the B inner product runs on the inverse.
EigenEstimate smallest_eigenvalue(const QuadraticPencil& pencil, const EigenOptions& opt = {});

class EigenIterationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- coercivity -------------------------------------------------------------

struct CoercivityReport {
    Variant variant = Variant::PC_ISO;
    std::array<int, 3> dims{};
    double c_min = 0.0;
    // smallest quotient with beta = |q| substituted (isotropic) or the full space (kinematic)
    double lambda_space = 0.0;
    // mu k2 for isotropic variants (q = 0, beta > 0 direction); infinity otherwise
    double hardening_bound = std::numeric_limits<double>::infinity();
    EigenEstimate diag;
};

CoercivityReport estimate_coercivity(Variant v, const MaterialParams& m, const Grid& g, const EigenOptions& opt = {});

// Quotient a(z,z)/|z|_Z^2 of the isotropic form at an explicit cone point.
double coercivity_quotient(Variant v, const MaterialParams& m, const Grid& g, const Vector& z, double beta_extra);
std::size_t coercivity_dim(Variant v, const MaterialParams& m, const Grid& g);

// ---- Korn-type inequality ---------------------------------------------------

struct KornReport {
    std::array<int, 3> dims{};
    std::string gamma_d;
    double lambda = 0.0;
    double constant = std::numeric_limits<double>::infinity();
    // quotient of the constant skew field e_1 x . (masked); zero when it is admissible
    double skew_quotient = 0.0;
    // share of the lowest mode lying in the constant skew fields
    double skew_share = 0.0;
    EigenEstimate diag;
};

KornReport estimate_korn_constant(const Grid& g, const EigenOptions& opt = {});

// (|sym X|^2 + |Curl X|^2) / |X|^2 on the tangential-BC space
double korn_quotient(const Grid& g, const TensorField3& x);

// ---- norm equivalence -------------------------------------------------------

struct NormEquivalenceReport {
    std::array<int, 3> dims{};
    int samples = 0;
    double ratio_min = 0.0;
    double ratio_max = 0.0;
    double lambda_min = 0.0;
    // q = X = 0 gives two zero norms
    bool zero_pair_ok = false;
    // q = X = constant skew: star norm with and without the boundary condition
    double skew_star_free = 0.0;
    double skew_star_masked = 0.0;
    bool vanishing_ok = false;
    bool pass = false;
};

// |(q,X)|_*^2 = |q - X|^2 + |sym q|^2 + |Curl X|^2, |(q,X)|_{PxQ}^2 = |q|^2 + |X|^2 + |Curl X|^2
double star_norm_sq(const Grid& g, const TensorField3& q, const TensorField3& x);
double product_norm_sq(const Grid& g, const TensorField3& q, const TensorField3& x);

NormEquivalenceReport check_norm_equivalence(const Grid& g, int samples, std::uint64_t seed = 1,
                                             const EigenOptions& opt = {});

// ---- penalty limit ----------------------------------------------------------

struct PenaltyRow {
    double h_chi = 0.0;
    double gap = 0.0;
    double ratio = 0.0;  // gap / previous gap; 0 on the first row
    int outer_iterations = 0;
};

struct PenaltySweepReport {
    std::string scenario;
    Variant variant = Variant::PC_ISO;
    std::vector<PenaltyRow> rows;
    bool strictly_decreasing = false;
};

// |p - chi| (SC) or |eps_p - sym chi| (PC) in L2
double penalty_gap(const Scenario& sc, const FieldState& st);

PenaltySweepReport penalty_sweep(const Scenario& tmpl, const SolverConfig& cfg, const std::vector<double>& h_values);

// ---- uniqueness -------------------------------------------------------------

struct UniquenessReport {
    int steps = 0;
    double u = 0.0;
    double chi = 0.0;
    double p = 0.0;
    double eta = 0.0;
    double max_discrepancy = 0.0;
    bool asserted = false;
    bool pass = false;
};

UniquenessReport uniqueness_probe(const Scenario& sc, const SolverConfig& cfg, std::uint64_t seed,
                                  double threshold = 1e-6);

// ---- local oracles ----------------------------------------------------------

// Incremental potential of one material point: free energy (no Curl term) + dissipation.
double local_potential(Variant v, const MaterialParams& m, const LocalTrial& t, const PlasticPoint& z);

struct OracleResult {
    PlasticPoint state;
    // per system |increment| (SC_ISO), otherwise one entry with |dp|
    std::vector<double> dlambda;
    // signed slip increments (SC_ISO)
    std::vector<double> dgamma;
    double potential = 0.0;
    int evaluations = 0;
};

OracleResult pointwise_oracle(Variant v, const MaterialParams& m, const LocalTrial& t, double resolution = 1e-4);

struct OracleRow {
    double error = 0.0;
    double kkt = 0.0;
    double dlambda_return = 0.0;
    double dlambda_oracle = 0.0;
    double potential_return = 0.0;
    double potential_oracle = 0.0;
    bool plastic = false;
};

struct OracleComparison {
    Variant variant = Variant::PC_ISO;
    int samples = 0;
    int plastic_samples = 0;
    double resolution = 1e-4;
    double max_error = 0.0;
    // max KKT residual divided by sigma0
    double max_kkt = 0.0;
    double kkt_tol = 1e-10;
    double seconds = 0.0;
    bool pass = false;
    std::vector<OracleRow> rows;
};

// KKT residual of a returned state: yield violation, and |phi| on active systems.
double kkt_residual(Variant v, const MaterialParams& m, const LocalTrial& t, const LocalResult& r);

OracleComparison compare_with_oracle(Variant v, int samples, std::uint64_t seed = 1, double resolution = 1e-4);

// ---- relaxed micromorphic stiff limit --------------------------------------

struct StiffLimitRow {
    double scale = 0.0;
    double discrepancy = 0.0;
    int cg_iterations = 0;
};

struct StiffLimitReport {
    std::vector<StiffLimitRow> rows;
    bool monotone = false;
    double final_discrepancy = 0.0;
};

// Plain linear elasticity with Lame moduli (mu, lambda) and the scenario's Dirichlet data.
VectorField3 solve_linear_elasticity(const Scenario& sc, double mu, double lambda, double s, const SolverConfig& cfg);

StiffLimitReport rm_stiff_limit_check(const Scenario& base, const SolverConfig& cfg, const std::vector<double>& scales);

}  // namespace microcurl
