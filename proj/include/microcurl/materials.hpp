#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "microcurl/tensor3.hpp"

namespace microcurl {

enum class Variant { SC_ISO, SC_KIN, PC_ISO, PC_KIN, RM_ELASTIC };

const char* variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view s);
bool is_single_crystal(Variant v);
bool is_isotropic(Variant v);
bool is_plastic(Variant v);
// Number of slip unknowns stored per cell (SC_ISO only).
int slip_count(Variant v, std::size_t nsystems);

struct MaterialParams {
    ElasticModuli E;
    double H_chi = 100.0;
    double L_c = 0.1;
    double k1 = 0.0;
    double k2 = 0.0;
    double sigma0 = 0.0;
    std::vector<SlipSystem> slips;
    // relaxed micromorphic moduli
    double mu_e = 1.0;
    double lambda_e = 0.0;
    double mu_c = 0.0;
    double mu_micro = 1.0;
    double lambda_micro = 0.0;
};

struct Validation {
    std::vector<std::string> errors;
    std::vector<std::string> warnings;
    bool ok() const { return errors.empty(); }
};

Validation validate(Variant v, const MaterialParams& m);

// Pointwise plastic variables. p is the plastic distortion (eps_p for the
// polycrystal variants); gamma/eta are per slip system (SC_ISO).
struct PlasticPoint {
    Tensor3 p;
    std::vector<double> gamma;
    std::vector<double> eta;
    double eta_p = 0.0;
};

struct PointState {
    Tensor3 grad_u;
    Tensor3 chi;
    Tensor3 curl_chi;
    PlasticPoint plastic;
};

struct EnergyParts {
    double elastic = 0.0;
    double micro = 0.0;
    double defect = 0.0;
    double hardening = 0.0;
    double total() const { return elastic + micro + defect + hardening; }
};

class StateMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

EnergyParts free_energy_parts(Variant v, const MaterialParams& m, const PointState& s);
double free_energy_density(Variant v, const MaterialParams& m, const PointState& s);

Tensor3 plastic_strain(Variant v, const Tensor3& p);
Tensor3 cauchy_stress(const MaterialParams& m, const Tensor3& sym_grad_u, const Tensor3& eps_p);
Tensor3 eshelby_stress(Variant v, const MaterialParams& m, const Tensor3& sigma, const Tensor3& chi, const Tensor3& p);

// phi^a = |tau_E^a| - mu k2 eta^a - sigma0
std::vector<double> yield_function_slip(const MaterialParams& m, std::span<const double> tau_e, std::span<const double> eta);
// PC_ISO: |dev S| - mu k2 eta_p - sigma0; kinematic variants: |dev S| - sigma0
double yield_function(Variant v, const MaterialParams& m, const Tensor3& sigma_e, double eta_p = 0.0);

// Value of a one-homogeneous dissipation; admissible == false marks +infinity.
struct DissipationValue {
    bool admissible = true;
    double value = 0.0;
};

DissipationValue dissipation_density(Variant v, const MaterialParams& m, const Tensor3& q, double beta = 0.0);
DissipationValue dissipation_density_slip(const MaterialParams& m, std::span<const double> q, std::span<const double> beta);

struct LocalTrial {
    Tensor3 grad_u;
    Tensor3 chi;
    PlasticPoint prev;
};

struct LocalOptions {
    int max_local_iters = 20000;
    double tol = 1e-12;
};

struct LocalResult {
    PlasticPoint state;
    std::vector<double> dlambda;
    Tensor3 sigma_e;
    double phi_max = 0.0;
    double complementarity = 0.0;
    int iterations = 0;
};

class LocalSolveError : public std::runtime_error {
public:
    LocalSolveError(const std::string& msg, double residual) : std::runtime_error(msg), residual(residual) {}
    double residual;
};

LocalResult local_return_map(Variant v, const MaterialParams& m, const LocalTrial& t, const LocalOptions& opt = {});

double rm_elastic_energy_terms(const MaterialParams& m, const Tensor3& grad_u, const Tensor3& chi, const Tensor3& curl_chi);

}  // namespace microcurl
