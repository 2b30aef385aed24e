#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "microcurl/verify.hpp"

using namespace microcurl;

namespace {

Grid cube(int n, std::array<bool, 6> gd) { return make_grid({n, n, n}, 1.0 / (n - 1), gd); }

constexpr std::array<bool, 6> kBottom{false, false, false, false, true, false};

MaterialParams hardening_params(Variant v)
{
    MaterialParams m;
    m.E = make_moduli(1.0, 1.0);
    m.H_chi = 100.0;
    m.L_c = 0.1;
    m.k1 = 0.5;
    m.k2 = 0.5;
    m.sigma0 = 0.02;
    if (is_single_crystal(v)) m.slips = fcc_slip_family();
    return m;
}

Tensor3 e(int a, int b)
{
    Tensor3 t;
    t(a, b) = 1.0;
    return t;
}

// Sum of 1D Dirichlet second-difference operators along each axis, one unknown per node.
QuadraticPencil laplacian_pencil(int n)
{
    const Grid g = cube(n, {});
    QuadraticPencil p;
    p.dim = g.size();
    p.dims = g.n;
    for (std::size_t i = 0; i < g.size(); ++i) p.dof_node.push_back(std::uint32_t(i));
    p.apply_a = [g](const Vector& x, Vector& y) {
        y.assign(x.size(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto c = g.ijk(i);
            for (int ax = 0; ax < 3; ++ax) {
                y[i] += 2.0 * x[i];
                if (c[ax] > 0) y[i] -= x[i - g.stride(ax)];
                if (c[ax] < g.n[ax] - 1) y[i] -= x[i + g.stride(ax)];
            }
        }
    };
    p.apply_b = [](const Vector& x, Vector& y) { y = x; };
    p.project = [](Vector&) {};
    return p;
}

}  // namespace

TEST(Verify, EigenSolverOnDiscreteLaplacian)
{
    for (int n : {4, 7}) {
        const EigenEstimate r = smallest_eigenvalue(laplacian_pencil(n));
        const double want = 3.0 * (2.0 - 2.0 * std::cos(std::numbers::pi / (n + 1)));
        EXPECT_TRUE(r.converged);
        EXPECT_NEAR(r.lambda, want, 1e-8 * want) << n;
        EXPECT_LT(r.asymmetry, 1e-14);
        EXPECT_EQ(r.probes, 27);
    }
}

TEST(Verify, EigenSolverRespectsProjection)
{
    QuadraticPencil p = laplacian_pencil(5);
    // drop the first node: the minimum moves up but stays below the next 1D level
    p.project = [](Vector& x) { x[0] = 0.0; };
    const double free_min = 3.0 * (2.0 - 2.0 * std::cos(std::numbers::pi / 6.0));
    const EigenEstimate r = smallest_eigenvalue(p);
    EXPECT_GT(r.lambda, free_min);
    EXPECT_NEAR(r.vector.at(0), 0.0, 1e-12);
}

TEST(Verify, KornConstantWithAndWithoutBoundary)
{
    const KornReport empty = estimate_korn_constant(cube(4, {}));
    EXPECT_LE(empty.lambda, 1e-10);
    EXPECT_GT(empty.skew_share, 0.99);
    EXPECT_EQ(empty.skew_quotient, 0.0);
    const KornReport one = estimate_korn_constant(cube(4, kBottom));
    EXPECT_GT(one.lambda, 0.1);
    EXPECT_GT(one.skew_quotient, one.lambda);
    EXPECT_EQ(one.gamma_d, "zmin");
    std::mt19937_64 r(5);
    std::uniform_real_distribution<double> d(-1, 1);
    const Grid g = cube(4, kBottom);
    for (int s = 0; s < 10; ++s) {
        TensorField3 x(g.size());
        for (auto& t : x)
            for (double& c : t.a) c = d(r);
        apply_tangential_bc(g, x);
        EXPECT_GE(korn_quotient(g, x), one.lambda * (1.0 - 1e-8));
    }
}

TEST(Verify, CoercivityPositiveWithHardening)
{
    const Grid g = cube(4, kBottom);
    for (Variant v : {Variant::PC_ISO, Variant::PC_KIN, Variant::SC_KIN, Variant::SC_ISO}) {
        const MaterialParams m = hardening_params(v);
        const CoercivityReport r = estimate_coercivity(v, m, g);
        EXPECT_GT(r.c_min, 1e-3) << variant_name(v);
        std::mt19937_64 rng(2);
        std::normal_distribution<double> d;
        for (int s = 0; s < 5; ++s) {
            Vector z(coercivity_dim(v, m, g));
            for (double& c : z) c = d(rng);
            EXPECT_GE(coercivity_quotient(v, m, g, z, 0.0), r.c_min * (1.0 - 1e-8)) << variant_name(v);
        }
    }
}

TEST(Verify, CoercivityCollapsesWithoutHardeningOrLengthScale)
{
    MaterialParams m = hardening_params(Variant::PC_ISO);
    m.k2 = 0.0;
    m.L_c = 0.0;
    const CoercivityReport r = estimate_coercivity(Variant::PC_ISO, m, cube(4, kBottom));
    EXPECT_LE(r.c_min, 1e-10);
}

TEST(Verify, NormEquivalence)
{
    const NormEquivalenceReport r = check_norm_equivalence(cube(4, kBottom), 200, 3);
    EXPECT_TRUE(r.zero_pair_ok);
    EXPECT_TRUE(r.vanishing_ok);
    EXPECT_EQ(r.skew_star_free, 0.0);
    EXPECT_GT(r.skew_star_masked, 0.0);
    EXPECT_GT(r.ratio_min, 0.0);
    EXPECT_LE(r.ratio_max, 3.0);
    EXPECT_TRUE(r.pass);
}

TEST(Verify, OracleClosedFormCase)
{
    MaterialParams m;
    m.E = make_moduli(1.0, 1.0);
    m.H_chi = 1.0;
    m.k2 = 1.0;
    m.sigma0 = 0.1;
    LocalTrial t;
    t.chi = (0.4 / std::sqrt(2.0)) * (e(0, 1) + e(1, 0));
    const OracleResult o = pointwise_oracle(Variant::PC_ISO, m, t);
    EXPECT_NEAR(o.dlambda.at(0), 0.075, 1e-4);
    t.chi = (0.05 / std::sqrt(2.0)) * (e(0, 1) + e(1, 0));
    EXPECT_EQ(pointwise_oracle(Variant::PC_ISO, m, t).dlambda.at(0), 0.0);
}

TEST(Verify, OracleSingleSlipDirection)
{
    MaterialParams m;
    m.E = make_moduli(1.0, 0.0);
    m.H_chi = 2.0;
    m.k2 = 0.5;
    m.L_c = 0.0;
    m.sigma0 = 0.1;
    m.slips = {make_slip_system({1, 0, 0}, {0, 1, 0})};
    for (double tau : {0.5, -0.5}) {
        LocalTrial t;
        t.prev.gamma = {0.0};
        t.prev.eta = {0.0};
        t.chi = (tau / 2.0) * e(0, 1);
        const OracleResult o = pointwise_oracle(Variant::SC_ISO, m, t);
        ASSERT_EQ(o.dgamma.size(), 1u);
        EXPECT_EQ(std::signbit(o.dgamma[0]), std::signbit(tau));
        EXPECT_NEAR(std::abs(o.dgamma[0]), 0.4 / 3.5, 1e-4);
    }
}

TEST(Verify, ReturnMapAgreesWithOracle)
{
    for (Variant v : {Variant::PC_ISO, Variant::PC_KIN}) {
        const OracleComparison c = compare_with_oracle(v, 40, 7);
        EXPECT_EQ(c.samples, 40);
        EXPECT_GT(c.plastic_samples, 0);
        EXPECT_LE(c.max_error, 1e-4);
        EXPECT_LE(c.max_kkt, 1e-10);
        EXPECT_TRUE(c.pass) << variant_name(v);
    }
}

TEST(Verify, PenaltyGapVanishesOnZeroState)
{
    Scenario sc;
    sc.grid = cube(4, kBottom);
    sc.params = hardening_params(Variant::PC_ISO);
    EXPECT_EQ(penalty_gap(sc, FieldState::zeros(sc)), 0.0);
}

TEST(Verify, UniquenessProbeSmall)
{
    Scenario sc;
    sc.grid = cube(4, {false, false, false, false, true, true});
    sc.params = hardening_params(Variant::PC_ISO);
    sc.face_displacement[ZMax] = {0.05, 0.0, 0.0};
    sc.steps = 2;
    SolverConfig cfg;
    cfg.tol_outer = 1e-10;
    const UniquenessReport r = uniqueness_probe(sc, cfg, 11);
    EXPECT_TRUE(r.asserted);
    EXPECT_TRUE(r.pass);
    EXPECT_LT(r.max_discrepancy, 1e-6);
}

TEST(Verify, StiffLimitSmall)
{
    Scenario sc;
    sc.grid = cube(5, {false, false, false, false, true, true});
    sc.variant = Variant::RM_ELASTIC;
    sc.params.mu_e = 1.0;
    sc.params.mu_c = 1.0;
    sc.params.lambda_e = 1.0;
    sc.params.mu_micro = 1.0;
    sc.params.lambda_micro = 0.5;
    sc.params.L_c = 0.1;
    sc.face_displacement[ZMax] = {0.05, 0.0, 0.02};
    sc.body_force = {0.0, 0.1, 0.0};
    const StiffLimitReport r = rm_stiff_limit_check(sc, SolverConfig{}, {1, 10, 100});
    ASSERT_EQ(r.rows.size(), 3u);
    EXPECT_TRUE(r.monotone);
    EXPECT_LT(r.rows[2].discrepancy, 0.02 * r.rows[0].discrepancy);
    sc.variant = Variant::PC_ISO;
    EXPECT_THROW(rm_stiff_limit_check(sc, SolverConfig{}, {1}), std::invalid_argument);
}
