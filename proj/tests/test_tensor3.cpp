#include <gtest/gtest.h>

#include <random>

#include "microcurl/tensor3.hpp"

using namespace microcurl;

namespace {

Tensor3 rnd(std::mt19937_64& g)
{
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    Tensor3 t;
    for (double& x : t.a) x = d(g);
    return t;
}

Tensor3 e(int i, int j)
{
    Tensor3 t;
    t(i, j) = 1.0;
    return t;
}

}  // namespace

TEST(Tensor3, DecompositionsAreOrthogonal)
{
    std::mt19937_64 g(1);
    for (int k = 0; k < 100; ++k) {
        const Tensor3 x = rnd(g);
        EXPECT_LT(max_abs(sym(x) + skew(x) - x), 1e-15);
        EXPECT_NEAR(dot(sym(x), skew(x)), 0.0, 1e-15);
        EXPECT_NEAR(tr(dev(x)), 0.0, 1e-15);
    }
}

TEST(Tensor3, CisoExamples)
{
    const ElasticModuli e11 = make_moduli(1.0, 1.0);
    EXPECT_LT(max_abs(apply_ciso(e11, Tensor3::identity()) - 5.0 * Tensor3::identity()), 1e-15);
    std::mt19937_64 g(2);
    const Tensor3 w = skew(rnd(g));
    EXPECT_LT(max_abs(apply_ciso(make_moduli(1.3, 0.7), w)), 1e-15);
    const Tensor3 shear = apply_ciso(make_moduli(1.0, 0.0), e(0, 1));
    EXPECT_LT(max_abs(shear - (e(0, 1) + e(1, 0))), 1e-15);
}

TEST(Tensor3, CisoInverseRoundTrip)
{
    const ElasticModuli m = make_moduli(0.8, 1.7);
    std::mt19937_64 g(3);
    for (int k = 0; k < 50; ++k) {
        const Tensor3 s = sym(rnd(g));
        EXPECT_LT(max_abs(apply_ciso(m, apply_ciso_inverse(m, s)) - s), 1e-13);
    }
    const ElasticModuli e11 = make_moduli(1.0, 1.0);
    EXPECT_LT(max_abs(apply_ciso_inverse(e11, Tensor3::identity()) - 0.2 * Tensor3::identity()), 1e-15);
    const Tensor3 d = dev(sym(rnd(g)));
    EXPECT_LT(max_abs(apply_ciso_inverse(m, d) - (1.0 / (2.0 * m.mu)) * d), 1e-14);
}

TEST(Tensor3, CisoSelfAdjoint)
{
    const ElasticModuli m = make_moduli(1.1, 0.4);
    std::mt19937_64 g(4);
    for (int k = 0; k < 50; ++k) {
        const Tensor3 x = rnd(g), y = rnd(g);
        EXPECT_NEAR(dot(apply_ciso(m, x), y), dot(x, apply_ciso(m, y)), 1e-13);
    }
}

TEST(Tensor3, EllipticityOnSymmetricTensors)
{
    const ElasticModuli m = make_moduli(1.0, -0.5);
    const double m0 = std::min(2.0 * m.mu, 3.0 * m.lambda + 2.0 * m.mu);
    std::mt19937_64 g(5);
    for (int k = 0; k < 1000; ++k) {
        const Tensor3 s = sym(rnd(g));
        EXPECT_GE(dot(apply_ciso(m, s), s), m0 * dot(s, s) * (1.0 - 1e-12));
    }
}

TEST(Tensor3, SlipSystems)
{
    const auto fam = fcc_slip_family();
    ASSERT_EQ(fam.size(), 12u);
    Tensor3 sum;
    for (const auto& s : fam) {
        EXPECT_NEAR(dot(s.l, s.nu), 0.0, 1e-15);
        EXPECT_NEAR(dot(s.m, s.m), 1.0, 1e-15);
        EXPECT_NEAR(tr(s.m), 0.0, 1e-15);
        EXPECT_NEAR(resolved_shear(s.m, s), 1.0, 1e-15);
        EXPECT_NEAR(resolved_shear(Tensor3::identity(), s), 0.0, 1e-15);
        sum += s.m;
    }
    // balanced family: the three directions on each plane sum to zero
    EXPECT_LT(max_abs(sum), 1e-15);
    std::mt19937_64 g(6);
    const Tensor3 x = rnd(g);
    const SlipSystem s12 = make_slip_system({1, 0, 0}, {0, 1, 0});
    EXPECT_DOUBLE_EQ(resolved_shear(x, s12), x(0, 1));
    EXPECT_THROW(make_slip_system({1, 0, 0}, {1, 1, 0}), std::invalid_argument);
}

TEST(Tensor3, AssemblePFromSlips)
{
    const auto fam = fcc_slip_family();
    std::vector<double> zero(12, 0.0);
    EXPECT_EQ(max_abs(assemble_p_from_slips(zero, fam)), 0.0);
    const std::vector<SlipSystem> one{make_slip_system({1, 0, 0}, {0, 1, 0})};
    const std::vector<double> two{2.0};
    EXPECT_LT(max_abs(assemble_p_from_slips(two, one) - 2.0 * e(0, 1)), 1e-15);
    std::mt19937_64 g(7);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::vector<double> gam(12);
    for (double& x : gam) x = d(g);
    EXPECT_NEAR(tr(assemble_p_from_slips(gam, fam)), 0.0, 1e-14);
}
