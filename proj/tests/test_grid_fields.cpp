#include <gtest/gtest.h>

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "microcurl/grid_fields.hpp"
#include "microcurl/reference.hpp"

using namespace microcurl;

namespace {

VectorField3 rnd_u(const Grid& g, std::uint64_t seed)
{
    std::mt19937_64 r(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    VectorField3 u(g.size());
    for (auto& v : u)
        for (double& c : v) c = d(r);
    return u;
}

TensorField3 rnd_x(const Grid& g, std::uint64_t seed)
{
    std::mt19937_64 r(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    TensorField3 x(g.size());
    for (auto& t : x)
        for (double& c : t.a) c = d(r);
    return x;
}

// integer multiples of 2^-20: differences and sums of these stay exact
VectorField3 lattice_u(const Grid& g, std::uint64_t seed)
{
    std::mt19937_64 r(seed);
    std::uniform_int_distribution<int> d(-(1 << 20), 1 << 20);
    VectorField3 u(g.size());
    for (auto& v : u)
        for (double& c : v) c = std::ldexp(double(d(r)), -20);
    return u;
}

TensorField3 lattice_x(const Grid& g, std::uint64_t seed)
{
    std::mt19937_64 r(seed);
    std::uniform_int_distribution<int> d(-(1 << 20), 1 << 20);
    TensorField3 x(g.size());
    for (auto& t : x)
        for (double& c : t.a) c = std::ldexp(double(d(r)), -20);
    return x;
}

bool interior(const Grid& g, std::size_t i)
{
    const auto c = g.ijk(i);
    return c[0] < g.n[0] - 1 && c[1] < g.n[1] - 1 && c[2] < g.n[2] - 1;
}

Grid box(int n0, int n1, int n2, std::array<bool, 6> gd = {})
{
    return make_grid({n0, n1, n2}, 0.25, gd);
}

}  // namespace

TEST(GridFields, Layout)
{
    const Grid g = box(3, 4, 5);
    EXPECT_EQ(g.size(), 60u);
    EXPECT_EQ(g.index(1, 2, 3), 1u + 3u * (2u + 4u * 3u));
    const auto c = g.ijk(g.index(2, 3, 4));
    EXPECT_EQ(c[0], 2);
    EXPECT_EQ(c[1], 3);
    EXPECT_EQ(c[2], 4);
    EXPECT_THROW(make_grid({1, 4, 4}, 0.1, {}), std::invalid_argument);
    EXPECT_THROW(make_grid({4, 4, 4}, 0.0, {}), std::invalid_argument);
}

TEST(GridFields, GradientExamples)
{
    const Grid g = box(5, 4, 6);
    EXPECT_EQ(max_abs(grad_h(g, VectorField3(g.size(), Vec3{1.0, -2.0, 3.0}))[7]), 0.0);
    Tensor3 A;
    for (int k = 0; k < 9; ++k) A.a[k] = 0.1 * (k + 1) - 0.37;
    VectorField3 u(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec3 x = g.coords(i);
        for (int a = 0; a < 3; ++a) u[i][a] = A(a, 0) * x[0] + A(a, 1) * x[1] + A(a, 2) * x[2];
    }
    const TensorField3 G = grad_h(g, u);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (interior(g, i)) {
            EXPECT_LT(max_abs(G[i] - A), 1e-13);
        }
}

TEST(GridFields, ExactComplex)
{
    for (int n : {4, 7, 16}) {
        const Grid g = box(n, n + 1, n - 1);
        const VectorField3 u = lattice_u(g, n);
        for (const Tensor3& t : curl_h(g, grad_h(g, u))) ASSERT_EQ(max_abs(t), 0.0);
        const TensorField3 x = lattice_x(g, n + 100);
        for (const Vec3& v : div_h(g, curl_h(g, x))) ASSERT_EQ(std::max({std::abs(v[0]), std::abs(v[1]), std::abs(v[2])}), 0.0);
        for (const Tensor3& t : curl_h_adjoint(g, curl_h(g, grad_h(g, u)))) ASSERT_EQ(max_abs(t), 0.0);
    }
}

TEST(GridFields, ComplexNearZeroForGeneralData)
{
    const Grid g = make_grid({7, 7, 7}, 1.0 / 6.0, {});
    const VectorField3 u = rnd_u(g, 5);
    const TensorField3 x = rnd_x(g, 6);
    double scale = 0.0, worst = 0.0;
    for (const Tensor3& t : grad_h(g, u)) scale = std::max(scale, max_abs(t));
    for (const Tensor3& t : curl_h(g, grad_h(g, u))) worst = std::max(worst, max_abs(t));
    EXPECT_LT(worst, 1e-13 * scale / g.h);
    worst = 0.0;
    for (const Vec3& v : div_h(g, curl_h(g, x))) worst = std::max(worst, norm(v));
    EXPECT_LT(worst, 1e-13 / (g.h * g.h));
}

TEST(GridFields, CurlOfLinearRow)
{
    const Grid g = box(5, 5, 5);
    TensorField3 x(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) x[i](0, 2) = g.coords(i)[1];
    const TensorField3 c = curl_h(g, x);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!interior(g, i)) continue;
        Tensor3 want;
        want(0, 0) = 1.0;
        EXPECT_LT(max_abs(c[i] - want), 1e-13);
    }
    EXPECT_EQ(max_abs(curl_h(g, TensorField3(g.size(), Tensor3::identity()))[0]), 0.0);
}

TEST(GridFields, Adjoints)
{
    const Grid g = box(6, 5, 4);
    const VectorField3 u = rnd_u(g, 1);
    const TensorField3 x = rnd_x(g, 2), y = rnd_x(g, 3);
    const double a = inner_l2(g, grad_h(g, u), x), b = inner_l2(g, u, grad_h_adjoint(g, x));
    EXPECT_NEAR(a, b, 1e-13 * std::abs(a));
    const double c = inner_l2(g, curl_h(g, x), y), d = inner_l2(g, x, curl_h_adjoint(g, y));
    EXPECT_NEAR(c, d, 1e-13 * std::abs(c));
    const double e = inner_l2(g, u, div_h_dual(g, x));
    EXPECT_NEAR(a, -e, 1e-13 * std::abs(a));
    for (const Tensor3& t : curl_h_adjoint(g, TensorField3(g.size()))) ASSERT_EQ(max_abs(t), 0.0);
}

TEST(GridFields, DivergenceOfConstantVanishesInside)
{
    const Grid g = box(5, 5, 5);
    const VectorField3 dv = div_h(g, TensorField3(g.size(), Tensor3::identity()));
    for (std::size_t i = 0; i < g.size(); ++i)
        if (interior(g, i)) {
            EXPECT_EQ(norm(dv[i]), 0.0);
        }
}

TEST(GridFields, TangentialBc)
{
    const Grid g = box(4, 4, 4, {false, false, false, false, true, false});
    TensorField3 x(g.size(), Tensor3::identity());
    apply_tangential_bc(g, x);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.on_face(i, ZMin)) {
            EXPECT_EQ(x[i](0, 0), 0.0);
            EXPECT_EQ(x[i](1, 1), 0.0);
            EXPECT_EQ(x[i](2, 2), 1.0);
        } else {
            EXPECT_EQ(x[i], Tensor3::identity());
        }
    }
    const TensorField3 again = tangential_projected(g, x);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(again[i], x[i]);
}

TEST(GridFields, InnerProducts)
{
    const Grid g = box(5, 5, 5);
    const double vol = g.size() * g.cell_volume();
    EXPECT_NEAR(inner_l2(g, TensorField3(g.size(), Tensor3::identity()), TensorField3(g.size(), Tensor3::identity())),
                3.0 * vol, 1e-13);
    const TensorField3 x = rnd_x(g, 4), y = rnd_x(g, 5), z = rnd_x(g, 6);
    EXPECT_GT(inner_l2(g, x, x), 0.0);
    EXPECT_EQ(inner_l2(g, TensorField3(g.size()), TensorField3(g.size())), 0.0);
    TensorField3 s(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) s[i] = 2.0 * x[i] + y[i];
    EXPECT_NEAR(inner_l2(g, s, z), 2.0 * inner_l2(g, x, z) + inner_l2(g, y, z), 1e-13);
}

TEST(GridFields, OpenMpMatchesReferenceBitwise)
{
    const Grid g = box(9, 7, 8);
    const VectorField3 u = rnd_u(g, 11);
    const TensorField3 x = rnd_x(g, 12);
    for (int threads : {1, 2, 3}) {
        omp_set_num_threads(threads);
        const TensorField3 a = grad_h(g, u), b = reference::grad_h(g, u);
        for (std::size_t i = 0; i < g.size(); ++i) ASSERT_EQ(a[i], b[i]);
        const TensorField3 c = curl_h(g, x), d = reference::curl_h(g, x);
        for (std::size_t i = 0; i < g.size(); ++i) ASSERT_EQ(c[i], d[i]);
        const TensorField3 e = curl_h_adjoint(g, x), f = reference::curl_h_adjoint(g, x);
        for (std::size_t i = 0; i < g.size(); ++i) ASSERT_EQ(e[i], f[i]);
        const VectorField3 p = grad_h_adjoint(g, x), q = reference::grad_h_adjoint(g, x);
        for (std::size_t i = 0; i < g.size(); ++i) ASSERT_EQ(p[i], q[i]);
        const VectorField3 r = div_h(g, x), s = reference::div_h(g, x);
        for (std::size_t i = 0; i < g.size(); ++i) ASSERT_EQ(r[i], s[i]);
        const double ip = inner_l2(g, x, c);
        EXPECT_NEAR(ip, reference::inner_l2(g, x, c), 1e-12 * std::abs(ip));
    }
    configure_threads();
}

TEST(GridFields, ReductionsIndependentOfThreadCount)
{
    const Grid g = box(17, 16, 15);
    const TensorField3 x = rnd_x(g, 21), y = rnd_x(g, 22);
    omp_set_num_threads(1);
    const double one = inner_l2(g, x, y);
    omp_set_num_threads(4);
    const double four = inner_l2(g, x, y);
    configure_threads();
    EXPECT_EQ(one, four);
}
