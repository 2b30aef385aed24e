#include "microcurl/grid_fields.hpp"

#include <cmath>
#include <cstdlib>
#include <mutex>
#include <stdexcept>

#include <omp.h>

namespace microcurl {

namespace {

template <class F>
void for_each_node(const Grid& g, F f)
{
    const int n0 = g.n[0], n1 = g.n[1], n2 = g.n[2];
#pragma omp parallel for collapse(2) schedule(static)
    for (int k = 0; k < n2; ++k)
        for (int j = 0; j < n1; ++j)
            for (int i = 0; i < n0; ++i) f(g.index(i, j, k), std::array<int, 3>{i, j, k});
}

void check_size(const Grid& g, std::size_t n)
{
    if (n != g.size()) throw std::invalid_argument("field layout does not match grid");
}

// D_ax X at idx, zero on the last layer
inline Tensor3 fwd(const Grid& g, const TensorField3& x, std::size_t idx, const std::array<int, 3>& q, int ax)
{
    Tensor3 t;
    if (q[ax] < g.n[ax] - 1) {
        const Tensor3& a = x[idx + g.stride(ax)];
        const Tensor3& b = x[idx];
        for (int c = 0; c < 9; ++c) t.a[c] = (a.a[c] - b.a[c]) / g.h;
    }
    return t;
}

// D_ax^T Y at idx
inline Tensor3 bwd(const Grid& g, const TensorField3& y, std::size_t idx, const std::array<int, 3>& q, int ax)
{
    Tensor3 t;
    const bool has_prev = q[ax] >= 1;
    const bool has_cur = q[ax] < g.n[ax] - 1;
    for (int c = 0; c < 9; ++c) {
        const double prev = has_prev ? y[idx - g.stride(ax)].a[c] : 0.0;
        const double cur = has_cur ? y[idx].a[c] : 0.0;
        t.a[c] = (prev - cur) / g.h;
    }
    return t;
}

}  // namespace

const char* face_name(Face f)
{
    static const char* names[6] = {"xmin", "xmax", "ymin", "ymax", "zmin", "zmax"};
    return names[f];
}

std::array<int, 3> Grid::ijk(std::size_t idx) const
{
    const int i = int(idx % n[0]);
    const std::size_t r = idx / n[0];
    return {i, int(r % n[1]), int(r / n[1])};
}

Vec3 Grid::coords(std::size_t idx) const
{
    const auto q = ijk(idx);
    return {q[0] * h, q[1] * h, q[2] * h};
}

std::size_t Grid::stride(int axis) const
{
    if (axis == 0) return 1;
    if (axis == 1) return std::size_t(n[0]);
    return std::size_t(n[0]) * n[1];
}

bool Grid::on_face(std::size_t idx, Face f) const
{
    const auto q = ijk(idx);
    const int ax = int(f) / 2;
    return (int(f) % 2 == 0) ? q[ax] == 0 : q[ax] == n[ax] - 1;
}

bool Grid::on_gamma_d(std::size_t idx) const
{
    for (int f = 0; f < 6; ++f)
        if (gamma_d[f] && on_face(idx, Face(f))) return true;
    return false;
}

bool Grid::has_gamma_d() const
{
    for (bool b : gamma_d)
        if (b) return true;
    return false;
}

std::string Grid::gamma_d_string() const
{
    std::string s;
    for (int f = 0; f < 6; ++f) {
        if (!gamma_d[f]) continue;
        if (!s.empty()) s += ",";
        s += face_name(Face(f));
    }
    return s.empty() ? "none" : s;
}

Grid make_grid(std::array<int, 3> n, double h, std::array<bool, 6> gamma_d)
{
    for (int v : n)
        if (v < 2) throw std::invalid_argument("grid needs at least 2 nodes per axis");
    if (!(h > 0.0)) throw std::invalid_argument("grid spacing must be positive");
    Grid g;
    g.n = n;
    g.h = h;
    g.gamma_d = gamma_d;
    return g;
}

CellState CellState::zeros(const Grid& g, int nslip)
{
    CellState s;
    s.nslip = nslip;
    s.gamma.assign(g.size() * nslip, 0.0);
    s.eta.assign(g.size() * nslip, 0.0);
    s.p.assign(g.size(), Tensor3{});
    s.eta_p.assign(g.size(), 0.0);
    return s;
}

TensorField3 grad_h(const Grid& g, const VectorField3& u)
{
    check_size(g, u.size());
    TensorField3 out(g.size());
    for_each_node(g, [&](std::size_t idx, const std::array<int, 3>& q) {
        Tensor3 t;
        for (int ax = 0; ax < 3; ++ax) {
            if (q[ax] >= g.n[ax] - 1) continue;
            const Vec3& a = u[idx + g.stride(ax)];
            const Vec3& b = u[idx];
            for (int c = 0; c < 3; ++c) t(c, ax) = (a[c] - b[c]) / g.h;
        }
        out[idx] = t;
    });
    return out;
}

TensorField3 curl_h(const Grid& g, const TensorField3& x)
{
    check_size(g, x.size());
    TensorField3 out(g.size());
    for_each_node(g, [&](std::size_t idx, const std::array<int, 3>& q) {
        const Tensor3 d0 = fwd(g, x, idx, q, 0);
        const Tensor3 d1 = fwd(g, x, idx, q, 1);
        const Tensor3 d2 = fwd(g, x, idx, q, 2);
        Tensor3 t;
        for (int a = 0; a < 3; ++a) {
            t(a, 0) = d1(a, 2) - d2(a, 1);
            t(a, 1) = d2(a, 0) - d0(a, 2);
            t(a, 2) = d0(a, 1) - d1(a, 0);
        }
        out[idx] = t;
    });
    return out;
}

VectorField3 div_h(const Grid& g, const TensorField3& x)
{
    check_size(g, x.size());
    VectorField3 out(g.size());
    for_each_node(g, [&](std::size_t idx, const std::array<int, 3>& q) {
        const Tensor3 d0 = fwd(g, x, idx, q, 0);
        const Tensor3 d1 = fwd(g, x, idx, q, 1);
        const Tensor3 d2 = fwd(g, x, idx, q, 2);
        Vec3 v;
        for (int a = 0; a < 3; ++a) v[a] = d0(a, 0) + d1(a, 1) + d2(a, 2);
        out[idx] = v;
    });
    return out;
}

VectorField3 grad_h_adjoint(const Grid& g, const TensorField3& y)
{
    check_size(g, y.size());
    VectorField3 out(g.size());
    for_each_node(g, [&](std::size_t idx, const std::array<int, 3>& q) {
        const Tensor3 b0 = bwd(g, y, idx, q, 0);
        const Tensor3 b1 = bwd(g, y, idx, q, 1);
        const Tensor3 b2 = bwd(g, y, idx, q, 2);
        Vec3 v;
        for (int a = 0; a < 3; ++a) v[a] = b0(a, 0) + b1(a, 1) + b2(a, 2);
        out[idx] = v;
    });
    return out;
}

TensorField3 curl_h_adjoint(const Grid& g, const TensorField3& y)
{
    check_size(g, y.size());
    TensorField3 out(g.size());
    for_each_node(g, [&](std::size_t idx, const std::array<int, 3>& q) {
        const Tensor3 b0 = bwd(g, y, idx, q, 0);
        const Tensor3 b1 = bwd(g, y, idx, q, 1);
        const Tensor3 b2 = bwd(g, y, idx, q, 2);
        Tensor3 t;
        for (int a = 0; a < 3; ++a) {
            t(a, 0) = b2(a, 1) - b1(a, 2);
            t(a, 1) = b0(a, 2) - b2(a, 0);
            t(a, 2) = b1(a, 0) - b0(a, 1);
        }
        out[idx] = t;
    });
    return out;
}

VectorField3 div_h_dual(const Grid& g, const TensorField3& x)
{
    VectorField3 v = grad_h_adjoint(g, x);
    for (auto& e : v)
        for (double& c : e) c = -c;
    return v;
}

void apply_tangential_bc(const Grid& g, TensorField3& x)
{
    check_size(g, x.size());
    if (!g.has_gamma_d()) return;
    for_each_node(g, [&](std::size_t idx, const std::array<int, 3>& q) {
        for (int f = 0; f < 6; ++f) {
            if (!g.gamma_d[f]) continue;
            const int ax = f / 2;
            const bool on = (f % 2 == 0) ? q[ax] == 0 : q[ax] == g.n[ax] - 1;
            if (!on) continue;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b)
                    if (b != ax) x[idx](a, b) = 0.0;
        }
    });
}

TensorField3 tangential_projected(const Grid& g, TensorField3 x)
{
    apply_tangential_bc(g, x);
    return x;
}

void apply_dirichlet_mask(const Grid& g, VectorField3& u)
{
    check_size(g, u.size());
    if (!g.has_gamma_d()) return;
    for_each_node(g, [&](std::size_t idx, const std::array<int, 3>&) {
        if (g.on_gamma_d(idx)) u[idx] = Vec3{0.0, 0.0, 0.0};
    });
}

double inner_l2(const Grid& g, const TensorField3& a, const TensorField3& b)
{
    check_size(g, a.size());
    check_size(g, b.size());
    return g.cell_volume() * deterministic_sum(a.size(), [&](std::size_t i) { return dot(a[i], b[i]); });
}

double inner_l2(const Grid& g, const VectorField3& a, const VectorField3& b)
{
    check_size(g, a.size());
    check_size(g, b.size());
    return g.cell_volume() * deterministic_sum(a.size(), [&](std::size_t i) { return dot(a[i], b[i]); });
}

double inner_l2(const Grid& g, const ScalarField& a, const ScalarField& b)
{
    if (a.size() != b.size() || a.size() % g.size() != 0) throw std::invalid_argument("field layout does not match grid");
    return g.cell_volume() * deterministic_sum(a.size(), [&](std::size_t i) { return a[i] * b[i]; });
}

double norm_l2(const Grid& g, const TensorField3& a) { return std::sqrt(inner_l2(g, a, a)); }
double norm_l2(const Grid& g, const VectorField3& a) { return std::sqrt(inner_l2(g, a, a)); }
double norm_l2(const Grid& g, const ScalarField& a) { return std::sqrt(inner_l2(g, a, a)); }

void configure_threads()
{
    static std::once_flag once;
    std::call_once(once, [] {
        if (const char* s = std::getenv("MICROCURL_THREADS")) {
            const int n = std::atoi(s);
            if (n > 0) omp_set_num_threads(n);
        }
    });
}

int thread_count() { return omp_get_max_threads(); }

}  // namespace microcurl
