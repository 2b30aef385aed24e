#include "microcurl/reference.hpp"

namespace microcurl::reference {

namespace {

// forward difference of entry (a,b) along ax at (i,j,k); zero on the last layer
double dfw(const Grid& g, const TensorField3& x, int i, int j, int k, int ax, int a, int b)
{
    int q[3] = {i, j, k};
    if (q[ax] == g.n[ax] - 1) return 0.0;
    q[ax] += 1;
    return (x[g.index(q[0], q[1], q[2])](a, b) - x[g.index(i, j, k)](a, b)) / g.h;
}

double dbw(const Grid& g, const TensorField3& y, int i, int j, int k, int ax, int a, int b)
{
    const int pos[3] = {i, j, k};
    int q[3] = {i, j, k};
    double prev = 0.0, cur = 0.0;
    if (q[ax] > 0) {
        q[ax] -= 1;
        prev = y[g.index(q[0], q[1], q[2])](a, b);
    }
    if (pos[ax] < g.n[ax] - 1) cur = y[g.index(i, j, k)](a, b);
    return (prev - cur) / g.h;
}

}  // namespace

TensorField3 grad_h(const Grid& g, const VectorField3& u)
{
    TensorField3 out(g.size());
    for (int k = 0; k < g.n[2]; ++k)
        for (int j = 0; j < g.n[1]; ++j)
            for (int i = 0; i < g.n[0]; ++i) {
                const int q[3] = {i, j, k};
                Tensor3& t = out[g.index(i, j, k)];
                for (int ax = 0; ax < 3; ++ax) {
                    if (q[ax] == g.n[ax] - 1) continue;
                    int r[3] = {i, j, k};
                    r[ax] += 1;
                    for (int c = 0; c < 3; ++c)
                        t(c, ax) = (u[g.index(r[0], r[1], r[2])][c] - u[g.index(i, j, k)][c]) / g.h;
                }
            }
    return out;
}

TensorField3 curl_h(const Grid& g, const TensorField3& x)
{
    TensorField3 out(g.size());
    for (int k = 0; k < g.n[2]; ++k)
        for (int j = 0; j < g.n[1]; ++j)
            for (int i = 0; i < g.n[0]; ++i) {
                Tensor3& t = out[g.index(i, j, k)];
                for (int a = 0; a < 3; ++a) {
                    t(a, 0) = dfw(g, x, i, j, k, 1, a, 2) - dfw(g, x, i, j, k, 2, a, 1);
                    t(a, 1) = dfw(g, x, i, j, k, 2, a, 0) - dfw(g, x, i, j, k, 0, a, 2);
                    t(a, 2) = dfw(g, x, i, j, k, 0, a, 1) - dfw(g, x, i, j, k, 1, a, 0);
                }
            }
    return out;
}

VectorField3 div_h(const Grid& g, const TensorField3& x)
{
    VectorField3 out(g.size());
    for (int k = 0; k < g.n[2]; ++k)
        for (int j = 0; j < g.n[1]; ++j)
            for (int i = 0; i < g.n[0]; ++i)
                for (int a = 0; a < 3; ++a)
                    out[g.index(i, j, k)][a] =
                        dfw(g, x, i, j, k, 0, a, 0) + dfw(g, x, i, j, k, 1, a, 1) + dfw(g, x, i, j, k, 2, a, 2);
    return out;
}

VectorField3 grad_h_adjoint(const Grid& g, const TensorField3& y)
{
    VectorField3 out(g.size());
    for (int k = 0; k < g.n[2]; ++k)
        for (int j = 0; j < g.n[1]; ++j)
            for (int i = 0; i < g.n[0]; ++i)
                for (int a = 0; a < 3; ++a)
                    out[g.index(i, j, k)][a] =
                        dbw(g, y, i, j, k, 0, a, 0) + dbw(g, y, i, j, k, 1, a, 1) + dbw(g, y, i, j, k, 2, a, 2);
    return out;
}

TensorField3 curl_h_adjoint(const Grid& g, const TensorField3& y)
{
    TensorField3 out(g.size());
    for (int k = 0; k < g.n[2]; ++k)
        for (int j = 0; j < g.n[1]; ++j)
            for (int i = 0; i < g.n[0]; ++i) {
                Tensor3& t = out[g.index(i, j, k)];
                for (int a = 0; a < 3; ++a) {
                    t(a, 0) = dbw(g, y, i, j, k, 2, a, 1) - dbw(g, y, i, j, k, 1, a, 2);
                    t(a, 1) = dbw(g, y, i, j, k, 0, a, 2) - dbw(g, y, i, j, k, 2, a, 0);
                    t(a, 2) = dbw(g, y, i, j, k, 1, a, 0) - dbw(g, y, i, j, k, 0, a, 1);
                }
            }
    return out;
}

double inner_l2(const Grid& g, const TensorField3& a, const TensorField3& b)
{
    double s = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) s += dot(a[n], b[n]);
    return g.cell_volume() * s;
}

}  // namespace microcurl::reference
