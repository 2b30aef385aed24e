#include "microcurl/linalg.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include <Eigen/Dense>

namespace microcurl {

static_assert(sizeof(Vec3) == 3 * sizeof(double));
static_assert(sizeof(Tensor3) == 9 * sizeof(double));

double vdot(const Vector& a, const Vector& b)
{
    return deterministic_sum(a.size(), [&](std::size_t i) { return a[i] * b[i]; });
}

double vnorm(const Vector& a) { return std::sqrt(vdot(a, a)); }

void axpy(double a, const Vector& x, Vector& y)
{
    const std::ptrdiff_t n = std::ptrdiff_t(x.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) y[i] += a * x[i];
}

CgResult conjugate_gradient(const LinOp& A, const Vector& b, Vector& x, double tol, int max_iter, bool estimate_spectrum)
{
    CgResult res;
    const std::size_t n = b.size();
    if (x.size() != n) x.assign(n, 0.0);
    res.rhs_norm = vnorm(b);
    if (res.rhs_norm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        res.converged = true;
        return res;
    }
    Vector r(n), Ap(n);
    A(x, Ap);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - Ap[i];
    Vector p = r;
    double rr = vdot(r, r);
    const double stop = tol * res.rhs_norm;
    std::vector<double> alphas, betas;
    int it = 0;
    while (std::sqrt(rr) > stop && it < max_iter) {
        A(p, Ap);
        const double pAp = vdot(p, Ap);
        if (!(pAp > 0.0)) break;
        const double alpha = rr / pAp;
        axpy(alpha, p, x);
        axpy(-alpha, Ap, r);
        const double rr_new = vdot(r, r);
        const double beta = rr_new / rr;
        rr = rr_new;
        if (estimate_spectrum) {
            alphas.push_back(alpha);
            betas.push_back(beta);
        }
        const std::ptrdiff_t nn = std::ptrdiff_t(n);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < nn; ++i) p[i] = r[i] + beta * p[i];
        ++it;
    }
    res.iterations = it;
    res.residual = std::sqrt(rr);
    res.converged = res.residual <= stop;
    if (estimate_spectrum && !alphas.empty()) {
        const int m = int(alphas.size());
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
        for (int j = 0; j < m; ++j) {
            T(j, j) = 1.0 / alphas[j] + (j > 0 ? betas[j - 1] / alphas[j - 1] : 0.0);
            if (j + 1 < m) T(j, j + 1) = T(j + 1, j) = std::sqrt(betas[j]) / alphas[j];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T, Eigen::EigenvaluesOnly);
        res.ritz_min = es.eigenvalues().minCoeff();
        res.ritz_max = es.eigenvalues().maxCoeff();
    }
    return res;
}

void AndersonMixer::reset()
{
    last_f_.clear();
    last_g_.clear();
    df_.clear();
    dg_.clear();
}

Vector AndersonMixer::next(const Vector& x, const Vector& g)
{
    const std::size_t n = x.size();
    Vector f(n);
    for (std::size_t i = 0; i < n; ++i) f[i] = g[i] - x[i];
    if (!last_f_.empty()) {
        Vector a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = f[i] - last_f_[i];
            b[i] = g[i] - last_g_[i];
        }
        df_.push_back(std::move(a));
        dg_.push_back(std::move(b));
        if (int(df_.size()) > depth_) {
            df_.erase(df_.begin());
            dg_.erase(dg_.begin());
        }
    }
    last_f_ = f;
    last_g_ = g;
    if (df_.empty() || depth_ == 0) return g;
    const int m = int(df_.size());
    Eigen::MatrixXd A(m, m);
    Eigen::VectorXd r(m);
    for (int i = 0; i < m; ++i) {
        r(i) = vdot(df_[i], f);
        for (int j = 0; j <= i; ++j) A(i, j) = A(j, i) = vdot(df_[i], df_[j]);
    }
    const double reg = 1e-12 * A.diagonal().maxCoeff();
    A.diagonal().array() += reg;
    const Eigen::VectorXd gam = A.ldlt().solve(r);
    Vector out = g;
    for (int k = 0; k < m; ++k)
        for (std::size_t i = 0; i < n; ++i) out[i] -= gam(k) * dg_[k][i];
    return out;
}

Vector flatten(const VectorField3& u)
{
    Vector v(3 * u.size());
    if (!u.empty()) std::memcpy(v.data(), u.data(), v.size() * sizeof(double));
    return v;
}

Vector flatten(const TensorField3& x)
{
    Vector v(9 * x.size());
    if (!x.empty()) std::memcpy(v.data(), x.data(), v.size() * sizeof(double));
    return v;
}

void unflatten(const Vector& v, VectorField3& u)
{
    if (v.size() % 3 != 0) throw std::invalid_argument("flat size is not a multiple of 3");
    u.resize(v.size() / 3);
    if (!v.empty()) std::memcpy(u.data(), v.data(), v.size() * sizeof(double));
}

void unflatten(const Vector& v, TensorField3& x)
{
    if (v.size() % 9 != 0) throw std::invalid_argument("flat size is not a multiple of 9");
    x.resize(v.size() / 9);
    if (!v.empty()) std::memcpy(static_cast<void*>(x.data()), v.data(), v.size() * sizeof(double));
}

}  // namespace microcurl
