#include "microcurl/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/CholmodSupport>

namespace microcurl {

namespace {

Vector apply_op(const LinOp& op, const Vector& x)
{
    Vector y(x.size());
    op(x, y);
    return y;
}

Tensor3 random_tensor(std::mt19937_64& rng, double amp)
{
    std::uniform_real_distribution<double> d(-amp, amp);
    Tensor3 t;
    for (double& v : t.a) v = d(rng);
    return t;
}

void copy_out(const Vector& v, std::size_t off, TensorField3& x)
{
    std::memcpy(static_cast<void*>(x.data()), v.data() + off, x.size() * sizeof(Tensor3));
}

void copy_out(const Vector& v, std::size_t off, VectorField3& x)
{
    std::memcpy(static_cast<void*>(x.data()), v.data() + off, x.size() * sizeof(Vec3));
}

void copy_in(Vector& v, std::size_t off, const TensorField3& x)
{
    std::memcpy(v.data() + off, static_cast<const void*>(x.data()), x.size() * sizeof(Tensor3));
}

void copy_in(Vector& v, std::size_t off, const VectorField3& x)
{
    std::memcpy(v.data() + off, static_cast<const void*>(x.data()), x.size() * sizeof(Vec3));
}

double rel_diff(const Vector& a, const Vector& b)
{
    double d = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double s = std::sqrt(std::max(na, nb));
    return s > 0.0 ? std::sqrt(d) / s : 0.0;
}

}  // namespace

// ---- eigenvalues ------------------------------------------------------------

namespace {

using SpMat = Eigen::SparseMatrix<double>;

std::vector<std::uint32_t> node_map(std::size_t n, std::initializer_list<int> per_node)
{
    std::vector<std::uint32_t> m;
    for (int k : per_node)
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < k; ++c) m.push_back(std::uint32_t(i));
    return m;
}

struct Assembled {
    SpMat A, B, P;
    int probes = 0;
    double asymmetry = 0.0;
};

// Columns sharing a color are at least three indices apart on some axis, so
// their radius-one stencils do not overlap and one product recovers them all.
Assembled assemble(const QuadraticPencil& pc)
{
    const std::size_t n = pc.dim;
    const auto& d = pc.dims;
    std::vector<int> slot(n, 0);
    std::vector<int> count(std::size_t(d[0]) * d[1] * d[2], 0);
    int slots = 0;
    for (std::size_t j = 0; j < n; ++j) {
        slot[j] = count[pc.dof_node[j]]++;
        slots = std::max(slots, slot[j] + 1);
    }
    auto coords = [&](std::uint32_t p) {
        return std::array<int, 3>{int(p % d[0]), int((p / d[0]) % d[1]), int(p / (std::size_t(d[0]) * d[1]))};
    };
    auto color = [&](std::uint32_t p) {
        const auto c = coords(p);
        return (c[0] % 3) + 3 * (c[1] % 3) + 9 * (c[2] % 3);
    };
    // dof index of (node, slot)
    std::vector<std::vector<std::int64_t>> at(slots, std::vector<std::int64_t>(count.size(), -1));
    for (std::size_t j = 0; j < n; ++j) at[slot[j]][pc.dof_node[j]] = std::int64_t(j);

    using Trip = Eigen::Triplet<double>;
    std::vector<Trip> ta, tb, tp;
    Assembled out;
    for (int col = 0; col < 27; ++col)
        for (int s = 0; s < slots; ++s) {
            Vector e(n, 0.0);
            bool any = false;
            for (std::size_t j = 0; j < n; ++j)
                if (slot[j] == s && color(pc.dof_node[j]) == col) e[j] = 1.0, any = true;
            if (!any) continue;
            ++out.probes;
            Vector pe = e;
            pc.project(pe);
            Vector ya = apply_op(pc.apply_a, pe), yb = apply_op(pc.apply_b, pe);
            pc.project(ya);
            pc.project(yb);
            for (std::size_t r = 0; r < n; ++r) {
                if (ya[r] == 0.0 && yb[r] == 0.0 && pe[r] == 0.0) continue;
                // the unique probed column whose node neighbours row r
                const auto rc = coords(pc.dof_node[r]);
                std::array<int, 3> cc{};
                const int base[3] = {col % 3, (col / 3) % 3, col / 9};
                for (int k = 0; k < 3; ++k) {
                    int delta = ((base[k] - rc[k]) % 3 + 3) % 3;
                    if (delta == 2) delta = -1;
                    cc[k] = rc[k] + delta;
                }
                if (cc[0] < 0 || cc[1] < 0 || cc[2] < 0 || cc[0] >= d[0] || cc[1] >= d[1] || cc[2] >= d[2]) continue;
                const std::size_t node = std::size_t(cc[0]) + std::size_t(d[0]) * (cc[1] + std::size_t(d[1]) * cc[2]);
                const std::int64_t j = at[s][node];
                if (j < 0) continue;
                if (ya[r] != 0.0) ta.emplace_back(int(r), int(j), ya[r]);
                if (yb[r] != 0.0) tb.emplace_back(int(r), int(j), yb[r]);
                if (pe[r] != 0.0) tp.emplace_back(int(r), int(j), pe[r]);
            }
        }
    out.A.resize(n, n);
    out.B.resize(n, n);
    out.P.resize(n, n);
    out.A.setFromTriplets(ta.begin(), ta.end());
    out.B.setFromTriplets(tb.begin(), tb.end());
    out.P.setFromTriplets(tp.begin(), tp.end());
    const SpMat At = out.A.transpose();
    const double amax = std::max(out.A.coeffs().abs().maxCoeff(), 1e-300);
    out.asymmetry = SpMat(out.A - At).coeffs().abs().maxCoeff() / amax;
    out.A = 0.5 * (out.A + At);
    out.B = 0.5 * (out.B + SpMat(out.B.transpose()));
    return out;
}

}  // namespace

namespace {

using Factor = Eigen::CholmodSupernodalLLT<SpMat>;

struct LanczosResult {
    double theta = 0.0;
    double bound = 0.0;
    int iterations = 0;
    bool converged = false;
    Eigen::VectorXd vector;
};

// Largest eigenvalue of K^{-1} Bt, self-adjoint in the Bt inner product.
LanczosResult lanczos(const Factor& K, const SpMat& Bt, const Eigen::VectorXd& start, double tol, int max_iters)
{
    using EV = Eigen::VectorXd;
    std::vector<EV> V;
    std::vector<double> alpha, beta;
    EV q = start / std::sqrt(start.dot(Bt * start));
    Eigen::MatrixXd S;
    LanczosResult r;
    double prev = 0.0;
    for (int it = 0; it < max_iters; ++it) {
        V.push_back(q);
        EV w = K.solve(Bt * q);
        alpha.push_back(q.dot(Bt * w));
        // full reorthogonalization in the Bt inner product, applied twice
        for (int pass = 0; pass < 2; ++pass) {
            const EV bw = Bt * w;
            for (const EV& v : V) w -= v.dot(bw) * v;
        }
        const double b = std::sqrt(std::max(w.dot(Bt * w), 0.0));
        const int m = int(alpha.size());
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
        for (int i = 0; i < m; ++i) {
            T(i, i) = alpha[i];
            if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
        r.theta = es.eigenvalues()(m - 1);
        S = es.eigenvectors();
        r.bound = b * std::abs(S(m - 1, m - 1));
        r.iterations = it + 1;
        // the Ritz value error is of order bound^2 / gap, so a settled value
        // with a moderate residual bound is accepted
        const bool settled = it > 0 && std::abs(r.theta - prev) <= tol * r.theta && r.bound <= std::sqrt(tol) * r.theta;
        if (settled || r.bound <= tol * r.theta || b <= 1e-14 * r.theta) {
            r.converged = true;
            break;
        }
        prev = r.theta;
        beta.push_back(b);
        q = w / b;
    }
    const int m = int(alpha.size());
    r.vector = EV::Zero(start.size());
    for (int i = 0; i < m; ++i) r.vector += S(i, m - 1) * V[i];
    return r;
}

}  // namespace

EigenEstimate smallest_eigenvalue(const QuadraticPencil& pc, const EigenOptions& opt)
{
    const std::size_t n = pc.dim;
    EigenEstimate est;
    Assembled as = assemble(pc);
    est.probes = as.probes;
    est.asymmetry = as.asymmetry;
    // complement of the admissible space: identity in B, a large constant in A
    SpMat I(n, n);
    I.setIdentity();
    const SpMat Q = I - as.P;
    const double big = 1.0 + as.A.diagonal().cwiseAbs().maxCoeff();
    const SpMat Bt = as.B + Q;
    const SpMat A = as.A + big * Q;

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> nd;
    Vector x0(n);
    for (double& v : x0) v = nd(rng);
    pc.project(x0);
    const Eigen::VectorXd start = Eigen::Map<Eigen::VectorXd>(x0.data(), Eigen::Index(n));

    double shift = opt.shift;
    Factor K(A + shift * Bt);
    if (K.info() != Eigen::Success) throw EigenIterationError("shifted pencil is not positive definite");
    LanczosResult r = lanczos(K, Bt, start, opt.tol, opt.max_iters);
    est.iterations = r.iterations;
    if (!r.converged) {
        // a tight cluster at the bottom: move the shift just below the current
        // upper bound, which spreads the cluster in the inverted spectrum
        const double upper = 1.0 / r.theta - shift;
        for (double frac : {0.9, 0.5}) {
            if (!(upper > 0.0)) break;
            Factor K2(A - frac * upper * Bt);
            if (K2.info() != Eigen::Success) continue;
            shift = -frac * upper;
            r = lanczos(K2, Bt, r.vector, opt.tol, opt.max_iters);
            est.iterations += r.iterations;
            break;
        }
    }
    est.converged = r.converged;
    est.lambda = 1.0 / r.theta - shift;
    est.residual = r.bound / r.theta;
    est.vector.assign(r.vector.data(), r.vector.data() + n);
    pc.project(est.vector);
    if (!est.converged)
        throw EigenIterationError("eigen iteration did not converge in " + std::to_string(est.iterations) + " iterations");
    return est;
}

// ---- coercivity -------------------------------------------------------------

namespace {

struct CoercivityLayout {
    std::size_t n = 0;
    int nq = 9;
    std::size_t off_q = 0, off_x = 0, dim = 0;
};

CoercivityLayout layout_for(Variant v, const MaterialParams& m, const Grid& g)
{
    CoercivityLayout L;
    L.n = g.size();
    L.nq = v == Variant::SC_ISO ? int(m.slips.size()) : 9;
    L.off_q = 3 * L.n;
    L.off_x = L.off_q + std::size_t(L.nq) * L.n;
    L.dim = L.off_x + 9 * L.n;
    return L;
}

Tensor3 q_tensor(Variant v, const MaterialParams& m, const double* q)
{
    if (v == Variant::SC_ISO) return assemble_p_from_slips(std::span<const double>(q, m.slips.size()), m.slips);
    Tensor3 t;
    std::copy(q, q + 9, t.a.begin());
    return t;
}

void project_q(Variant v, double* q)
{
    if (v == Variant::SC_ISO) return;
    Tensor3 t;
    std::copy(q, q + 9, t.a.begin());
    t = v == Variant::SC_KIN ? dev(t) : dev(sym(t));
    std::copy(t.a.begin(), t.a.end(), q);
}

QuadraticPencil coercivity_pencil(Variant v, const MaterialParams& m, const Grid& g)
{
    const CoercivityLayout L = layout_for(v, m, g);
    const double mu = m.E.mu;
    const bool sc = is_single_crystal(v);
    const double hard = is_isotropic(v) ? mu * m.k2 : mu * m.k1;
    const double wq = is_isotropic(v) ? 2.0 : 1.0;
    QuadraticPencil P;
    P.dim = L.dim;
    P.dims = g.n;
    P.dof_node = node_map(L.n, {3, L.nq, 9});
    P.project = [=, &g](Vector& z) {
        VectorField3 u(L.n);
        copy_out(z, 0, u);
        apply_dirichlet_mask(g, u);
        copy_in(z, 0, u);
        parallel_for(L.n, [&](std::size_t i) { project_q(v, z.data() + L.off_q + i * L.nq); });
        TensorField3 x(L.n);
        copy_out(z, L.off_x, x);
        apply_tangential_bc(g, x);
        copy_in(z, L.off_x, x);
    };
    P.apply_a = [=, &g, &m](const Vector& z, Vector& out) {
        VectorField3 u(L.n);
        TensorField3 x(L.n);
        copy_out(z, 0, u);
        copy_out(z, L.off_x, x);
        const TensorField3 G = grad_h(g, u);
        const TensorField3 cc = curl_h_adjoint(g, curl_h(g, x));
        TensorField3 sig(L.n), ox(L.n);
        out.assign(L.dim, 0.0);
        parallel_for(L.n, [&](std::size_t i) {
            const double* q = z.data() + L.off_q + i * L.nq;
            const Tensor3 mq = q_tensor(v, m, q);
            const Tensor3 e = sym(G[i] - mq);
            sig[i] = apply_ciso(m.E, e);
            const Tensor3 d = sc ? x[i] - mq : sym(x[i]) - mq;
            const Tensor3 t = (mu * m.H_chi) * d;
            ox[i] = t + (mu * m.L_c * m.L_c) * cc[i];
            const Tensor3 gq = -sig[i] - t;
            double* oq = out.data() + L.off_q + i * L.nq;
            if (v == Variant::SC_ISO) {
                for (int a = 0; a < L.nq; ++a) oq[a] = dot(gq, m.slips[a].m) + hard * q[a];
            } else {
                const Tensor3 h = v == Variant::SC_KIN ? hard * sym(mq) : hard * mq;
                Tensor3 r = gq + h;
                std::copy(r.a.begin(), r.a.end(), oq);
                project_q(v, oq);
            }
        });
        VectorField3 ou = grad_h_adjoint(g, sig);
        apply_dirichlet_mask(g, ou);
        apply_tangential_bc(g, ox);
        copy_in(out, 0, ou);
        copy_in(out, L.off_x, ox);
    };
    P.apply_b = [=, &g](const Vector& z, Vector& out) {
        VectorField3 u(L.n);
        TensorField3 x(L.n);
        copy_out(z, 0, u);
        copy_out(z, L.off_x, x);
        VectorField3 ou = grad_h_adjoint(g, grad_h(g, u));
        TensorField3 ox = curl_h_adjoint(g, curl_h(g, x));
        parallel_for(L.n, [&](std::size_t i) { ox[i] += x[i]; });
        apply_dirichlet_mask(g, ou);
        apply_tangential_bc(g, ox);
        out.assign(L.dim, 0.0);
        copy_in(out, 0, ou);
        copy_in(out, L.off_x, ox);
        for (std::size_t i = L.off_q; i < L.off_x; ++i) out[i] = wq * z[i];
    };
    return P;
}

}  // namespace

std::size_t coercivity_dim(Variant v, const MaterialParams& m, const Grid& g) { return layout_for(v, m, g).dim; }

double coercivity_quotient(Variant v, const MaterialParams& m, const Grid& g, const Vector& z, double beta_extra)
{
    // beta = |q| + beta_extra pointwise (isotropic cone); the pencil already
    // holds the |q| part, the extra adds mu k2 (2|q| e + e^2) and (2|q| e + e^2).
    QuadraticPencil P = coercivity_pencil(v, m, g);
    const double a = vdot(z, apply_op(P.apply_a, z));
    const double b = vdot(z, apply_op(P.apply_b, z));
    if (!is_isotropic(v) || beta_extra == 0.0) return a / b;
    const CoercivityLayout L = layout_for(v, m, g);
    const int nb = v == Variant::SC_ISO ? L.nq : 1;
    double ea = 0.0, eb = 0.0;
    for (std::size_t i = 0; i < L.n; ++i) {
        const double* q = z.data() + L.off_q + i * L.nq;
        for (int c = 0; c < nb; ++c) {
            double nq = std::abs(q[c]);
            if (v != Variant::SC_ISO) {
                nq = 0.0;
                for (int j = 0; j < 9; ++j) nq += q[j] * q[j];
                nq = std::sqrt(nq);
            }
            const double inc = 2.0 * nq * beta_extra + beta_extra * beta_extra;
            ea += m.E.mu * m.k2 * inc;
            eb += inc;
        }
    }
    return (a + ea) / (b + eb);
}

CoercivityReport estimate_coercivity(Variant v, const MaterialParams& m, const Grid& g, const EigenOptions& opt)
{
    if (!is_plastic(v)) throw std::invalid_argument("coercivity is defined for the plasticity variants");
    if (!g.has_gamma_d()) throw std::invalid_argument("coercivity needs a nonempty Gamma_D");
    CoercivityReport r;
    r.variant = v;
    r.dims = g.n;
    r.diag = smallest_eigenvalue(coercivity_pencil(v, m, g), opt);
    r.lambda_space = std::max(r.diag.lambda, 0.0);
    if (is_isotropic(v)) r.hardening_bound = m.E.mu * m.k2;
    r.c_min = std::min(r.lambda_space, r.hardening_bound);
    return r;
}

// ---- Korn -------------------------------------------------------------------

namespace {

QuadraticPencil korn_pencil(const Grid& g)
{
    const std::size_t n = g.size();
    QuadraticPencil P;
    P.dim = 9 * n;
    P.dims = g.n;
    P.dof_node = node_map(n, {9});
    P.project = [&g, n](Vector& z) {
        TensorField3 x(n);
        unflatten(z, x);
        apply_tangential_bc(g, x);
        z = flatten(x);
    };
    P.apply_a = [&g, n](const Vector& z, Vector& out) {
        TensorField3 x(n);
        unflatten(z, x);
        TensorField3 y = curl_h_adjoint(g, curl_h(g, x));
        parallel_for(n, [&](std::size_t i) { y[i] += sym(x[i]); });
        apply_tangential_bc(g, y);
        out = flatten(y);
    };
    P.apply_b = [&g, n](const Vector& z, Vector& out) {
        TensorField3 x(n);
        unflatten(z, x);
        apply_tangential_bc(g, x);
        out = flatten(x);
    };
    return P;
}

Tensor3 skew_basis(int c)
{
    Tensor3 w;
    const int a = (c + 1) % 3, b = (c + 2) % 3;
    w(a, b) = 1.0;
    w(b, a) = -1.0;
    return w;
}

}  // namespace

double korn_quotient(const Grid& g, const TensorField3& x)
{
    const TensorField3 c = curl_h(g, x);
    TensorField3 s(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) s[i] = sym(x[i]);
    const double nx = inner_l2(g, x, x);
    return nx > 0.0 ? (inner_l2(g, s, s) + inner_l2(g, c, c)) / nx : 0.0;
}

KornReport estimate_korn_constant(const Grid& g, const EigenOptions& opt)
{
    KornReport r;
    r.dims = g.n;
    r.gamma_d = g.gamma_d_string();
    r.diag = smallest_eigenvalue(korn_pencil(g), opt);
    const TensorField3 x = [&] {
        TensorField3 t;
        unflatten(r.diag.vector, t);
        return t;
    }();
    r.lambda = std::max(korn_quotient(g, x), 0.0);
    r.constant = r.lambda > 0.0 ? 1.0 / r.lambda : std::numeric_limits<double>::infinity();
    r.skew_quotient = korn_quotient(g, tangential_projected(g, TensorField3(g.size(), skew_basis(0))));
    const double nx = inner_l2(g, x, x);
    double share = 0.0;
    for (int c = 0; c < 3; ++c) {
        const TensorField3 w(g.size(), skew_basis(c));
        const double p = inner_l2(g, x, w);
        share += p * p / (inner_l2(g, w, w) * nx);
    }
    r.skew_share = share;
    return r;
}

// ---- norm equivalence -------------------------------------------------------

double star_norm_sq(const Grid& g, const TensorField3& q, const TensorField3& x)
{
    const TensorField3 c = curl_h(g, x);
    const double w = g.cell_volume();
    return w * deterministic_sum(g.size(), [&](std::size_t i) {
        const Tensor3 d = q[i] - x[i], s = sym(q[i]);
        return dot(d, d) + dot(s, s) + dot(c[i], c[i]);
    });
}

double product_norm_sq(const Grid& g, const TensorField3& q, const TensorField3& x)
{
    const TensorField3 c = curl_h(g, x);
    const double w = g.cell_volume();
    return w * deterministic_sum(g.size(), [&](std::size_t i) { return dot(q[i], q[i]) + dot(x[i], x[i]) + dot(c[i], c[i]); });
}

namespace {

QuadraticPencil star_pencil(const Grid& g)
{
    const std::size_t n = g.size();
    QuadraticPencil P;
    P.dim = 18 * n;
    P.dims = g.n;
    P.dof_node = node_map(n, {9, 9});
    auto split = [n](const Vector& z, TensorField3& q, TensorField3& x) {
        q.resize(n);
        x.resize(n);
        copy_out(z, 0, q);
        copy_out(z, 9 * n, x);
    };
    auto join = [n](const TensorField3& q, const TensorField3& x) {
        Vector z(18 * n);
        copy_in(z, 0, q);
        copy_in(z, 9 * n, x);
        return z;
    };
    P.project = [&g, split, join](Vector& z) {
        TensorField3 q, x;
        split(z, q, x);
        for (auto& t : q) t = dev(t);
        apply_tangential_bc(g, x);
        z = join(q, x);
    };
    P.apply_a = [&g, n, split, join](const Vector& z, Vector& out) {
        TensorField3 q, x;
        split(z, q, x);
        TensorField3 oq(n), ox = curl_h_adjoint(g, curl_h(g, x));
        parallel_for(n, [&](std::size_t i) {
            const Tensor3 d = q[i] - x[i];
            oq[i] = dev(d + sym(q[i]));
            ox[i] -= d;
        });
        apply_tangential_bc(g, ox);
        out = join(oq, ox);
    };
    P.apply_b = [&g, n, split, join](const Vector& z, Vector& out) {
        TensorField3 q, x;
        split(z, q, x);
        TensorField3 ox = curl_h_adjoint(g, curl_h(g, x));
        parallel_for(n, [&](std::size_t i) {
            q[i] = dev(q[i]);
            ox[i] += x[i];
        });
        apply_tangential_bc(g, ox);
        out = join(q, ox);
    };
    return P;
}

}  // namespace

NormEquivalenceReport check_norm_equivalence(const Grid& g, int samples, std::uint64_t seed, const EigenOptions& opt)
{
    NormEquivalenceReport r;
    r.dims = g.n;
    r.samples = samples;
    const std::size_t n = g.size();
    std::mt19937_64 rng(seed);
    r.ratio_min = std::numeric_limits<double>::infinity();
    r.ratio_max = 0.0;
    for (int s = 0; s < samples; ++s) {
        TensorField3 q(n), x(n);
        for (std::size_t i = 0; i < n; ++i) {
            q[i] = dev(random_tensor(rng, 1.0));
            x[i] = random_tensor(rng, 1.0);
        }
        apply_tangential_bc(g, x);
        const double ratio = star_norm_sq(g, q, x) / product_norm_sq(g, q, x);
        r.ratio_min = std::min(r.ratio_min, ratio);
        r.ratio_max = std::max(r.ratio_max, ratio);
    }
    const TensorField3 zero(n);
    r.zero_pair_ok = star_norm_sq(g, zero, zero) == 0.0 && product_norm_sq(g, zero, zero) == 0.0;

    const TensorField3 w(n, skew_basis(0));
    r.skew_star_free = star_norm_sq(g, w, w) / product_norm_sq(g, w, w);
    const TensorField3 wm = tangential_projected(g, w);
    r.skew_star_masked = star_norm_sq(g, wm, wm) / product_norm_sq(g, wm, wm);

    if (g.has_gamma_d()) r.lambda_min = std::max(smallest_eigenvalue(star_pencil(g), opt).lambda, 0.0);
    r.vanishing_ok = g.has_gamma_d() && r.lambda_min > 1e-6 && r.skew_star_masked > 0.0 && r.skew_star_free == 0.0;
    r.pass = r.zero_pair_ok && r.vanishing_ok && r.ratio_min > 0.0 && std::isfinite(r.ratio_max) &&
             r.ratio_min >= r.lambda_min * (1.0 - 1e-6);
    return r;
}

// ---- penalty limit ----------------------------------------------------------

double penalty_gap(const Scenario& sc, const FieldState& st)
{
    const Grid& g = sc.grid;
    const bool single = is_single_crystal(sc.variant);
    return std::sqrt(g.cell_volume() * deterministic_sum(g.size(), [&](std::size_t i) {
        const Tensor3 d = single ? st.cells.p[i] - st.chi[i] : st.cells.p[i] - sym(st.chi[i]);
        return dot(d, d);
    }));
}

PenaltySweepReport penalty_sweep(const Scenario& tmpl, const SolverConfig& cfg, const std::vector<double>& h_values)
{
    PenaltySweepReport r;
    r.scenario = tmpl.name;
    r.variant = tmpl.variant;
    if (!is_plastic(tmpl.variant)) throw std::invalid_argument("penalty sweep needs a plasticity variant");
    for (double h : h_values) {
        Scenario sc = tmpl;
        sc.params.H_chi = h;
        FieldState st;
        const RunReport rep = run_quasistatic(sc, cfg, &st);
        if (!rep.completed) throw SolverError("H_chi = " + std::to_string(h) + ": " + rep.failure);
        PenaltyRow row;
        row.h_chi = h;
        row.gap = penalty_gap(sc, st);
        row.ratio = r.rows.empty() || r.rows.back().gap == 0.0 ? 0.0 : row.gap / r.rows.back().gap;
        for (const auto& s : rep.steps) row.outer_iterations += s.outer_iterations;
        r.rows.push_back(row);
    }
    r.strictly_decreasing = !r.rows.empty();
    for (std::size_t i = 1; i < r.rows.size(); ++i)
        if (!(r.rows[i].gap < r.rows[i - 1].gap)) r.strictly_decreasing = false;
    return r;
}

// ---- uniqueness -------------------------------------------------------------

UniquenessReport uniqueness_probe(const Scenario& sc, const SolverConfig& cfg, std::uint64_t seed, double threshold)
{
    UniquenessReport r;
    r.asserted = is_plastic(sc.variant) && (is_isotropic(sc.variant) ? sc.params.k2 > 0.0 : sc.params.k1 > 0.0);
    std::vector<FieldState> ref;
    SolverConfig a = cfg;
    a.init = InitMode::Zero;
    a.snapshot_every = 1;
    const RunReport ra = run_quasistatic(sc, a, nullptr, [&](int, const FieldState& s) { ref.push_back(s); });
    if (!ra.completed) throw SolverError("reference run: " + ra.failure);
    SolverConfig b = cfg;
    b.init = InitMode::Random;
    b.seed = seed;
    b.snapshot_every = 1;
    const RunReport rb = run_quasistatic(sc, b, nullptr, [&](int step, const FieldState& s) {
        const FieldState& o = ref.at(std::size_t(step - 1));
        r.u = std::max(r.u, rel_diff(flatten(o.u), flatten(s.u)));
        r.chi = std::max(r.chi, rel_diff(flatten(o.chi), flatten(s.chi)));
        r.p = std::max(r.p, rel_diff(flatten(o.cells.p), flatten(s.cells.p)));
        Vector e0 = o.cells.eta, e1 = s.cells.eta;
        e0.insert(e0.end(), o.cells.eta_p.begin(), o.cells.eta_p.end());
        e1.insert(e1.end(), s.cells.eta_p.begin(), s.cells.eta_p.end());
        r.eta = std::max(r.eta, rel_diff(e0, e1));
        r.steps = step;
    });
    if (!rb.completed) throw SolverError("perturbed run: " + rb.failure);
    r.max_discrepancy = std::max({r.u, r.chi, r.p, r.eta});
    r.pass = !r.asserted || r.max_discrepancy < threshold;
    return r;
}

// ---- local oracles ----------------------------------------------------------

double local_potential(Variant v, const MaterialParams& m, const LocalTrial& t, const PlasticPoint& z)
{
    PointState s{t.grad_u, t.chi, Tensor3{}, z};
    double d = 0.0;
    if (v == Variant::SC_ISO) {
        for (std::size_t a = 0; a < z.gamma.size(); ++a) {
            const double q = std::abs(z.gamma[a] - t.prev.gamma[a]);
            if (z.eta[a] - t.prev.eta[a] < q - 1e-14 * std::abs(z.eta[a])) return std::numeric_limits<double>::infinity();
            d += m.sigma0 * (z.eta[a] - t.prev.eta[a]);
        }
    } else {
        const double q = norm(z.p - t.prev.p);
        if (v == Variant::PC_ISO) {
            if (z.eta_p - t.prev.eta_p < q - 1e-14 * std::abs(z.eta_p)) return std::numeric_limits<double>::infinity();
        }
        d = m.sigma0 * q;
    }
    return free_energy_density(v, m, s) + d;
}

namespace {

// Brute-force minimization on nested grids: a coarse pass over the box, then
// windows of +-M steps shrinking by 4 until the spacing is below res/4.
std::vector<double> grid_search(const std::vector<double>& lo, const std::vector<double>& hi,
                                const std::function<double(const std::vector<double>&)>& f, double res, int coarse,
                                int M, int& evals)
{
    const int d = int(lo.size());
    std::vector<double> s(d), best(d), c(d);
    for (int i = 0; i < d; ++i) s[i] = (hi[i] - lo[i]) / coarse;
    double fbest = std::numeric_limits<double>::infinity();
    auto sweep = [&](const std::vector<double>& center, int half, bool whole) {
        std::vector<int> idx(d, 0);
        const int w = whole ? coarse + 1 : 2 * half + 1;
        std::vector<double> x(d);
        std::vector<int> bi(d, 0);
        double fb = std::numeric_limits<double>::infinity();
        std::vector<double> xb(d);
        while (true) {
            bool ok = true;
            for (int i = 0; i < d; ++i) {
                x[i] = whole ? lo[i] + idx[i] * s[i] : center[i] + (idx[i] - half) * s[i];
                if (x[i] < lo[i] - 1e-15 || x[i] > hi[i] + 1e-15) ok = false;
            }
            if (ok) {
                const double fx = f(x);
                ++evals;
                if (fx < fb) {
                    fb = fx;
                    xb = x;
                    bi = idx;
                }
            }
            int k = 0;
            while (k < d && ++idx[k] == w) idx[k++] = 0;
            if (k == d) break;
        }
        bool edge = false;
        if (!whole)
            for (int i = 0; i < d; ++i) {
                if (bi[i] == 0 && xb[i] - s[i] >= lo[i] - 1e-15) edge = true;
                if (bi[i] == w - 1 && xb[i] + s[i] <= hi[i] + 1e-15) edge = true;
            }
        return std::make_tuple(fb, xb, edge);
    };
    {
        auto [fb, xb, e] = sweep(c, 0, true);
        (void)e;
        fbest = fb;
        best = xb;
    }
    while (true) {
        const bool last = *std::max_element(s.begin(), s.end()) <= res / 4.0;
        if (!last)
            for (double& v : s) v /= 4.0;
        for (int rep = 0; rep < 200; ++rep) {
            auto [fb, xb, edge] = sweep(best, M, false);
            if (fb <= fbest) {
                fbest = fb;
                best = xb;
            }
            if (!edge) break;
        }
        if (last) break;
    }
    return best;
}

}  // namespace

OracleResult pointwise_oracle(Variant v, const MaterialParams& m, const LocalTrial& t, double resolution)
{
    OracleResult o;
    const double mu = m.E.mu;
    const Tensor3 sg = sym(t.grad_u);
    const Tensor3 st =
        eshelby_stress(v, m, cauchy_stress(m, sg, plastic_strain(v, t.prev.p)), t.chi, t.prev.p);
    auto eval = [&](const PlasticPoint& z) { return local_potential(v, m, t, z); };

    if (v == Variant::PC_ISO || v == Variant::PC_KIN) {
        const Tensor3 S = dev(st);
        const double nd = norm(S);
        PlasticPoint z = t.prev;
        double best = 0.0;
        if (nd > 0.0) {
            const Tensor3 N = (1.0 / nd) * S;
            auto f = [&](const std::vector<double>& x) {
                PlasticPoint y = t.prev;
                y.p = t.prev.p + x[0] * N;
                y.eta_p = t.prev.eta_p + x[0];
                return eval(y);
            };
            best = grid_search({0.0}, {nd / mu}, f, resolution, 400, 8, o.evaluations)[0];
            z.p = t.prev.p + best * N;
            z.eta_p = t.prev.eta_p + (v == Variant::PC_ISO ? best : 0.0);
        }
        o.state = z;
        o.dlambda = {best};
        o.potential = eval(z);
        return o;
    }
    if (v == Variant::SC_KIN) {
        const Tensor3 S = dev(st);
        const Tensor3 Ss = sym(S), Sk = skew(S);
        const double ns = norm(Ss), nk = norm(Sk), nd = norm(S);
        const Tensor3 Ns = ns > 0.0 ? (1.0 / ns) * Ss : Tensor3{};
        const Tensor3 Nk = nk > 0.0 ? (1.0 / nk) * Sk : Tensor3{};
        auto f = [&](const std::vector<double>& x) {
            PlasticPoint y = t.prev;
            y.p = t.prev.p + x[0] * Ns + x[1] * Nk;
            return eval(y);
        };
        const double bs = ns > 0.0 ? nd / mu : 0.0;
        const double bk = nk > 0.0 ? nd / (mu * std::min(m.H_chi, 1.0)) : 0.0;
        const auto x = grid_search({-0.1 * bs, -0.1 * bk}, {bs, bk}, f, resolution, 64, 8, o.evaluations);
        o.state = t.prev;
        o.state.p = t.prev.p + x[0] * Ns + x[1] * Nk;
        o.dlambda = {norm(o.state.p - t.prev.p)};
        o.potential = eval(o.state);
        return o;
    }
    if (v == Variant::SC_ISO) {
        const int n = int(m.slips.size());
        Eigen::MatrixXd A(n, n);
        Eigen::VectorXd b(n);
        for (int a = 0; a < n; ++a) {
            b[a] = dot(st, m.slips[a].m);
            for (int c = 0; c < n; ++c)
                A(a, c) = 2.0 * mu * dot(sym(m.slips[a].m), sym(m.slips[c].m)) + mu * m.H_chi * dot(m.slips[a].m, m.slips[c].m) +
                          (a == c ? mu * m.k2 : 0.0);
        }
        const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A).eigenvalues().minCoeff();
        const double B = b.norm() / lmin * 1.05 + resolution;
        auto make = [&](const std::vector<double>& x) {
            PlasticPoint y = t.prev;
            for (int a = 0; a < n; ++a) {
                y.gamma[a] += x[a];
                y.eta[a] += std::abs(x[a]);
            }
            y.p = assemble_p_from_slips(y.gamma, m.slips);
            return y;
        };
        auto f = [&](const std::vector<double>& x) { return eval(make(x)); };
        const int coarse = n == 1 ? 400 : n == 2 ? 64 : 20;
        const auto x = grid_search(std::vector<double>(n, -B), std::vector<double>(n, B), f, resolution, coarse, 6,
                                   o.evaluations);
        o.state = make(x);
        o.dgamma = x;
        o.dlambda.resize(n);
        for (int a = 0; a < n; ++a) o.dlambda[a] = std::abs(x[a]);
        o.potential = eval(o.state);
        return o;
    }
    throw std::invalid_argument("RM_ELASTIC has no local problem");
}

double kkt_residual(Variant v, const MaterialParams& m, const LocalTrial& t, const LocalResult& r)
{
    const Tensor3 se = eshelby_stress(v, m, cauchy_stress(m, sym(t.grad_u), plastic_strain(v, r.state.p)), t.chi, r.state.p);
    double res = 0.0;
    if (v == Variant::SC_ISO) {
        const int n = int(m.slips.size());
        for (int a = 0; a < n; ++a) {
            const double tau = resolved_shear(se, m.slips[a]);
            const double phi = std::abs(tau) - m.E.mu * m.k2 * r.state.eta[a] - m.sigma0;
            const double dg = r.state.gamma[a] - t.prev.gamma[a];
            res = std::max(res, std::max(phi, 0.0));
            if (dg != 0.0) {
                res = std::max(res, std::abs(phi));
                if (dg * tau < 0.0) res = std::max(res, std::abs(tau));
            }
            res = std::max(res, std::abs(r.state.eta[a] - t.prev.eta[a] - std::abs(dg)));
        }
        return res;
    }
    const double phi = yield_function(v, m, se, r.state.eta_p);
    res = std::max(phi, 0.0);
    const Tensor3 dp = r.state.p - t.prev.p;
    const double ndp = norm(dp);
    if (ndp > 0.0) {
        res = std::max(res, std::abs(phi));
        const Tensor3 S = dev(se);
        const double ns = norm(S);
        res = std::max(res, norm(S - (ns / ndp) * dp));
    }
    return res;
}

OracleComparison compare_with_oracle(Variant v, int samples, std::uint64_t seed, double resolution)
{
    const auto t0 = std::chrono::steady_clock::now();
    OracleComparison c;
    c.variant = v;
    c.samples = samples;
    c.resolution = resolution;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    auto uni = [&](double a, double b) { return a + (b - a) * U(rng); };
    const auto fcc = fcc_slip_family();
    for (int s = 0; s < samples; ++s) {
        MaterialParams m;
        m.E = make_moduli(uni(0.5, 1.5), uni(0.0, 1.5));
        const double mu = m.E.mu;
        m.H_chi = is_single_crystal(v) ? uni(0.5, 2.0) : uni(0.5, 100.0);
        m.k1 = uni(0.5, 2.0);
        m.k2 = uni(0.5, 2.0);
        m.sigma0 = uni(0.05, 0.2);
        m.L_c = 0.1;
        if (v == Variant::SC_ISO) {
            while (true) {
                const int ns = 1 + int(U(rng) * 3.0);
                std::vector<int> pick;
                while (int(pick.size()) < ns) {
                    const int a = int(U(rng) * double(fcc.size()));
                    if (std::find(pick.begin(), pick.end(), a) == pick.end()) pick.push_back(a);
                }
                m.slips.clear();
                for (int a : pick) m.slips.push_back(fcc[a]);
                Eigen::MatrixXd A(ns, ns);
                for (int a = 0; a < ns; ++a)
                    for (int b = 0; b < ns; ++b)
                        A(a, b) = 2.0 * mu * dot(sym(m.slips[a].m), sym(m.slips[b].m)) +
                                  mu * m.H_chi * dot(m.slips[a].m, m.slips[b].m) + (a == b ? mu * m.k2 : 0.0);
                const auto ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A).eigenvalues();
                if (ev.maxCoeff() / ev.minCoeff() <= 20.0) break;
            }
        }
        const double amp = m.sigma0 * uni(0.05, 1.5) / mu;
        LocalTrial t;
        t.grad_u = random_tensor(rng, amp);
        t.chi = random_tensor(rng, 0.5 * amp * std::min(1.0, 2.0 / m.H_chi));
        const int ns = int(m.slips.size());
        t.prev.gamma.assign(ns, 0.0);
        t.prev.eta.assign(ns, 0.0);
        if (v == Variant::SC_ISO) {
            for (int a = 0; a < ns; ++a) {
                t.prev.gamma[a] = uni(-0.3, 0.3) * amp;
                t.prev.eta[a] = std::abs(t.prev.gamma[a]) + uni(0.0, 0.02);
            }
            t.prev.p = assemble_p_from_slips(t.prev.gamma, m.slips);
        } else if (v == Variant::SC_KIN) {
            t.prev.p = dev(random_tensor(rng, 0.3 * amp));
        } else {
            t.prev.p = dev(sym(random_tensor(rng, 0.3 * amp * std::min(1.0, 2.0 / m.H_chi))));
            t.prev.eta_p = uni(0.0, 0.05);
        }
        const LocalResult r = local_return_map(v, m, t);
        const OracleResult o = pointwise_oracle(v, m, t, resolution);
        OracleRow row;
        if (v == Variant::SC_ISO) {
            for (int a = 0; a < ns; ++a) {
                const double dg = r.state.gamma[a] - t.prev.gamma[a];
                row.error = std::max(row.error, std::abs(dg - o.dgamma[a]));
                row.dlambda_return = std::max(row.dlambda_return, r.dlambda[a]);
                row.dlambda_oracle = std::max(row.dlambda_oracle, o.dlambda[a]);
            }
        } else {
            row.dlambda_return = r.dlambda[0];
            row.dlambda_oracle = o.dlambda[0];
            row.error = std::abs(row.dlambda_return - row.dlambda_oracle);
        }
        row.potential_return = local_potential(v, m, t, r.state);
        row.potential_oracle = o.potential;
        row.plastic = row.dlambda_return > 0.0;
        row.kkt = kkt_residual(v, m, t, r) / m.sigma0;
        c.plastic_samples += row.plastic ? 1 : 0;
        c.max_error = std::max(c.max_error, row.error);
        c.max_kkt = std::max(c.max_kkt, row.kkt);
        c.rows.push_back(row);
    }
    c.pass = c.max_error <= resolution && c.max_kkt <= c.kkt_tol;
    c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return c;
}

// ---- relaxed micromorphic stiff limit --------------------------------------

VectorField3 solve_linear_elasticity(const Scenario& sc, double mu, double lambda, double s, const SolverConfig& cfg)
{
    const Grid& g = sc.grid;
    const std::size_t n = g.size();
    const ElasticModuli E{mu, lambda};
    auto K = [&](const VectorField3& u) {
        TensorField3 G = grad_h(g, u);
        parallel_for(n, [&](std::size_t i) { G[i] = apply_ciso(E, sym(G[i])); });
        return grad_h_adjoint(g, G);
    };
    VectorField3 ud(n);
    for (std::size_t i = 0; i < n; ++i) ud[i] = g.on_gamma_d(i) ? sc.dirichlet_value(i, s) : Vec3{0.0, 0.0, 0.0};
    VectorField3 rhs = K(ud);
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) rhs[i][c] = s * sc.body_force[c] - rhs[i][c];
    apply_dirichlet_mask(g, rhs);
    LinOp op = [&](const Vector& x, Vector& y) {
        VectorField3 u;
        unflatten(x, u);
        apply_dirichlet_mask(g, u);
        VectorField3 r = K(u);
        apply_dirichlet_mask(g, r);
        y = flatten(r);
    };
    Vector x(3 * n, 0.0);
    const CgResult r = conjugate_gradient(op, flatten(rhs), x, cfg.tol_cg, cfg.max_cg_iters);
    if (!r.converged) throw SolverError("elastic reference CG did not converge");
    VectorField3 u;
    unflatten(x, u);
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) u[i][c] += ud[i][c];
    return u;
}

StiffLimitReport rm_stiff_limit_check(const Scenario& base, const SolverConfig& cfg, const std::vector<double>& scales)
{
    if (base.variant != Variant::RM_ELASTIC) throw std::invalid_argument("stiff limit needs an RM_ELASTIC scenario");
    StiffLimitReport r;
    const VectorField3 target = solve_linear_elasticity(base, base.params.mu_micro, base.params.lambda_micro, 1.0, cfg);
    const double nt = norm_l2(base.grid, target);
    FieldState st;
    for (double t : scales) {
        Scenario sc = base;
        sc.params.mu_e *= t;
        sc.params.mu_c *= t;
        sc.params.lambda_e *= t;
        LinearSolveInfo info;
        solve_rm(sc, 1.0, st, cfg, &info);
        VectorField3 d(target.size());
        for (std::size_t i = 0; i < d.size(); ++i)
            for (int c = 0; c < 3; ++c) d[i][c] = st.u[i][c] - target[i][c];
        r.rows.push_back({t, norm_l2(base.grid, d) / nt, info.iterations});
    }
    r.monotone = !r.rows.empty();
    for (std::size_t i = 1; i < r.rows.size(); ++i)
        if (!(r.rows[i].discrepancy < r.rows[i - 1].discrepancy)) r.monotone = false;
    r.final_discrepancy = r.rows.empty() ? 0.0 : r.rows.back().discrepancy;
    return r;
}

}  // namespace microcurl
