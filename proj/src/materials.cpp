#include "microcurl/materials.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include <Eigen/Dense>

namespace microcurl {

const char* variant_name(Variant v)
{
    switch (v) {
        case Variant::SC_ISO: return "SC_ISO";
        case Variant::SC_KIN: return "SC_KIN";
        case Variant::PC_ISO: return "PC_ISO";
        case Variant::PC_KIN: return "PC_KIN";
        case Variant::RM_ELASTIC: return "RM_ELASTIC";
    }
    return "?";
}

std::optional<Variant> parse_variant(std::string_view s)
{
    for (Variant v : {Variant::SC_ISO, Variant::SC_KIN, Variant::PC_ISO, Variant::PC_KIN, Variant::RM_ELASTIC})
        if (s == variant_name(v)) return v;
    return std::nullopt;
}

bool is_single_crystal(Variant v) { return v == Variant::SC_ISO || v == Variant::SC_KIN; }
bool is_isotropic(Variant v) { return v == Variant::SC_ISO || v == Variant::PC_ISO; }
bool is_plastic(Variant v) { return v != Variant::RM_ELASTIC; }
int slip_count(Variant v, std::size_t nsystems) { return v == Variant::SC_ISO ? int(nsystems) : 0; }

Validation validate(Variant v, const MaterialParams& m)
{
    Validation r;
    if (v == Variant::RM_ELASTIC) {
        if (!(m.mu_e > 0.0 && 2.0 * m.mu_e + 3.0 * m.lambda_e > 0.0))
            r.errors.push_back("relaxed micromorphic moduli must satisfy mu_e > 0 and 2*mu_e + 3*lambda_e > 0");
        if (m.mu_c < 0.0) r.errors.push_back("mu_c must be >= 0");
        if (!(m.mu_micro > 0.0 && 2.0 * m.mu_micro + 3.0 * m.lambda_micro > 0.0))
            r.errors.push_back("micro moduli must satisfy mu_micro > 0 and 2*mu_micro + 3*lambda_micro > 0");
        if (m.L_c < 0.0) r.errors.push_back("L_c must be >= 0");
        return r;
    }
    if (!m.E.valid()) r.errors.push_back("Lame moduli must satisfy mu > 0 and 3*lambda + 2*mu > 0");
    if (!(m.H_chi > 0.0)) r.errors.push_back("H_chi must be > 0");
    if (!(m.sigma0 > 0.0)) r.errors.push_back("sigma0 must be > 0");
    if (m.L_c < 0.0) r.errors.push_back("L_c must be >= 0");
    if (m.k1 < 0.0) r.errors.push_back("k1 must be >= 0");
    if (m.k2 < 0.0) r.errors.push_back("k2 must be >= 0");
    if (v == Variant::SC_ISO && m.slips.empty()) r.errors.push_back("SC_ISO needs at least one slip system");
    if (is_isotropic(v) && m.k2 == 0.0)
        r.warnings.push_back("k2 = 0: perfect plasticity, hardening is necessary for uniqueness of the displacement");
    if (!is_isotropic(v) && m.k1 == 0.0)
        r.warnings.push_back("k1 = 0: perfect plasticity, hardening is necessary for uniqueness of the displacement");
    return r;
}

Tensor3 plastic_strain(Variant v, const Tensor3& p)
{
    return is_single_crystal(v) ? sym(p) : p;
}

Tensor3 cauchy_stress(const MaterialParams& m, const Tensor3& sym_grad_u, const Tensor3& eps_p)
{
    Tensor3 s = 2.0 * m.E.mu * (sym_grad_u - eps_p);
    const double v = m.E.lambda * tr(sym_grad_u);
    for (int i = 0; i < 3; ++i) s(i, i) += v;
    return s;
}

Tensor3 eshelby_stress(Variant v, const MaterialParams& m, const Tensor3& sigma, const Tensor3& chi, const Tensor3& p)
{
    const double mu = m.E.mu;
    switch (v) {
        case Variant::SC_ISO: return sigma + (mu * m.H_chi) * (chi - p);
        case Variant::SC_KIN: return sigma + (mu * m.H_chi) * (chi - p) - (mu * m.k1) * sym(p);
        case Variant::PC_ISO: return sigma + (mu * m.H_chi) * (sym(chi) - p);
        case Variant::PC_KIN: return sigma + (mu * m.H_chi) * (sym(chi) - p) - (mu * m.k1) * p;
        case Variant::RM_ELASTIC: break;
    }
    throw std::invalid_argument("RM_ELASTIC has no plastic flow and no Eshelby stress");
}

double rm_elastic_energy_terms(const MaterialParams& m, const Tensor3& grad_u, const Tensor3& chi, const Tensor3& curl_chi)
{
    const Tensor3 e = grad_u - chi;
    const Tensor3 se = sym(e), ke = skew(e), sc = sym(chi);
    const double te = tr(e), tc = tr(chi);
    return m.mu_e * dot(se, se) + m.mu_c * dot(ke, ke) + 0.5 * m.lambda_e * te * te + m.mu_micro * dot(sc, sc) +
           0.5 * m.lambda_micro * tc * tc + m.mu_e * 0.5 * m.L_c * m.L_c * dot(curl_chi, curl_chi);
}

EnergyParts free_energy_parts(Variant v, const MaterialParams& m, const PointState& s)
{
    EnergyParts e;
    if (v == Variant::RM_ELASTIC) {
        e.elastic = rm_elastic_energy_terms(m, s.grad_u, s.chi, s.curl_chi);
        return e;
    }
    const PlasticPoint& pl = s.plastic;
    const double mu = m.E.mu;
    if (v == Variant::SC_ISO) {
        if (pl.gamma.size() != m.slips.size() || pl.eta.size() != m.slips.size())
            throw StateMismatch("slip state does not match the slip family");
        const Tensor3 pa = assemble_p_from_slips(pl.gamma, m.slips);
        if (max_abs(pa - pl.p) > 1e-12 * (1.0 + max_abs(pa))) throw StateMismatch("p differs from the slip sum");
    } else if (!is_single_crystal(v)) {
        if (max_abs(pl.p - transpose(pl.p)) > 1e-14 * (1.0 + max_abs(pl.p)))
            throw StateMismatch("polycrystal plastic strain must be symmetric");
    }
    const Tensor3 eps_p = plastic_strain(v, pl.p);
    const Tensor3 ee = sym(s.grad_u) - eps_p;
    e.elastic = 0.5 * dot(ee, apply_ciso(m.E, ee));
    const Tensor3 d = is_single_crystal(v) ? pl.p - s.chi : eps_p - sym(s.chi);
    e.micro = 0.5 * mu * m.H_chi * dot(d, d);
    e.defect = 0.5 * mu * m.L_c * m.L_c * dot(s.curl_chi, s.curl_chi);
    switch (v) {
        case Variant::SC_ISO: {
            double q = 0.0;
            for (double x : pl.eta) q += x * x;
            e.hardening = 0.5 * mu * m.k2 * q;
            break;
        }
        case Variant::PC_ISO: e.hardening = 0.5 * mu * m.k2 * pl.eta_p * pl.eta_p; break;
        case Variant::SC_KIN:
        case Variant::PC_KIN: e.hardening = 0.5 * mu * m.k1 * dot(eps_p, eps_p); break;
        case Variant::RM_ELASTIC: break;
    }
    return e;
}

double free_energy_density(Variant v, const MaterialParams& m, const PointState& s)
{
    return free_energy_parts(v, m, s).total();
}

std::vector<double> yield_function_slip(const MaterialParams& m, std::span<const double> tau_e, std::span<const double> eta)
{
    if (tau_e.size() != eta.size()) throw std::invalid_argument("slip count mismatch");
    std::vector<double> phi(tau_e.size());
    for (std::size_t a = 0; a < phi.size(); ++a) phi[a] = std::abs(tau_e[a]) - m.E.mu * m.k2 * eta[a] - m.sigma0;
    return phi;
}

double yield_function(Variant v, const MaterialParams& m, const Tensor3& sigma_e, double eta_p)
{
    const double n = norm(dev(sigma_e));
    if (v == Variant::PC_ISO) return n - m.E.mu * m.k2 * eta_p - m.sigma0;
    return n - m.sigma0;
}

DissipationValue dissipation_density(Variant v, const MaterialParams& m, const Tensor3& q, double beta)
{
    const double nq = norm(q);
    if (v == Variant::PC_ISO && nq > beta) return {false, 0.0};
    return {true, m.sigma0 * nq};
}

DissipationValue dissipation_density_slip(const MaterialParams& m, std::span<const double> q, std::span<const double> beta)
{
    if (q.size() != beta.size()) throw std::invalid_argument("slip count mismatch");
    double s = 0.0;
    for (std::size_t a = 0; a < q.size(); ++a) {
        if (std::abs(q[a]) > beta[a]) return {false, 0.0};
        s += m.sigma0 * std::abs(q[a]);
    }
    return {true, s};
}

namespace {

LocalResult return_pc(Variant v, const MaterialParams& m, const LocalTrial& t)
{
    const double mu = m.E.mu;
    const bool iso = v == Variant::PC_ISO;
    const Tensor3& eps_n = t.prev.p;
    const Tensor3 sg = sym(t.grad_u);
    const Tensor3 s_tr = eshelby_stress(v, m, cauchy_stress(m, sg, eps_n), t.chi, eps_n);
    const Tensor3 dev_tr = dev(s_tr);
    const double nd = norm(dev_tr);
    const double f = iso ? nd - mu * m.k2 * t.prev.eta_p - m.sigma0 : nd - m.sigma0;

    LocalResult r;
    r.state = t.prev;
    double dl = 0.0;
    if (f > 0.0) {
        assert(nd > 0.0);
        const double a = 2.0 * mu + mu * m.H_chi + mu * (iso ? m.k2 : m.k1);
        dl = f / a;
        r.state.p = eps_n + (dl / nd) * dev_tr;
        if (iso) r.state.eta_p = t.prev.eta_p + dl;
    }
    r.dlambda = {dl};
    r.sigma_e = eshelby_stress(v, m, cauchy_stress(m, sg, r.state.p), t.chi, r.state.p);
    r.phi_max = yield_function(v, m, r.sigma_e, r.state.eta_p);
    r.complementarity = std::abs(dl * r.phi_max);
    return r;
}

LocalResult return_sc_kin(const MaterialParams& m, const LocalTrial& t)
{
    const Variant v = Variant::SC_KIN;
    const double mu = m.E.mu;
    const Tensor3& p_n = t.prev.p;
    const Tensor3 sg = sym(t.grad_u);
    const Tensor3 s_tr = eshelby_stress(v, m, cauchy_stress(m, sg, sym(p_n)), t.chi, p_n);
    const Tensor3 d = dev(s_tr);
    const Tensor3 ds = sym(d), dk = skew(d);
    const double ns2 = dot(ds, ds), nk2 = dot(dk, dk);
    const double s0 = m.sigma0;

    LocalResult r;
    r.state = t.prev;
    double rr = 0.0;
    int it = 0;
    if (std::sqrt(ns2 + nk2) > s0) {
        const double as = 2.0 * mu + mu * m.H_chi + mu * m.k1;
        const double ak = mu * m.H_chi;
        auto F = [&](double x) {
            const double u = as * x + s0, w = ak * x + s0;
            return ns2 / (u * u) + nk2 / (w * w) - 1.0;
        };
        auto dF = [&](double x) {
            const double u = as * x + s0, w = ak * x + s0;
            return -2.0 * as * ns2 / (u * u * u) - 2.0 * ak * nk2 / (w * w * w);
        };
        double lo = 0.0, hi = std::sqrt(ns2 + nk2) / std::min(as, ak);
        rr = 0.5 * (lo + hi);
        for (it = 0; it < 200; ++it) {
            const double fv = F(rr);
            if (fv > 0.0) lo = rr; else hi = rr;
            double next = rr - fv / dF(rr);
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            if (std::abs(next - rr) <= 1e-16 * std::max(1.0, rr) || hi - lo <= 1e-16 * hi) {
                rr = next;
                break;
            }
            rr = next;
        }
        const Tensor3 dp = (rr / (as * rr + s0)) * ds + (rr / (ak * rr + s0)) * dk;
        r.state.p = p_n + dp;
        rr = norm(dp);
    }
    r.iterations = it;
    r.dlambda = {rr};
    r.sigma_e = eshelby_stress(v, m, cauchy_stress(m, sg, sym(r.state.p)), t.chi, r.state.p);
    r.phi_max = yield_function(v, m, r.sigma_e);
    r.complementarity = std::abs(rr * r.phi_max);
    return r;
}

// Minimizes 1/2 x'(A + k I)x - b'x + sum r_a |x_a| by Gauss-Seidel sweeps,
// with an exact solve on the current support once it is identified.
bool polish(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& rad, double k, Eigen::VectorXd& x)
{
    const int n = int(b.size());
    std::vector<int> act;
    for (int a = 0; a < n; ++a)
        if (x[a] != 0.0) act.push_back(a);
    if (act.empty()) return false;
    const int na = int(act.size());
    Eigen::MatrixXd As(na, na);
    Eigen::VectorXd bs(na), sg(na);
    for (int i = 0; i < na; ++i) {
        sg[i] = x[act[i]] > 0.0 ? 1.0 : -1.0;
        bs[i] = b[act[i]] - sg[i] * rad[act[i]];
        for (int j = 0; j < na; ++j) As(i, j) = A(act[i], act[j]) + (i == j ? k : 0.0);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(As);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
    const Eigen::VectorXd xs = ldlt.solve(bs);
    if ((As * xs - bs).norm() > 1e-12 * (1.0 + bs.norm())) return false;
    for (int i = 0; i < na; ++i)
        if (xs[i] * sg[i] <= 0.0) return false;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < na; ++i) y[act[i]] = xs[i];
    const Eigen::VectorXd tau = b - A * y - k * y;
    for (int a = 0; a < n; ++a)
        if (y[a] == 0.0 && std::abs(tau[a]) > rad[a] * (1.0 + 1e-13)) return false;
    x = y;
    return true;
}

LocalResult return_sc_iso(const MaterialParams& m, const LocalTrial& t, const LocalOptions& opt)
{
    const Variant v = Variant::SC_ISO;
    const double mu = m.E.mu;
    const int n = int(m.slips.size());
    if (int(t.prev.gamma.size()) != n || int(t.prev.eta.size()) != n)
        throw StateMismatch("slip state does not match the slip family");
    const Tensor3& p_n = t.prev.p;
    const Tensor3 sg = sym(t.grad_u);
    const Tensor3 s_tr = eshelby_stress(v, m, cauchy_stress(m, sg, sym(p_n)), t.chi, p_n);

    Eigen::MatrixXd A(n, n);
    Eigen::VectorXd b(n), rad(n), x = Eigen::VectorXd::Zero(n);
    for (int a = 0; a < n; ++a) {
        const Tensor3& ma = m.slips[a].m;
        b[a] = dot(s_tr, ma);
        rad[a] = m.sigma0 + mu * m.k2 * t.prev.eta[a];
        for (int c = 0; c < n; ++c) {
            const Tensor3& mc = m.slips[c].m;
            A(a, c) = 2.0 * mu * dot(sym(ma), sym(mc)) + mu * m.H_chi * dot(ma, mc);
        }
    }
    const double k = mu * m.k2;

    int it = 0;
    double change = 0.0;
    bool done = true;
    for (int a = 0; a < n; ++a)
        if (std::abs(b[a]) > rad[a]) done = false;
    while (!done) {
        if (it >= opt.max_local_iters)
            throw LocalSolveError("slip sweep did not converge, last change " + std::to_string(change), change);
        ++it;
        change = 0.0;
        for (int a = 0; a < n; ++a) {
            const double c = b[a] - A.row(a).dot(x) + A(a, a) * x[a];
            const double mag = std::max(std::abs(c) - rad[a], 0.0);
            const double xn = mag == 0.0 ? 0.0 : std::copysign(mag, c) / (A(a, a) + k);
            change = std::max(change, std::abs(xn - x[a]));
            x[a] = xn;
        }
        if (change <= opt.tol) done = true;
        else if (polish(A, b, rad, k, x)) done = true;
    }

    LocalResult r;
    r.state = t.prev;
    r.iterations = it;
    r.dlambda.assign(n, 0.0);
    for (int a = 0; a < n; ++a) {
        r.state.gamma[a] += x[a];
        r.state.eta[a] += std::abs(x[a]);
        r.dlambda[a] = std::abs(x[a]);
    }
    r.state.p = assemble_p_from_slips(r.state.gamma, m.slips);
    r.sigma_e = eshelby_stress(v, m, cauchy_stress(m, sg, sym(r.state.p)), t.chi, r.state.p);
    std::vector<double> tau(n);
    for (int a = 0; a < n; ++a) tau[a] = resolved_shear(r.sigma_e, m.slips[a]);
    const auto phi = yield_function_slip(m, tau, r.state.eta);
    r.phi_max = -m.sigma0;
    for (int a = 0; a < n; ++a) {
        r.phi_max = std::max(r.phi_max, phi[a]);
        r.complementarity = std::max(r.complementarity, std::abs(r.dlambda[a] * phi[a]));
    }
    return r;
}

}  // namespace

LocalResult local_return_map(Variant v, const MaterialParams& m, const LocalTrial& t, const LocalOptions& opt)
{
    switch (v) {
        case Variant::PC_ISO:
        case Variant::PC_KIN: return return_pc(v, m, t);
        case Variant::SC_KIN: return return_sc_kin(m, t);
        case Variant::SC_ISO: return return_sc_iso(m, t, opt);
        case Variant::RM_ELASTIC: break;
    }
    throw std::invalid_argument("RM_ELASTIC has no return map");
}

}  // namespace microcurl
