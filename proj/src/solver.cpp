#include "microcurl/solver.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <random>
#include <sstream>

namespace microcurl {

double Scenario::load_level(int n) const
{
    if (!load_curve.empty()) return load_curve.at(std::size_t(n));
    return steps > 0 ? double(n) / double(steps) : 0.0;
}

Vec3 Scenario::dirichlet_value(std::size_t node, double s) const
{
    if (affine_dirichlet) {
        const Vec3 x = grid.coords(node);
        Vec3 v{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) v[i] += s * affine_gradient(i, j) * x[j];
        return v;
    }
    for (int f = 0; f < 6; ++f)
        if (grid.gamma_d[f] && grid.on_face(node, Face(f)))
            return {s * face_displacement[f][0], s * face_displacement[f][1], s * face_displacement[f][2]};
    return {0.0, 0.0, 0.0};
}

FieldState FieldState::zeros(const Scenario& sc)
{
    FieldState st;
    st.u.assign(sc.grid.size(), Vec3{0.0, 0.0, 0.0});
    st.chi.assign(sc.grid.size(), Tensor3{});
    st.cells = CellState::zeros(sc.grid, slip_count(sc.variant, sc.params.slips.size()));
    return st;
}

namespace {

PlasticPoint point_of(const CellState& c, std::size_t i)
{
    PlasticPoint pt;
    pt.p = c.p[i];
    if (c.nslip > 0) {
        pt.gamma.assign(c.gamma.begin() + i * c.nslip, c.gamma.begin() + (i + 1) * c.nslip);
        pt.eta.assign(c.eta.begin() + i * c.nslip, c.eta.begin() + (i + 1) * c.nslip);
    }
    pt.eta_p = c.eta_p[i];
    return pt;
}

void store_point(CellState& c, std::size_t i, const PlasticPoint& pt)
{
    c.p[i] = pt.p;
    for (int a = 0; a < c.nslip; ++a) {
        c.gamma[i * c.nslip + a] = pt.gamma[a];
        c.eta[i * c.nslip + a] = pt.eta[a];
    }
    c.eta_p[i] = pt.eta_p;
}

bool chi_is_l2(const Scenario& sc) { return sc.params.L_c == 0.0; }

VectorField3 dirichlet_field(const Scenario& sc, double s)
{
    VectorField3 d(sc.grid.size(), Vec3{0.0, 0.0, 0.0});
    parallel_for(d.size(), [&](std::size_t i) {
        if (sc.grid.on_gamma_d(i)) d[i] = sc.dirichlet_value(i, s);
    });
    return d;
}

// grad_h^T C grad_h u
VectorField3 apply_elastic(const Grid& g, const ElasticModuli& e, const VectorField3& u)
{
    TensorField3 G = grad_h(g, u);
    parallel_for(G.size(), [&](std::size_t i) { G[i] = apply_ciso(e, G[i]); });
    return grad_h_adjoint(g, G);
}

TensorField3 apply_chi_operator(const Scenario& sc, const SolverConfig& cfg, const TensorField3& x)
{
    const Grid& g = sc.grid;
    const double mu = sc.params.E.mu;
    const double a = mu * sc.params.L_c * sc.params.L_c;
    const double b = mu * sc.params.H_chi;
    const bool pc = !is_single_crystal(sc.variant);
    TensorField3 y = curl_h_adjoint(g, curl_h(g, x));
    parallel_for(y.size(), [&](std::size_t i) {
        Tensor3 t = a * y[i];
        t += b * (pc ? sym(x[i]) : x[i]);
        if (cfg.reg_eps > 0.0) t += cfg.reg_eps * x[i];
        y[i] = t;
    });
    apply_tangential_bc(g, y);
    return y;
}

}  // namespace

VectorField3 solve_displacement(const Scenario& sc, const CellState& cells, double s, const VectorField3& u_guess,
                                const SolverConfig& cfg, LinearSolveInfo* info)
{
    const Grid& g = sc.grid;
    if (!g.has_gamma_d()) throw SolverError("displacement problem needs a nonempty Gamma_D");
    const ElasticModuli& e = sc.params.E;
    const VectorField3 ud = dirichlet_field(sc, s);

    TensorField3 ceps(g.size());
    parallel_for(g.size(), [&](std::size_t i) { ceps[i] = apply_ciso(e, plastic_strain(sc.variant, cells.p[i])); });
    VectorField3 rhs = grad_h_adjoint(g, ceps);
    const VectorField3 kud = apply_elastic(g, e, ud);
    parallel_for(g.size(), [&](std::size_t i) {
        for (int c = 0; c < 3; ++c) rhs[i][c] += s * sc.body_force[c] - kud[i][c];
    });
    apply_dirichlet_mask(g, rhs);

    VectorField3 x0 = u_guess.size() == g.size() ? u_guess : VectorField3(g.size(), Vec3{0.0, 0.0, 0.0});
    apply_dirichlet_mask(g, x0);
    Vector x = flatten(x0);
    VectorField3 tmp;
    LinOp op = [&](const Vector& in, Vector& out) {
        unflatten(in, tmp);
        VectorField3 y = apply_elastic(g, e, tmp);
        apply_dirichlet_mask(g, y);
        out = flatten(y);
    };
    const CgResult r = conjugate_gradient(op, flatten(rhs), x, cfg.tol_cg, cfg.max_cg_iters);
    if (info) {
        info->iterations = r.iterations;
        info->relative_residual = r.rhs_norm > 0.0 ? r.residual / r.rhs_norm : 0.0;
    }
    if (!r.converged) {
        std::ostringstream os;
        os << "displacement CG did not converge after " << r.iterations << " iterations (relative residual "
           << r.residual / r.rhs_norm << ")";
        throw SolverError(os.str());
    }
    VectorField3 u;
    unflatten(x, u);
    parallel_for(g.size(), [&](std::size_t i) {
        for (int c = 0; c < 3; ++c) u[i][c] += ud[i][c];
    });
    return u;
}

TensorField3 solve_microdistortion(const Scenario& sc, const CellState& cells, const TensorField3& chi_guess,
                                   const SolverConfig& cfg, LinearSolveInfo* info)
{
    const Grid& g = sc.grid;
    const bool pc = !is_single_crystal(sc.variant);
    if (chi_is_l2(sc)) {
        // no Curl energy: pointwise minimizer, trace condition void
        TensorField3 chi(g.size());
        parallel_for(g.size(), [&](std::size_t i) {
            chi[i] = pc ? (sc.params.E.mu * sc.params.H_chi / (sc.params.E.mu * sc.params.H_chi + cfg.reg_eps)) * cells.p[i]
                        : cells.p[i];
        });
        if (info) *info = {};
        return chi;
    }
    const double b = sc.params.E.mu * sc.params.H_chi;
    TensorField3 rhs(g.size());
    parallel_for(g.size(), [&](std::size_t i) { rhs[i] = b * (pc ? plastic_strain(sc.variant, cells.p[i]) : cells.p[i]); });
    apply_tangential_bc(g, rhs);

    TensorField3 x0 = chi_guess.size() == g.size() ? chi_guess : TensorField3(g.size());
    apply_tangential_bc(g, x0);
    Vector x = flatten(x0);
    TensorField3 tmp;
    LinOp op = [&](const Vector& in, Vector& out) {
        unflatten(in, tmp);
        out = flatten(apply_chi_operator(sc, cfg, tmp));
    };
    const CgResult r = conjugate_gradient(op, flatten(rhs), x, cfg.tol_cg, cfg.max_cg_iters, true);
    if (info) {
        info->iterations = r.iterations;
        info->relative_residual = r.rhs_norm > 0.0 ? r.residual / r.rhs_norm : 0.0;
        info->ritz_min = r.ritz_min;
        info->ritz_max = r.ritz_max;
    }
    if (!r.converged) {
        std::ostringstream os;
        os << "microdistortion CG did not converge after " << r.iterations << " iterations (relative residual "
           << r.residual / r.rhs_norm << ", smallest Ritz value " << r.ritz_min << ")";
        if (pc && cfg.reg_eps == 0.0) os << "; operator is near-singular, set reg_eps > 0 (e.g. 1e-10*mu*H_chi)";
        throw SolverError(os.str());
    }
    TensorField3 chi;
    unflatten(x, chi);
    return chi;
}

CellState plastic_update_sweep(const Scenario& sc, const VectorField3& u, const TensorField3& chi, const CellState& prev,
                               const SolverConfig& cfg, SweepStats* stats)
{
    const Grid& g = sc.grid;
    const TensorField3 G = grad_h(g, u);
    CellState next = prev;
    std::vector<double> phi(g.size()), comp(g.size());
    std::vector<int> iters(g.size());
    std::string error;
    LocalOptions opt;
    opt.max_local_iters = cfg.max_local_iters;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < std::ptrdiff_t(g.size()); ++ii) {
        const std::size_t i = std::size_t(ii);
        try {
            LocalTrial t{G[i], chi[i], point_of(prev, i)};
            const LocalResult r = local_return_map(sc.variant, sc.params, t, opt);
            store_point(next, i, r.state);
            phi[i] = r.phi_max;
            comp[i] = r.complementarity;
            iters[i] = r.iterations;
        } catch (const std::exception& ex) {
#pragma omp critical(microcurl_sweep_error)
            {
                if (error.empty()) {
                    const auto q = g.ijk(i);
                    std::ostringstream os;
                    os << "local return map failed at cell (" << q[0] << "," << q[1] << "," << q[2] << "): " << ex.what();
                    error = os.str();
                }
            }
        }
    }
    if (!error.empty()) throw SolverError(error);
    if (stats) {
        stats->max_phi = *std::max_element(phi.begin(), phi.end());
        stats->max_complementarity = *std::max_element(comp.begin(), comp.end());
        stats->max_local_iterations = *std::max_element(iters.begin(), iters.end());
    }
    return next;
}

EnergyParts total_energy(const Scenario& sc, const FieldState& st)
{
    const Grid& g = sc.grid;
    const TensorField3 G = grad_h(g, st.u);
    const TensorField3 C = curl_h(g, st.chi);
    std::vector<EnergyParts> parts(g.size());
    parallel_for(g.size(), [&](std::size_t i) {
        PointState ps{G[i], st.chi[i], C[i], point_of(st.cells, i)};
        parts[i] = free_energy_parts(sc.variant, sc.params, ps);
    });
    const double w = g.cell_volume();
    EnergyParts e;
    e.elastic = w * deterministic_sum(g.size(), [&](std::size_t i) { return parts[i].elastic; });
    e.micro = w * deterministic_sum(g.size(), [&](std::size_t i) { return parts[i].micro; });
    e.defect = w * deterministic_sum(g.size(), [&](std::size_t i) { return parts[i].defect; });
    e.hardening = w * deterministic_sum(g.size(), [&](std::size_t i) { return parts[i].hardening; });
    return e;
}

TensorField3 eshelby_field(const Scenario& sc, const FieldState& st)
{
    const Grid& g = sc.grid;
    const TensorField3 G = grad_h(g, st.u);
    TensorField3 out(g.size());
    parallel_for(g.size(), [&](std::size_t i) {
        const Tensor3& p = st.cells.p[i];
        const Tensor3 sigma = cauchy_stress(sc.params, sym(G[i]), plastic_strain(sc.variant, p));
        out[i] = eshelby_stress(sc.variant, sc.params, sigma, st.chi[i], p);
    });
    return out;
}

double microbalance_residual(const Scenario& sc, const FieldState& st, const SolverConfig& cfg)
{
    if (chi_is_l2(sc) || !is_plastic(sc.variant)) return 0.0;
    const Grid& g = sc.grid;
    const double b = sc.params.E.mu * sc.params.H_chi;
    TensorField3 r = apply_chi_operator(sc, cfg, st.chi);
    TensorField3 rhs(g.size());
    parallel_for(g.size(), [&](std::size_t i) { rhs[i] = b * st.cells.p[i]; });
    apply_tangential_bc(g, rhs);
    parallel_for(g.size(), [&](std::size_t i) { r[i] -= rhs[i]; });
    const double nr = norm_l2(g, rhs);
    return nr > 0.0 ? norm_l2(g, r) / nr : norm_l2(g, r);
}


namespace {

Vector concat(const VectorField3& u, const TensorField3& x)
{
    Vector a = flatten(u), b = flatten(x);
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

void split(const Vector& v, std::size_t n, VectorField3& u, TensorField3& x)
{
    unflatten(Vector(v.begin(), v.begin() + 3 * n), u);
    unflatten(Vector(v.begin() + 3 * n, v.end()), x);
}

Tensor3 rm_relative_stress(const MaterialParams& m, const Tensor3& e)
{
    Tensor3 t = 2.0 * m.mu_e * sym(e) + 2.0 * m.mu_c * skew(e);
    const double v = m.lambda_e * tr(e);
    for (int i = 0; i < 3; ++i) t(i, i) += v;
    return t;
}

void apply_rm(const Scenario& sc, const VectorField3& u, const TensorField3& chi, VectorField3& ou, TensorField3& oc)
{
    const Grid& g = sc.grid;
    const MaterialParams& m = sc.params;
    const TensorField3 G = grad_h(g, u);
    const bool curl = m.L_c > 0.0;
    const TensorField3 cc = curl ? curl_h_adjoint(g, curl_h(g, chi)) : TensorField3{};
    const double a = m.mu_e * m.L_c * m.L_c;
    TensorField3 T(g.size());
    oc.resize(g.size());
    parallel_for(g.size(), [&](std::size_t i) {
        T[i] = rm_relative_stress(m, G[i] - chi[i]);
        Tensor3 M = 2.0 * m.mu_micro * sym(chi[i]);
        const double v = m.lambda_micro * tr(chi[i]);
        for (int k = 0; k < 3; ++k) M(k, k) += v;
        oc[i] = M - T[i];
        if (curl) oc[i] += a * cc[i];
    });
    ou = grad_h_adjoint(g, T);
}

// dE/du on Gamma_D nodes, external body force elsewhere; both scaled by h^3
VectorField3 nodal_forces(const Scenario& sc, const FieldState& st, double s)
{
    const Grid& g = sc.grid;
    const TensorField3 G = grad_h(g, st.u);
    TensorField3 S(g.size());
    parallel_for(g.size(), [&](std::size_t i) {
        if (sc.variant == Variant::RM_ELASTIC) S[i] = rm_relative_stress(sc.params, G[i] - st.chi[i]);
        else S[i] = cauchy_stress(sc.params, sym(G[i]), plastic_strain(sc.variant, st.cells.p[i]));
    });
    VectorField3 r = grad_h_adjoint(g, S);
    const double w = g.cell_volume();
    parallel_for(g.size(), [&](std::size_t i) {
        for (int c = 0; c < 3; ++c) r[i][c] = g.on_gamma_d(i) ? w * r[i][c] : w * s * sc.body_force[c];
    });
    return r;
}

double dissipation_between(const Scenario& sc, const CellState& a, const CellState& b)
{
    const Grid& g = sc.grid;
    const double s0 = sc.params.sigma0;
    return g.cell_volume() * deterministic_sum(g.size(), [&](std::size_t i) {
        if (a.nslip > 0) {
            double v = 0.0;
            for (int k = 0; k < a.nslip; ++k) v += s0 * std::abs(b.gamma[i * a.nslip + k] - a.gamma[i * a.nslip + k]);
            return v;
        }
        return s0 * norm(b.p[i] - a.p[i]);
    });
}

double body_work(const Scenario& sc, const VectorField3& u, double s)
{
    const Grid& g = sc.grid;
    return g.cell_volume() * s * deterministic_sum(g.size(), [&](std::size_t i) { return dot(sc.body_force, u[i]); });
}

// <Sigma_E, dp> + g . d eta summed over cells, forces taken from (se, ref)
double driving_work(const Scenario& sc, const TensorField3& se, const CellState& ref, const CellState& a, const CellState& b)
{
    const Grid& g = sc.grid;
    const double mk = sc.params.E.mu * sc.params.k2;
    const int ns = a.nslip;
    return g.cell_volume() * deterministic_sum(g.size(), [&](std::size_t i) {
        double v = dot(se[i], b.p[i] - a.p[i]);
        if (sc.variant == Variant::SC_ISO)
            for (int k = 0; k < ns; ++k) v -= mk * ref.eta[i * ns + k] * (b.eta[i * ns + k] - a.eta[i * ns + k]);
        else if (sc.variant == Variant::PC_ISO)
            v -= mk * ref.eta_p[i] * (b.eta_p[i] - a.eta_p[i]);
        return v;
    });
}

double sq(const Vector& a) { return vdot(a, a); }

Vector plastic_vector(const CellState& c)
{
    Vector v = flatten(c.p);
    v.insert(v.end(), c.gamma.begin(), c.gamma.end());
    v.insert(v.end(), c.eta.begin(), c.eta.end());
    v.insert(v.end(), c.eta_p.begin(), c.eta_p.end());
    return v;
}

double block_change(const Vector& a, const Vector& b, double floor)
{
    Vector d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = b[i] - a[i];
    const double nd = std::sqrt(sq(d));
    if (nd == 0.0) return 0.0;
    return nd / std::max(std::sqrt(sq(b)), floor);
}

void randomize_start(const Scenario& sc, const SolverConfig& cfg, int step, CellState& z, VectorField3& u, TensorField3& chi)
{
    std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull + std::uint64_t(step));
    std::uniform_real_distribution<double> d(-cfg.init_amplitude, cfg.init_amplitude);
    const Grid& g = sc.grid;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (sc.variant == Variant::SC_ISO) {
            for (int k = 0; k < z.nslip; ++k) z.gamma[i * z.nslip + k] += d(rng);
            z.p[i] = assemble_p_from_slips(std::span<const double>(z.gamma.data() + i * z.nslip, z.nslip), sc.params.slips);
        } else {
            Tensor3 r;
            for (double& v : r.a) v = d(rng);
            z.p[i] += sc.variant == Variant::SC_KIN ? dev(r) : dev(sym(r));
        }
        if (!g.on_gamma_d(i))
            for (double& v : u[i]) v += d(rng);
        for (double& v : chi[i].a) v += d(rng);
    }
    apply_tangential_bc(g, chi);
}

}  // namespace

void solve_rm(const Scenario& sc, double s, FieldState& st, const SolverConfig& cfg, LinearSolveInfo* info)
{
    const Grid& g = sc.grid;
    if (!g.has_gamma_d()) throw SolverError("displacement problem needs a nonempty Gamma_D");
    const std::size_t n = g.size();
    const bool mask_chi = sc.params.L_c > 0.0;
    const VectorField3 ud = dirichlet_field(sc, s);
    VectorField3 ru;
    TensorField3 rc;
    apply_rm(sc, ud, TensorField3(n), ru, rc);
    parallel_for(n, [&](std::size_t i) {
        for (int c = 0; c < 3; ++c) ru[i][c] = s * sc.body_force[c] - ru[i][c];
        rc[i] = -rc[i];
    });
    apply_dirichlet_mask(g, ru);
    if (mask_chi) apply_tangential_bc(g, rc);

    VectorField3 u0 = st.u.size() == n ? st.u : VectorField3(n, Vec3{0.0, 0.0, 0.0});
    TensorField3 c0 = st.chi.size() == n ? st.chi : TensorField3(n);
    apply_dirichlet_mask(g, u0);
    if (mask_chi) apply_tangential_bc(g, c0);
    Vector x = concat(u0, c0);
    VectorField3 tu, ou;
    TensorField3 tc, oc;
    LinOp op = [&](const Vector& in, Vector& out) {
        split(in, n, tu, tc);
        apply_rm(sc, tu, tc, ou, oc);
        apply_dirichlet_mask(g, ou);
        if (mask_chi) apply_tangential_bc(g, oc);
        out = concat(ou, oc);
    };
    const CgResult r = conjugate_gradient(op, concat(ru, rc), x, cfg.tol_cg, cfg.max_cg_iters);
    if (info) {
        info->iterations = r.iterations;
        info->relative_residual = r.rhs_norm > 0.0 ? r.residual / r.rhs_norm : 0.0;
    }
    if (!r.converged) {
        std::ostringstream os;
        os << "relaxed micromorphic CG did not converge after " << r.iterations << " iterations (relative residual "
           << r.residual / r.rhs_norm << ")";
        throw SolverError(os.str());
    }
    split(x, n, st.u, st.chi);
    parallel_for(n, [&](std::size_t i) {
        for (int c = 0; c < 3; ++c) st.u[i][c] += ud[i][c];
    });
}

StepResult incremental_step(const Scenario& sc, const SolverConfig& cfg, const FieldState& prev, int step, FieldState& next)
{
    StepResult res;
    res.step = step;
    const double s0 = sc.load_level(step - 1), s1 = sc.load_level(step);
    res.load = s1;

    if (!is_plastic(sc.variant)) {
        next = prev;
        LinearSolveInfo li;
        solve_rm(sc, s1, next, cfg, &li);
        res.converged = true;
        res.outer_iterations = 1;
        res.cg_iterations = li.iterations;
    } else {
        CellState z = prev.cells;
        VectorField3 u = prev.u;
        TensorField3 chi = prev.chi;
        if (cfg.init == InitMode::Random) randomize_start(sc, cfg, step, z, u, chi);
        SweepStats ss;
        AndersonMixer mix(cfg.anderson_depth);
        double j_cur = std::numeric_limits<double>::infinity();
        Vector x = flatten(z.p);
        CellState zin = z;
        for (int it = 1; it <= cfg.max_outer_iters; ++it) {
            unflatten(x, zin.p);
            LinearSolveInfo iu, ic;
            VectorField3 un = solve_displacement(sc, zin, s1, u, cfg, &iu);
            TensorField3 cn = solve_microdistortion(sc, zin, chi, cfg, &ic);
            SweepStats sn;
            CellState zn = plastic_update_sweep(sc, un, cn, prev.cells, cfg, &sn);
            res.cg_iterations += iu.iterations + ic.iterations;
            res.outer_iterations = it;
            FieldState cand{un, cn, zn};
            const double j = total_energy(sc, cand).total() + dissipation_between(sc, prev.cells, zn) - body_work(sc, un, s1);
            if (mix.size() > 0 && j > j_cur + 1e-13 * std::abs(j_cur)) {
                mix.reset();
                x = flatten(z.p);
                continue;
            }
            const Vector g = flatten(zn.p);
            const Vector zv0 = plastic_vector(z), zv1 = plastic_vector(zn);
            const Vector u0 = flatten(u), u1 = flatten(un), c0 = flatten(chi), c1 = flatten(cn);
            const double floor = 1e-14 * std::sqrt(sq(u1) + sq(c1) + sq(zv1)) + 1e-300;
            const double change = std::max({block_change(u0, u1, floor), block_change(c0, c1, floor),
                                            block_change(zv0, zv1, floor), block_change(x, g, floor)});
            u = std::move(un);
            chi = std::move(cn);
            z = std::move(zn);
            ss = sn;
            j_cur = j;
            res.residual_history.push_back(change);
            res.objective_history.push_back(j);
            if (change <= cfg.tol_outer) {
                res.converged = true;
                break;
            }
            x = mix.next(x, g);
        }
        LinearSolveInfo iu, ic;
        next.cells = z;
        next.u = solve_displacement(sc, z, s1, u, cfg, &iu);
        next.chi = solve_microdistortion(sc, z, chi, cfg, &ic);
        res.cg_iterations += iu.iterations + ic.iterations;
        res.chi_ritz_min = ic.ritz_min;
        res.max_phi = ss.max_phi;
        res.max_complementarity = ss.max_complementarity;
    }

    const EnergyParts e0 = total_energy(sc, prev);
    res.energy = total_energy(sc, next);
    res.energy_increment = res.energy.total() - e0.total();

    const VectorField3 f0 = nodal_forces(sc, prev, s0), f1 = nodal_forces(sc, next, s1);
    const std::size_t n = sc.grid.size();
    res.external_work_increment = deterministic_sum(n, [&](std::size_t i) {
        double v = 0.0;
        for (int c = 0; c < 3; ++c) v += 0.5 * (f0[i][c] + f1[i][c]) * (next.u[i][c] - prev.u[i][c]);
        return v;
    });

    if (is_plastic(sc.variant)) {
        const TensorField3 se0 = eshelby_field(sc, prev), se1 = eshelby_field(sc, next);
        const double w0 = driving_work(sc, se0, prev.cells, prev.cells, next.cells);
        const double w1 = driving_work(sc, se1, next.cells, prev.cells, next.cells);
        res.dissipation_increment = 0.5 * (w0 + w1);
        res.dissipation_power = w1;
        res.dissipation_primal = dissipation_between(sc, prev.cells, next.cells);
        res.microbalance_residual = microbalance_residual(sc, next, cfg);
        const auto& c = next.cells;
        double me = 0.0;
        for (double v : c.eta) me = std::max(me, v);
        for (double v : c.eta_p) me = std::max(me, v);
        res.max_eta = me;
    }
    res.balance_residual = res.energy_increment + res.dissipation_increment - res.external_work_increment;
    const double scale = std::max({std::abs(res.energy_increment), std::abs(res.dissipation_increment),
                                   std::abs(res.external_work_increment)});
    res.balance_relative = scale > 0.0 ? std::abs(res.balance_residual) / scale : 0.0;
    return res;
}

RunReport run_quasistatic(const Scenario& sc, const SolverConfig& cfg, FieldState* final_state, const SnapshotFn& snapshot)
{
    const auto t0 = std::chrono::steady_clock::now();
    RunReport rep;
    rep.scenario = sc.name;
    rep.variant = sc.variant;
    const Validation v = validate(sc.variant, sc.params);
    if (!v.ok()) {
        std::string msg;
        for (const auto& e : v.errors) msg += (msg.empty() ? "" : "; ") + e;
        throw std::invalid_argument(msg);
    }
    rep.warnings = v.warnings;
    if (sc.load_level(0) != 0.0) throw std::invalid_argument("load curve must start at 0");

    FieldState st = FieldState::zeros(sc);
    for (int step = 1; step <= sc.steps; ++step) {
        FieldState nx;
        StepResult r;
        try {
            r = incremental_step(sc, cfg, st, step, nx);
        } catch (const SolverError& e) {
            rep.failure = "step " + std::to_string(step) + ": " + e.what();
            break;
        }
        rep.steps.push_back(r);
        st = std::move(nx);
        if (snapshot && ((cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0) || step == sc.steps)) snapshot(step, st);
        if (!r.converged) {
            const std::string msg = "step " + std::to_string(step) + " did not converge in " +
                                    std::to_string(r.outer_iterations) + " outer iterations";
            if (cfg.abort_on_failure) {
                rep.failure = msg;
                break;
            }
            rep.warnings.push_back(msg);
        }
    }
    rep.completed = rep.failure.empty() && int(rep.steps.size()) == sc.steps;
    if (final_state) *final_state = std::move(st);
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

}  // namespace microcurl
