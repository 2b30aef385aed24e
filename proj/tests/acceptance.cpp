#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "microcurl/verify.hpp"

using namespace microcurl;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Grid cube(int n, std::array<bool, 6> gd) { return make_grid({n, n, n}, 1.0 / (n - 1), gd); }

constexpr std::array<bool, 6> kBottom{false, false, false, false, true, false};
constexpr std::array<bool, 6> kLayer{false, false, false, false, true, true};

MaterialParams base_params(Variant v)
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

Scenario shear_layer(int n, Variant v, int steps, double top)
{
    Scenario sc;
    sc.name = "shear_layer";
    sc.grid = cube(n, kLayer);
    sc.variant = v;
    sc.params = base_params(v);
    sc.face_displacement[ZMax] = {top, 0.0, 0.0};
    sc.steps = steps;
    return sc;
}

Outcome complex_identities()
{
    const auto t0 = Clock::now();
    std::mt19937_64 rng(1);
    // dyadic field values and spacing keep every difference exact in floating point
    std::uniform_int_distribution<int> k(-(1 << 20), 1 << 20);
    const auto d = [&](std::mt19937_64& r) { return std::ldexp(double(k(r)), -20); };
    double worst = 0.0;
    for (int n = 4; n <= 16; ++n) {
        const Grid g = make_grid({n, n, n}, 1.0 / 16.0, {});
        VectorField3 u(g.size());
        for (auto& v : u)
            for (double& c : v) c = d(rng);
        TensorField3 x(g.size());
        for (auto& t : x)
            for (double& c : t.a) c = d(rng);
        for (const Tensor3& t : curl_h(g, grad_h(g, u))) worst = std::max(worst, max_abs(t));
        for (const Vec3& v : div_h(g, curl_h(g, x)))
            worst = std::max({worst, std::abs(v[0]), std::abs(v[1]), std::abs(v[2])});
    }
    const double s = since(t0);
    return {worst == 0.0 && s < 1.0, fmt("max |curl grad u|, |div curl X| = %g over 4^3..16^3 (lattice data, h = 1/16), %.3f s", worst, s)};
}

Outcome ellipticity()
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> d(-1.0, 1.0), mu_d(0.05, 5.0), r_d(0.01, 1.0);
    int violations = 0;
    double min_margin = 1e300;
    for (int k = 0; k < 10000; ++k) {
        const double mu = mu_d(rng);
        // 3 lambda + 2 mu ranges over (0, 5 mu]
        const double lam = (r_d(rng) * 5.0 * mu - 2.0 * mu) / 3.0;
        const ElasticModuli E = make_moduli(mu, lam);
        Tensor3 x;
        for (double& c : x.a) c = d(rng);
        const Tensor3 s = sym(x);
        const double lhs = dot(s, apply_ciso(E, s)), rhs = E.m0() * dot(s, s);
        if (lhs < rhs) ++violations;
        min_margin = std::min(min_margin, (lhs - rhs) / rhs);
    }
    return {violations == 0, fmt("10000 random tensors and moduli, %d violations, min relative margin %.3e", violations, min_margin)};
}

Outcome oracle_equivalence()
{
    const auto t0 = Clock::now();
    bool ok = true;
    std::string d;
    for (Variant v : {Variant::SC_ISO, Variant::SC_KIN, Variant::PC_ISO, Variant::PC_KIN}) {
        const OracleComparison c = compare_with_oracle(v, 200, 7);
        ok = ok && c.pass && c.samples >= 200 && c.max_error <= 1e-4 && c.max_kkt <= 1e-10;
        d += fmt("%s n=%d plastic=%d err=%.2e kkt=%.2e; ", variant_name(v), c.samples, c.plastic_samples, c.max_error,
                 c.max_kkt);
    }
    const double s = since(t0);
    return {ok && s < 30.0, d + fmt("%.1f s", s)};
}

Outcome energy_balance()
{
    const auto t0 = Clock::now();
    const Scenario sc = shear_layer(8, Variant::PC_ISO, 20, 0.05);
    const RunReport r = run_quasistatic(sc, SolverConfig{});
    double worst = 0.0, min_diss = 1e300, eta = 0.0;
    for (const StepResult& s : r.steps) {
        worst = std::max(worst, s.balance_relative);
        min_diss = std::min(min_diss, s.dissipation_increment);
        eta = std::max(eta, s.max_eta);
    }
    const double sec = since(t0);
    const bool ok = r.completed && worst <= 1e-8 && min_diss >= 0.0 && sec < 120.0;
    return {ok, fmt("8^3 shear layer, %zu steps, max balance %.2e, min step dissipation %.3e, max eta %.3e, %.1f s",
                    r.steps.size(), worst, min_diss, eta, sec)};
}

Outcome penalty_limit()
{
    const auto t0 = Clock::now();
    Scenario sc = shear_layer(6, Variant::PC_ISO, 5, 0.2);
    sc.params.k2 = 0.1;
    const PenaltySweepReport r = penalty_sweep(sc, SolverConfig{}, {10, 20, 40, 80});
    bool ok = r.strictly_decreasing && r.rows.size() == 4;
    std::string d = "PC_ISO gaps";
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        d += fmt(" %.4e", r.rows[i].gap);
        if (i > 0) ok = ok && r.rows[i].ratio >= 0.4 && r.rows[i].ratio <= 0.6;
    }
    d += " ratios";
    for (std::size_t i = 1; i < r.rows.size(); ++i) d += fmt(" %.4f", r.rows[i].ratio);

    Scenario sc2 = shear_layer(6, Variant::SC_KIN, 5, 0.2);
    sc2.params.L_c = 0.0;
    FieldState st;
    const RunReport rr = run_quasistatic(sc2, SolverConfig{}, &st);
    const double gap = penalty_gap(sc2, st), pn = norm_l2(sc2.grid, st.cells.p);
    ok = ok && rr.completed && pn > 0.0 && gap <= 1e-8 * pn;
    return {ok, d + fmt("; SC_KIN L_c=0 gap %.3e (|p| %.3e); %.1f s", gap, pn, since(t0))};
}

Outcome korn()
{
    const auto t0 = Clock::now();
    const KornReport a = estimate_korn_constant(cube(6, kBottom));
    const KornReport b = estimate_korn_constant(cube(12, kBottom));
    const KornReport e = estimate_korn_constant(cube(6, {}));
    const double change = std::abs(b.constant - a.constant) / a.constant;
    const bool ok = std::isfinite(a.constant) && std::isfinite(b.constant) && a.lambda > 0.0 && b.lambda > 0.0 &&
                    change <= 0.3 && e.lambda <= 1e-10;
    return {ok, fmt("zmin: lambda 6^3 %.4e, 12^3 %.4e, constant change %.1f%%; empty: lambda %.2e, skew share %.3f; %.1f s",
                    a.lambda, b.lambda, 100.0 * change, e.lambda, e.skew_share, since(t0))};
}

Outcome coercivity()
{
    const auto t0 = Clock::now();
    bool ok = true;
    std::string d;
    for (Variant v : {Variant::PC_ISO, Variant::PC_KIN, Variant::SC_KIN, Variant::SC_ISO}) {
        const MaterialParams m = base_params(v);
        double first = 0.0;
        d += variant_name(v);
        for (int n : {4, 8, 16}) {
            const CoercivityReport r = estimate_coercivity(v, m, cube(n, kBottom));
            if (n == 4) first = r.c_min;
            ok = ok && r.c_min > 0.0 && r.c_min >= 0.5 * first;
            d += fmt(" %.4e", r.c_min);
        }
        d += "; ";
    }
    MaterialParams m = base_params(Variant::PC_ISO);
    m.k2 = 0.0;
    m.L_c = 0.0;
    d += "PC_ISO k2=0 L_c=0";
    for (int n : {4, 8}) {
        const CoercivityReport r = estimate_coercivity(Variant::PC_ISO, m, cube(n, kBottom));
        ok = ok && r.c_min <= 1e-10;
        d += fmt(" %.2e", r.c_min);
    }
    return {ok, d + fmt("; %.1f s", since(t0))};
}

Outcome uniqueness()
{
    const auto t0 = Clock::now();
    const Scenario sc = shear_layer(6, Variant::PC_ISO, 10, 0.05);
    SolverConfig cfg;
    cfg.tol_outer = 1e-10;
    const UniquenessReport r = uniqueness_probe(sc, cfg, 11, 1e-6);
    return {r.asserted && r.pass && r.max_discrepancy <= 1e-6,
            fmt("6^3 shear PC_ISO k2=0.5, %d steps: u %.2e chi %.2e p %.2e eta %.2e; %.1f s", r.steps, r.u, r.chi, r.p,
                r.eta, since(t0))};
}

Outcome norm_equivalence()
{
    const auto t0 = Clock::now();
    const NormEquivalenceReport r = check_norm_equivalence(make_grid({6, 6, 6}, 0.2, kBottom), 1000, 3);
    const bool ok = r.pass && r.ratio_min > 0.0 && std::isfinite(r.ratio_max) && r.vanishing_ok && r.zero_pair_ok;
    return {ok, fmt("6^3: ratio in [%.4f, %.4f], lambda_min %.4e, skew star free %.2e masked %.3f; %.1f s", r.ratio_min,
                    r.ratio_max, r.lambda_min, r.skew_star_free, r.skew_star_masked, since(t0))};
}

Outcome stiff_limit()
{
    const auto t0 = Clock::now();
    Scenario sc;
    sc.grid = cube(8, kLayer);
    sc.variant = Variant::RM_ELASTIC;
    sc.params.mu_e = 1.0;
    sc.params.mu_c = 1.0;
    sc.params.lambda_e = 1.0;
    sc.params.mu_micro = 1.0;
    sc.params.lambda_micro = 0.5;
    sc.params.L_c = 0.1;
    sc.face_displacement[ZMax] = {0.05, 0.0, 0.02};
    sc.body_force = {0.0, 0.1, 0.0};
    const StiffLimitReport r = rm_stiff_limit_check(sc, SolverConfig{}, {1, 10, 100, 1000});
    std::string d = "8^3 discrepancy";
    for (const auto& row : r.rows) d += fmt(" t=%g:%.3e", row.scale, row.discrepancy);
    return {r.monotone && r.rows.size() == 4 && r.final_discrepancy < 1e-3, d + fmt("; %.1f s", since(t0))};
}

}  // namespace

int main()
{
    configure_threads();
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"complex identities", complex_identities},
        {"ellipticity", ellipticity},
        {"return-map oracle", oracle_equivalence},
        {"energy balance", energy_balance},
        {"penalty limit", penalty_limit},
        {"Korn inequality", korn},
        {"coercivity", coercivity},
        {"uniqueness", uniqueness},
        {"norm equivalence", norm_equivalence},
        {"stiff limit", stiff_limit},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
