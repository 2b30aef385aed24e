#include "microcurl/cli_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace microcurl {

namespace {

using ojson = nlohmann::ordered_json;

std::string join_errors(const std::vector<ConfigError>& errs)
{
    std::string s;
    for (const auto& e : errs) s += (s.empty() ? "" : "\n") + ("line " + std::to_string(e.line) + ": " + e.message);
    return s;
}

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> words(const std::string& s)
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == ',') {
            if (!cur.empty()) out.push_back(cur), cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

bool to_double(const std::string& s, double& v)
{
    if (s.empty()) return false;
    char* end = nullptr;
    errno = 0;
    v = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && errno == 0 && std::isfinite(v);
}

bool to_int(const std::string& s, long long& v)
{
    if (s.empty()) return false;
    char* end = nullptr;
    errno = 0;
    v = std::strtoll(s.c_str(), &end, 10);
    return end == s.c_str() + s.size() && errno == 0;
}

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const std::map<std::string, std::set<std::string>>& known_keys()
{
    static const std::map<std::string, std::set<std::string>> k = {
        {"grid", {"n", "nx", "ny", "nz", "length", "h", "gamma_d"}},
        {"material",
         {"mu", "lambda", "h_chi", "l_c", "k1", "k2", "sigma0", "slips", "mu_e", "lambda_e", "mu_c", "mu_micro",
          "lambda_micro"}},
        {"variant", {"name"}},
        {"load",
         {"scenario", "steps", "body_force", "gradient", "curve", "displacement_xmin", "displacement_xmax",
          "displacement_ymin", "displacement_ymax", "displacement_zmin", "displacement_zmax"}},
        {"solver",
         {"tol_outer", "tol_cg", "max_outer_iters", "max_cg_iters", "max_local_iters", "reg_eps", "anderson_depth",
          "on_nonconvergence", "init", "seed", "init_amplitude"}},
        {"output", {"snapshot_every"}},
    };
    return k;
}

struct Entry {
    std::string value;
    int line = 0;
};

struct Sections {
    std::map<std::string, std::map<std::string, Entry>> keys;
    std::map<std::string, int> header_line;
};

class Reader {
public:
    Reader(const Sections& s, std::vector<ConfigError>& errs) : s_(s), errs_(errs) {}

    const Entry* find(const std::string& sec, const std::string& key) const
    {
        auto si = s_.keys.find(sec);
        if (si == s_.keys.end()) return nullptr;
        auto ki = si->second.find(key);
        return ki == si->second.end() ? nullptr : &ki->second;
    }

    int line_of(const std::string& sec, const std::string& key) const
    {
        if (const Entry* e = find(sec, key)) return e->line;
        auto h = s_.header_line.find(sec);
        return h == s_.header_line.end() ? 0 : h->second;
    }

    void real(const std::string& sec, const std::string& key, double& out) const
    {
        const Entry* e = find(sec, key);
        if (!e) return;
        if (!to_double(e->value, out)) errs_.push_back({e->line, key + ": expected a number, got '" + e->value + "'"});
    }

    template <class I>
    void integer(const std::string& sec, const std::string& key, I& out, long long lo) const
    {
        const Entry* e = find(sec, key);
        if (!e) return;
        long long v = 0;
        if (!to_int(e->value, v)) {
            errs_.push_back({e->line, key + ": expected an integer, got '" + e->value + "'"});
            return;
        }
        if (v < lo) {
            errs_.push_back({e->line, key + " must be >= " + std::to_string(lo)});
            return;
        }
        out = I(v);
    }

    bool reals(const std::string& sec, const std::string& key, std::size_t count, std::vector<double>& out) const
    {
        const Entry* e = find(sec, key);
        if (!e) return false;
        out.clear();
        for (const auto& w : words(e->value)) {
            double v = 0.0;
            if (!to_double(w, v)) {
                errs_.push_back({e->line, key + ": expected numbers, got '" + w + "'"});
                return false;
            }
            out.push_back(v);
        }
        if (count > 0 && out.size() != count) {
            errs_.push_back({e->line, key + ": expected " + std::to_string(count) + " values, got " +
                                          std::to_string(out.size())});
            return false;
        }
        return true;
    }

    bool vec3(const std::string& sec, const std::string& key, Vec3& out) const
    {
        std::vector<double> v;
        if (!reals(sec, key, 3, v)) return false;
        out = {v[0], v[1], v[2]};
        return true;
    }

private:
    const Sections& s_;
    std::vector<ConfigError>& errs_;
};

Sections tokenize(std::string_view text, std::vector<ConfigError>& errs)
{
    Sections s;
    std::string section;
    int lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string_view::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                errs.push_back({lineno, "malformed section header '" + line + "'"});
                section.clear();
                continue;
            }
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            if (!known_keys().count(section)) {
                errs.push_back({lineno, "unknown section [" + section + "]"});
                section = "?";
                continue;
            }
            if (s.header_line.count(section)) errs.push_back({lineno, "duplicate section [" + section + "]"});
            s.header_line.emplace(section, lineno);
            s.keys[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            errs.push_back({lineno, "expected 'key = value', got '" + line + "'"});
            continue;
        }
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (section == "?") continue;
        if (section.empty()) {
            errs.push_back({lineno, "key '" + key + "' outside any section"});
            continue;
        }
        if (!known_keys().at(section).count(key)) {
            errs.push_back({lineno, "unknown key '" + key + "' in [" + section + "]"});
            continue;
        }
        if (value.empty()) {
            errs.push_back({lineno, "empty value for '" + key + "'"});
            continue;
        }
        auto& sec = s.keys[section];
        if (sec.count(key)) {
            errs.push_back({lineno, "duplicate key '" + key + "' in [" + section + "] (first on line " +
                                        std::to_string(sec[key].line) + ")"});
            continue;
        }
        sec[key] = {value, lineno};
    }
    return s;
}

std::optional<Face> parse_face(const std::string& w)
{
    for (int f = 0; f < 6; ++f)
        if (w == face_name(Face(f))) return Face(f);
    return std::nullopt;
}

// Key in [material] that a validation message refers to.
std::string material_key_for(const std::string& msg)
{
    static const std::pair<const char*, const char*> table[] = {
        {"Lame", "mu"},      {"H_chi", "h_chi"}, {"sigma0", "sigma0"},     {"L_c", "l_c"},   {"k1", "k1"},
        {"k2", "k2"},        {"slip", "slips"},  {"relaxed", "mu_e"},      {"mu_c", "mu_c"}, {"micro moduli", "mu_micro"},
    };
    for (const auto& [needle, key] : table)
        if (msg.find(needle) != std::string::npos) return key;
    return "";
}

}  // namespace

ConfigParseError::ConfigParseError(std::vector<ConfigError> errors)
    : std::runtime_error(join_errors(errors)), errors_(std::move(errors))
{
}

bool is_bundled_scenario(const std::string& kind)
{
    return kind == "shear_layer" || kind == "uniaxial" || kind == "elastic_patch" || kind == "custom";
}

void apply_bundled_scenario(const std::string& kind, Scenario& sc)
{
    if (!is_bundled_scenario(kind)) throw std::invalid_argument("unknown scenario '" + kind + "'");
    sc.name = kind;
    sc.face_displacement = {};
    sc.body_force = {0.0, 0.0, 0.0};
    sc.affine_dirichlet = false;
    sc.affine_gradient = Tensor3{};
    if (kind == "shear_layer") {
        sc.grid.gamma_d = {false, false, false, false, true, true};
        sc.face_displacement[ZMax] = {0.05, 0.0, 0.0};
    } else if (kind == "uniaxial") {
        sc.grid.gamma_d = {false, false, false, false, true, false};
        sc.body_force = {0.0, 0.0, -0.1};
    } else if (kind == "elastic_patch") {
        sc.grid.gamma_d = {true, true, true, true, true, true};
        sc.affine_dirichlet = true;
        sc.affine_gradient(0, 0) = 1e-3;
        sc.affine_gradient(0, 1) = 5e-4;
        sc.affine_gradient(2, 2) = -2e-4;
    }
}

RunConfig parse_config(std::string_view text)
{
    std::vector<ConfigError> errs;
    const Sections s = tokenize(text, errs);
    Reader rd(s, errs);
    for (const char* req : {"grid", "material", "variant"})
        if (!s.header_line.count(req)) errs.push_back({0, std::string("missing required section [") + req + "]"});

    RunConfig c;
    Scenario& sc = c.scenario;

    // variant
    if (const Entry* e = rd.find("variant", "name")) {
        if (auto v = parse_variant(e->value))
            sc.variant = *v;
        else
            errs.push_back({e->line, "unknown variant '" + e->value + "' (SC_ISO, SC_KIN, PC_ISO, PC_KIN, RM_ELASTIC)"});
    } else if (s.header_line.count("variant")) {
        errs.push_back({rd.line_of("variant", "name"), "[variant] needs 'name'"});
    }

    // load scenario first: it supplies Gamma_D and load defaults
    if (const Entry* e = rd.find("load", "scenario")) {
        if (is_bundled_scenario(e->value))
            c.kind = e->value;
        else
            errs.push_back({e->line, "unknown scenario '" + e->value + "' (shear_layer, uniaxial, elastic_patch, custom)"});
    } else {
        c.kind = "shear_layer";
    }
    apply_bundled_scenario(c.kind, sc);

    // grid
    std::array<int, 3> n{8, 8, 8};
    int nn = 0;
    rd.integer("grid", "n", nn, 2);
    if (nn > 0) n = {nn, nn, nn};
    rd.integer("grid", "nx", n[0], 2);
    rd.integer("grid", "ny", n[1], 2);
    rd.integer("grid", "nz", n[2], 2);
    double length = 1.0, h = 0.0;
    rd.real("grid", "length", length);
    rd.real("grid", "h", h);
    if (rd.find("grid", "length") && rd.find("grid", "h"))
        errs.push_back({rd.line_of("grid", "h"), "give either 'length' or 'h', not both"});
    if (!rd.find("grid", "h")) h = length / double(n[0] - 1);
    if (!(h > 0.0)) errs.push_back({rd.line_of("grid", rd.find("grid", "h") ? "h" : "length"), "grid spacing must be > 0"});
    std::array<bool, 6> gd = sc.grid.gamma_d;
    if (const Entry* e = rd.find("grid", "gamma_d")) {
        gd = {};
        const auto ws = words(e->value);
        if (!(ws.size() == 1 && ws[0] == "none")) {
            for (const auto& w : ws) {
                if (auto f = parse_face(w))
                    gd[*f] = true;
                else
                    errs.push_back({e->line, "unknown face '" + w + "' (xmin xmax ymin ymax zmin zmax or none)"});
            }
        }
    }
    try {
        sc.grid = make_grid(n, h > 0.0 ? h : 1.0, gd);
    } catch (const std::invalid_argument& ex) {
        errs.push_back({rd.line_of("grid", "n"), ex.what()});
    }

    // material
    MaterialParams& m = sc.params;
    double mu = 1.0, lambda = 1.0;
    rd.real("material", "mu", mu);
    rd.real("material", "lambda", lambda);
    m.E.mu = mu;
    m.E.lambda = lambda;
    rd.real("material", "h_chi", m.H_chi);
    rd.real("material", "l_c", m.L_c);
    rd.real("material", "k1", m.k1);
    rd.real("material", "k2", m.k2);
    rd.real("material", "sigma0", m.sigma0);
    rd.real("material", "mu_e", m.mu_e);
    rd.real("material", "lambda_e", m.lambda_e);
    rd.real("material", "mu_c", m.mu_c);
    rd.real("material", "mu_micro", m.mu_micro);
    rd.real("material", "lambda_micro", m.lambda_micro);
    if (const Entry* e = rd.find("material", "slips")) {
        const auto ws = words(e->value);
        if (ws.empty() || ws[0] != "fcc") {
            errs.push_back({e->line, "slips: expected 'fcc' optionally followed by system indices 0..11"});
        } else {
            std::set<int> seen;
            for (std::size_t i = 1; i < ws.size(); ++i) {
                long long k = -1;
                if (!to_int(ws[i], k) || k < 0 || k > 11) {
                    errs.push_back({e->line, "slips: index '" + ws[i] + "' outside 0..11"});
                } else if (!seen.insert(int(k)).second) {
                    errs.push_back({e->line, "slips: index " + ws[i] + " repeated"});
                } else {
                    c.slip_subset.push_back(int(k));
                }
            }
        }
    }
    if (is_single_crystal(sc.variant)) {
        const auto fam = fcc_slip_family();
        if (c.slip_subset.empty()) {
            m.slips = fam;
        } else {
            for (int k : c.slip_subset) m.slips.push_back(fam[std::size_t(k)]);
        }
    }

    // load
    rd.integer("load", "steps", sc.steps, 1);
    rd.vec3("load", "body_force", sc.body_force);
    for (int f = 0; f < 6; ++f) {
        const std::string key = std::string("displacement_") + face_name(Face(f));
        if (rd.vec3("load", key, sc.face_displacement[f]) && !sc.grid.gamma_d[f])
            c.warnings.push_back("line " + std::to_string(rd.line_of("load", key)) + ": " + key +
                                 " is ignored, the face is not in gamma_d");
    }
    std::vector<double> grad;
    if (rd.reals("load", "gradient", 9, grad)) {
        sc.affine_dirichlet = true;
        std::copy(grad.begin(), grad.end(), sc.affine_gradient.a.begin());
    }
    std::vector<double> curve;
    if (rd.reals("load", "curve", 0, curve)) {
        if (int(curve.size()) != sc.steps + 1)
            errs.push_back({rd.line_of("load", "curve"), "curve needs steps + 1 = " + std::to_string(sc.steps + 1) +
                                                             " values, got " + std::to_string(curve.size())});
        else if (curve.front() != 0.0)
            errs.push_back({rd.line_of("load", "curve"), "curve must start at 0"});
        else
            sc.load_curve = curve;
    }

    // solver
    SolverConfig& cfg = c.solver;
    rd.real("solver", "tol_outer", cfg.tol_outer);
    rd.real("solver", "tol_cg", cfg.tol_cg);
    rd.integer("solver", "max_outer_iters", cfg.max_outer_iters, 1);
    rd.integer("solver", "max_cg_iters", cfg.max_cg_iters, 1);
    rd.integer("solver", "max_local_iters", cfg.max_local_iters, 1);
    rd.real("solver", "reg_eps", cfg.reg_eps);
    rd.integer("solver", "anderson_depth", cfg.anderson_depth, 0);
    rd.real("solver", "init_amplitude", cfg.init_amplitude);
    if (const Entry* e = rd.find("solver", "seed")) {
        long long v = 0;
        if (!to_int(e->value, v) || v < 0)
            errs.push_back({e->line, "seed: expected a nonnegative integer"});
        else
            cfg.seed = std::uint64_t(v);
    }
    if (const Entry* e = rd.find("solver", "on_nonconvergence")) {
        if (e->value == "abort")
            cfg.abort_on_failure = true;
        else if (e->value == "continue")
            cfg.abort_on_failure = false;
        else
            errs.push_back({e->line, "on_nonconvergence: expected abort or continue"});
    }
    if (const Entry* e = rd.find("solver", "init")) {
        if (e->value == "zero")
            cfg.init = InitMode::Zero;
        else if (e->value == "random")
            cfg.init = InitMode::Random;
        else
            errs.push_back({e->line, "init: expected zero or random"});
    }
    if (!(cfg.tol_outer > 0.0)) errs.push_back({rd.line_of("solver", "tol_outer"), "tol_outer must be > 0"});
    if (!(cfg.tol_cg > 0.0)) errs.push_back({rd.line_of("solver", "tol_cg"), "tol_cg must be > 0"});
    if (cfg.reg_eps < 0.0) errs.push_back({rd.line_of("solver", "reg_eps"), "reg_eps must be >= 0"});
    if (cfg.init_amplitude < 0.0) errs.push_back({rd.line_of("solver", "init_amplitude"), "init_amplitude must be >= 0"});
    rd.integer("output", "snapshot_every", cfg.snapshot_every, 0);

    // material invariants
    const Validation v = validate(sc.variant, m);
    for (const auto& e : v.errors) errs.push_back({rd.line_of("material", material_key_for(e)), e});
    for (const auto& w : v.warnings)
        c.warnings.push_back("line " + std::to_string(rd.line_of("material", material_key_for(w))) + ": " + w);
    if (is_plastic(sc.variant) && !sc.grid.has_gamma_d())
        c.warnings.push_back("gamma_d is empty: runs and coercivity estimates need a Dirichlet boundary");

    if (!errs.empty()) {
        std::stable_sort(errs.begin(), errs.end(), [](const ConfigError& a, const ConfigError& b) { return a.line < b.line; });
        throw ConfigParseError(std::move(errs));
    }
    return c;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string() + ": " + std::strerror(errno));
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& c)
{
    const Scenario& sc = c.scenario;
    const MaterialParams& m = sc.params;
    const SolverConfig& cfg = c.solver;
    std::ostringstream o;
    auto v3 = [](const Vec3& v) { return fmt(v[0]) + " " + fmt(v[1]) + " " + fmt(v[2]); };
    o << "[grid]\n";
    o << "nx = " << sc.grid.n[0] << "\nny = " << sc.grid.n[1] << "\nnz = " << sc.grid.n[2] << "\n";
    o << "h = " << fmt(sc.grid.h) << "\n";
    std::string gd;
    for (int f = 0; f < 6; ++f)
        if (sc.grid.gamma_d[f]) gd += (gd.empty() ? "" : " ") + std::string(face_name(Face(f)));
    o << "gamma_d = " << (gd.empty() ? "none" : gd) << "\n\n";
    o << "[material]\n";
    o << "mu = " << fmt(m.E.mu) << "\nlambda = " << fmt(m.E.lambda) << "\n";
    o << "h_chi = " << fmt(m.H_chi) << "\nl_c = " << fmt(m.L_c) << "\n";
    o << "k1 = " << fmt(m.k1) << "\nk2 = " << fmt(m.k2) << "\nsigma0 = " << fmt(m.sigma0) << "\n";
    if (is_single_crystal(sc.variant)) {
        o << "slips = fcc";
        for (int k : c.slip_subset) o << " " << k;
        o << "\n";
    }
    o << "mu_e = " << fmt(m.mu_e) << "\nlambda_e = " << fmt(m.lambda_e) << "\nmu_c = " << fmt(m.mu_c) << "\n";
    o << "mu_micro = " << fmt(m.mu_micro) << "\nlambda_micro = " << fmt(m.lambda_micro) << "\n\n";
    o << "[variant]\nname = " << variant_name(sc.variant) << "\n\n";
    o << "[load]\nscenario = " << c.kind << "\nsteps = " << sc.steps << "\n";
    o << "body_force = " << v3(sc.body_force) << "\n";
    for (int f = 0; f < 6; ++f)
        if (sc.grid.gamma_d[f]) o << "displacement_" << face_name(Face(f)) << " = " << v3(sc.face_displacement[f]) << "\n";
    if (sc.affine_dirichlet) {
        o << "gradient =";
        for (double x : sc.affine_gradient.a) o << " " << fmt(x);
        o << "\n";
    }
    if (!sc.load_curve.empty()) {
        o << "curve =";
        for (double x : sc.load_curve) o << " " << fmt(x);
        o << "\n";
    }
    o << "\n[solver]\n";
    o << "tol_outer = " << fmt(cfg.tol_outer) << "\ntol_cg = " << fmt(cfg.tol_cg) << "\n";
    o << "max_outer_iters = " << cfg.max_outer_iters << "\nmax_cg_iters = " << cfg.max_cg_iters << "\n";
    o << "max_local_iters = " << cfg.max_local_iters << "\nreg_eps = " << fmt(cfg.reg_eps) << "\n";
    o << "anderson_depth = " << cfg.anderson_depth << "\n";
    o << "on_nonconvergence = " << (cfg.abort_on_failure ? "abort" : "continue") << "\n";
    o << "init = " << (cfg.init == InitMode::Zero ? "zero" : "random") << "\nseed = " << cfg.seed << "\n";
    o << "init_amplitude = " << fmt(cfg.init_amplitude) << "\n\n";
    o << "[output]\nsnapshot_every = " << cfg.snapshot_every << "\n";
    return o.str();
}

// ---- field export -----------------------------------------------------------

namespace {

void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string() + ": " + std::strerror(errno));
    out << text;
    if (!out) throw std::runtime_error("write failed for " + p.string());
}

template <class Row>
std::string field_csv(const Grid& g, const std::vector<std::string>& names, Row row)
{
    std::string s = "x,y,z";
    for (const auto& n : names) s += "," + n;
    s += "\n";
    std::vector<double> vals(names.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Vec3 x = g.coords(i);
        s += fmt(x[0]) + "," + fmt(x[1]) + "," + fmt(x[2]);
        row(i, vals.data());
        for (double v : vals) s += "," + fmt(v);
        s += "\n";
    }
    return s;
}

std::vector<std::string> tensor_names(const std::string& base)
{
    std::vector<std::string> n;
    for (int a = 1; a <= 3; ++a)
        for (int b = 1; b <= 3; ++b) n.push_back(base + std::to_string(a) + std::to_string(b));
    return n;
}

}  // namespace

std::vector<std::filesystem::path> export_fields(const Scenario& sc, const FieldState& st,
                                                 const std::filesystem::path& dir, int step)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
    char tag[16];
    std::snprintf(tag, sizeof tag, "_%04d.csv", step);
    const Grid& g = sc.grid;
    std::vector<std::filesystem::path> out;
    auto emit = [&](const std::string& field, const std::string& text) {
        const auto p = dir / (field + tag);
        write_file(p, text);
        out.push_back(p);
    };
    emit("u", field_csv(g, {"u1", "u2", "u3"}, [&](std::size_t i, double* v) { std::copy(st.u[i].begin(), st.u[i].end(), v); }));
    emit("chi", field_csv(g, tensor_names("chi"), [&](std::size_t i, double* v) {
             std::copy(st.chi[i].a.begin(), st.chi[i].a.end(), v);
         }));
    if (!is_plastic(sc.variant)) return out;
    emit("p", field_csv(g, tensor_names("p"), [&](std::size_t i, double* v) {
             std::copy(st.cells.p[i].a.begin(), st.cells.p[i].a.end(), v);
         }));
    if (sc.variant == Variant::SC_ISO) {
        const int ns = st.cells.nslip;
        std::vector<std::string> en, gn;
        for (int a = 1; a <= ns; ++a) en.push_back("eta" + std::to_string(a)), gn.push_back("gamma" + std::to_string(a));
        emit("eta", field_csv(g, en, [&](std::size_t i, double* v) {
                 std::copy_n(st.cells.eta.begin() + std::ptrdiff_t(i) * ns, ns, v);
             }));
        emit("gamma", field_csv(g, gn, [&](std::size_t i, double* v) {
                 std::copy_n(st.cells.gamma.begin() + std::ptrdiff_t(i) * ns, ns, v);
             }));
    } else if (sc.variant == Variant::PC_ISO) {
        emit("eta", field_csv(g, {"eta"}, [&](std::size_t i, double* v) { v[0] = st.cells.eta_p[i]; }));
    }
    return out;
}

// ---- reports ----------------------------------------------------------------

namespace {

ojson step_json(const StepResult& s)
{
    ojson j;
    j["step"] = s.step;
    j["load"] = s.load;
    j["converged"] = s.converged;
    j["outer_iterations"] = s.outer_iterations;
    j["cg_iterations"] = s.cg_iterations;
    j["final_residual"] = s.residual_history.empty() ? 0.0 : s.residual_history.back();
    j["energy"] = {{"elastic", s.energy.elastic},
                   {"micro", s.energy.micro},
                   {"defect", s.energy.defect},
                   {"hardening", s.energy.hardening},
                   {"total", s.energy.total()}};
    j["energy_increment"] = s.energy_increment;
    j["dissipation_increment"] = s.dissipation_increment;
    j["dissipation_primal"] = s.dissipation_primal;
    j["dissipation_power"] = s.dissipation_power;
    j["external_work_increment"] = s.external_work_increment;
    j["balance_residual"] = s.balance_residual;
    j["balance_relative"] = s.balance_relative;
    j["max_eta"] = s.max_eta;
    j["max_phi"] = s.max_phi;
    j["max_complementarity"] = s.max_complementarity;
    j["microbalance_residual"] = s.microbalance_residual;
    j["chi_ritz_min"] = s.chi_ritz_min;
    return j;
}

}  // namespace

std::string report_json(const RunConfig& c, const RunReport& r)
{
    ojson j;
    j["scenario"] = c.kind;
    j["variant"] = variant_name(r.variant);
    j["grid"] = {c.scenario.grid.n[0], c.scenario.grid.n[1], c.scenario.grid.n[2]};
    j["h"] = c.scenario.grid.h;
    j["gamma_d"] = c.scenario.grid.gamma_d_string();
    j["completed"] = r.completed;
    j["failure"] = r.failure;
    ojson w = ojson::array();
    for (const auto& s : c.warnings) w.push_back(s);
    for (const auto& s : r.warnings) w.push_back(s);
    j["warnings"] = w;
    double max_bal = 0.0, diss = 0.0, min_diss = 0.0;
    for (const auto& s : r.steps) {
        max_bal = std::max(max_bal, s.balance_relative);
        diss += s.dissipation_increment;
        min_diss = std::min(min_diss, s.dissipation_increment);
    }
    j["summary"] = {{"steps", r.steps.size()},
                    {"max_balance_relative", max_bal},
                    {"total_dissipation", diss},
                    {"min_dissipation_increment", min_diss}};
    ojson steps = ojson::array();
    for (const auto& s : r.steps) steps.push_back(step_json(s));
    j["steps"] = steps;
    j["config"] = serialize_config(c);
    return j.dump(2) + "\n";
}

std::string run_meta_json(const RunReport& r)
{
    ojson j;
    j["wall_seconds"] = r.wall_seconds;
    j["threads"] = thread_count();
    return j.dump(2) + "\n";
}

// ---- command line -----------------------------------------------------------

namespace {

std::vector<double> parse_list(const std::string& s)
{
    std::vector<double> out;
    for (const auto& w : words(s)) {
        double v = 0.0;
        if (!to_double(w, v)) throw std::invalid_argument("not a number in list: '" + w + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("empty value list");
    return out;
}

void print_warnings(const RunConfig& c)
{
    for (const auto& w : c.warnings) std::cerr << "warning: " << w << "\n";
}

void maybe_write(const std::string& out_dir, const std::string& name, const std::string& text)
{
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir);
    write_file(std::filesystem::path(out_dir) / name, text);
}

int cmd_run(const std::string& config, const std::string& out_dir)
{
    const RunConfig c = load_config(config);
    print_warnings(c);
    const std::filesystem::path dir(out_dir);
    FieldState final_state;
    const RunReport r = run_quasistatic(c.scenario, c.solver, &final_state,
                                        [&](int step, const FieldState& st) { export_fields(c.scenario, st, dir, step); });
    std::filesystem::create_directories(dir);
    write_file(dir / "report.json", report_json(c, r));
    write_file(dir / "run_meta.json", run_meta_json(r));
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    if (!r.completed) {
        std::cerr << "solver failure: " << r.failure << "\n";
        return SolverFailure;
    }
    double max_bal = 0.0;
    for (const auto& s : r.steps) max_bal = std::max(max_bal, s.balance_relative);
    std::printf("%s %s: %zu steps, max energy balance %.3e, report in %s\n", c.kind.c_str(),
                variant_name(c.scenario.variant), r.steps.size(), max_bal, (dir / "report.json").string().c_str());
    return Success;
}

Grid resized(const Grid& g, int n)
{
    const double length = g.h * (g.n[0] - 1);
    return make_grid({n, n, n}, length / (n - 1), g.gamma_d);
}

int cmd_verify(const std::string& what, const std::string& config, const std::string& out_dir,
               const std::string& sizes, int samples)
{
    const RunConfig c = load_config(config);
    print_warnings(c);
    const Scenario& sc = c.scenario;
    std::vector<int> grids{sc.grid.n[0]};
    if (!sizes.empty()) {
        grids.clear();
        for (double v : parse_list(sizes)) {
            if (v < 2 || v != std::floor(v)) throw std::invalid_argument("grid sizes must be integers >= 2");
            grids.push_back(int(v));
        }
    }
    ojson j;
    j["check"] = what;
    bool pass = true;
    if (what == "coercivity") {
        j["variant"] = variant_name(sc.variant);
        std::string csv = "n,c_min,lambda_space,hardening_bound\n";
        ojson rows = ojson::array();
        double first = 0.0;
        for (int n : grids) {
            const Grid g = sizes.empty() ? sc.grid : resized(sc.grid, n);
            const CoercivityReport r = estimate_coercivity(sc.variant, sc.params, g);
            if (rows.empty()) first = r.c_min;
            rows.push_back({{"n", n},
                            {"c_min", r.c_min},
                            {"lambda_space", r.lambda_space},
                            {"hardening_bound", std::isfinite(r.hardening_bound) ? ojson(r.hardening_bound) : ojson("inf")},
                            {"lanczos_iterations", r.diag.iterations}});
            csv += std::to_string(n) + "," + fmt(r.c_min) + "," + fmt(r.lambda_space) + "," + fmt(r.hardening_bound) + "\n";
            std::printf("n=%d  c_min=%.6e  (space %.6e, hardening %.6e)\n", n, r.c_min, r.lambda_space, r.hardening_bound);
            if (!(r.c_min > 0.0) || r.c_min < 0.5 * first) pass = false;
        }
        j["rows"] = rows;
        maybe_write(out_dir, "coercivity.csv", csv);
    } else if (what == "korn") {
        j["gamma_d"] = sc.grid.gamma_d_string();
        std::string csv = "n,lambda,constant\n";
        ojson rows = ojson::array();
        for (int n : grids) {
            const Grid g = sizes.empty() ? sc.grid : resized(sc.grid, n);
            const KornReport r = estimate_korn_constant(g);
            const bool degenerate = r.lambda <= 1e-10;
            rows.push_back({{"n", n},
                            {"lambda", r.lambda},
                            {"constant", degenerate ? ojson("inf") : ojson(r.constant)},
                            {"skew_share", r.skew_share},
                            {"skew_quotient", r.skew_quotient}});
            csv += std::to_string(n) + "," + fmt(r.lambda) + "," + fmt(r.constant) + "\n";
            std::printf("n=%d  lambda=%.6e  C=%.6e  gamma_d=%s\n", n, r.lambda, r.constant, r.gamma_d.c_str());
            if (degenerate) {
                pass = false;
                std::printf("counterexample: constant skew field X = e1 x (skew share of the lowest mode %.3f), "
                            "|sym X| = 0, |Curl X| = 0, quotient %.3e\n",
                            r.skew_share, r.skew_quotient);
                j["counterexample"] = {{"field", "constant skew"}, {"skew_share", r.skew_share}, {"quotient", r.skew_quotient}};
            }
        }
        j["rows"] = rows;
        maybe_write(out_dir, "korn.csv", csv);
    } else {
        const NormEquivalenceReport r = check_norm_equivalence(sc.grid, samples, c.solver.seed);
        j["samples"] = r.samples;
        j["ratio_min"] = r.ratio_min;
        j["ratio_max"] = r.ratio_max;
        j["lambda_min"] = r.lambda_min;
        j["zero_pair_ok"] = r.zero_pair_ok;
        j["skew_star_free"] = r.skew_star_free;
        j["skew_star_masked"] = r.skew_star_masked;
        j["vanishing_ok"] = r.vanishing_ok;
        std::printf("ratio in [%.6e, %.6e], lambda_min %.6e, vanishing %s\n", r.ratio_min, r.ratio_max, r.lambda_min,
                    r.vanishing_ok ? "ok" : "violated");
        pass = r.pass;
    }
    j["pass"] = pass;
    maybe_write(out_dir, what + ".json", j.dump(2) + "\n");
    return pass ? Success : VerificationFailure;
}

int cmd_sweep(const std::string& config, const std::string& values, const std::string& out_dir)
{
    const RunConfig c = load_config(config);
    print_warnings(c);
    const PenaltySweepReport r = penalty_sweep(c.scenario, c.solver, parse_list(values));
    std::string csv = "h_chi,gap,ratio\n";
    ojson rows = ojson::array();
    std::printf("%10s %16s %8s\n", "H_chi", "gap", "ratio");
    for (const auto& row : r.rows) {
        std::printf("%10g %16.8e %8.4f\n", row.h_chi, row.gap, row.ratio);
        csv += fmt(row.h_chi) + "," + fmt(row.gap) + "," + fmt(row.ratio) + "\n";
        rows.push_back({{"h_chi", row.h_chi}, {"gap", row.gap}, {"ratio", row.ratio}, {"outer_iterations", row.outer_iterations}});
    }
    maybe_write(out_dir, "penalty.csv", csv);
    ojson j{{"scenario", c.kind}, {"variant", variant_name(r.variant)}, {"rows", rows},
            {"strictly_decreasing", r.strictly_decreasing}};
    maybe_write(out_dir, "penalty.json", j.dump(2) + "\n");
    return r.strictly_decreasing ? Success : VerificationFailure;
}

int cmd_probe(const std::string& config, std::uint64_t seed, double threshold)
{
    const RunConfig c = load_config(config);
    print_warnings(c);
    const UniquenessReport r = uniqueness_probe(c.scenario, c.solver, seed, threshold);
    std::printf("steps %d  discrepancy u %.3e  chi %.3e  p %.3e  eta %.3e  max %.3e%s\n", r.steps, r.u, r.chi, r.p,
                r.eta, r.max_discrepancy, r.asserted ? "" : "  (not asserted: no hardening)");
    return r.pass ? Success : VerificationFailure;
}

int cmd_point_test(const std::string& name, int samples, std::uint64_t seed)
{
    const auto v = parse_variant(name);
    if (!v || !is_plastic(*v)) throw std::invalid_argument("point-test needs a plasticity variant, got '" + name + "'");
    const OracleComparison c = compare_with_oracle(*v, samples, seed);
    std::printf("%6s %8s %14s %14s %12s %12s\n", "sample", "plastic", "dlambda_rm", "dlambda_oracle", "error", "kkt/sigma0");
    for (std::size_t i = 0; i < c.rows.size(); ++i) {
        const auto& r = c.rows[i];
        std::printf("%6zu %8s %14.6e %14.6e %12.3e %12.3e\n", i, r.plastic ? "yes" : "no", r.dlambda_return,
                    r.dlambda_oracle, r.error, r.kkt);
    }
    std::printf("%s: %d samples (%d plastic), max error %.3e (tol %.1e), max KKT %.3e (tol %.1e), %.2f s\n",
                variant_name(*v), c.samples, c.plastic_samples, c.max_error, c.resolution, c.max_kkt, c.kkt_tol, c.seconds);
    return c.pass ? Success : VerificationFailure;
}

}  // namespace

int run_command(int argc, char** argv)
{
    CLI::App app{"microcurl: quasistatic gradient-plasticity solver and verification lab"};
    app.require_subcommand(1);

    std::string config, out_dir, values, sizes, what, which, variant;
    int samples = 0;
    std::uint64_t seed = 1;
    double threshold = 1e-6;

    auto* run = app.add_subcommand("run", "run a quasistatic load history");
    run->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "output directory")->required();

    auto* ver = app.add_subcommand("verify", "discrete coercivity, Korn or norm-equivalence check");
    ver->add_option("check", what, "coercivity | korn | norm-equivalence")
        ->required()
        ->check(CLI::IsMember({"coercivity", "korn", "norm-equivalence"}));
    ver->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
    ver->add_option("--out", out_dir, "directory for JSON and CSV tables");
    ver->add_option("--sizes", sizes, "grid sizes n (n^3 nodes), e.g. 6,8,12");
    auto* ver_samples = ver->add_option("--samples", samples, "random samples (norm-equivalence)");

    auto* sweep = app.add_subcommand("sweep", "penalty sweep over H_chi");
    sweep->add_option("kind", which, "hchi")->required()->check(CLI::IsMember({"hchi"}));
    sweep->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
    sweep->add_option("--values", values, "H_chi values, e.g. 10,20,40,80")->required();
    sweep->add_option("--out", out_dir, "directory for JSON and CSV tables");

    auto* probe = app.add_subcommand("probe", "uniqueness probe from two initializations");
    probe->add_option("kind", which, "uniqueness")->required()->check(CLI::IsMember({"uniqueness"}));
    probe->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
    probe->add_option("--seed", seed, "seed of the random start");
    probe->add_option("--threshold", threshold, "relative discrepancy bound");

    auto* point = app.add_subcommand("point-test", "return map against the brute-force oracle");
    point->add_option("--variant", variant, "SC_ISO | SC_KIN | PC_ISO | PC_KIN")->required();
    auto* point_samples = point->add_option("--samples", samples, "number of random trials");
    point->add_option("--seed", seed, "sampling seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? Success : ValidationFailure;
    }

    try {
        if (*run) return cmd_run(config, out_dir);
        if (*ver) return cmd_verify(what, config, out_dir, sizes, ver_samples->count() ? samples : 1000);
        if (*sweep) return cmd_sweep(config, values, out_dir);
        if (*probe) return cmd_probe(config, seed, threshold);
        if (*point) return cmd_point_test(variant, point_samples->count() ? samples : 200, seed);
    } catch (const ConfigParseError& e) {
        for (const auto& err : e.errors())
            std::cerr << config << ":" << err.line << ": " << err.message << "\n";
        return ValidationFailure;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return ValidationFailure;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return SolverFailure;
    }
    return ValidationFailure;
}

}  // namespace microcurl
