#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "microcurl/cli_io.hpp"

using namespace microcurl;
namespace fs = std::filesystem;

namespace {

const std::string kMinimal = "[grid]\nn = 4\n[material]\nsigma0 = 0.02\n[variant]\nname = PC_ISO\n";

fs::path config_dir() { return fs::path(MICROCURL_CONFIG_DIR); }

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("microcurl_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "microcurl");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return run_command(int(argv.size()), argv.data());
}

std::vector<ConfigError> errors_of(const std::string& text)
{
    try {
        parse_config(text);
    } catch (const ConfigParseError& e) {
        return e.errors();
    }
    return {};
}

}  // namespace

TEST(CliIo, MinimalConfigDefaults)
{
    const RunConfig c = parse_config(kMinimal);
    EXPECT_EQ(c.scenario.grid.n, (std::array<int, 3>{4, 4, 4}));
    EXPECT_DOUBLE_EQ(c.scenario.grid.h, 1.0 / 3.0);
    EXPECT_EQ(c.scenario.variant, Variant::PC_ISO);
    EXPECT_EQ(c.scenario.params.E.mu, 1.0);
    EXPECT_EQ(c.scenario.params.E.lambda, 1.0);
    EXPECT_EQ(c.kind, "shear_layer");
    EXPECT_EQ(c.scenario.grid.gamma_d_string(), "zmin,zmax");
    EXPECT_EQ(c.solver.tol_outer, SolverConfig{}.tol_outer);
}

TEST(CliIo, InvalidLameModulusReportsLine)
{
    const auto errs = errors_of("[grid]\nn = 4\n[material]\nsigma0 = 0.02\nmu = -1\n[variant]\nname = PC_ISO\n");
    ASSERT_FALSE(errs.empty());
    EXPECT_EQ(errs[0].line, 5);
    EXPECT_NE(errs[0].message.find("mu"), std::string::npos);
}

TEST(CliIo, ZeroHardeningWarns)
{
    const RunConfig c = parse_config(kMinimal + "[load]\nsteps = 2\n");
    ASSERT_FALSE(c.warnings.empty());
    EXPECT_NE(c.warnings[0].find("uniqueness"), std::string::npos);
}

TEST(CliIo, StructuralErrors)
{
    auto errs = errors_of(kMinimal + "[load]\nsteps = 2\nstep = 3\n");
    ASSERT_EQ(errs.size(), 1u);
    EXPECT_EQ(errs[0].line, 9);
    errs = errors_of(kMinimal + "[loads]\n");
    ASSERT_EQ(errs.size(), 1u);
    EXPECT_EQ(errs[0].line, 7);
    errs = errors_of("[grid]\nn = 4\nn = 5\n[material]\nsigma0 = 0.02\n[variant]\nname = PC_ISO\n");
    ASSERT_EQ(errs.size(), 1u);
    EXPECT_EQ(errs[0].line, 3);
    errs = errors_of("[grid]\nn = 4\n[material]\nsigma0 = 0.02\n");
    ASSERT_EQ(errs.size(), 1u);
    EXPECT_EQ(errs[0].line, 0);
    EXPECT_NE(errs[0].message.find("variant"), std::string::npos);
    errs = errors_of("n = 4\n" + kMinimal);
    ASSERT_FALSE(errs.empty());
    EXPECT_EQ(errs[0].line, 1);
    EXPECT_FALSE(errors_of(kMinimal + "[variant]\nname = PC_ISO\n").empty());
    EXPECT_FALSE(errors_of("[grid]\nn = 4\nlength = 1\nh = 0.1\n[material]\nsigma0 = 0.02\n[variant]\nname = PC_ISO\n").empty());
    EXPECT_FALSE(errors_of("[grid]\nn =\n[material]\nsigma0 = 0.02\n[variant]\nname = PC_ISO\n").empty());
    EXPECT_FALSE(errors_of("[grid]\nn = 4\n[material]\nsigma0 = 0.02\n[variant]\nname = PC_FOO\n").empty());
}

TEST(CliIo, IgnoredDisplacementWarns)
{
    const RunConfig c = parse_config(kMinimal + "[load]\nscenario = uniaxial\ndisplacement_xmax = 1 0 0\n");
    bool found = false;
    for (const auto& w : c.warnings) found |= w.find("xmax") != std::string::npos;
    EXPECT_TRUE(found);
}

TEST(CliIo, SerializeRoundTrip)
{
    for (const char* name : {"shear_layer.conf", "uniaxial.conf", "elastic_patch.conf", "single_crystal.conf",
                             "schema_example.conf", "penalty.conf"}) {
        const RunConfig a = load_config(config_dir() / name);
        const std::string text = serialize_config(a);
        const RunConfig b = parse_config(text);
        EXPECT_EQ(serialize_config(b), text) << name;
        EXPECT_EQ(b.scenario.grid.n, a.scenario.grid.n);
        EXPECT_EQ(b.scenario.grid.h, a.scenario.grid.h);
        EXPECT_EQ(b.scenario.params.sigma0, a.scenario.params.sigma0);
        EXPECT_EQ(b.scenario.face_displacement, a.scenario.face_displacement);
        EXPECT_EQ(b.scenario.affine_gradient, a.scenario.affine_gradient);
    }
}

TEST(CliIo, BundledScenarios)
{
    for (const char* k : {"shear_layer", "uniaxial", "elastic_patch", "custom"}) EXPECT_TRUE(is_bundled_scenario(k));
    EXPECT_FALSE(is_bundled_scenario("tension"));
    Scenario sc;
    apply_bundled_scenario("uniaxial", sc);
    EXPECT_EQ(sc.grid.gamma_d_string(), "zmin");
    EXPECT_LT(sc.body_force[2], 0.0);
    EXPECT_THROW(apply_bundled_scenario("tension", sc), std::invalid_argument);
}

TEST(CliIo, ExportZeroState)
{
    const RunConfig c = parse_config("[grid]\nn = 8\n[material]\nsigma0 = 0.02\nk2 = 0.5\n[variant]\nname = PC_ISO\n");
    const FieldState st = FieldState::zeros(c.scenario);
    const fs::path d1 = scratch("export1"), d2 = scratch("export2");
    const auto files = export_fields(c.scenario, st, d1, 3);
    ASSERT_EQ(files.size(), 4u);
    const std::string u = slurp(d1 / "u_0003.csv");
    EXPECT_EQ(u.substr(0, u.find('\n')), "x,y,z,u1,u2,u3");
    EXPECT_EQ(std::count(u.begin(), u.end(), '\n'), 513);
    const std::string chi = slurp(d1 / "chi_0003.csv");
    EXPECT_EQ(chi.substr(0, chi.find('\n')), "x,y,z,chi11,chi12,chi13,chi21,chi22,chi23,chi31,chi32,chi33");
    export_fields(c.scenario, st, d2, 3);
    for (const auto& f : files) EXPECT_EQ(slurp(f), slurp(d2 / f.filename()));
}

TEST(CliIo, ReportIsDeterministic)
{
    const RunConfig c = parse_config("[grid]\nn = 4\n[material]\nsigma0 = 0.02\nk2 = 0.5\n[variant]\nname = PC_ISO\n[load]\nsteps = 2\n");
    const RunReport a = run_quasistatic(c.scenario, c.solver);
    const RunReport b = run_quasistatic(c.scenario, c.solver);
    EXPECT_EQ(report_json(c, a), report_json(c, b));
    EXPECT_EQ(report_json(c, a).find("seconds"), std::string::npos);
    EXPECT_NE(run_meta_json(a).find("wall_seconds"), std::string::npos);
}

TEST(CliIo, CommandExitCodes)
{
    const fs::path out = scratch("cli");
    const fs::path good = out / "good.conf", bad = out / "bad.conf", fail = out / "fail.conf";
    std::ofstream(good) << "[grid]\nn = 4\n[material]\nsigma0 = 0.02\nk2 = 0.5\n[variant]\nname = PC_ISO\n[load]\nsteps = 2\n";
    std::ofstream(bad) << "[grid]\nn = 4\n[material]\nmu = -1\nsigma0 = 0.02\n[variant]\nname = PC_ISO\n";
    std::ofstream(fail) << "[grid]\nn = 4\n[material]\nsigma0 = 0.02\nk2 = 0.5\n[variant]\nname = PC_ISO\n[load]\nsteps = 2\n"
                           "[solver]\nmax_outer_iters = 1\ntol_outer = 1e-15\n";
    EXPECT_EQ(cli({"run", "--config", good.string(), "--out", (out / "run").string()}), Success);
    EXPECT_TRUE(fs::exists(out / "run" / "report.json"));
    EXPECT_TRUE(fs::exists(out / "run" / "run_meta.json"));
    EXPECT_TRUE(fs::exists(out / "run" / "u_0002.csv"));
    EXPECT_EQ(cli({"run", "--config", bad.string(), "--out", (out / "bad").string()}), ValidationFailure);
    EXPECT_EQ(cli({"run", "--config", fail.string(), "--out", (out / "fail").string()}), SolverFailure);
    EXPECT_EQ(cli({"run", "--config", (out / "missing.conf").string(), "--out", out.string()}), ValidationFailure);
    EXPECT_EQ(cli({"frobnicate"}), ValidationFailure);
    EXPECT_EQ(cli({"verify", "korn", "--config", (config_dir() / "korn_free.conf").string(), "--sizes", "4"}),
              VerificationFailure);
    EXPECT_EQ(cli({"verify", "korn", "--config", good.string(), "--out", (out / "korn").string()}), Success);
    EXPECT_TRUE(fs::exists(out / "korn" / "korn.json"));
    EXPECT_EQ(cli({"verify", "coercivity", "--config", (config_dir() / "coercivity.conf").string()}), Success);
    EXPECT_EQ(cli({"point-test", "--variant", "PC_KIN", "--samples", "20"}), Success);
    EXPECT_EQ(cli({"point-test", "--variant", "RM_ELASTIC"}), ValidationFailure);
}
