#include <benchmark/benchmark.h>

#include <random>

#include "microcurl/grid_fields.hpp"
#include "microcurl/reference.hpp"
#include "microcurl/solver.hpp"

using namespace microcurl;

namespace {

Grid cube(int n) { return make_grid({n, n, n}, 1.0 / (n - 1), {false, false, false, false, true, false}); }

VectorField3 random_vectors(std::size_t n)
{
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    VectorField3 u(n);
    for (auto& v : u)
        for (double& c : v) c = d(rng);
    return u;
}

TensorField3 random_tensors(std::size_t n)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    TensorField3 x(n);
    for (auto& t : x)
        for (double& c : t.a) c = d(rng);
    return x;
}

void BM_grad_omp(benchmark::State& st)
{
    const Grid g = cube(int(st.range(0)));
    const VectorField3 u = random_vectors(g.size());
    for (auto _ : st) benchmark::DoNotOptimize(grad_h(g, u));
    st.SetItemsProcessed(st.iterations() * std::int64_t(g.size()));
}

void BM_grad_ref(benchmark::State& st)
{
    const Grid g = cube(int(st.range(0)));
    const VectorField3 u = random_vectors(g.size());
    for (auto _ : st) benchmark::DoNotOptimize(reference::grad_h(g, u));
    st.SetItemsProcessed(st.iterations() * std::int64_t(g.size()));
}

void BM_curl_omp(benchmark::State& st)
{
    const Grid g = cube(int(st.range(0)));
    const TensorField3 x = random_tensors(g.size());
    for (auto _ : st) benchmark::DoNotOptimize(curl_h(g, x));
    st.SetItemsProcessed(st.iterations() * std::int64_t(g.size()));
}

void BM_curl_ref(benchmark::State& st)
{
    const Grid g = cube(int(st.range(0)));
    const TensorField3 x = random_tensors(g.size());
    for (auto _ : st) benchmark::DoNotOptimize(reference::curl_h(g, x));
    st.SetItemsProcessed(st.iterations() * std::int64_t(g.size()));
}

void BM_curlcurl_omp(benchmark::State& st)
{
    const Grid g = cube(int(st.range(0)));
    const TensorField3 x = random_tensors(g.size());
    for (auto _ : st) benchmark::DoNotOptimize(curl_h_adjoint(g, curl_h(g, x)));
    st.SetItemsProcessed(st.iterations() * std::int64_t(g.size()));
}

void BM_curlcurl_ref(benchmark::State& st)
{
    const Grid g = cube(int(st.range(0)));
    const TensorField3 x = random_tensors(g.size());
    for (auto _ : st) benchmark::DoNotOptimize(reference::curl_h_adjoint(g, reference::curl_h(g, x)));
    st.SetItemsProcessed(st.iterations() * std::int64_t(g.size()));
}

void BM_inner_omp(benchmark::State& st)
{
    const Grid g = cube(int(st.range(0)));
    const TensorField3 x = random_tensors(g.size());
    for (auto _ : st) benchmark::DoNotOptimize(inner_l2(g, x, x));
}

void BM_inner_ref(benchmark::State& st)
{
    const Grid g = cube(int(st.range(0)));
    const TensorField3 x = random_tensors(g.size());
    for (auto _ : st) benchmark::DoNotOptimize(reference::inner_l2(g, x, x));
}

void BM_plastic_sweep(benchmark::State& st)
{
    Scenario sc;
    sc.grid = cube(int(st.range(0)));
    sc.variant = Variant::PC_ISO;
    sc.params.E = make_moduli(1.0, 1.0);
    sc.params.k2 = 0.5;
    sc.params.sigma0 = 0.02;
    const FieldState z = FieldState::zeros(sc);
    const VectorField3 u = [&] {
        VectorField3 v = random_vectors(sc.grid.size());
        for (auto& a : v)
            for (double& c : a) c *= 0.01;
        return v;
    }();
    const TensorField3 chi(sc.grid.size());
    SolverConfig cfg;
    for (auto _ : st) benchmark::DoNotOptimize(plastic_update_sweep(sc, u, chi, z.cells, cfg));
    st.SetItemsProcessed(st.iterations() * std::int64_t(sc.grid.size()));
}

}  // namespace

BENCHMARK(BM_grad_omp)->Arg(16)->Arg(32)->Arg(48);
BENCHMARK(BM_grad_ref)->Arg(16)->Arg(32)->Arg(48);
BENCHMARK(BM_curl_omp)->Arg(16)->Arg(32)->Arg(48);
BENCHMARK(BM_curl_ref)->Arg(16)->Arg(32)->Arg(48);
BENCHMARK(BM_curlcurl_omp)->Arg(16)->Arg(32);
BENCHMARK(BM_curlcurl_ref)->Arg(16)->Arg(32);
BENCHMARK(BM_inner_omp)->Arg(32);
BENCHMARK(BM_inner_ref)->Arg(32);
BENCHMARK(BM_plastic_sweep)->Arg(16);

int main(int argc, char** argv)
{
    configure_threads();
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
