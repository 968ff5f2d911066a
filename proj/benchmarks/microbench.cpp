// Microbenchmarks for the solver stages, from sparse kernels up to full runs.
// Sizes are chosen so the whole suite finishes in well under a minute.
#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "fmat/decomp.hpp"
#include "fmat/factor.hpp"
#include "fmat/krylov.hpp"
#include "fmat/pipeline.hpp"
#include "fmat/precond.hpp"
#include "fmat/problems.hpp"
#include "fmat/saddle.hpp"
#include "fmat/sparse.hpp"
#include "fmat/transform.hpp"

namespace {

using namespace fmat;

SaddleSystem stokes_system(int nx) { return scale_unit_gradient(gen_stokes(2, nx)).system; }

GridSpec stokes_grid(int nx, int sx) { return GridSpec{2, nx, sx, GridKind::staggered}; }

void bm_from_triplets(benchmark::State& state) {
    const int nx = static_cast<int>(state.range(0));
    auto sys = stokes_system(nx);
    const SparseMatrix k = assemble(sys);
    std::vector<Triplet> ts;
    ts.reserve(k.nnz());
    for (int r = 0; r < k.rows(); ++r) {
        const auto cols = k.row_cols(r);
        const auto vals = k.row_values(r);
        for (std::size_t i = 0; i < cols.size(); ++i) ts.push_back({r, cols[i], vals[i]});
    }
    for (auto _ : state) {
        auto a = SparseMatrix::from_triplets(k.rows(), k.cols(), ts);
        benchmark::DoNotOptimize(a);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ts.size()));
}

void bm_spmv(benchmark::State& state) {
    const int nx = static_cast<int>(state.range(0));
    const SparseMatrix k = assemble(stokes_system(nx));
    std::vector<double> x(k.cols(), 1.0), y(k.rows());
    for (auto _ : state) {
        k.multiply(x.data(), y.data());
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * k.nnz());
}

void bm_generate_stokes(benchmark::State& state) {
    const int nx = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto sys = stokes_system(nx);
        benchmark::DoNotOptimize(sys);
    }
}

void bm_generate_cavity_jacobian(benchmark::State& state) {
    const int nx = static_cast<int>(state.range(0));
    const CavityState rest = zero_cavity_state(nx);
    for (auto _ : state) {
        auto sys = gen_cavity_jacobian(nx, 500.0, rest);
        benchmark::DoNotOptimize(sys);
    }
}

void bm_decompose(benchmark::State& state) {
    const int nx = static_cast<int>(state.range(0));
    const auto sys = stokes_system(nx);
    for (auto _ : state) {
        auto d = decompose(stokes_grid(nx, 8), sys);
        benchmark::DoNotOptimize(d);
    }
}

void bm_eliminate_interiors(benchmark::State& state) {
    const int nx = static_cast<int>(state.range(0));
    const auto sys = stokes_system(nx);
    const auto d = decompose(stokes_grid(nx, 8), sys);
    for (auto _ : state) {
        auto f = eliminate_interiors(sys, d);
        benchmark::DoNotOptimize(f);
    }
}

void bm_transform_schur(benchmark::State& state) {
    const int nx = static_cast<int>(state.range(0));
    const auto sys = stokes_system(nx);
    const auto d = decompose(stokes_grid(nx, 8), sys);
    const auto f = eliminate_interiors(sys, d);
    for (auto _ : state) {
        auto t = transform_schur(f.schur, d, build_group_transforms(d));
        benchmark::DoNotOptimize(t);
    }
}

void bm_precond_build(benchmark::State& state) {
    const int nx = static_cast<int>(state.range(0));
    const auto sys = stokes_system(nx);
    const auto d = decompose(stokes_grid(nx, 8), sys);
    const auto f = eliminate_interiors(sys, d);
    const auto t = transform_schur(f.schur, d, build_group_transforms(d));
    for (auto _ : state) {
        auto m = Preconditioner::build(t, d, true);
        benchmark::DoNotOptimize(m);
    }
}

void bm_precond_apply(benchmark::State& state) {
    const int nx = static_cast<int>(state.range(0));
    const auto sys = stokes_system(nx);
    const auto d = decompose(stokes_grid(nx, 8), sys);
    const auto f = eliminate_interiors(sys, d);
    const auto t = transform_schur(f.schur, d, build_group_transforms(d));
    const auto m = Preconditioner::build(t, d, true);
    std::vector<double> r(t.matrix.rows(), 1.0);
    for (auto _ : state) {
        auto z = m.apply(r);
        benchmark::DoNotOptimize(z);
    }
}

void bm_ppcg_solve(benchmark::State& state) {
    const int nx = static_cast<int>(state.range(0));
    const auto sys = stokes_system(nx);
    const auto d = decompose(stokes_grid(nx, 8), sys);
    const auto f = eliminate_interiors(sys, d);
    const auto t = transform_schur(f.schur, d, build_group_transforms(d));
    const auto m = Preconditioner::build(t, d, true);
    std::vector<double> b(t.matrix.rows());
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = i < static_cast<std::size_t>(t.velocity_count) ? 1.0 : 0.0;
    KrylovOptions opt;
    opt.tol = 1e-8;
    for (auto _ : state) {
        auto res = ppcg(t.matrix, m, b, opt);
        benchmark::DoNotOptimize(res);
    }
}

void bm_run_poisson(benchmark::State& state) {
    RunConfig c;
    c.problem = ProblemFamily::poisson;
    c.nx = static_cast<int>(state.range(0));
    c.sx = 8;
    for (auto _ : state) {
        auto rep = run(c);
        benchmark::DoNotOptimize(rep);
    }
}

void bm_run_stokes(benchmark::State& state) {
    RunConfig c;
    c.problem = ProblemFamily::stokes;
    c.nx = static_cast<int>(state.range(0));
    c.sx = 8;
    for (auto _ : state) {
        auto rep = run(c);
        benchmark::DoNotOptimize(rep);
    }
}

BENCHMARK(bm_from_triplets)->Arg(64);
BENCHMARK(bm_spmv)->Arg(64)->Arg(128);
BENCHMARK(bm_generate_stokes)->Arg(64)->Arg(128);
BENCHMARK(bm_generate_cavity_jacobian)->Arg(64);
BENCHMARK(bm_decompose)->Arg(64)->Arg(128);
BENCHMARK(bm_eliminate_interiors)->Arg(64)->Arg(128);
BENCHMARK(bm_transform_schur)->Arg(64)->Arg(128);
BENCHMARK(bm_precond_build)->Arg(64)->Arg(128);
BENCHMARK(bm_precond_apply)->Arg(64)->Arg(128);
BENCHMARK(bm_ppcg_solve)->Arg(64);
BENCHMARK(bm_run_poisson)->Arg(64)->Arg(128);
BENCHMARK(bm_run_stokes)->Arg(64);

} // namespace

BENCHMARK_MAIN();
