#include "fmat/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <utility>

#include "fmat/decomp.hpp"
#include "fmat/error.hpp"
#include "fmat/factor.hpp"
#include "fmat/krylov.hpp"
#include "fmat/matrix_market.hpp"
#include "fmat/precond.hpp"
#include "fmat/problems.hpp"
#include "fmat/saddle.hpp"
#include "fmat/transform.hpp"

namespace fmat {

namespace {

struct Assembled {
    SaddleSystem system;     // as solved (flux-scaled for the staggered families)
    std::vector<double> rhs; // matching scaling
    GridSpec grid;
    std::vector<double> unscale; // empty, or velocity scaling to undo at the end
};

std::vector<double> standard_re_steps(double re) {
    std::vector<double> prior;
    for (double s : {500.0, 1000.0, 2000.0, 4000.0}) {
        if (s < re) prior.push_back(s);
    }
    return prior;
}

Assembled build_problem(const RunConfig& cfg) {
    Assembled out;
    switch (cfg.problem) {
    case ProblemFamily::poisson: {
        auto p = poisson_problem(cfg.dim, cfg.nx, cfg.seed);
        const int n = p.A.rows();
        out.system = make_saddle_system(std::move(p.A),
                                        SparseMatrix::from_triplets(n, 0, {}), true, true);
        out.rhs = std::move(p.rhs);
        out.grid = p.grid;
        break;
    }
    case ProblemFamily::darcy:
    case ProblemFamily::stokes: {
        auto p = cfg.problem == ProblemFamily::darcy ? darcy_problem(cfg.dim, cfg.nx, cfg.seed)
                                                     : stokes_problem(cfg.dim, cfg.nx, cfg.seed);
        auto scaled = scale_unit_gradient(p.system);
        out.system = std::move(scaled.system);
        out.rhs = std::move(p.rhs);
        for (std::size_t i = 0; i < scaled.d.size(); ++i) out.rhs[i] *= scaled.d[i];
        out.grid = p.grid;
        out.unscale = std::move(scaled.d);
        break;
    }
    case ProblemFamily::cavity: {
        if (cfg.dim != 2) throw Error("generate: the cavity problem is two dimensional");
        auto state = continue_to_re(cfg.nx, standard_re_steps(cfg.re));
        out.system = gen_cavity_jacobian(cfg.nx, cfg.re, state);
        out.rhs = cavity_residual(cfg.nx, cfg.re, state);
        for (double& v : out.rhs) v = -v;
        out.grid = GridSpec{2, cfg.nx, cfg.sx, GridKind::staggered};
        break;
    }
    }
    out.grid.sx = cfg.sx;
    return out;
}

SolverKind pick_solver(const RunConfig& cfg, const Assembled& a) {
    if (cfg.solver != SolverKind::automatic) return cfg.solver;
    if (a.system.m() == 0) return SolverKind::pcg;
    return a.system.symmetric ? SolverKind::ppcg : SolverKind::gmres;
}

double relative_residual(const SaddleSystem& sys, const std::vector<double>& x,
                         const std::vector<double>& b) {
    const SparseMatrix k = assemble(sys);
    std::vector<double> q(b.size());
    k.multiply(x.data(), q.data());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        num += (b[i] - q[i]) * (b[i] - q[i]);
        den += b[i] * b[i];
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

// Fallback when the grid has a single subdomain: nothing to decompose, so the
// whole system is factored directly.
void run_direct(const Assembled& a, double tol, SolveReport& rep) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> x = direct_solve(a.system, a.rhs);
    rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    rep.residual = relative_residual(a.system, x, a.rhs);
    rep.converged = rep.residual <= 50.0 * tol;
}

void run_two_level(const RunConfig& cfg, const Assembled& a, double tol, SolverKind solver,
                   SolveReport& rep) {
    const auto t0 = std::chrono::steady_clock::now();
    Decomposition d = decompose(a.grid, a.system);
    FactorState f = eliminate_interiors(a.system, d);
    TransformedSchur t = transform_schur(f.schur, d, build_group_transforms(d));
    Preconditioner m = Preconditioner::build(t, d, a.system.symmetric);

    std::vector<double> y = a.rhs;
    forward_substitute(f, y);
    const auto vars = d.schur_variables();
    std::vector<double> r(vars.size());
    for (std::size_t i = 0; i < vars.size(); ++i) r[i] = y[vars[i]];
    const std::vector<double> rt = t.to_transformed(r);

    KrylovOptions opt;
    opt.tol = tol;
    KrylovResult res = solver == SolverKind::pcg    ? pcg(t.matrix, m, rt, opt)
                       : solver == SolverKind::ppcg ? ppcg(t.matrix, m, rt, opt)
                                                    : gmres(t.matrix, m, rt, opt);

    const std::vector<double> z = t.from_transformed(res.x);
    std::vector<double> full = a.rhs;
    forward_substitute(f, full);
    for (std::size_t i = 0; i < vars.size(); ++i) full[vars[i]] = z[i];
    back_substitute(f, full);
    rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();

    rep.NS = t.matrix.rows();
    rep.n = m.reduced().size();
    rep.iter = res.iterations;
    rep.drift = res.constraint_drift;
    const double knnz = static_cast<double>(rep.nnz);
    rep.fill1_a = static_cast<double>(f.fill.factor_entries) / knnz;
    rep.fill1_b = static_cast<double>(t.matrix.nnz()) / knnz;
    rep.fill1_c = static_cast<double>(m.stats().block_factor_entries) / knnz;
    rep.fill1 = rep.fill1_a + rep.fill1_b + rep.fill1_c;
    rep.fill2 = static_cast<double>(m.stats().reduced_factor_entries) / knnz;

    if (cfg.compute_kappa && a.system.symmetric) rep.kappa = condition_estimate(t.matrix, m);

    if (!a.unscale.empty())
        for (std::size_t i = 0; i < a.unscale.size(); ++i) full[i] *= a.unscale[i];
    std::vector<double> b0 = a.rhs;
    if (!a.unscale.empty())
        for (std::size_t i = 0; i < a.unscale.size(); ++i) b0[i] /= a.unscale[i];
    SaddleSystem original = a.system;
    if (!a.unscale.empty()) {
        // undo the unit-coupling congruence for the end-to-end check
        std::vector<double> inv(a.unscale.size());
        for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 / a.unscale[i];
        auto rescale = [&](SparseMatrix& mat, bool cols) {
            std::vector<Triplet> ts;
            for (int row = 0; row < mat.rows(); ++row) {
                const auto rc = mat.row_cols(row);
                const auto rv = mat.row_values(row);
                for (std::size_t j = 0; j < rc.size(); ++j) {
                    double v = rv[j] * inv[row];
                    if (cols) v *= inv[rc[j]];
                    ts.push_back({row, rc[j], v});
                }
            }
            mat = SparseMatrix::from_triplets(mat.rows(), mat.cols(), ts);
        };
        rescale(original.A, true);
        rescale(original.B, false);
    }
    rep.residual = relative_residual(original, full, b0);
    rep.converged = res.converged && rep.residual <= 50.0 * tol;
}

} // namespace

SolveReport run(const RunConfig& cfg) {
    SolveReport rep;
    rep.nx = cfg.nx;
    rep.sx = cfg.sx;
    const double tol = cfg.tol > 0.0 ? cfg.tol
                                     : (cfg.problem == ProblemFamily::cavity ? 1e-6 : 1e-8);

    auto stage = [&](const char* name, auto&& body) {
        if (!rep.error.empty()) return;
        try {
            body();
        } catch (const std::exception& e) {
            rep.error = std::string(name) + ": " + e.what();
        }
    };

    Assembled a;
    stage("generate", [&] {
        a = build_problem(cfg);
        rep.N = a.system.size();
        rep.nnz = assemble(a.system).nnz();
        if (!cfg.export_matrix.empty())
            write_matrix_market(cfg.export_matrix, assemble(a.system));
    });
    stage("solve", [&] {
        if (cfg.sx <= 0 || cfg.nx % cfg.sx != 0)
            throw Error("the subdomain size must divide the grid size");
        if (cfg.nx / cfg.sx < 2) {
            run_direct(a, tol, rep);
        } else {
            run_two_level(cfg, a, tol, pick_solver(cfg, a), rep);
        }
    });
    return rep;
}

std::vector<SolveReport> sweep(const std::vector<RunConfig>& cfgs) {
    std::vector<SolveReport> out;
    out.reserve(cfgs.size());
    for (const auto& cfg : cfgs) out.push_back(run(cfg));
    return out;
}

namespace {

std::string fmt(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

} // namespace

std::string format_table(const std::vector<SolveReport>& rows) {
    std::string out = "   nx  sx         N        nnz      N_S       n  iter  fill1  fill2  "
                      "kappa   wall_ms\n";
    for (const auto& r : rows) {
        char line[256];
        if (r.error.empty()) {
            std::snprintf(line, sizeof(line),
                          "%5d %3d %9lld %10lld %8d %7d %5d %6.2f %6.2f %6s %9.1f\n", r.nx, r.sx,
                          static_cast<long long>(r.N), static_cast<long long>(r.nnz), r.NS, r.n,
                          r.iter, r.fill1, r.fill2,
                          r.kappa > 0.0 ? fmt("%.2f", r.kappa).c_str() : "-", r.wall_ms);
        } else {
            std::snprintf(line, sizeof(line), "%5d %3d  failed  %s\n", r.nx, r.sx,
                          r.error.c_str());
        }
        out += line;
    }
    return out;
}

std::string format_csv(const std::vector<SolveReport>& rows, bool timing) {
    std::string out = "nx,sx,N,nnz,NS,n,iter,fill1,fill2,kappa,wall_ms\n";
    for (const auto& r : rows) {
        char line[256];
        if (r.error.empty()) {
            std::snprintf(line, sizeof(line), "%d,%d,%lld,%lld,%d,%d,%d,%.4f,%.4f,%s,%s\n", r.nx,
                          r.sx, static_cast<long long>(r.N), static_cast<long long>(r.nnz), r.NS,
                          r.n, r.iter, r.fill1, r.fill2,
                          r.kappa > 0.0 ? fmt("%.4f", r.kappa).c_str() : "-",
                          timing ? fmt("%.1f", r.wall_ms).c_str() : "-");
        } else {
            std::snprintf(line, sizeof(line), "%d,%d,%lld,-,-,-,-,-,-,-,-\n", r.nx, r.sx,
                          static_cast<long long>(r.N));
        }
        out += line;
    }
    return out;
}

} // namespace fmat
