#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fmat {

enum class ProblemFamily { poisson, darcy, stokes, cavity };

// automatic picks pcg for scalar problems, ppcg for symmetric saddle
// problems, and gmres for nonsymmetric ones.
enum class SolverKind { automatic, pcg, ppcg, gmres };

struct RunConfig {
    ProblemFamily problem = ProblemFamily::poisson;
    int dim = 2;
    int nx = 64;
    int sx = 8;
    double re = 500.0; // cavity only
    double tol = 0.0;  // 0: family default (1e-8; cavity 1e-6)
    SolverKind solver = SolverKind::automatic;
    bool compute_kappa = false;
    std::uint64_t seed = 1;
    std::string export_matrix; // empty: no export
};

struct SolveReport {
    int nx = 0, sx = 0;
    std::int64_t N = 0, nnz = 0;
    int NS = 0; // interface system size
    int n = 0;  // reduced system size
    int iter = 0;
    bool converged = false;
    double fill1 = 0.0;   // fill1_a + fill1_b + fill1_c
    double fill1_a = 0.0; // subdomain factors
    double fill1_b = 0.0; // interface system
    double fill1_c = 0.0; // group block factors
    double fill2 = 0.0;   // reduced system factor
    double kappa = 0.0;   // 0: not computed
    double wall_ms = 0.0;
    double drift = 0.0;    // constrained solves only
    double residual = 0.0; // recomputed on the full system from the returned solution
    std::string error;     // nonempty: run failed, message carries the stage
};

SolveReport run(const RunConfig& cfg);

// One report per config; a failed config yields a report with the error field
// set and the sweep continues.
std::vector<SolveReport> sweep(const std::vector<RunConfig>& cfgs);

std::string format_table(const std::vector<SolveReport>& rows);

// Schema: nx,sx,N,nnz,NS,n,iter,fill1,fill2,kappa,wall_ms. With timing off
// the wall_ms column prints "-" so repeated runs are byte-identical.
std::string format_csv(const std::vector<SolveReport>& rows, bool timing = true);

} // namespace fmat
