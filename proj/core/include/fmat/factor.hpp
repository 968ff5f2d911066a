#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmat/decomp.hpp"
#include "fmat/saddle.hpp"
#include "fmat/sparse.hpp"

namespace fmat {

// A velocity-pressure coupling with magnitude at or below this is treated as
// vanished: such velocities may take a single pivot, and the entry is removed
// from the working pattern. Exact cancellation is the common case because the
// coupling entries are +-1 after scaling.
inline constexpr double kCouplingVanishTol = 1e-13;

struct PivotStep {
    int v = -1;
    int p = -1; // -1: single velocity pivot
};

struct EliminationPlan {
    std::vector<int> v_order;          // velocities in elimination order
    std::vector<PivotStep> pivot_log;  // one entry per v_order element
};

// One executed pivot. lcol holds the couplings of the remaining rows to the
// pivot pair, urow the couplings of the pivot rows to the remaining columns;
// kp is unused for single pivots.
struct EliminationStep {
    struct Entry {
        int id;
        double kv, kp;
    };
    int v = -1, p = -1;
    double alpha = 0.0, beta = 0.0;
    std::vector<Entry> lcol, urow;
};

struct SubdomainFactor {
    int subdomain = 0;
    std::vector<EliminationStep> steps;
};

struct FillCounters {
    std::int64_t factor_entries = 0;   // scalars stored in subdomain factors
    std::int64_t schur_entries = 0;    // nonzeros of the assembled Schur complement
    std::int64_t precond_entries = 0;  // filled in by the preconditioner stage
};

// Result of eliminating a set of variables: the triangular data needed for
// substitution plus the Schur complement over everything that remains.
// schur rows/cols follow schur_vars, velocities first then pressures.
struct FactorState {
    std::vector<SubdomainFactor> subdomain_factors;
    SparseMatrix schur;
    std::vector<int> schur_vars;
    int schur_velocity_count = 0;
    bool symmetric = false;
    FillCounters fill;
};

// Decide the pivot sequence for eliminating `scope` (variable ids, velocities
// and pressures mixed): velocities follow a fill-reducing order on their
// coupling graph, and a velocity still coupled to a pressure is paired with
// the lowest-indexed such pressure as a 2x2 pivot. Runs the elimination
// numerically so decoupling by cancellation is honored.
// Throws if a scope pressure ends up with no coupled scope velocity.
EliminationPlan plan_elimination(const SaddleSystem& k, const std::vector<int>& scope);

// Execute a plan exactly (no dropping). Validates the plan as it goes: a
// single pivot on a pressure-coupled velocity and a vanished pairing both
// throw, since either would break the zero-block structure.
FactorState eliminate(const SaddleSystem& k, const EliminationPlan& plan);

// Eliminate the interior variables of every subdomain independently and
// assemble the global Schur complement over separator velocities, corner
// velocities, and retained pressures. Summation order is fixed, so the result
// does not depend on the order the subdomains are processed in.
FactorState eliminate_interiors(const SaddleSystem& k, const Decomposition& d);

// View the Schur complement as a saddle system again (velocity block, coupling
// block). Requires the pressure-pressure block to be empty, which elimination
// preserves.
SaddleSystem schur_as_saddle(const FactorState& f);

// In-place substitution with the stored factors over full-length vectors.
// forward reduces a right-hand side; after the Schur part of y has been
// replaced by its solution, back fills in the eliminated variables.
void forward_substitute(const FactorState& f, std::vector<double>& y);
void back_substitute(const FactorState& f, std::vector<double>& y);

// Complete factorization and solve. Systems whose coupling block has all rows
// balanced are singular with the constant-pressure nullspace; those are solved
// by grounding one pressure, require a compatible right-hand side, and return
// the zero-mean-pressure representative.
std::vector<double> direct_solve(const SaddleSystem& k, const std::vector<double>& b);

std::string dump_pivot_log(const EliminationPlan& plan);
void export_schur(const FactorState& f, const std::string& path);

} // namespace fmat
