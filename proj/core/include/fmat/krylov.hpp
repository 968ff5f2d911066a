#pragma once

#include <functional>
#include <vector>

#include "fmat/precond.hpp"
#include "fmat/sparse.hpp"

namespace fmat {

struct KrylovOptions {
    double tol = 1e-8; // on ||r|| / ||b||, unpreconditioned
    int max_iter = 1000;
    int restart = 0; // gmres only; 0 runs unrestarted
};

struct KrylovResult {
    std::vector<double> x;
    std::vector<double> residual_history; // relative; starts with the initial residual
    int iterations = 0;
    bool converged = false;
    double constraint_drift = 0.0; // ppcg: max over iterates of ||B^T x|| / ||x||
};

using LinearOp = std::function<void(const double* x, double* y)>;

// Conjugate gradients on a symmetric positive definite pair. Non-positive
// curvature aborts; indefinite systems belong to ppcg or gmres.
KrylovResult pcg(const LinearOp& a, const LinearOp& m, int n, const std::vector<double>& b,
                 const KrylovOptions& opt = {});
KrylovResult pcg(const SparseMatrix& a, const Preconditioner& m, const std::vector<double>& b,
                 const KrylovOptions& opt = {});

// Conjugate gradients on a saddle system whose preconditioner solves the
// constraint rows exactly: iterates stay on the constraint manifold, which is
// re-enforced by zeroing the pressure residual each step and verified by the
// reported drift. Starts from the preconditioner's particular solution when
// the pressure right-hand side is nonzero.
KrylovResult ppcg(const SparseMatrix& s, const Preconditioner& m, const std::vector<double>& b,
                  const KrylovOptions& opt = {});

// Right-preconditioned GMRES with modified Gram-Schmidt and Givens rotations.
// Throws when 50 consecutive iterations improve the residual by less than a
// factor of 1e-3 in total.
KrylovResult gmres(const LinearOp& a, const LinearOp& m, int n, const std::vector<double>& b,
                   const KrylovOptions& opt = {});
KrylovResult gmres(const SparseMatrix& a, const Preconditioner& m, const std::vector<double>& b,
                   const KrylovOptions& opt = {});

// Condition number of the preconditioned system: extreme magnitudes of the
// pencil (s, m) restricted to the constraint manifold for saddle systems.
// Dense symmetric computation up to 2000 unknowns, Lanczos beyond.
double condition_estimate(const SparseMatrix& s, const Preconditioner& m);

} // namespace fmat
