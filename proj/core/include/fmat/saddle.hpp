#pragma once

#include <string>
#include <vector>

#include "fmat/sparse.hpp"

namespace fmat {

// Block system [A B; B^T 0]. Velocity unknowns occupy indices 0..n-1 and
// pressure unknowns n..n+m-1 of the assembled matrix.
struct SaddleSystem {
    SparseMatrix A; // n x n, positive definite (symmetric part)
    SparseMatrix B; // n x m, one coupling row per velocity
    bool symmetric = true;
    // Set by generators that guarantee positive definiteness by construction.
    // Consulted instead of a numeric factorization above the check cap.
    bool pd_certified = false;

    int n() const { return A.rows(); }
    int m() const { return B.cols(); }
    int size() const { return n() + m(); }
};

SaddleSystem make_saddle_system(SparseMatrix A, SparseMatrix B, bool symmetric,
                                bool pd_certified = false);

SparseMatrix assemble(const SaddleSystem& sys);

struct GradientReport {
    bool is_gradient = true;
    std::vector<int> offending_rows;
    int max_row_nnz = 0;
    double row_sum_max_abs = 0.0;
};

// A row passes when it has at most two nonzero values and their sum is zero
// relative to the largest magnitude in the row. Stored zeros do not count.
GradientReport validate_gradient_matrix(const SparseMatrix& b, double tol = 1e-12);

// Gradient B plus positive definite symmetric part of A. The factorization
// check runs only for n <= pd_check_cap; larger systems rely on pd_certified.
bool is_f_matrix(const SaddleSystem& sys, int pd_check_cap = 5000);

struct ScaledSystem {
    SaddleSystem system;
    std::vector<double> d; // velocity scaling, length n; solution unscales as x_v = d .* y_v
};

// Symmetric congruence with diag(d, I) chosen so every nonzero of the scaled
// B has magnitude exactly 1. Rows whose two entries differ in magnitude are
// not fixable by row scaling and are rejected.
ScaledSystem scale_unit_gradient(const SaddleSystem& sys, double tol = 1e-12);

// Reads A and B in Matrix Market format plus a key-value header with lines
// "n <int>", "m <int>", "symmetric <0|1>".
SaddleSystem load_saddle_system(const std::string& a_path, const std::string& b_path,
                                const std::string& header_path);

} // namespace fmat
