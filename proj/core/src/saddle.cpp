#include "fmat/saddle.hpp"

#include <Eigen/SparseCholesky>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fmat/error.hpp"
#include "fmat/matrix_market.hpp"

namespace fmat {

SaddleSystem make_saddle_system(SparseMatrix A, SparseMatrix B, bool symmetric,
                                bool pd_certified) {
    if (A.rows() != A.cols()) throw Error("saddle: A must be square");
    if (B.rows() != A.rows()) throw Error("saddle: B row count must match A");
    if (B.cols() > A.rows()) throw Error("saddle: more pressures than velocities");
    return SaddleSystem{std::move(A), std::move(B), symmetric, pd_certified};
}

SparseMatrix assemble(const SaddleSystem& sys) {
    const int n = sys.n();
    const int m = sys.m();
    std::vector<Triplet> ts;
    ts.reserve(static_cast<std::size_t>(sys.A.nnz() + 2 * sys.B.nnz()));
    for (int r = 0; r < n; ++r) {
        const auto cols = sys.A.row_cols(r);
        const auto vals = sys.A.row_values(r);
        for (std::size_t k = 0; k < cols.size(); ++k) ts.push_back({r, cols[k], vals[k]});
    }
    for (int r = 0; r < n; ++r) {
        const auto cols = sys.B.row_cols(r);
        const auto vals = sys.B.row_values(r);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            ts.push_back({r, n + cols[k], vals[k]});
            ts.push_back({n + cols[k], r, vals[k]});
        }
    }
    return SparseMatrix::from_triplets(n + m, n + m, std::move(ts));
}

GradientReport validate_gradient_matrix(const SparseMatrix& b, double tol) {
    GradientReport rep;
    for (int r = 0; r < b.rows(); ++r) {
        const auto vals = b.row_values(r);
        int nnz = 0;
        double sum = 0.0;
        double max_abs = 0.0;
        for (double v : vals) {
            if (v == 0.0) continue;
            ++nnz;
            sum += v;
            max_abs = std::max(max_abs, std::abs(v));
        }
        rep.max_row_nnz = std::max(rep.max_row_nnz, nnz);
        if (nnz == 0) continue;
        const double rel_sum = std::abs(sum);
        rep.row_sum_max_abs = std::max(rep.row_sum_max_abs, rel_sum);
        if (nnz > 2 || rel_sum > tol * max_abs) {
            rep.is_gradient = false;
            rep.offending_rows.push_back(r);
        }
    }
    return rep;
}

namespace {

bool symmetric_part_positive_definite(const SparseMatrix& A) {
    const int n = A.rows();
    std::vector<Eigen::Triplet<double>> ts;
    ts.reserve(static_cast<std::size_t>(2 * A.nnz()));
    for (int r = 0; r < n; ++r) {
        const auto cols = A.row_cols(r);
        const auto vals = A.row_values(r);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            ts.emplace_back(r, cols[k], 0.5 * vals[k]);
            ts.emplace_back(cols[k], r, 0.5 * vals[k]);
        }
    }
    Eigen::SparseMatrix<double> H(n, n);
    H.setFromTriplets(ts.begin(), ts.end());

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    ldlt.compute(H);
    if (ldlt.info() != Eigen::Success) return false;
    const auto& D = ldlt.vectorD();
    for (int i = 0; i < n; ++i)
        if (!(D(i) > 0.0)) return false;
    return true;
}

} // namespace

bool is_f_matrix(const SaddleSystem& sys, int pd_check_cap) {
    if (!validate_gradient_matrix(sys.B).is_gradient) return false;
    if (sys.n() > pd_check_cap) return sys.pd_certified;
    return symmetric_part_positive_definite(sys.A);
}

ScaledSystem scale_unit_gradient(const SaddleSystem& sys, double tol) {
    const int n = sys.n();
    std::vector<double> d(n, 1.0);
    for (int r = 0; r < n; ++r) {
        const auto vals = sys.B.row_values(r);
        double mag = 0.0;
        int nnz = 0;
        for (double v : vals) {
            if (v == 0.0) continue;
            ++nnz;
            if (nnz == 1) {
                mag = std::abs(v);
            } else if (std::abs(std::abs(v) - mag) > tol * mag) {
                std::ostringstream os;
                os << "scale_unit_gradient: row " << r
                   << " has nonzeros of unequal magnitude; zero row sum is violated";
                throw Error(os.str());
            }
        }
        if (nnz > 2) throw Error("scale_unit_gradient: B is not a gradient matrix");
        if (nnz > 0) d[r] = 1.0 / mag;
    }

    // Scale A as (d_i d_j) * a_ij so exact symmetry of A survives rounding.
    std::vector<Triplet> ats;
    for (int r = 0; r < n; ++r) {
        const auto cols = sys.A.row_cols(r);
        const auto vals = sys.A.row_values(r);
        for (std::size_t k = 0; k < cols.size(); ++k)
            ats.push_back({r, cols[k], (d[r] * d[cols[k]]) * vals[k]});
    }
    // Scaled B entries are written as exact units rather than computed.
    std::vector<Triplet> bts;
    for (int r = 0; r < n; ++r) {
        const auto cols = sys.B.row_cols(r);
        const auto vals = sys.B.row_values(r);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            const double v = vals[k] == 0.0 ? 0.0 : std::copysign(1.0, vals[k]);
            bts.push_back({r, cols[k], v});
        }
    }

    ScaledSystem out;
    out.system = SaddleSystem{SparseMatrix::from_triplets(n, n, std::move(ats)),
                              SparseMatrix::from_triplets(n, sys.m(), std::move(bts)),
                              sys.symmetric, sys.pd_certified};
    out.d = std::move(d);
    return out;
}

SaddleSystem load_saddle_system(const std::string& a_path, const std::string& b_path,
                                const std::string& header_path) {
    std::ifstream in(header_path);
    if (!in) throw Error("cannot open: " + header_path);
    int n = -1, m = -1, symmetric = -1;
    std::string key;
    while (in >> key) {
        if (key == "n") in >> n;
        else if (key == "m") in >> m;
        else if (key == "symmetric") in >> symmetric;
        else throw Error("unknown header key '" + key + "' in " + header_path);
    }
    if (n < 0 || m < 0 || symmetric < 0)
        throw Error("header must define n, m, symmetric: " + header_path);

    SparseMatrix A = read_matrix_market(a_path);
    SparseMatrix B = read_matrix_market(b_path);
    if (A.rows() != n || A.cols() != n) throw Error("A dimensions disagree with header");
    if (B.rows() != n || B.cols() != m) throw Error("B dimensions disagree with header");
    return make_saddle_system(std::move(A), std::move(B), symmetric != 0);
}

} // namespace fmat
