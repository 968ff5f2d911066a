#include "fmat/spectral.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "fmat/error.hpp"

namespace fmat {

namespace {

Eigen::MatrixXd to_dense_block(const SparseMatrix& s, int row_end, int col_begin, int col_end) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(row_end, col_end - col_begin);
    for (int r = 0; r < row_end; ++r) {
        const auto cols = s.row_cols(r);
        const auto vals = s.row_values(r);
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (cols[i] >= col_begin && cols[i] < col_end)
                out(r, cols[i] - col_begin) = vals[i];
    }
    return out;
}

} // namespace

double dense_condition(const SparseMatrix& s, const Preconditioner& m) {
    const int n = s.rows();
    if (n > 2000) throw Error("dense_condition: refusing more than 2000 unknowns");
    const int svc = m.velocity_count();
    const int mp = n - svc;

    const Eigen::MatrixXd a = to_dense_block(s, svc, 0, svc);
    const Eigen::MatrixXd mk = to_dense_block(m.kept_matrix(), svc, 0, svc);

    double lo, hi;
    if (mp == 0) {
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(
            0.5 * (a + a.transpose()), 0.5 * (mk + mk.transpose()));
        lo = ges.eigenvalues().minCoeff();
        hi = ges.eigenvalues().maxCoeff();
    } else {
        const Eigen::MatrixXd bm = to_dense_block(s, svc, svc, n);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(bm);
        const int rank = static_cast<int>(qr.rank());
        if (rank >= svc) throw Error("dense_condition: coupling block leaves no kernel");
        const Eigen::MatrixXd q = qr.householderQ();
        const Eigen::MatrixXd z = q.rightCols(svc - rank);
        const Eigen::MatrixXd az = z.transpose() * a * z;
        const Eigen::MatrixXd mz = z.transpose() * mk * z;
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(
            0.5 * (az + az.transpose()), 0.5 * (mz + mz.transpose()));
        lo = std::min(ges.eigenvalues().minCoeff(), 1.0);
        hi = std::max(ges.eigenvalues().maxCoeff(), 1.0);
    }
    if (!(lo > 0.0)) throw Error("dense_condition: system is not positive on the manifold");
    return hi / lo;
}

} // namespace fmat
