#include "fmat/precond.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "fmat/error.hpp"

namespace fmat {

namespace {

std::vector<int> schur_local_of_global(const Decomposition& d) {
    std::vector<int> g2l(d.kind.size(), -1);
    const auto vars = d.schur_variables();
    for (int l = 0; l < static_cast<int>(vars.size()); ++l) g2l[vars[l]] = l;
    return g2l;
}

} // namespace

VSigma identify_vsigma(const TransformedSchur& t, const Decomposition& d) {
    const int svc = t.velocity_count;
    const int ns = t.matrix.rows();
    VSigma vs;
    vs.flag.assign(svc, 0);
    for (int s : t.sigma) vs.flag[s] = 1;
    const auto g2l = schur_local_of_global(d);
    for (int cv : d.corner_velocities) {
        if (g2l[cv] < 0) throw Error("identify_vsigma: corner velocity missing from the Schur set");
        vs.flag[g2l[cv]] = 1;
    }

    std::vector<char> coupled(svc, 0);
    for (int r = 0; r < svc; ++r) {
        const auto cols = t.matrix.row_cols(r);
        for (std::size_t i = cols.size(); i-- > 0;) {
            if (cols[i] < svc) break;
            coupled[r] = 1;
        }
    }
    (void)ns;
    for (std::size_t g = 0; g < t.group_local.size(); ++g) {
        int n_coupled = 0;
        for (int l : t.group_local[g]) n_coupled += coupled[l];
        if (n_coupled >= 2)
            throw Error("identify_vsigma: group " + std::to_string(g) +
                        " keeps more than one pressure-coupled row");
    }
    for (int r = 0; r < svc; ++r)
        if (coupled[r]) vs.flag[r] = 1;
    for (int r = 0; r < svc; ++r)
        if (vs.flag[r]) vs.members.push_back(r);
    return vs;
}

Preconditioner Preconditioner::build(const TransformedSchur& t, const Decomposition& d,
                                     bool symmetric) {
    Preconditioner p;
    p.n_ = t.matrix.rows();
    p.svc_ = t.velocity_count;
    p.symmetric_ = symmetric;
    p.vsigma_ = identify_vsigma(t, d);
    const int svc = p.svc_;

    std::vector<int> loc2group(svc, -1);
    for (std::size_t g = 0; g < t.group_local.size(); ++g)
        for (int l : t.group_local[g]) loc2group[l] = static_cast<int>(g);

    // Reduced variable numbering: kept velocities ascending, then pressures.
    p.local_reduced_.assign(p.n_, -1);
    for (int l : p.vsigma_.members) {
        p.local_reduced_[l] = static_cast<int>(p.reduced_local_.size());
        p.reduced_local_.push_back(l);
    }
    const int n_red = static_cast<int>(p.reduced_local_.size());
    for (int l = svc; l < p.n_; ++l) {
        p.local_reduced_[l] = static_cast<int>(p.reduced_local_.size());
        p.reduced_local_.push_back(l);
    }
    const int m_red = static_cast<int>(p.reduced_local_.size()) - n_red;

    // Unsummed rows of each group, in group order.
    std::vector<std::vector<int>> block_rows(t.group_local.size());
    for (std::size_t g = 0; g < t.group_local.size(); ++g)
        for (int l : t.group_local[g])
            if (!p.vsigma_.flag[l]) block_rows[g].push_back(l);
    std::vector<int> block_pos(svc, -1);
    for (const auto& rows : block_rows)
        for (std::size_t i = 0; i < rows.size(); ++i) block_pos[rows[i]] = static_cast<int>(i);

    std::vector<Eigen::MatrixXd> block_dense;
    block_dense.reserve(block_rows.size());
    for (const auto& rows : block_rows)
        block_dense.push_back(Eigen::MatrixXd::Zero(rows.size(), rows.size()));

    std::vector<Triplet> kept, a_red, b_red;
    for (int r = 0; r < p.n_; ++r) {
        const auto cols = t.matrix.row_cols(r);
        const auto vals = t.matrix.row_values(r);
        for (std::size_t i = 0; i < cols.size(); ++i) {
            const int c = cols[i];
            const double v = vals[i];
            const bool rp = r >= svc, cp = c >= svc;
            if (rp && cp) throw Error("preconditioner: pressure block is not empty");
            if (rp || cp) {
                kept.push_back({r, c, v});
                if (!rp) b_red.push_back({p.local_reduced_[r], p.local_reduced_[c] - n_red, v});
                continue;
            }
            const bool rk = p.vsigma_.flag[r], ck = p.vsigma_.flag[c];
            if (rk && ck) {
                kept.push_back({r, c, v});
                a_red.push_back({p.local_reduced_[r], p.local_reduced_[c], v});
            } else if (!rk && !ck && loc2group[r] == loc2group[c] && loc2group[r] >= 0) {
                kept.push_back({r, c, v});
                block_dense[loc2group[r]](block_pos[r], block_pos[c]) = v;
            } else {
                ++p.stats_.dropped_nnz;
            }
        }
    }
    p.kept_ = SparseMatrix::from_triplets(p.n_, p.n_, std::move(kept));
    p.stats_.kept_nnz = p.kept_.nnz();

    p.blocks_.reserve(block_rows.size());
    for (std::size_t g = 0; g < block_rows.size(); ++g) {
        if (block_rows[g].empty()) continue;
        Block b;
        b.local = block_rows[g];
        const auto& m = block_dense[g];
        p.stats_.block_factor_entries +=
            static_cast<std::int64_t>(b.local.size()) * static_cast<std::int64_t>(b.local.size());
        if (symmetric) {
            b.llt.compute(m);
            b.spd = b.llt.info() == Eigen::Success;
            if (!b.spd)
                throw Error("preconditioner: singular block in group " + std::to_string(g));
        } else {
            b.lu.compute(m);
            const double mn = m.cwiseAbs().maxCoeff();
            if (!(b.lu.matrixLU().diagonal().cwiseAbs().minCoeff() > 1e-14 * std::max(mn, 1.0)))
                throw Error("preconditioner: singular block in group " + std::to_string(g));
        }
        p.blocks_.push_back(std::move(b));
    }

    SparseMatrix a_mat = SparseMatrix::from_triplets(n_red, n_red, std::move(a_red));
    SparseMatrix b_mat = SparseMatrix::from_triplets(n_red, m_red, std::move(b_red));
    p.reduced_ = make_saddle_system(std::move(a_mat), std::move(b_mat), symmetric);
    p.reduced_singular_ =
        m_red > 0 && validate_gradient_matrix(p.reduced_.B).is_gradient;

    std::vector<int> scope(p.reduced_.size());
    std::iota(scope.begin(), scope.end(), 0);
    if (p.reduced_singular_) {
        p.ground_ = p.reduced_.size() - 1;
        scope.pop_back();
    }
    const auto plan = plan_elimination(p.reduced_, scope);
    p.reduced_factor_ = eliminate(p.reduced_, plan);
    p.stats_.reduced_factor_entries = p.reduced_factor_.fill.factor_entries;
    return p;
}

void Preconditioner::apply(const double* r, double* z) const {
    for (int i = 0; i < n_; ++i) z[i] = 0.0;
    Eigen::VectorXd rb;
    for (const auto& b : blocks_) {
        const int k = static_cast<int>(b.local.size());
        rb.resize(k);
        for (int i = 0; i < k; ++i) rb[i] = r[b.local[i]];
        Eigen::VectorXd x = b.spd ? Eigen::VectorXd(b.llt.solve(rb))
                                  : Eigen::VectorXd(b.lu.solve(rb));
        for (int i = 0; i < k; ++i) z[b.local[i]] = x[i];
    }

    const int nr = reduced_.n();
    const int mr = reduced_.m();
    std::vector<double> y(reduced_.size());
    for (int i = 0; i < nr + mr; ++i) y[i] = r[reduced_local_[i]];
    if (reduced_singular_ && mr > 0) {
        double mean = 0.0;
        for (int i = nr; i < nr + mr; ++i) mean += y[i];
        mean /= mr;
        for (int i = nr; i < nr + mr; ++i) y[i] -= mean;
    }
    forward_substitute(reduced_factor_, y);
    if (ground_ >= 0) y[ground_] = 0.0;
    back_substitute(reduced_factor_, y);
    if (reduced_singular_ && mr > 0) {
        double mean = 0.0;
        for (int i = nr; i < nr + mr; ++i) mean += y[i];
        mean /= mr;
        for (int i = nr; i < nr + mr; ++i) y[i] -= mean;
    }
    for (int i = 0; i < nr + mr; ++i) z[reduced_local_[i]] = y[i];
}

std::vector<double> Preconditioner::apply(const std::vector<double>& r) const {
    if (static_cast<int>(r.size()) != n_)
        throw Error("preconditioner: right-hand side size mismatch");
    std::vector<double> z(n_);
    apply(r.data(), z.data());
    return z;
}

double estimate_gamma(const TransformedSchur& t, const VSigma& vs) {
    const int svc = t.velocity_count;
    if (svc > 2000) throw Error("estimate_gamma: dense path limited to 2000 velocities");
    std::vector<int> pos(svc, -1);
    std::vector<int> kept_idx, rest_idx;
    for (int i = 0; i < svc; ++i)
        (vs.flag[i] ? kept_idx : rest_idx).push_back(i);
    const int n1 = static_cast<int>(rest_idx.size());
    const int n2 = static_cast<int>(kept_idx.size());
    if (n1 == 0 || n2 == 0) return 0.0;
    for (int i = 0; i < n1; ++i) pos[rest_idx[i]] = i;
    for (int i = 0; i < n2; ++i) pos[kept_idx[i]] = i;

    Eigen::MatrixXd a11 = Eigen::MatrixXd::Zero(n1, n1);
    Eigen::MatrixXd a12 = Eigen::MatrixXd::Zero(n1, n2);
    Eigen::MatrixXd a21 = Eigen::MatrixXd::Zero(n2, n1);
    Eigen::MatrixXd a22 = Eigen::MatrixXd::Zero(n2, n2);
    for (int r = 0; r < svc; ++r) {
        const auto cols = t.matrix.row_cols(r);
        const auto vals = t.matrix.row_values(r);
        const bool rk = vs.flag[r];
        for (std::size_t i = 0; i < cols.size(); ++i) {
            const int c = cols[i];
            if (c >= svc) continue;
            const bool ck = vs.flag[c];
            if (!rk && !ck)
                a11(pos[r], pos[c]) = vals[i];
            else if (!rk && ck)
                a12(pos[r], pos[c]) = vals[i];
            else if (rk && !ck)
                a21(pos[r], pos[c]) = vals[i];
            else
                a22(pos[r], pos[c]) = vals[i];
        }
    }
    if (a12.cwiseAbs().maxCoeff() == 0.0 && a21.cwiseAbs().maxCoeff() == 0.0) return 0.0;

    Eigen::MatrixXd m1;
    {
        Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (a11 + a11.transpose()));
        if (llt.info() == Eigen::Success) {
            m1 = a21 * llt.solve(a12);
        } else {
            Eigen::PartialPivLU<Eigen::MatrixXd> lu(a11);
            m1 = a21 * lu.solve(a12);
        }
    }
    m1 = 0.5 * (m1 + m1.transpose()).eval();
    const Eigen::MatrixXd m2 = 0.5 * (a22 + a22.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m2);
    const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
    const double tol = 1e-12 * std::max(lmax, 1.0);
    if (es.eigenvalues().minCoeff() < -tol)
        throw Error("estimate_gamma: kept velocity block is indefinite");
    std::vector<int> keep;
    for (int i = 0; i < n2; ++i)
        if (es.eigenvalues()[i] > tol) keep.push_back(i);
    if (keep.empty()) return 0.0;
    Eigen::MatrixXd z(n2, keep.size());
    Eigen::VectorXd lam(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        z.col(i) = es.eigenvectors().col(keep[i]);
        lam[i] = es.eigenvalues()[keep[i]];
    }
    if (static_cast<int>(keep.size()) < n2) {
        // Deflation is only sound when the dropped couplings vanish on the
        // kept block's nullspace.
        Eigen::MatrixXd z0(n2, n2 - keep.size());
        int j = 0;
        for (int i = 0; i < n2; ++i)
            if (es.eigenvalues()[i] <= tol) z0.col(j++) = es.eigenvectors().col(i);
        const double leak = (m1 * z0).cwiseAbs().maxCoeff();
        if (leak > 1e-8 * std::max(m1.cwiseAbs().maxCoeff(), 1.0))
            throw Error("estimate_gamma: dropped couplings act on the kept block's nullspace");
    }
    const Eigen::MatrixXd g = z.transpose() * m1 * z;
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(
        0.5 * (g + g.transpose()), Eigen::MatrixXd(lam.asDiagonal()));
    const double g2 = std::max(0.0, ges.eigenvalues().maxCoeff());
    return std::sqrt(g2);
}

} // namespace fmat
