#pragma once

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cstdint>
#include <vector>

#include "fmat/decomp.hpp"
#include "fmat/factor.hpp"
#include "fmat/saddle.hpp"
#include "fmat/sparse.hpp"
#include "fmat/transform.hpp"

namespace fmat {

// Velocities that keep their couplings in the preconditioner: every group's
// summed slot, every conservation-cell velocity, and as a safety net any
// velocity row that still couples a pressure after the transform.
struct VSigma {
    std::vector<int> members; // schur-local velocity ids, ascending
    std::vector<char> flag;   // size = schur velocity count
};

VSigma identify_vsigma(const TransformedSchur& t, const Decomposition& d);

// Factor of the structurally dropped transformed Schur complement: couplings
// between a group's unsummed rows and anything outside the group are removed,
// which decouples each group's (k-1)-block from a reduced saddle system over
// the kept velocities and all pressures. Pressure couplings are never dropped.
class Preconditioner {
public:
    struct Stats {
        std::int64_t dropped_nnz = 0;
        std::int64_t block_factor_entries = 0;   // sum of (k-1)^2 dense blocks
        std::int64_t reduced_factor_entries = 0; // elimination factor of the reduced system
        std::int64_t kept_nnz = 0;
    };

    static Preconditioner build(const TransformedSchur& t, const Decomposition& d,
                                bool symmetric);

    int size() const { return n_; }
    int velocity_count() const { return svc_; }
    bool symmetric() const { return symmetric_; }
    const VSigma& vsigma() const { return vsigma_; }
    const Stats& stats() const { return stats_; }
    const SaddleSystem& reduced() const { return reduced_; }
    bool reduced_singular() const { return reduced_singular_; }

    // M z = r over full transformed vectors. Singular reduced systems are
    // solved against the projected right-hand side and return the
    // zero-mean-pressure representative.
    void apply(const double* r, double* z) const;
    std::vector<double> apply(const std::vector<double>& r) const;

    // The kept part of the transformed system, in its index space.
    const SparseMatrix& kept_matrix() const { return kept_; }

private:
    struct Block {
        std::vector<int> local; // unsummed member rows
        Eigen::LLT<Eigen::MatrixXd> llt;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu;
        bool spd = false;
    };

    int n_ = 0;
    int svc_ = 0;
    bool symmetric_ = true;
    bool reduced_singular_ = false;
    VSigma vsigma_;
    Stats stats_;
    std::vector<Block> blocks_;
    SaddleSystem reduced_;
    FactorState reduced_factor_;
    std::vector<int> reduced_local_; // schur-local id of each reduced variable
    std::vector<int> local_reduced_; // inverse; -1 where dropped into a block
    int ground_ = -1;                // reduced index pinned in singular solves
    SparseMatrix kept_;
};

// Largest generalized eigenvalue gamma of the dropped-against-kept pencil on
// the velocity block; the preconditioned spectrum lies in [1-gamma, 1+gamma].
// Dense computation, refused above 2000 velocities.
double estimate_gamma(const TransformedSchur& t, const VSigma& vs);

} // namespace fmat
