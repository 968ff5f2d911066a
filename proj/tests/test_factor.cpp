#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "fmat/decomp.hpp"
#include "fmat/error.hpp"
#include "fmat/factor.hpp"
#include "fmat/matrix_market.hpp"
#include "fmat/problems.hpp"
#include "fmat/saddle.hpp"
#include "support/oracles.hpp"

using fmat::EliminationPlan;
using fmat::SaddleSystem;
using fmat::SparseMatrix;

namespace {

std::vector<int> full_scope(const SaddleSystem& k, int skip_pressures = 0) {
    std::vector<int> scope(k.size() - skip_pressures);
    std::iota(scope.begin(), scope.end(), 0);
    return scope;
}

// Random saddle system whose coupling block has no empty pressure column.
SaddleSystem random_f_system(fmat::Rng& rng, int n, int m, bool symmetric,
                             bool unit_entries = false) {
    for (;;) {
        const auto B = oracle::random_gradient_matrix(rng, n, m, 0.85, unit_entries);
        const auto Bt = B.transpose();
        bool ok = true;
        for (int p = 0; p < m; ++p)
            if (Bt.row_cols(p).empty()) ok = false;
        if (!ok) continue;
        const auto A = symmetric ? oracle::random_spd(rng, n, 0.25)
                                 : oracle::random_pd_nonsymmetric(rng, n, 0.25);
        return fmat::make_saddle_system(A, B, symmetric, true);
    }
}

double relative_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double scale = std::max(1.0, a.norm());
    return (a - b).norm() / scale;
}

// Dense remaining block after replaying `steps` pivots of the plan.
Eigen::MatrixXd dense_after(const SaddleSystem& k, const EliminationPlan& plan,
                            std::size_t steps, std::vector<int>& remaining) {
    Eigen::MatrixXd D = oracle::to_dense(fmat::assemble(k));
    std::vector<char> gone(k.size(), 0);
    for (std::size_t i = 0; i < steps; ++i)
        oracle::dense_eliminate_step(D, gone, plan.pivot_log[i].v, plan.pivot_log[i].p);
    remaining.clear();
    for (int i = 0; i < k.size(); ++i)
        if (!gone[i]) remaining.push_back(i);
    const int nr = static_cast<int>(remaining.size());
    Eigen::MatrixXd S(nr, nr);
    for (int i = 0; i < nr; ++i)
        for (int j = 0; j < nr; ++j) S(i, j) = D(remaining[i], remaining[j]);
    return S;
}

EliminationPlan prefix(const EliminationPlan& plan, std::size_t steps) {
    EliminationPlan p;
    p.v_order.assign(plan.v_order.begin(), plan.v_order.begin() + steps);
    p.pivot_log.assign(plan.pivot_log.begin(), plan.pivot_log.begin() + steps);
    return p;
}

} // namespace

TEST_SUITE("factor") {

TEST_CASE("a velocity coupled to a pressure is forced into a 2x2 pivot") {
    std::vector<fmat::Triplet> bt{{0, 0, 1.0}, {1, 0, -1.0}};
    const auto sys = fmat::make_saddle_system(SparseMatrix::identity(2),
                                              SparseMatrix::from_triplets(2, 1, std::move(bt)),
                                              true, true);
    const auto plan = fmat::plan_elimination(sys, full_scope(sys));
    REQUIRE(plan.pivot_log.size() == 2);
    CHECK(plan.pivot_log[0].v == 0);
    CHECK(plan.pivot_log[0].p == 2);
    CHECK(plan.pivot_log[1].p == -1);

    const std::vector<double> xt{1.0, 2.0, 3.0};
    const auto b = fmat::assemble(sys).multiply(xt);
    const auto x = fmat::direct_solve(sys, b);
    for (int i = 0; i < 3; ++i) CHECK(x[i] == doctest::Approx(xt[i]).epsilon(1e-12));
}

TEST_CASE("one paired pivot per scope pressure") {
    const auto sys = fmat::gen_stokes(2, 8);
    const auto d = fmat::decompose(fmat::GridSpec{2, 8, 8, fmat::GridKind::staggered}, sys);
    std::vector<int> scope;
    for (int id = 0; id < sys.size(); ++id)
        if (d.kind[id] == fmat::VarKind::interior) scope.push_back(id);
    const auto plan = fmat::plan_elimination(sys, scope);

    int paired = 0;
    std::vector<char> seen(sys.size(), 0);
    for (const auto& s : plan.pivot_log)
        if (s.p >= 0) {
            ++paired;
            CHECK(!seen[s.p]);
            seen[s.p] = 1;
        }
    CHECK(paired == sys.m() - 1);
    CHECK(plan.pivot_log.size() == static_cast<std::size_t>(sys.n()));
}

TEST_CASE("elimination matches the dense pivot-by-pivot oracle") {
    fmat::Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        CAPTURE(trial);
        const int n = 6 + static_cast<int>(rng.uniform_int(0, 8));
        const int m = 2 + static_cast<int>(rng.uniform_int(0, 3));
        const auto sys = random_f_system(rng, n, m, trial % 2 == 0);
        const auto plan = fmat::plan_elimination(sys, full_scope(sys, 1));

        for (const std::size_t steps :
             {std::size_t{1}, plan.pivot_log.size() / 2, plan.pivot_log.size()}) {
            const auto f = fmat::eliminate(sys, prefix(plan, steps));
            std::vector<int> remaining;
            const auto S = dense_after(sys, plan, steps, remaining);
            REQUIRE(remaining == f.schur_vars);
            CHECK(relative_diff(S, oracle::to_dense(f.schur)) <= 1e-10);
        }
    }
}

TEST_CASE("every intermediate complement keeps the saddle structure intact") {
    fmat::Rng rng(23);
    for (int trial = 0; trial < 8; ++trial) {
        CAPTURE(trial);
        const auto raw = random_f_system(rng, 12 + trial, 3 + trial % 3, true);
        const auto scaled = fmat::scale_unit_gradient(raw);
        const auto& sys = scaled.system;
        const auto plan = fmat::plan_elimination(sys, full_scope(sys, 1));
        int vel_rem = sys.n(), pres_rem = sys.m();
        for (std::size_t steps = 1; steps <= plan.pivot_log.size(); ++steps) {
            --vel_rem;
            if (plan.pivot_log[steps - 1].p >= 0) --pres_rem;
            if (vel_rem == 0 || vel_rem < pres_rem) break;
            const auto f = fmat::eliminate(sys, prefix(plan, steps));
            const auto sub = fmat::schur_as_saddle(f); // throws if the zero block fills
            const auto rep = fmat::validate_gradient_matrix(sub.B);
            CHECK(rep.is_gradient);
            for (int r = 0; r < sub.n(); ++r)
                for (double v : sub.B.row_values(r))
                    if (v != 0.0) CHECK(std::abs(v) == 1.0);
            if (sub.size() <= 24) CHECK(fmat::is_f_matrix(sub));
        }
    }
}

TEST_CASE("coupling-block updates never read the velocity block") {
    fmat::Rng rng(31);
    const auto sys1 = random_f_system(rng, 14, 4, true);
    const auto plan = fmat::plan_elimination(sys1, full_scope(sys1, 1));

    // Same pattern, fresh values, same plan.
    auto ts = sys1.A.to_triplets();
    for (auto& t : ts)
        if (t.row == t.col)
            t.value = 20.0 + rng.uniform(0.0, 5.0);
        else if (t.row < t.col)
            t.value = rng.uniform(-1.0, 1.0);
    for (auto& t : ts)
        if (t.row > t.col)
            for (const auto& u : ts)
                if (u.row == t.col && u.col == t.row) t.value = u.value;
    const auto sys2 = fmat::make_saddle_system(
        SparseMatrix::from_triplets(sys1.n(), sys1.n(), std::move(ts)), sys1.B, true, true);

    const auto vp_entries = [](const fmat::FactorState& f) {
        std::vector<fmat::Triplet> out;
        for (const auto& t : f.schur.to_triplets())
            if (t.row < f.schur_velocity_count && t.col >= f.schur_velocity_count)
                out.push_back(t);
        return out;
    };
    std::size_t last_paired = 0;
    for (std::size_t i = 0; i < plan.pivot_log.size(); ++i)
        if (plan.pivot_log[i].p >= 0) last_paired = i;
    for (const std::size_t steps : {std::size_t{2}, last_paired}) {
        const auto b1 = vp_entries(fmat::eliminate(sys1, prefix(plan, steps)));
        const auto b2 = vp_entries(fmat::eliminate(sys2, prefix(plan, steps)));
        REQUIRE(!b1.empty());
        REQUIRE(b1.size() == b2.size());
        for (std::size_t i = 0; i < b1.size(); ++i) {
            CHECK(b1[i].row == b2[i].row);
            CHECK(b1[i].col == b2[i].col);
            CHECK(b1[i].value == b2[i].value); // bitwise
        }
    }
    // Once every in-scope pressure is eliminated, the couplings of the
    // remaining velocities to the kept pressure cancel exactly.
    CHECK(vp_entries(fmat::eliminate(sys1, plan)).empty());
}

TEST_CASE("cancellation frees a velocity for a single pivot") {
    // Both velocities couple both pressures with opposite signs; eliminating
    // the first pair cancels the second velocity's couplings exactly.
    std::vector<fmat::Triplet> bt{{0, 0, 1.0}, {0, 1, -1.0}, {1, 0, -1.0}, {1, 1, 1.0}};
    const auto sys = fmat::make_saddle_system(SparseMatrix::identity(2),
                                              SparseMatrix::from_triplets(2, 2, std::move(bt)),
                                              true, true);
    const auto plan = fmat::plan_elimination(sys, {0, 1, 2});
    REQUIRE(plan.pivot_log.size() == 2);
    CHECK(plan.pivot_log[0].p == 2);
    CHECK(plan.pivot_log[1].p == -1); // allowed: couplings vanished
    CHECK_NOTHROW((void)fmat::eliminate(sys, plan));
}

TEST_CASE("doctored plans are rejected") {
    fmat::Rng rng(41);
    const auto sys = random_f_system(rng, 10, 3, true);
    const auto plan = fmat::plan_elimination(sys, full_scope(sys, 1));
    std::size_t first_pair = 0;
    while (plan.pivot_log[first_pair].p < 0) ++first_pair;

    {
        auto bad = plan;
        bad.pivot_log[first_pair].p = -1; // single pivot on a coupled velocity
        try {
            (void)fmat::eliminate(sys, bad);
            FAIL("expected rejection");
        } catch (const fmat::Error& e) {
            CHECK(std::string(e.what()).find("zero block") != std::string::npos);
        }
    }
    {
        auto bad = plan;
        // Pair with a pressure this velocity does not couple.
        const int v = bad.pivot_log[first_pair].v;
        int other = -1;
        for (int p = sys.n(); p < sys.size() - 1; ++p)
            if (p != bad.pivot_log[first_pair].p && sys.B.at(v, p - sys.n()) == 0.0) other = p;
        REQUIRE(other >= 0);
        bad.pivot_log[first_pair].p = other;
        try {
            (void)fmat::eliminate(sys, bad);
            FAIL("expected rejection");
        } catch (const fmat::Error& e) {
            const std::string what = e.what();
            CHECK((what.find("determinant") != std::string::npos ||
                   what.find("twice") != std::string::npos));
        }
    }
    {
        auto bad = plan;
        std::swap(bad.v_order[0], bad.v_order[1]);
        CHECK_THROWS_AS((void)fmat::eliminate(sys, bad), fmat::Error);
    }
}

TEST_CASE("a pressure without a coupled velocity in scope is reported") {
    std::vector<fmat::Triplet> bt{{0, 0, 1.0}, {1, 0, -1.0}, {2, 1, 1.0}, {3, 1, -1.0}};
    const auto sys = fmat::make_saddle_system(SparseMatrix::identity(4),
                                              SparseMatrix::from_triplets(4, 2, std::move(bt)),
                                              true, true);
    // Scope holds p1 but neither of its velocities.
    try {
        (void)fmat::plan_elimination(sys, {0, 1, 4, 5});
        FAIL("expected rejection");
    } catch (const fmat::Error& e) {
        CHECK(std::string(e.what()).find("structurally singular") != std::string::npos);
    }
}

TEST_CASE("interior elimination reproduces the dense Schur complement") {
    struct Case {
        SaddleSystem sys;
        fmat::GridSpec grid;
        int expect_dim, expect_vel;
    };
    const Case cases[] = {
        {fmat::gen_stokes(2, 16), {2, 16, 8, fmat::GridKind::staggered}, 65, 60},
        {fmat::gen_darcy(2, 16), {2, 16, 8, fmat::GridKind::staggered}, 65, 60},
        {fmat::make_saddle_system(fmat::gen_poisson(2, 16),
                                  SparseMatrix::from_triplets(256, 0, {}), true, true),
         {2, 16, 4, fmat::GridKind::scalar_periodic}, 112, 112},
    };
    for (const auto& c : cases) {
        CAPTURE(c.expect_dim);
        const auto d = fmat::decompose(c.grid, c.sys);
        const auto f = fmat::eliminate_interiors(c.sys, d);
        CHECK(f.schur.rows() == c.expect_dim);
        CHECK(f.schur_velocity_count == c.expect_vel);
        CHECK(f.fill.schur_entries == f.schur.nnz());
        CHECK(f.fill.factor_entries > 0);

        const Eigen::MatrixXd K = oracle::to_dense(fmat::assemble(c.sys));
        std::vector<int> interior, kept = f.schur_vars;
        for (int id = 0; id < c.sys.size(); ++id)
            if (d.kind[id] == fmat::VarKind::interior) interior.push_back(id);
        const int ni = static_cast<int>(interior.size());
        const int nk = static_cast<int>(kept.size());
        Eigen::MatrixXd Kii(ni, ni), Kib(ni, nk), Kbi(nk, ni), Kbb(nk, nk);
        for (int i = 0; i < ni; ++i)
            for (int j = 0; j < ni; ++j) Kii(i, j) = K(interior[i], interior[j]);
        for (int i = 0; i < ni; ++i)
            for (int j = 0; j < nk; ++j) Kib(i, j) = K(interior[i], kept[j]);
        for (int i = 0; i < nk; ++i)
            for (int j = 0; j < ni; ++j) Kbi(i, j) = K(kept[i], interior[j]);
        for (int i = 0; i < nk; ++i)
            for (int j = 0; j < nk; ++j) Kbb(i, j) = K(kept[i], kept[j]);
        const Eigen::MatrixXd S = Kbb - Kbi * Kii.fullPivLu().solve(Kib);
        CHECK(relative_diff(S, oracle::to_dense(f.schur)) <= 1e-10);
    }
}

TEST_CASE("interior elimination does not depend on subdomain numbering") {
    const auto sys = fmat::gen_stokes(2, 16);
    const auto d = fmat::decompose(fmat::GridSpec{2, 16, 8, fmat::GridKind::staggered}, sys);
    const auto f1 = fmat::eliminate_interiors(sys, d);

    auto renumbered = d;
    const std::vector<int> perm{2, 0, 3, 1}; // old id -> new id
    for (auto& s : renumbered.subdomain_of)
        if (s >= 0) s = perm[s];
    for (int t = 0; t < 4; ++t) renumbered.retained_pressures[perm[t]] = d.retained_pressures[t];
    const auto f2 = fmat::eliminate_interiors(sys, renumbered);

    const auto t1 = f1.schur.to_triplets();
    const auto t2 = f2.schur.to_triplets();
    REQUIRE(t1.size() == t2.size());
    for (std::size_t i = 0; i < t1.size(); ++i) {
        CHECK(t1[i].row == t2[i].row);
        CHECK(t1[i].col == t2[i].col);
        CHECK(t1[i].value == doctest::Approx(t2[i].value).epsilon(1e-12));
    }
}

TEST_CASE("a decomposition that fails to separate is rejected") {
    const auto sys = fmat::gen_stokes(2, 16);
    auto d = fmat::decompose(fmat::GridSpec{2, 16, 8, fmat::GridKind::staggered}, sys);
    // Declare one separator velocity interior to tile 0; a neighbor in another
    // tile then couples a foreign interior.
    const int sep = d.groups[3].members.front();
    d.kind[sep] = fmat::VarKind::interior;
    d.subdomain_of[sep] = 0;
    try {
        (void)fmat::eliminate_interiors(sys, d);
        FAIL("expected rejection");
    } catch (const fmat::Error& e) {
        CHECK(std::string(e.what()).find("foreign interior") != std::string::npos);
    }
}

TEST_CASE("single subdomain elimination plus substitution equals a direct solve") {
    const auto prob = fmat::stokes_problem(2, 8, 99);
    const auto& sys = prob.system;
    const auto d = fmat::decompose(fmat::GridSpec{2, 8, 8, fmat::GridKind::staggered}, sys);
    const auto f = fmat::eliminate_interiors(sys, d);
    REQUIRE(f.schur.rows() == 1);
    REQUIRE(f.schur_vars[0] == d.retained_pressures[0]);
    // The whole matrix is singular along constant pressure, so the retained
    // pressure's complement collapses to (numerical) zero.
    CHECK(std::abs(f.schur.at(0, 0)) <= 1e-10);

    auto y = prob.rhs;
    fmat::forward_substitute(f, y);
    CHECK(std::abs(y[f.schur_vars[0]]) <= 1e-8);
    y[f.schur_vars[0]] = 0.0;
    fmat::back_substitute(f, y);
    double mean = 0.0;
    for (int i = sys.n(); i < sys.size(); ++i) mean += y[i];
    mean /= sys.m();
    for (int i = sys.n(); i < sys.size(); ++i) y[i] -= mean;

    const auto x = fmat::direct_solve(sys, prob.rhs);
    for (int i = 0; i < sys.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-8));
}

TEST_CASE("direct solve on generated flows") {
    for (const auto* prob : {"stokes", "darcy"}) {
        const auto p = std::string(prob) == "stokes" ? fmat::stokes_problem(2, 16, 7)
                                                     : fmat::darcy_problem(2, 16, 7);
        const auto x = fmat::direct_solve(p.system, p.rhs);
        const auto kx = fmat::assemble(p.system).multiply(x);
        double rn = 0.0, bn = 0.0;
        for (int i = 0; i < p.system.size(); ++i) {
            rn += (kx[i] - p.rhs[i]) * (kx[i] - p.rhs[i]);
            bn += p.rhs[i] * p.rhs[i];
        }
        CHECK(std::sqrt(rn) <= 1e-9 * std::sqrt(bn));
        double mean = 0.0;
        for (int i = p.system.n(); i < p.system.size(); ++i) mean += x[i];
        CHECK(std::abs(mean / p.system.m()) <= 1e-10);
    }
}

TEST_CASE("direct solve matches a dense grounded factorization") {
    fmat::Rng rng(53);
    for (int trial = 0; trial < 6; ++trial) {
        CAPTURE(trial);
        const auto sys = random_f_system(rng, 12, 4, trial % 2 == 0);
        const auto data = fmat::random_divergence_free_system(sys, 1000 + trial);
        const auto x = fmat::direct_solve(sys, data.b);

        const int N = sys.size();
        Eigen::MatrixXd K = oracle::to_dense(fmat::assemble(sys));
        Eigen::VectorXd b(N);
        for (int i = 0; i < N; ++i) b(i) = data.b[i];
        // Ground the last pressure and de-mean, as the solver specifies.
        Eigen::MatrixXd Kg = K.topLeftCorner(N - 1, N - 1);
        Eigen::VectorXd xg = Kg.fullPivLu().solve(b.head(N - 1));
        Eigen::VectorXd xfull(N);
        xfull << xg, 0.0;
        const double mean = xfull.tail(sys.m()).mean();
        for (int i = sys.n(); i < N; ++i) xfull(i) -= mean;
        for (int i = 0; i < N; ++i) CHECK(x[i] == doctest::Approx(xfull(i)).epsilon(1e-9));
    }
}

TEST_CASE("incompatible right-hand sides for singular systems are rejected") {
    const auto sys = fmat::gen_darcy(2, 8);
    std::vector<double> b(sys.size(), 0.0);
    b[sys.n() + 3] = 1.0; // pressure component sum != 0
    try {
        (void)fmat::direct_solve(sys, b);
        FAIL("expected rejection");
    } catch (const fmat::Error& e) {
        CHECK(std::string(e.what()).find("incompatible") != std::string::npos);
    }
}

TEST_CASE("factor entry counters") {
    // A path graph factors without fill: counter equals the matrix nonzeros.
    const int n = 40;
    std::vector<fmat::Triplet> ts;
    for (int i = 0; i < n; ++i) {
        ts.push_back({i, i, 2.1});
        if (i + 1 < n) {
            ts.push_back({i, i + 1, -1.0});
            ts.push_back({i + 1, i, -1.0});
        }
    }
    const auto A = SparseMatrix::from_triplets(n, n, std::move(ts));
    const auto sys = fmat::make_saddle_system(A, SparseMatrix::from_triplets(n, 0, {}), true, true);
    const auto f = fmat::eliminate(sys, fmat::plan_elimination(sys, full_scope(sys)));
    CHECK(f.fill.factor_entries == A.nnz());
    CHECK(f.schur.rows() == 0);

    const auto P = fmat::gen_poisson(2, 8);
    const auto psys =
        fmat::make_saddle_system(P, SparseMatrix::from_triplets(P.rows(), 0, {}), true, true);
    const auto pf = fmat::eliminate(psys, fmat::plan_elimination(psys, full_scope(psys)));
    CHECK(pf.fill.factor_entries > P.nnz());
    const auto order = fmat::min_degree_order(P);
    CHECK(pf.fill.factor_entries <= fmat::symbolic_factor_entries(P, order));
}

TEST_CASE("pivot log dump and complement export") {
    fmat::Rng rng(61);
    const auto sys = random_f_system(rng, 8, 2, true);
    const auto plan = fmat::plan_elimination(sys, full_scope(sys, 1));
    const auto text = fmat::dump_pivot_log(plan);
    CHECK(text.find("step 0: v ") == 0);
    CHECK(text.find(" p ") != std::string::npos);
    CHECK(text.find("single") != std::string::npos);

    const auto f = fmat::eliminate(sys, prefix(plan, 4));
    const std::string path = "/tmp/fmat_schur_export.mtx";
    fmat::export_schur(f, path);
    const auto back = fmat::read_matrix_market(path);
    CHECK(relative_diff(oracle::to_dense(f.schur), oracle::to_dense(back)) == 0.0);
    std::remove(path.c_str());
}

}
