#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "fmat/decomp.hpp"
#include "fmat/error.hpp"
#include "fmat/problems.hpp"
#include "fmat/saddle.hpp"

namespace {

using namespace fmat;

double mesh_ratio(const std::vector<double>& x) {
    double hmin = 1e300, hmax = 0.0;
    for (std::size_t k = 1; k < x.size(); ++k) {
        const double h = x[k] - x[k - 1];
        hmin = std::min(hmin, h);
        hmax = std::max(hmax, h);
    }
    return hmax / hmin;
}

// Divergence-free fluxes from a stream function that vanishes near the walls.
std::vector<double> rotational_state(int nx, unsigned seed) {
    const StaggeredLayout layout = StaggeredLayout::square(2, nx);
    std::vector<std::vector<double>> psi(nx + 1, std::vector<double>(nx + 1, 0.0));
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int i = 2; i <= nx - 2; ++i)
        for (int j = 2; j <= nx - 2; ++j) psi[i][j] = unit(rng);
    std::vector<double> x(layout.total(), 0.0);
    for (int i = 1; i <= nx - 1; ++i)
        for (int j = 1; j <= nx; ++j)
            x[layout.velocity_id(0, {i, j, 1})] = psi[i][j] - psi[i][j - 1];
    for (int i = 1; i <= nx; ++i)
        for (int j = 1; j <= nx - 1; ++j)
            x[layout.velocity_id(1, {i, j, 1})] = -(psi[i][j] - psi[i - 1][j]);
    return x;
}

double max_abs_asymmetry(const SparseMatrix& a) {
    double worst = 0.0;
    for (int r = 0; r < a.rows(); ++r) {
        const auto cols = a.row_cols(r);
        const auto vals = a.row_values(r);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            double mirror = 0.0;
            const auto mc = a.row_cols(cols[k]);
            const auto mv = a.row_values(cols[k]);
            for (std::size_t q = 0; q < mc.size(); ++q)
                if (mc[q] == r) mirror = mv[q];
            worst = std::max(worst, std::abs(vals[k] - mirror));
        }
    }
    return worst;
}

} // namespace

TEST_SUITE("cavity") {

TEST_CASE("the stretched grid hits the target cell ratio") {
    for (int nx : {16, 64, 512}) {
        const std::vector<double> x = cavity_face_coordinates(nx);
        REQUIRE(static_cast<int>(x.size()) == nx + 1);
        CHECK(x.front() == 0.0);
        CHECK(x.back() == 1.0);
        CHECK(mesh_ratio(x) == doctest::Approx(5.0).epsilon(0.02));
        for (std::size_t k = 1; k < x.size(); ++k) CHECK(x[k] > x[k - 1]);
        // symmetric refinement toward both walls
        for (int k = 0; k <= nx; ++k)
            CHECK(x[k] + x[nx - k] == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("the linearized operator has the expected size and structure") {
    for (int nx : {8, 16, 64}) {
        const SaddleSystem sys = gen_cavity_jacobian(nx, 500.0, zero_cavity_state(nx));
        CHECK(sys.size() == nx * (3 * nx - 2));
        CHECK(validate_gradient_matrix(sys.B).is_gradient);
        // every scaled gradient entry is exactly one in magnitude
        for (int r = 0; r < sys.B.rows(); ++r)
            for (double v : sys.B.row_values(r)) CHECK(std::abs(v) == 1.0);
        CHECK(is_f_matrix(sys));
        CHECK_FALSE(sys.symmetric);
    }
    // the stored pattern does not depend on the state
    const int nx = 16;
    CavityState moving = zero_cavity_state(nx);
    moving.x = rotational_state(nx, 3);
    const SaddleSystem at_rest = gen_cavity_jacobian(nx, 500.0, zero_cavity_state(nx));
    const SaddleSystem in_motion = gen_cavity_jacobian(nx, 500.0, moving);
    REQUIRE(at_rest.A.nnz() == in_motion.A.nnz());
    for (int r = 0; r < at_rest.A.rows(); ++r) {
        const auto a = at_rest.A.row_cols(r);
        const auto b = in_motion.A.row_cols(r);
        REQUIRE(a.size() == b.size());
        for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
    }
}

TEST_CASE("the entry count matches the published problem size") {
    const SaddleSystem sys = gen_cavity_jacobian(512, 500.0, zero_cavity_state(512));
    CHECK(sys.size() == 785408);
    CHECK(sys.A.nnz() + 2 * sys.B.nnz() == 6794252);
}

TEST_CASE("at rest the operator reduces to a symmetric viscous term") {
    const int nx = 16;
    const CavityState rest = zero_cavity_state(nx);
    const SaddleSystem sys = gen_cavity_jacobian(nx, 500.0, rest);
    CHECK(max_abs_asymmetry(sys.A) <= 1e-12);

    // advection vanishes, so viscosity scales the velocity block exactly
    const SaddleSystem scaled = gen_cavity_jacobian(nx, 5000.0, rest);
    for (int r = 0; r < sys.A.rows(); ++r) {
        const auto v1 = sys.A.row_values(r);
        const auto v2 = scaled.A.row_values(r);
        REQUIRE(v1.size() == v2.size());
        for (std::size_t k = 0; k < v1.size(); ++k)
            CHECK(v1[k] / 10.0 == doctest::Approx(v2[k]).epsilon(1e-13));
    }
}

TEST_CASE("advection adds no energy on a rotational field") {
    const int nx = 16;
    const double re = 500.0;
    const CavityState rest = zero_cavity_state(nx);
    const SaddleSystem linear = gen_cavity_jacobian(nx, re, rest);
    const std::vector<double> base = cavity_residual(nx, re, rest);
    for (unsigned seed : {1u, 7u, 19u}) {
        CavityState w = rest;
        w.x = rotational_state(nx, seed);
        const std::vector<double> r = cavity_residual(nx, re, w);
        const int nvel = linear.n();
        // continuity is exact for a stream-function field
        for (std::size_t k = nvel; k < r.size(); ++k) CHECK(std::abs(r[k]) <= 1e-12);
        // quadratic part of the residual, paired with the field itself
        double dot = 0.0, nw = 0.0, nc = 0.0;
        for (int row = 0; row < nvel; ++row) {
            double lin = 0.0;
            const auto cols = linear.A.row_cols(row);
            const auto vals = linear.A.row_values(row);
            for (std::size_t k = 0; k < cols.size(); ++k) lin += vals[k] * w.x[cols[k]];
            const double conv = r[row] - base[row] - lin;
            dot += w.x[row] * conv;
            nw += w.x[row] * w.x[row];
            nc += conv * conv;
        }
        REQUIRE(nc > 0.0);
        CHECK(std::abs(dot) / std::sqrt(nw * nc) <= 1e-10);
    }
}

TEST_CASE("newton converges from rest and leaves a steady state") {
    const int nx = 16;
    const CavityState s = continue_to_re(nx, {500.0});
    CHECK(s.reached_re == 500.0);
    CHECK(s.total_newton_iterations >= 3);
    CHECK(s.total_newton_iterations <= 25);
    const std::vector<double> r = cavity_residual(nx, 500.0, s);
    double n2 = 0.0;
    for (double v : r) n2 += v * v;
    CHECK(std::sqrt(n2) <= 1e-8);

    // deterministic: a second run reproduces the state exactly
    const CavityState again = continue_to_re(nx, {500.0});
    REQUIRE(again.x.size() == s.x.size());
    for (std::size_t k = 0; k < s.x.size(); ++k) CHECK(again.x[k] == s.x[k]);
}

TEST_CASE("continuation walks the schedule and refuses a bad one") {
    const CavityState s = continue_to_re(16, {500.0, 1000.0});
    CHECK(s.reached_re == 1000.0);
    CHECK(s.last_residual <= 1e-6);
    CHECK_THROWS_WITH_AS(continue_to_re(16, {500.0, 500.0}),
                         doctest::Contains("increasing"), Error);
    CHECK_THROWS_WITH_AS(cavity_residual(16, -1.0, zero_cavity_state(16)),
                         doctest::Contains("positive"), Error);
    CHECK_THROWS_WITH_AS(gen_cavity_jacobian(16, 500.0, zero_cavity_state(32)),
                         doctest::Contains("state"), Error);
}

} // TEST_SUITE
