#pragma once

#include <cstdint>
#include <vector>

#include "fmat/decomp.hpp"
#include "fmat/saddle.hpp"
#include "fmat/sparse.hpp"

namespace fmat {

// Constant-coefficient diffusion on a periodic node grid with node 0 grounded
// (off-diagonal entries of its row and column removed). Grounding makes the
// matrix positive definite without changing the stencil elsewhere.
SparseMatrix gen_poisson(int dim, int nx);

// Unit permeability: A = I on face velocities, B with unit couplings.
SaddleSystem gen_darcy(int dim, int nx);

// Vector diffusion on the staggered grid with no-slip walls. Couplings in B
// carry the mesh width; the solver pipeline rescales them to unit magnitude.
SaddleSystem gen_stokes(int dim, int nx);

struct ScalarProblem {
    SparseMatrix A;
    std::vector<double> rhs;
    GridSpec grid;
};

struct SaddleProblem {
    SaddleSystem system;
    std::vector<double> rhs;
    GridSpec grid;
};

ScalarProblem poisson_problem(int dim, int nx, std::uint64_t seed);
SaddleProblem darcy_problem(int dim, int nx, std::uint64_t seed);
SaddleProblem stokes_problem(int dim, int nx, std::uint64_t seed);

// Velocity field with exactly zero discrete divergence, built from integer
// potentials (stream function in 2D, edge potentials in 3D) so cancellation
// is exact in floating point; pressure part is random with zero mean.
std::vector<double> random_divergence_free_state(const GridSpec& grid, std::uint64_t seed);

struct DivergenceFreeData {
    std::vector<double> x_true;
    std::vector<double> b;
};

// Algebraic variant for arbitrary systems: a seeded random velocity vector is
// projected onto ker(B^T) by least squares, so the divergence residual is at
// the solver tolerance rather than exactly zero.
DivergenceFreeData random_divergence_free_system(const SaddleSystem& k, std::uint64_t seed);

// Lid-driven cavity: steady Navier-Stokes on a boundary-layer-refined grid,
// flux unknowns, symmetry-preserving convection, full Newton linearization.
struct CavityState {
    int nx = 0;
    double reached_re = 0.0;
    std::vector<double> x; // velocities then pressures
    int total_newton_iterations = 0;
    double last_residual = 0.0;
};

// Face coordinates in [0, 1], refined toward both walls; (max cell)/(min cell)
// is calibrated to 5.0 +- 0.1.
std::vector<double> cavity_face_coordinates(int nx);

CavityState zero_cavity_state(int nx);

// Steady residual of momentum and continuity at the given state, lid data
// folded in. Layout matches the staggered index maps.
std::vector<double> cavity_residual(int nx, double re, const CavityState& state);

// Jacobian of cavity_residual at the state (both advection linearization
// terms included), scaled to flux unknowns so B has unit couplings.
SaddleSystem gen_cavity_jacobian(int nx, double re, const CavityState& state);

// Newton continuation through the given increasing Reynolds schedule; inner
// linear solves use this library's preconditioned GMRES. An empty schedule
// returns the zero state.
CavityState continue_to_re(int nx, const std::vector<double>& re_schedule);

} // namespace fmat
