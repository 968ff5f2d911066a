#pragma once

#include "fmat/precond.hpp"
#include "fmat/sparse.hpp"

namespace fmat {

// Condition number of the preconditioned pencil by dense eigendecomposition.
// Saddle systems are restricted to the constraint manifold through an
// orthonormal kernel basis of the coupling block; the preconditioned spectrum
// there is the generalized eigenspectrum of the kept velocity pencil plus a
// cluster at one. Refused above 2000 unknowns.
double dense_condition(const SparseMatrix& s, const Preconditioner& m);

} // namespace fmat
