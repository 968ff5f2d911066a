#pragma once

#include <vector>

#include "fmat/decomp.hpp"
#include "fmat/sparse.hpp"

namespace fmat {

enum class TransformKind { partial_sum, householder };

// Column block [C, e] acting on one separator group: columns are mutually
// orthogonal, each of Euclidean norm m = sqrt(k), and the column at
// sigma_index is the all-ones vector. H^T H = m^2 I, so the inverse is
// H^T / m^2.
struct GroupTransform {
    TransformKind kind = TransformKind::partial_sum;
    int k = 0;
    int sigma_index = 0;

    double scale() const;

    // y = H x and y = H^T x, both O(k). Aliasing x == y is not allowed.
    void apply(const double* x, double* y) const;
    void apply_transposed(const double* x, double* y) const;

    // Row-major k*k materialization for cross-checks; refused for k > 64.
    std::vector<double> dense() const;
};

GroupTransform build_transform(int k, TransformKind kind = TransformKind::partial_sum);

// One transform per separator group, in group order.
std::vector<GroupTransform> build_group_transforms(const Decomposition& d,
                                                   TransformKind kind = TransformKind::partial_sum);

// Result of the block congruence on a Schur complement. matrix lives in the
// same schur-local index space as the input; sigma[g] is the local index that
// carries group g's summed unknown. rhs/solution mapping:
//   S x = r  <=>  matrix x_t = to_transformed(r),  x = from_transformed(x_t).
struct TransformedSchur {
    SparseMatrix matrix;
    int velocity_count = 0; // rows below this are velocities
    std::vector<int> sigma;
    std::vector<double> flip;    // +-1 per local velocity index
    std::vector<double> divisor; // symmetric rescale; 1 where untouched
    std::vector<GroupTransform> transforms;
    std::vector<std::vector<int>> group_local; // schur-local members per group

    std::vector<double> to_transformed(const std::vector<double>& r) const;
    std::vector<double> from_transformed(const std::vector<double>& x_t) const;
};

// Block congruence H^T S H over every separator group (identity elsewhere),
// followed by a symmetric diagonal rescale that restores magnitude-1 pressure
// couplings on the summed rows. Velocities inside a group whose pressure
// couplings disagree in sign are flipped first; an inconsistency that no
// flip assignment can repair is an error.
TransformedSchur transform_schur(const SparseMatrix& s, const Decomposition& d,
                                 const std::vector<GroupTransform>& transforms);

} // namespace fmat
