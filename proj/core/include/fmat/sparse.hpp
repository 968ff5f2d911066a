#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fmat {

struct Triplet {
    int row = 0;
    int col = 0;
    double value = 0.0;
};

// Compressed sparse row matrix. Column indices are sorted within each row.
// Explicitly stored zeros are kept: the stored pattern is part of the data
// and symbolic consumers (elimination, dropping) rely on it.
class SparseMatrix {
public:
    SparseMatrix() = default;
    SparseMatrix(int rows, int cols, std::vector<int> row_ptr,
                 std::vector<int> col_idx, std::vector<double> values);

    // Duplicate entries are summed after sorting; the position is kept even
    // when the sum is exactly zero.
    static SparseMatrix from_triplets(int rows, int cols, std::vector<Triplet> entries);
    static SparseMatrix identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::int64_t nnz() const { return static_cast<std::int64_t>(col_idx_.size()); }

    std::span<const int> row_cols(int i) const {
        return {col_idx_.data() + row_ptr_[i], col_idx_.data() + row_ptr_[i + 1]};
    }
    std::span<const double> row_values(int i) const {
        return {values_.data() + row_ptr_[i], values_.data() + row_ptr_[i + 1]};
    }
    std::span<double> row_values(int i) {
        return {values_.data() + row_ptr_[i], values_.data() + row_ptr_[i + 1]};
    }

    const std::vector<int>& row_ptr() const { return row_ptr_; }
    const std::vector<int>& col_idx() const { return col_idx_; }
    const std::vector<double>& values() const { return values_; }

    // Value at (i, j), zero when the position is not stored.
    double at(int i, int j) const;
    bool stored(int i, int j) const;

    SparseMatrix transpose() const;

    // y = A x
    void multiply(const double* x, double* y) const;
    std::vector<double> multiply(const std::vector<double>& x) const;
    // y += A x
    void multiply_add(const double* x, double* y) const;

    std::vector<Triplet> to_triplets() const;

    // B(i, j) = A(order[i], order[j]); order lists old indices in new order.
    SparseMatrix permuted_symmetric(const std::vector<int>& order) const;

    // Rows and columns restricted to the given old indices, in the given order.
    SparseMatrix submatrix(const std::vector<int>& row_set,
                           const std::vector<int>& col_set) const;

    bool is_structurally_symmetric() const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<int> row_ptr_{0};
    std::vector<int> col_idx_;
    std::vector<double> values_;
};

// Exact minimum-degree ordering on the symmetrized pattern of A.
// Ties are broken by the lowest node index, so the result is deterministic.
// Nodes with frozen[i] != 0 are excluded from the ordering.
std::vector<int> min_degree_order(const SparseMatrix& A,
                                  const std::vector<char>* frozen = nullptr);

// Entries of the triangular factors produced by symbolic elimination of the
// symmetrized pattern in the given order (both triangles plus the diagonal).
// Used for fill accounting and as an oracle for ordering quality.
std::int64_t symbolic_factor_entries(const SparseMatrix& A, const std::vector<int>& order);

} // namespace fmat
