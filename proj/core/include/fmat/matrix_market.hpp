#pragma once

#include <string>

#include "fmat/sparse.hpp"

namespace fmat {

enum class MatrixMarketSymmetry { general, symmetric };

// Coordinate-format Matrix Market I/O. Writing uses 17 significant digits so
// a write/read cycle reproduces doubles exactly.
void write_matrix_market(const std::string& path, const SparseMatrix& A,
                         MatrixMarketSymmetry sym = MatrixMarketSymmetry::general);

// Reads real, integer, or pattern coordinate files; symmetric storage is
// expanded to both triangles. Pattern entries get value 1.
SparseMatrix read_matrix_market(const std::string& path);

} // namespace fmat
