#include "fmat/matrix_market.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fmat/error.hpp"

namespace fmat {

void write_matrix_market(const std::string& path, const SparseMatrix& A,
                         MatrixMarketSymmetry sym) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);

    const bool lower = sym == MatrixMarketSymmetry::symmetric;
    out << "%%MatrixMarket matrix coordinate real "
        << (lower ? "symmetric" : "general") << "\n";

    std::int64_t count = 0;
    for (int r = 0; r < A.rows(); ++r)
        for (int c : A.row_cols(r))
            if (!lower || c <= r) ++count;

    out << A.rows() << " " << A.cols() << " " << count << "\n";
    char buf[64];
    for (int r = 0; r < A.rows(); ++r) {
        const auto cols = A.row_cols(r);
        const auto vals = A.row_values(r);
        for (std::size_t k = 0; k < cols.size(); ++k) {
            if (lower && cols[k] > r) continue;
            std::snprintf(buf, sizeof buf, "%.17g", vals[k]);
            out << (r + 1) << " " << (cols[k] + 1) << " " << buf << "\n";
        }
    }
    if (!out) throw Error("write failed: " + path);
}

SparseMatrix read_matrix_market(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open: " + path);

    std::string header;
    if (!std::getline(in, header)) throw Error("empty file: " + path);
    std::istringstream hs(header);
    std::string banner, object, format, field, symmetry;
    hs >> banner >> object >> format >> field >> symmetry;
    if (banner != "%%MatrixMarket" || object != "matrix")
        throw Error("not a Matrix Market file: " + path);
    if (format != "coordinate")
        throw Error("only coordinate format is supported: " + path);
    if (field != "real" && field != "integer" && field != "pattern")
        throw Error("unsupported field type '" + field + "': " + path);
    if (symmetry != "general" && symmetry != "symmetric")
        throw Error("unsupported symmetry '" + symmetry + "': " + path);

    std::string line;
    int rows = 0, cols = 0;
    std::int64_t count = 0;
    for (;;) {
        if (!std::getline(in, line)) throw Error("missing size line: " + path);
        if (line.empty() || line[0] == '%') continue;
        std::istringstream ls(line);
        if (!(ls >> rows >> cols >> count)) throw Error("bad size line: " + path);
        break;
    }

    const bool pattern = field == "pattern";
    const bool sym = symmetry == "symmetric";
    std::vector<Triplet> ts;
    ts.reserve(static_cast<std::size_t>(sym ? 2 * count : count));
    for (std::int64_t k = 0; k < count; ++k) {
        if (!std::getline(in, line)) throw Error("truncated entries: " + path);
        if (line.empty() || line[0] == '%') {
            --k;
            continue;
        }
        std::istringstream ls(line);
        int r, c;
        double v = 1.0;
        if (!(ls >> r >> c)) throw Error("bad entry line: " + path);
        if (!pattern && !(ls >> v)) throw Error("bad entry value: " + path);
        ts.push_back({r - 1, c - 1, v});
        if (sym && r != c) ts.push_back({c - 1, r - 1, v});
    }
    return SparseMatrix::from_triplets(rows, cols, std::move(ts));
}

} // namespace fmat
