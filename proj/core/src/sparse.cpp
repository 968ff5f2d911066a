#include "fmat/sparse.hpp"

#include <algorithm>
#include <cassert>
#include <queue>

#include "fmat/error.hpp"

namespace fmat {

SparseMatrix::SparseMatrix(int rows, int cols, std::vector<int> row_ptr,
                           std::vector<int> col_idx, std::vector<double> values)
    : rows_(rows), cols_(cols), row_ptr_(std::move(row_ptr)),
      col_idx_(std::move(col_idx)), values_(std::move(values)) {
    assert(static_cast<int>(row_ptr_.size()) == rows_ + 1);
    assert(col_idx_.size() == values_.size());
}

SparseMatrix SparseMatrix::from_triplets(int rows, int cols, std::vector<Triplet> entries) {
    for (const auto& t : entries) {
        if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
            throw Error("triplet index out of range");
    }
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });

    std::vector<int> row_ptr(rows + 1, 0);
    std::vector<int> col_idx;
    std::vector<double> values;
    col_idx.reserve(entries.size());
    values.reserve(entries.size());

    std::size_t i = 0;
    for (int r = 0; r < rows; ++r) {
        while (i < entries.size() && entries[i].row == r) {
            const int c = entries[i].col;
            double v = entries[i].value;
            ++i;
            while (i < entries.size() && entries[i].row == r && entries[i].col == c) {
                v += entries[i].value;
                ++i;
            }
            col_idx.push_back(c);
            values.push_back(v);
        }
        row_ptr[r + 1] = static_cast<int>(col_idx.size());
    }
    return SparseMatrix(rows, cols, std::move(row_ptr), std::move(col_idx), std::move(values));
}

SparseMatrix SparseMatrix::identity(int n) {
    std::vector<int> row_ptr(n + 1);
    std::vector<int> col_idx(n);
    std::vector<double> values(n, 1.0);
    for (int i = 0; i <= n; ++i) row_ptr[i] = i;
    for (int i = 0; i < n; ++i) col_idx[i] = i;
    return SparseMatrix(n, n, std::move(row_ptr), std::move(col_idx), std::move(values));
}

double SparseMatrix::at(int i, int j) const {
    const auto cols = row_cols(i);
    const auto it = std::lower_bound(cols.begin(), cols.end(), j);
    if (it == cols.end() || *it != j) return 0.0;
    return values_[row_ptr_[i] + (it - cols.begin())];
}

bool SparseMatrix::stored(int i, int j) const {
    const auto cols = row_cols(i);
    return std::binary_search(cols.begin(), cols.end(), j);
}

SparseMatrix SparseMatrix::transpose() const {
    std::vector<int> row_ptr(cols_ + 1, 0);
    for (int c : col_idx_) ++row_ptr[c + 1];
    for (int c = 0; c < cols_; ++c) row_ptr[c + 1] += row_ptr[c];

    std::vector<int> col_idx(col_idx_.size());
    std::vector<double> values(values_.size());
    std::vector<int> next(row_ptr.begin(), row_ptr.end() - 1);
    for (int r = 0; r < rows_; ++r) {
        for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
            const int pos = next[col_idx_[k]]++;
            col_idx[pos] = r;
            values[pos] = values_[k];
        }
    }
    return SparseMatrix(cols_, rows_, std::move(row_ptr), std::move(col_idx), std::move(values));
}

void SparseMatrix::multiply(const double* x, double* y) const {
    for (int r = 0; r < rows_; ++r) {
        double acc = 0.0;
        for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
            acc += values_[k] * x[col_idx_[k]];
        y[r] = acc;
    }
}

std::vector<double> SparseMatrix::multiply(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != cols_) throw Error("multiply: size mismatch");
    std::vector<double> y(rows_);
    multiply(x.data(), y.data());
    return y;
}

void SparseMatrix::multiply_add(const double* x, double* y) const {
    for (int r = 0; r < rows_; ++r) {
        double acc = 0.0;
        for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
            acc += values_[k] * x[col_idx_[k]];
        y[r] += acc;
    }
}

std::vector<Triplet> SparseMatrix::to_triplets() const {
    std::vector<Triplet> out;
    out.reserve(col_idx_.size());
    for (int r = 0; r < rows_; ++r)
        for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
            out.push_back({r, col_idx_[k], values_[k]});
    return out;
}

SparseMatrix SparseMatrix::permuted_symmetric(const std::vector<int>& order) const {
    if (rows_ != cols_ || static_cast<int>(order.size()) != rows_)
        throw Error("permuted_symmetric: bad order");
    std::vector<int> inv(rows_, -1);
    for (int i = 0; i < rows_; ++i) {
        if (order[i] < 0 || order[i] >= rows_ || inv[order[i]] != -1)
            throw Error("permuted_symmetric: not a permutation");
        inv[order[i]] = i;
    }
    std::vector<Triplet> ts;
    ts.reserve(col_idx_.size());
    for (int r = 0; r < rows_; ++r)
        for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
            ts.push_back({inv[r], inv[col_idx_[k]], values_[k]});
    return from_triplets(rows_, cols_, std::move(ts));
}

SparseMatrix SparseMatrix::submatrix(const std::vector<int>& row_set,
                                     const std::vector<int>& col_set) const {
    std::vector<int> col_map(cols_, -1);
    for (std::size_t j = 0; j < col_set.size(); ++j) col_map[col_set[j]] = static_cast<int>(j);

    std::vector<Triplet> ts;
    for (std::size_t i = 0; i < row_set.size(); ++i) {
        const int r = row_set[i];
        for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
            const int cj = col_map[col_idx_[k]];
            if (cj >= 0) ts.push_back({static_cast<int>(i), cj, values_[k]});
        }
    }
    return from_triplets(static_cast<int>(row_set.size()),
                         static_cast<int>(col_set.size()), std::move(ts));
}

bool SparseMatrix::is_structurally_symmetric() const {
    if (rows_ != cols_) return false;
    const SparseMatrix t = transpose();
    return t.row_ptr_ == row_ptr_ && t.col_idx_ == col_idx_;
}

namespace {

// Adjacency with sorted neighbor lists; elimination merges the pivot's list
// into each neighbor. Correct and deterministic; fast enough for the sizes
// this library targets.
struct EliminationGraph {
    std::vector<std::vector<int>> adj;

    explicit EliminationGraph(const SparseMatrix& A) {
        const int n = A.rows();
        adj.assign(n, {});
        for (int r = 0; r < n; ++r) {
            for (int c : A.row_cols(r)) {
                if (c == r) continue;
                adj[r].push_back(c);
                adj[c].push_back(r);
            }
        }
        for (auto& list : adj) {
            std::sort(list.begin(), list.end());
            list.erase(std::unique(list.begin(), list.end()), list.end());
        }
    }

    // Removes `v` and connects its remaining neighbors into a clique.
    // `alive` marks nodes not yet eliminated.
    void eliminate(int v, const std::vector<char>& alive) {
        std::vector<int> nbrs;
        nbrs.reserve(adj[v].size());
        for (int u : adj[v])
            if (alive[u]) nbrs.push_back(u);

        for (int u : nbrs) {
            auto& list = adj[u];
            std::vector<int> merged;
            merged.reserve(list.size() + nbrs.size());
            std::set_union(list.begin(), list.end(), nbrs.begin(), nbrs.end(),
                           std::back_inserter(merged));
            merged.erase(std::remove_if(merged.begin(), merged.end(),
                                        [&](int w) { return w == u || w == v || !alive[w]; }),
                         merged.end());
            list = std::move(merged);
        }
        adj[v].clear();
        adj[v].shrink_to_fit();
    }

    int degree(int v, const std::vector<char>& alive) const {
        int d = 0;
        for (int u : adj[v])
            if (alive[u]) ++d;
        return d;
    }
};

} // namespace

std::vector<int> min_degree_order(const SparseMatrix& A, const std::vector<char>* frozen) {
    if (A.rows() != A.cols()) throw Error("min_degree_order: matrix not square");
    const int n = A.rows();
    EliminationGraph g(A);

    std::vector<char> alive(n, 1);
    std::vector<char> eligible(n, 1);
    if (frozen) {
        if (static_cast<int>(frozen->size()) != n) throw Error("min_degree_order: bad frozen size");
        for (int i = 0; i < n; ++i)
            if ((*frozen)[i]) eligible[i] = 0;
    }

    // Lazy heap of (degree, node); stale entries are skipped on pop.
    using Entry = std::pair<int, int>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    for (int i = 0; i < n; ++i)
        if (eligible[i]) heap.push({g.degree(i, alive), i});

    std::vector<int> order;
    order.reserve(n);
    std::vector<char> done(n, 0);
    while (!heap.empty()) {
        const auto [d, v] = heap.top();
        heap.pop();
        if (done[v]) continue;
        const int cur = g.degree(v, alive);
        if (cur != d) {
            heap.push({cur, v});
            continue;
        }
        done[v] = 1;
        order.push_back(v);
        alive[v] = 0;

        // Only neighbors change degree; they get fresh heap entries.
        std::vector<int> touched;
        for (int u : g.adj[v])
            if (alive[u] && eligible[u] && !done[u]) touched.push_back(u);
        g.eliminate(v, alive);
        for (int u : touched) heap.push({g.degree(u, alive), u});
    }
    return order;
}

std::int64_t symbolic_factor_entries(const SparseMatrix& A, const std::vector<int>& order) {
    const int n = A.rows();
    EliminationGraph g(A);
    std::vector<char> alive(n, 1);
    std::int64_t entries = 0;
    for (int v : order) {
        if (!alive[v]) throw Error("symbolic_factor_entries: repeated node in order");
        entries += 2 * g.degree(v, alive) + 1;
        alive[v] = 0;
        g.eliminate(v, alive);
    }
    return entries;
}

} // namespace fmat
