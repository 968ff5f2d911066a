#include "fmat/transform.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fmat/error.hpp"
#include "fmat/factor.hpp"

namespace fmat {

double GroupTransform::scale() const { return std::sqrt(static_cast<double>(k)); }

namespace {

// Column j < k-1 of the partial-sum block has ones in rows 0..j and -(j+1) in
// row j+1, scaled so its norm is sqrt(k); column k-1 is the all-ones vector.
double column_scale(int k, int j) {
    return std::sqrt(static_cast<double>(k) / ((j + 1.0) * (j + 2.0)));
}

} // namespace

void GroupTransform::apply(const double* x, double* y) const {
    if (k == 1) {
        y[0] = x[0];
        return;
    }
    if (kind == TransformKind::partial_sum) {
        double suffix = 0.0;
        for (int i = k - 1; i >= 0; --i) {
            if (i <= k - 2) suffix += column_scale(k, i) * x[i];
            y[i] = suffix + x[k - 1];
            if (i > 0) y[i] -= i * column_scale(k, i - 1) * x[i - 1];
        }
        return;
    }
    // Reflector sending e_{k-1} to e/sqrt(k), scaled by sqrt(k).
    const double rk = std::sqrt(static_cast<double>(k));
    const double wlast = 1.0 / rk - 1.0;
    const double wtw = 2.0 - 2.0 / rk;
    double wtx = x[k - 1] * wlast;
    for (int i = 0; i < k - 1; ++i) wtx += x[i] / rk;
    const double c = 2.0 * wtx / wtw;
    for (int i = 0; i < k - 1; ++i) y[i] = rk * (x[i] - c / rk);
    y[k - 1] = rk * (x[k - 1] - c * wlast);
}

void GroupTransform::apply_transposed(const double* x, double* y) const {
    if (k == 1) {
        y[0] = x[0];
        return;
    }
    if (kind == TransformKind::partial_sum) {
        double prefix = 0.0;
        for (int j = 0; j <= k - 2; ++j) {
            prefix += x[j];
            y[j] = column_scale(k, j) * (prefix - (j + 1.0) * x[j + 1]);
        }
        y[k - 1] = prefix + x[k - 1];
        return;
    }
    apply(x, y); // the reflector is symmetric
}

std::vector<double> GroupTransform::dense() const {
    if (k > 64) throw Error("GroupTransform::dense: refusing k > 64");
    std::vector<double> h(static_cast<std::size_t>(k) * k, 0.0);
    std::vector<double> ej(k, 0.0), col(k);
    for (int j = 0; j < k; ++j) {
        ej[j] = 1.0;
        apply(ej.data(), col.data());
        ej[j] = 0.0;
        // apply computes H x, so feeding e_j yields column j
        for (int i = 0; i < k; ++i) h[static_cast<std::size_t>(i) * k + j] = col[i];
    }
    return h;
}

GroupTransform build_transform(int k, TransformKind kind) {
    if (k < 1) throw Error("build_transform: group size must be positive");
    GroupTransform t;
    t.kind = kind;
    t.k = k;
    t.sigma_index = k - 1;
    return t;
}

std::vector<GroupTransform> build_group_transforms(const Decomposition& d, TransformKind kind) {
    std::vector<GroupTransform> out;
    out.reserve(d.groups.size());
    for (const auto& g : d.groups)
        out.push_back(build_transform(static_cast<int>(g.members.size()), kind));
    return out;
}

namespace {

using Rows = std::vector<std::vector<std::pair<int, double>>>;

Rows transpose_rows(const Rows& rows) {
    Rows out(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (const auto& [c, v] : rows[r]) out[c].push_back({static_cast<int>(r), v});
    return out;
}

// Left-multiply by blockdiag(flip * H)^T: rows of each group are combined,
// all other rows pass through. Rows stay sorted by column.
void left_transform(Rows& rows, const std::vector<std::vector<int>>& group_local,
                    const std::vector<GroupTransform>& transforms,
                    const std::vector<double>& flip) {
    struct Ent {
        int col, pos;
        double val;
    };
    std::vector<Ent> ents;
    std::vector<double> vec, out;
    std::vector<int> touched;
    for (std::size_t g = 0; g < group_local.size(); ++g) {
        const auto& lg = group_local[g];
        const auto& h = transforms[g];
        const int k = h.k;
        if (k == 1) continue;
        ents.clear();
        for (int j = 0; j < k; ++j) {
            for (const auto& [c, v] : rows[lg[j]]) ents.push_back({c, j, flip[lg[j]] * v});
            rows[lg[j]].clear();
        }
        std::sort(ents.begin(), ents.end(), [](const Ent& a, const Ent& b) {
            return a.col != b.col ? a.col < b.col : a.pos < b.pos;
        });
        vec.assign(k, 0.0);
        out.resize(k);
        for (std::size_t i = 0; i < ents.size();) {
            const int col = ents[i].col;
            touched.clear();
            for (; i < ents.size() && ents[i].col == col; ++i) {
                vec[ents[i].pos] = ents[i].val;
                touched.push_back(ents[i].pos);
            }
            h.apply_transposed(vec.data(), out.data());
            for (int p : touched) vec[p] = 0.0;
            for (int j = 0; j < k; ++j)
                if (out[j] != 0.0) rows[lg[j]].push_back({col, out[j]});
        }
    }
}

// Union-find with parity for the sign-flip assignment.
struct SignedDsu {
    std::vector<int> parent;
    std::vector<int> rel; // sign of node relative to its parent

    explicit SignedDsu(int n) : parent(n), rel(n, 1) { std::iota(parent.begin(), parent.end(), 0); }

    std::pair<int, int> find(int x) {
        int sign = 1;
        while (parent[x] != x) {
            sign *= rel[x];
            x = parent[x];
        }
        return {x, sign};
    }

    // Enforce flip_a * sa == flip_b * sb; returns false on contradiction.
    bool link(int a, int sa, int b, int sb) {
        auto [ra, pa] = find(a);
        auto [rb, pb] = find(b);
        const int want = sa * sb; // flip_a / flip_b
        if (ra == rb) return pa * pb == want;
        parent[ra] = rb;
        rel[ra] = pa * pb * want;
        return true;
    }
};

} // namespace

TransformedSchur transform_schur(const SparseMatrix& s, const Decomposition& d,
                                 const std::vector<GroupTransform>& transforms) {
    if (transforms.size() != d.groups.size())
        throw Error("transform_schur: one transform per separator group required");
    const auto schur_vars = d.schur_variables();
    const int ns = static_cast<int>(schur_vars.size());
    if (s.rows() != ns || s.cols() != ns)
        throw Error("transform_schur: matrix does not match the decomposition's Schur set");
    std::vector<int> g2l(d.kind.size(), -1);
    for (int l = 0; l < ns; ++l) g2l[schur_vars[l]] = l;
    const int svc = static_cast<int>(
        std::count_if(schur_vars.begin(), schur_vars.end(),
                      [&](int id) { return id < d.velocity_count; }));

    TransformedSchur t;
    t.velocity_count = svc;
    t.transforms = transforms;
    t.flip.assign(ns, 1.0);
    t.divisor.assign(ns, 1.0);
    t.group_local.resize(d.groups.size());
    t.sigma.resize(d.groups.size());
    for (std::size_t g = 0; g < d.groups.size(); ++g) {
        const auto& members = d.groups[g].members;
        if (static_cast<int>(members.size()) != transforms[g].k)
            throw Error("transform_schur: transform size does not match group size");
        auto& lg = t.group_local[g];
        lg.reserve(members.size());
        for (int id : members) {
            if (g2l[id] < 0) throw Error("transform_schur: group member missing from the Schur set");
            lg.push_back(g2l[id]);
        }
        t.sigma[g] = lg[transforms[g].sigma_index];
    }

    Rows rows(ns);
    for (int r = 0; r < ns; ++r) {
        const auto cols = s.row_cols(r);
        const auto vals = s.row_values(r);
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (vals[i] != 0.0) rows[r].push_back({cols[i], vals[i]});
    }

    // Sign flips: within a group every pressure column must touch the flipped
    // rows with one sign.
    for (std::size_t g = 0; g < d.groups.size(); ++g) {
        const auto& lg = t.group_local[g];
        const int k = transforms[g].k;
        if (k == 1) continue;
        struct PEnt {
            int col, pos, sign;
        };
        std::vector<PEnt> pents;
        for (int j = 0; j < k; ++j)
            for (const auto& [c, v] : rows[lg[j]])
                if (c >= svc && std::abs(v) > kCouplingVanishTol)
                    pents.push_back({c, j, v > 0.0 ? 1 : -1});
        if (pents.empty()) continue;
        std::sort(pents.begin(), pents.end(), [](const PEnt& a, const PEnt& b) {
            return a.col != b.col ? a.col < b.col : a.pos < b.pos;
        });
        SignedDsu dsu(k);
        for (std::size_t i = 1; i < pents.size(); ++i)
            if (pents[i].col == pents[i - 1].col &&
                !dsu.link(pents[i - 1].pos, pents[i - 1].sign, pents[i].pos, pents[i].sign))
                throw Error("transform_schur: group " + std::to_string(g) +
                            " has mixed-sign pressure couplings in one component");
        for (int j = 0; j < k; ++j) t.flip[lg[j]] = dsu.find(j).second;
    }

    left_transform(rows, t.group_local, transforms, t.flip);
    Rows cols = transpose_rows(rows);
    left_transform(cols, t.group_local, transforms, t.flip);
    rows = transpose_rows(cols);

    // Divisors restore magnitude-1 pressure couplings on the summed rows.
    std::vector<int> loc2group(ns, -1);
    for (std::size_t g = 0; g < d.groups.size(); ++g)
        for (int l : t.group_local[g]) loc2group[l] = static_cast<int>(g);
    for (std::size_t g = 0; g < d.groups.size(); ++g) {
        double mx = 0.0;
        for (const auto& [c, v] : rows[t.sigma[g]])
            if (c >= svc) mx = std::max(mx, std::abs(v));
        if (mx > 0.0) t.divisor[t.sigma[g]] = mx;
    }

    std::vector<Triplet> ts;
    ts.reserve(64);
    for (int r = 0; r < ns; ++r)
        for (const auto& [c, v] : rows[r]) {
            // Couplings concentrated away from a group's summed row shrink to
            // round-off; scrub them so the pattern matches exact arithmetic.
            const bool vp = (r < svc) != (c < svc);
            if (vp) {
                const int gl = loc2group[r < svc ? r : c];
                if (gl >= 0 && std::abs(v) <= kCouplingVanishTol * transforms[gl].k) continue;
            }
            double val = v / t.divisor[r];
            if (t.divisor[c] != 1.0) val /= t.divisor[c];
            if (val != 0.0) ts.push_back({r, c, val});
        }
    t.matrix = SparseMatrix::from_triplets(ns, ns, std::move(ts));
    return t;
}

std::vector<double> TransformedSchur::to_transformed(const std::vector<double>& r) const {
    std::vector<double> out = r;
    std::vector<double> vec, res;
    for (std::size_t g = 0; g < group_local.size(); ++g) {
        const auto& lg = group_local[g];
        const int k = transforms[g].k;
        if (k == 1) continue;
        vec.resize(k);
        res.resize(k);
        for (int j = 0; j < k; ++j) vec[j] = flip[lg[j]] * r[lg[j]];
        transforms[g].apply_transposed(vec.data(), res.data());
        for (int j = 0; j < k; ++j) out[lg[j]] = res[j];
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= divisor[i];
    return out;
}

std::vector<double> TransformedSchur::from_transformed(const std::vector<double>& x_t) const {
    std::vector<double> scaled = x_t;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] /= divisor[i];
    std::vector<double> out = scaled;
    std::vector<double> vec, res;
    for (std::size_t g = 0; g < group_local.size(); ++g) {
        const auto& lg = group_local[g];
        const int k = transforms[g].k;
        if (k == 1) continue;
        vec.resize(k);
        res.resize(k);
        for (int j = 0; j < k; ++j) vec[j] = scaled[lg[j]];
        transforms[g].apply(vec.data(), res.data());
        for (int j = 0; j < k; ++j) out[lg[j]] = flip[lg[j]] * res[j];
    }
    return out;
}

} // namespace fmat
