#include "fmat/problems.hpp"

#include <cmath>

#include "fmat/common.hpp"
#include "fmat/error.hpp"

namespace fmat {

SparseMatrix gen_poisson(int dim, int nx) {
    if (dim != 2 && dim != 3) throw Error("gen_poisson: dim must be 2 or 3");
    if (nx < 1) throw Error("gen_poisson: nx must be positive");
    const ScalarLayout layout = ScalarLayout::square(dim, nx);
    const int N = layout.total();

    std::vector<Triplet> ts;
    ts.reserve(static_cast<std::size_t>(N) * (2 * dim + 1));
    std::array<int, 3> pos{};
    for (int id = 0; id < N; ++id) {
        layout.locate(id, pos);
        ts.push_back({id, id, 2.0 * dim});
        for (int a = 0; a < dim; ++a) {
            for (int delta : {-1, 1}) {
                auto q = pos;
                q[a] = (pos[a] - 1 + delta + nx) % nx + 1;
                const int nid = layout.node_id(q);
                if (nid == id) continue;            // nx == 1 self-link
                if (id == 0 || nid == 0) continue;  // grounded node couplings removed
                ts.push_back({id, nid, -1.0});
            }
        }
    }
    return SparseMatrix::from_triplets(N, N, std::move(ts));
}

namespace {

// Both cells across an interior face of component c; lower first.
std::pair<std::array<int, 3>, std::array<int, 3>> face_cells(const std::array<int, 3>& pos,
                                                             int c) {
    auto lower = pos;
    auto upper = pos;
    upper[c] += 1;
    return {lower, upper};
}

SparseMatrix staggered_gradient(const StaggeredLayout& layout, double coupling) {
    const int nvel = layout.num_velocities();
    std::vector<Triplet> ts;
    ts.reserve(static_cast<std::size_t>(2 * nvel));
    for (int c = 0; c < layout.dim; ++c) {
        const int base = layout.component_base(c);
        std::array<int, 3> pos{};
        int comp;
        for (int local = 0; local < layout.component_count(c); ++local) {
            const int vid = base + local;
            layout.locate(vid, comp, pos);
            const auto [lower, upper] = face_cells(pos, c);
            ts.push_back({vid, layout.pressure_id(lower) - nvel, coupling});
            ts.push_back({vid, layout.pressure_id(upper) - nvel, -coupling});
        }
    }
    return SparseMatrix::from_triplets(nvel, layout.num_pressures(), std::move(ts));
}

} // namespace

SaddleSystem gen_darcy(int dim, int nx) {
    if (dim != 2 && dim != 3) throw Error("gen_darcy: dim must be 2 or 3");
    if (nx < 2) throw Error("gen_darcy: nx must be at least 2");
    const StaggeredLayout layout = StaggeredLayout::square(dim, nx);
    return make_saddle_system(SparseMatrix::identity(layout.num_velocities()),
                              staggered_gradient(layout, 1.0), true, true);
}

SaddleSystem gen_stokes(int dim, int nx) {
    if (dim != 2 && dim != 3) throw Error("gen_stokes: dim must be 2 or 3");
    if (nx < 4) throw Error("gen_stokes: nx must be at least 4");
    const StaggeredLayout layout = StaggeredLayout::square(dim, nx);

    std::vector<Triplet> ts;
    std::array<int, 3> pos{};
    int comp;
    for (int c = 0; c < layout.dim; ++c) {
        const int base = layout.component_base(c);
        for (int local = 0; local < layout.component_count(c); ++local) {
            const int vid = base + local;
            layout.locate(vid, comp, pos);

            // No-slip walls: a missing tangential neighbor is a mirror ghost,
            // which strengthens the diagonal; a missing normal neighbor is the
            // boundary face itself (a known value), dropped without penalty.
            double diag = 2.0 * dim;
            for (int a = 0; a < dim; ++a) {
                if (a == c) continue;
                if (pos[a] == 1) diag += 1.0;
                if (pos[a] == nx) diag += 1.0;
            }
            ts.push_back({vid, vid, diag});

            for (int a = 0; a < dim; ++a) {
                for (int delta : {-1, 1}) {
                    auto q = pos;
                    q[a] += delta;
                    const int hi = a == c ? nx - 1 : nx;
                    if (q[a] < 1 || q[a] > hi) continue;
                    ts.push_back({vid, layout.velocity_id(c, q), -1.0});
                }
            }
        }
    }
    const double h = 1.0 / nx;
    return make_saddle_system(
        SparseMatrix::from_triplets(layout.num_velocities(), layout.num_velocities(),
                                    std::move(ts)),
        staggered_gradient(layout, h), true, true);
}

ScalarProblem poisson_problem(int dim, int nx, std::uint64_t seed) {
    ScalarProblem p;
    p.A = gen_poisson(dim, nx);
    p.grid = GridSpec{dim, nx, nx, GridKind::scalar_periodic};
    Rng rng(seed);
    p.rhs.resize(p.A.rows());
    for (auto& v : p.rhs) v = rng.uniform(-1.0, 1.0);
    return p;
}

std::vector<double> random_divergence_free_state(const GridSpec& grid, std::uint64_t seed) {
    if (grid.kind != GridKind::staggered)
        throw Error("random_divergence_free_state: staggered grids only");
    const int nx = grid.nx;
    const StaggeredLayout layout = StaggeredLayout::square(grid.dim, nx);
    Rng rng(seed);
    const auto draw = [&rng]() {
        return static_cast<std::int64_t>(rng.uniform_int(-(1 << 20), 1 << 20));
    };

    std::vector<double> x(layout.total(), 0.0);
    if (grid.dim == 2) {
        // Stream function on vertices; fluxes are exact integer differences.
        const int nv = nx + 1;
        std::vector<std::int64_t> psi(static_cast<std::size_t>(nv) * nv);
        for (auto& v : psi) v = draw();
        // Constant along the walls, so boundary cells see zero net flux
        // through their missing wall faces.
        for (int i = 0; i < nv; ++i)
            for (int j = 0; j < nv; ++j)
                if (i == 0 || i == nx || j == 0 || j == nx)
                    psi[i + static_cast<std::size_t>(j) * nv] = 0;
        const auto at = [&](int i, int j) { return psi[i + static_cast<std::size_t>(j) * nv]; };

        std::array<int, 3> pos{};
        int comp;
        for (int c = 0; c < 2; ++c) {
            const int base = layout.component_base(c);
            for (int local = 0; local < layout.component_count(c); ++local) {
                const int vid = base + local;
                layout.locate(vid, comp, pos);
                std::int64_t diff;
                if (c == 0) // u at vertical face (f, cj): top minus bottom vertex
                    diff = at(pos[0], pos[1]) - at(pos[0], pos[1] - 1);
                else // v at horizontal face (ci, f): left minus right vertex
                    diff = at(pos[0] - 1, pos[1]) - at(pos[0], pos[1]);
                x[vid] = std::ldexp(static_cast<double>(diff), -20);
            }
        }
    } else {
        // Edge potentials; the flux through a face is the circulation around
        // it, and per-cell sums telescope edge by edge.
        const int nv = nx + 1;
        std::array<std::vector<std::int64_t>, 3> edge;
        for (int a = 0; a < 3; ++a) {
            std::size_t count = 1;
            for (int d = 0; d < 3; ++d) count *= static_cast<std::size_t>(d == a ? nx : nv);
            edge[a].resize(count);
            for (auto& v : edge[a]) v = draw();
        }
        // Tangential potentials vanish on the walls; the circulation around
        // any missing wall face is then exactly zero.
        for (int a = 0; a < 3; ++a) {
            const int si = a == 0 ? nx : nv;
            const int sj = a == 1 ? nx : nv;
            const int sl = a == 2 ? nx : nv;
            for (int l = 0; l < sl; ++l)
                for (int j = 0; j < sj; ++j)
                    for (int i = 0; i < si; ++i) {
                        const std::array<int, 3> w{i, j, l};
                        bool wall = false;
                        for (int dax = 0; dax < 3; ++dax)
                            if (dax != a && (w[dax] == 0 || w[dax] == nx)) wall = true;
                        if (wall)
                            edge[a][i + static_cast<std::size_t>(j) * si +
                                    static_cast<std::size_t>(l) * si * sj] = 0;
                    }
        }
        const auto at = [&](int a, int i, int j, int l) {
            const int si = a == 0 ? nx : nv;
            const int sj = a == 1 ? nx : nv;
            return edge[a][i + static_cast<std::size_t>(j) * si +
                           static_cast<std::size_t>(l) * si * sj];
        };
        // Edge of axis b starting at vertex w.
        const auto edge_at = [&](int b, const std::array<int, 3>& w) {
            return at(b, w[0], w[1], w[2]);
        };

        std::array<int, 3> pos{};
        int comp;
        for (int c = 0; c < 3; ++c) {
            const int base = layout.component_base(c);
            const int b = (c + 1) % 3;
            const int e = (c + 2) % 3;
            for (int local = 0; local < layout.component_count(c); ++local) {
                const int vid = base + local;
                layout.locate(vid, comp, pos);
                // Face corner vertex with the lowest coordinates.
                std::array<int, 3> w{};
                w[c] = pos[c];
                w[b] = pos[b] - 1;
                w[e] = pos[e] - 1;

                auto wb = w; wb[e] += 1; // b-edge shifted along e
                auto we = w; we[b] += 1; // e-edge shifted along b
                const std::int64_t diff = edge_at(b, w) - edge_at(b, wb) +
                                          edge_at(e, we) - edge_at(e, w);
                x[vid] = std::ldexp(static_cast<double>(diff), -20);
            }
        }
    }

    const int nvel = layout.num_velocities();
    const int np = layout.num_pressures();
    double mean = 0.0;
    for (int i = 0; i < np; ++i) {
        x[nvel + i] = rng.uniform(-1.0, 1.0);
        mean += x[nvel + i];
    }
    mean /= np;
    for (int i = 0; i < np; ++i) x[nvel + i] -= mean;
    return x;
}

namespace {

std::vector<double> consistent_rhs(const SaddleSystem& sys, const std::vector<double>& x) {
    const int n = sys.n();
    const int m = sys.m();
    std::vector<double> b(n + m, 0.0);
    sys.A.multiply(x.data(), b.data());
    const SparseMatrix Bt = sys.B.transpose();
    std::vector<double> tmp(n);
    // b_v += B x_p
    for (int r = 0; r < n; ++r) {
        const auto cols = sys.B.row_cols(r);
        const auto vals = sys.B.row_values(r);
        double acc = 0.0;
        for (std::size_t k = 0; k < cols.size(); ++k) acc += vals[k] * x[n + cols[k]];
        b[r] += acc;
    }
    Bt.multiply(x.data(), b.data() + n);
    return b;
}

} // namespace

SaddleProblem darcy_problem(int dim, int nx, std::uint64_t seed) {
    SaddleProblem p;
    p.system = gen_darcy(dim, nx);
    p.grid = GridSpec{dim, nx, nx, GridKind::staggered};
    const auto x = random_divergence_free_state(p.grid, seed);
    p.rhs = consistent_rhs(p.system, x);
    return p;
}

SaddleProblem stokes_problem(int dim, int nx, std::uint64_t seed) {
    SaddleProblem p;
    p.system = gen_stokes(dim, nx);
    p.grid = GridSpec{dim, nx, nx, GridKind::staggered};
    const auto x = random_divergence_free_state(p.grid, seed);
    p.rhs = consistent_rhs(p.system, x);
    return p;
}

DivergenceFreeData random_divergence_free_system(const SaddleSystem& k, std::uint64_t seed) {
    const int n = k.n();
    const int m = k.m();
    Rng rng(seed);

    std::vector<double> r(n);
    for (auto& v : r) v = rng.uniform(-1.0, 1.0);

    // Least-squares projection of r onto ker(B^T): x_v = r - B y where y
    // minimizes |B y - r|. Conjugate gradients on the normal equations.
    std::vector<double> s = r; // residual r - B y
    if (m > 0) {
        const SparseMatrix Bt = k.B.transpose();
        std::vector<double> t(m), p(m), q(n);
        Bt.multiply(s.data(), t.data());
        p = t;
        double gamma = 0.0;
        for (double v : t) gamma += v * v;
        const double stop = 1e-13 * std::sqrt(gamma);
        const int maxit = 4 * m + 100;
        for (int it = 0; it < maxit && std::sqrt(gamma) > stop; ++it) {
            k.B.multiply(p.data(), q.data());
            double qq = 0.0;
            for (double v : q) qq += v * v;
            if (qq == 0.0) break;
            const double alpha = gamma / qq;
            for (int i = 0; i < n; ++i) s[i] -= alpha * q[i];
            Bt.multiply(s.data(), t.data());
            double gamma_next = 0.0;
            for (double v : t) gamma_next += v * v;
            const double beta = gamma_next / gamma;
            for (int i = 0; i < m; ++i) p[i] = t[i] + beta * p[i];
            gamma = gamma_next;
        }
    }

    DivergenceFreeData out;
    out.x_true.assign(n + m, 0.0);
    for (int i = 0; i < n; ++i) out.x_true[i] = s[i];
    double mean = 0.0;
    for (int i = 0; i < m; ++i) {
        out.x_true[n + i] = rng.uniform(-1.0, 1.0);
        mean += out.x_true[n + i];
    }
    if (m > 0) {
        mean /= m;
        for (int i = 0; i < m; ++i) out.x_true[n + i] -= mean;
    }
    out.b = consistent_rhs(k, out.x_true);
    return out;
}

} // namespace fmat
