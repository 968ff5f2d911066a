#include <algorithm>
#include <cmath>
#include <string>

#include "fmat/decomp.hpp"
#include "fmat/error.hpp"
#include "fmat/factor.hpp"
#include "fmat/krylov.hpp"
#include "fmat/precond.hpp"
#include "fmat/problems.hpp"
#include "fmat/saddle.hpp"
#include "fmat/transform.hpp"

namespace fmat {

namespace {

constexpr double kLidSpeed = 1.0;
constexpr double kMeshRatio = 5.0;

std::vector<double> face_coordinates_for(int nx, double a) {
    std::vector<double> x(nx + 1);
    const double t = std::tanh(a);
    for (int k = 0; k <= nx; ++k)
        x[k] = 0.5 * (1.0 + std::tanh(a * (2.0 * k / nx - 1.0)) / t);
    x[0] = 0.0;
    x[nx] = 1.0;
    return x;
}

double mesh_ratio(const std::vector<double>& x) {
    double hmin = 1.0, hmax = 0.0;
    for (std::size_t k = 1; k < x.size(); ++k) {
        const double h = x[k] - x[k - 1];
        hmin = std::min(hmin, h);
        hmax = std::max(hmax, h);
    }
    return hmax / hmin;
}

// Geometry shared by both axes: the stretching is symmetric and the domain is
// square, so one set of widths serves x and y.
struct Geometry {
    int nx = 0;
    StaggeredLayout layout;
    std::vector<double> x;  // face coordinates, 0..nx
    std::vector<double> h;  // cell widths, 1-based
    std::vector<double> dc; // cell center distances, dc[k] spans centers k, k+1
};

Geometry make_geometry(int nx) {
    Geometry g;
    g.nx = nx;
    g.layout = StaggeredLayout::square(2, nx);
    g.x = cavity_face_coordinates(nx);
    g.h.assign(nx + 1, 0.0);
    for (int k = 1; k <= nx; ++k) g.h[k] = g.x[k] - g.x[k - 1];
    g.dc.assign(nx, 0.0);
    for (int k = 1; k < nx; ++k) g.dc[k] = 0.5 * (g.h[k] + g.h[k + 1]);
    return g;
}

struct Assembly {
    std::vector<Triplet>* a = nullptr; // natural-velocity Jacobian entries
    std::vector<double>* residual = nullptr;
    const std::vector<double>* state = nullptr; // flux unknowns, full length
    double re = 0.0;
};

// One pass builds whichever outputs are requested. Velocity entries are in
// natural (point value) form; the flux congruence is applied by the caller.
void walk_momentum(const Geometry& g, Assembly& out) {
    const int nx = g.nx;
    const StaggeredLayout& L = g.layout;
    const double inv_re = 1.0 / out.re;
    const auto& X = *out.state;

    auto uid = [&](int i, int j) { return L.velocity_id(0, {i, j, 1}); };
    auto vid = [&](int i, int j) { return L.velocity_id(1, {i, j, 1}); };
    auto uflux = [&](int i, int j) -> double {
        return (i >= 1 && i <= nx - 1 && j >= 1 && j <= nx) ? X[uid(i, j)] : 0.0;
    };
    auto vflux = [&](int i, int j) -> double {
        return (i >= 1 && i <= nx && j >= 1 && j <= nx - 1) ? X[vid(i, j)] : 0.0;
    };
    auto unat = [&](int i, int j) -> double { return uflux(i, j) / g.h[j]; };
    auto vnat = [&](int i, int j) -> double { return vflux(i, j) / g.h[i]; };

    auto add = [&](int row, int col, double value) {
        if (out.a) out.a->push_back({row, col, value});
    };

    // u momentum: control volume [xc_i, xc_{i+1}] x [y_{j-1}, y_j]
    for (int i = 1; i <= nx - 1; ++i) {
        for (int j = 1; j <= nx; ++j) {
            const int row = uid(i, j);
            const double wx = g.dc[i]; // horizontal extent
            double diag = 0.0, res = 0.0, bc = 0.0;

            // viscous fluxes
            {
                const double ce = g.h[j] / g.h[i + 1];
                const double cw = g.h[j] / g.h[i];
                diag += ce + cw;
                if (i + 1 <= nx - 1) {
                    add(row, uid(i + 1, j), -inv_re * ce);
                    res -= inv_re * ce * unat(i + 1, j);
                }
                if (i - 1 >= 1) {
                    add(row, uid(i - 1, j), -inv_re * cw);
                    res -= inv_re * cw * unat(i - 1, j);
                }
                const double cn = j < nx ? wx / g.dc[j] : 2.0 * wx / g.h[nx];
                const double cs = j > 1 ? wx / g.dc[j - 1] : 2.0 * wx / g.h[1];
                diag += cn + cs;
                if (j < nx) {
                    add(row, uid(i, j + 1), -inv_re * cn);
                    res -= inv_re * cn * unat(i, j + 1);
                } else {
                    bc += cn * kLidSpeed; // lid drives the top row
                }
                if (j > 1) {
                    add(row, uid(i, j - 1), -inv_re * cs);
                    res -= inv_re * cs * unat(i, j - 1);
                }
                add(row, row, inv_re * diag);
                res += inv_re * (diag * unat(i, j) - bc);
                if (out.residual) (*out.residual)[row] += res;
            }

            // convective fluxes through the control volume faces
            const double fe = 0.5 * (uflux(i, j) + uflux(i + 1, j));
            const double fw = 0.5 * (uflux(i - 1, j) + uflux(i, j));
            const double fn = j < nx ? 0.5 * (vflux(i, j) + vflux(i + 1, j)) : 0.0;
            const double fs = j > 1 ? 0.5 * (vflux(i, j - 1) + vflux(i + 1, j - 1)) : 0.0;
            const double ue = 0.5 * (unat(i, j) + unat(i + 1, j));
            const double uw = 0.5 * (unat(i - 1, j) + unat(i, j));
            const double un = j < nx ? 0.5 * (unat(i, j) + unat(i, j + 1)) : 0.0;
            const double us = j > 1 ? 0.5 * (unat(i, j - 1) + unat(i, j)) : 0.0;
            if (out.residual) (*out.residual)[row] += fe * ue - fw * uw + fn * un - fs * us;
            if (out.a) {
                // transported-value linearization
                add(row, row, 0.5 * (fe - fw + fn - fs));
                if (i + 1 <= nx - 1) add(row, uid(i + 1, j), 0.5 * fe);
                if (i - 1 >= 1) add(row, uid(i - 1, j), -0.5 * fw);
                if (j < nx) add(row, uid(i, j + 1), 0.5 * fn);
                if (j > 1) add(row, uid(i, j - 1), -0.5 * fs);
                // flux linearization; d(flux)/d(natural value) is the face width
                add(row, row, 0.5 * g.h[j] * (ue - uw));
                if (i + 1 <= nx - 1) add(row, uid(i + 1, j), 0.5 * g.h[j] * ue);
                if (i - 1 >= 1) add(row, uid(i - 1, j), -0.5 * g.h[j] * uw);
                if (j < nx) {
                    add(row, vid(i, j), 0.5 * g.h[i] * un);
                    add(row, vid(i + 1, j), 0.5 * g.h[i + 1] * un);
                }
                if (j > 1) {
                    add(row, vid(i, j - 1), -0.5 * g.h[i] * us);
                    add(row, vid(i + 1, j - 1), -0.5 * g.h[i + 1] * us);
                }
            }
        }
    }

    // v momentum: control volume [x_{i-1}, x_i] x [yc_j, yc_{j+1}]
    for (int i = 1; i <= nx; ++i) {
        for (int j = 1; j <= nx - 1; ++j) {
            const int row = vid(i, j);
            const double wy = g.dc[j];
            double diag = 0.0, res = 0.0;

            {
                const double cn = g.h[i] / g.h[j + 1];
                const double cs = g.h[i] / g.h[j];
                diag += cn + cs;
                if (j + 1 <= nx - 1) {
                    add(row, vid(i, j + 1), -inv_re * cn);
                    res -= inv_re * cn * vnat(i, j + 1);
                }
                if (j - 1 >= 1) {
                    add(row, vid(i, j - 1), -inv_re * cs);
                    res -= inv_re * cs * vnat(i, j - 1);
                }
                const double ce = i < nx ? wy / g.dc[i] : 2.0 * wy / g.h[nx];
                const double cw = i > 1 ? wy / g.dc[i - 1] : 2.0 * wy / g.h[1];
                diag += ce + cw;
                if (i < nx) {
                    add(row, vid(i + 1, j), -inv_re * ce);
                    res -= inv_re * ce * vnat(i + 1, j);
                }
                if (i > 1) {
                    add(row, vid(i - 1, j), -inv_re * cw);
                    res -= inv_re * cw * vnat(i - 1, j);
                }
                add(row, row, inv_re * diag);
                res += inv_re * diag * vnat(i, j);
                if (out.residual) (*out.residual)[row] += res;
            }

            const double fe = i < nx ? 0.5 * (uflux(i, j) + uflux(i, j + 1)) : 0.0;
            const double fw = i > 1 ? 0.5 * (uflux(i - 1, j) + uflux(i - 1, j + 1)) : 0.0;
            const double fn = 0.5 * (vflux(i, j) + vflux(i, j + 1));
            const double fs = 0.5 * (vflux(i, j - 1) + vflux(i, j));
            const double ve = i < nx ? 0.5 * (vnat(i, j) + vnat(i + 1, j)) : 0.0;
            const double vw = i > 1 ? 0.5 * (vnat(i - 1, j) + vnat(i, j)) : 0.0;
            const double vn = 0.5 * (vnat(i, j) + vnat(i, j + 1));
            const double vs = 0.5 * (vnat(i, j - 1) + vnat(i, j));
            if (out.residual) (*out.residual)[row] += fe * ve - fw * vw + fn * vn - fs * vs;
            if (out.a) {
                add(row, row, 0.5 * (fe - fw + fn - fs));
                if (i < nx) add(row, vid(i + 1, j), 0.5 * fe);
                if (i > 1) add(row, vid(i - 1, j), -0.5 * fw);
                if (j + 1 <= nx - 1) add(row, vid(i, j + 1), 0.5 * fn);
                if (j - 1 >= 1) add(row, vid(i, j - 1), -0.5 * fs);
                add(row, row, 0.5 * g.h[i] * (vn - vs));
                if (j + 1 <= nx - 1) add(row, vid(i, j + 1), 0.5 * g.h[i] * vn);
                if (j - 1 >= 1) add(row, vid(i, j - 1), -0.5 * g.h[i] * vs);
                if (i < nx) {
                    add(row, uid(i, j), 0.5 * g.h[j] * ve);
                    add(row, uid(i, j + 1), 0.5 * g.h[j + 1] * ve);
                }
                if (i > 1) {
                    add(row, uid(i - 1, j), -0.5 * g.h[j] * vw);
                    add(row, uid(i - 1, j + 1), -0.5 * g.h[j + 1] * vw);
                }
            }
        }
    }
}

// Flux scaling: velocity r carries 1/(its face width).
std::vector<double> flux_scaling(const Geometry& g) {
    const StaggeredLayout& L = g.layout;
    std::vector<double> d(L.num_velocities(), 0.0);
    std::array<int, 3> pos{};
    int comp;
    for (int id = 0; id < L.num_velocities(); ++id) {
        L.locate(id, comp, pos);
        d[id] = 1.0 / g.h[comp == 0 ? pos[1] : pos[0]];
    }
    return d;
}

SparseMatrix flux_gradient(const Geometry& g) {
    const StaggeredLayout& L = g.layout;
    const int nvel = L.num_velocities();
    std::vector<Triplet> ts;
    ts.reserve(static_cast<std::size_t>(2 * nvel));
    std::array<int, 3> pos{};
    int comp;
    for (int vid = 0; vid < nvel; ++vid) {
        L.locate(vid, comp, pos);
        auto upper = pos;
        upper[comp] += 1;
        ts.push_back({vid, L.pressure_id(pos) - nvel, 1.0});
        ts.push_back({vid, L.pressure_id(upper) - nvel, -1.0});
    }
    return SparseMatrix::from_triplets(nvel, L.num_pressures(), std::move(ts));
}

void check_state(const Geometry& g, const CavityState& state) {
    if (state.nx != g.nx || static_cast<int>(state.x.size()) != g.layout.total())
        throw Error("cavity: state does not match the grid");
}

int pick_subdomain_size(int nx) {
    for (int s : {8, 4, 2}) {
        if (nx % s == 0 && nx / s >= 2) return s;
    }
    return 0;
}

// One linearized solve with the two-level method; falls back to the direct
// factorization when the grid cannot be decomposed.
std::vector<double> solve_linearized(const Geometry& g, const SaddleSystem& sys,
                                     const std::vector<double>& rhs) {
    const int sx = pick_subdomain_size(g.nx);
    if (sx == 0) return direct_solve(sys, rhs);
    const GridSpec grid{2, g.nx, sx, GridKind::staggered};
    Decomposition d = decompose(grid, sys);
    FactorState f = eliminate_interiors(sys, d);
    TransformedSchur t = transform_schur(f.schur, d, build_group_transforms(d));
    Preconditioner m = Preconditioner::build(t, d, false);

    std::vector<double> y = rhs;
    forward_substitute(f, y);
    const auto vars = d.schur_variables();
    std::vector<double> r(vars.size());
    for (std::size_t i = 0; i < vars.size(); ++i) r[i] = y[vars[i]];

    KrylovOptions opt;
    opt.tol = 1e-10;
    opt.max_iter = 2000;
    KrylovResult res = gmres(t.matrix, m, t.to_transformed(r), opt);
    if (!res.converged) throw Error("cavity: inner linear solve did not converge");

    const std::vector<double> z = t.from_transformed(res.x);
    std::vector<double> full = rhs;
    forward_substitute(f, full);
    for (std::size_t i = 0; i < vars.size(); ++i) full[vars[i]] = z[i];
    back_substitute(f, full);
    return full;
}

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace

std::vector<double> cavity_face_coordinates(int nx) {
    if (nx < 4) throw Error("cavity: nx must be at least 4");
    if (nx % 2 != 0) throw Error("cavity: nx must be even");
    double lo = 0.05, hi = 5.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mesh_ratio(face_coordinates_for(nx, mid)) < kMeshRatio ? lo : hi) = mid;
    }
    return face_coordinates_for(nx, 0.5 * (lo + hi));
}

CavityState zero_cavity_state(int nx) {
    CavityState s;
    s.nx = nx;
    s.x.assign(StaggeredLayout::square(2, nx).total(), 0.0);
    return s;
}

std::vector<double> cavity_residual(int nx, double re, const CavityState& state) {
    if (re <= 0.0) throw Error("cavity: re must be positive");
    const Geometry g = make_geometry(nx);
    check_state(g, state);
    const int nvel = g.layout.num_velocities();

    std::vector<double> r(g.layout.total(), 0.0);
    Assembly out;
    out.residual = &r;
    out.state = &state.x;
    out.re = re;
    walk_momentum(g, out);

    // momentum rows: add the pressure term, then scale to flux form
    const std::vector<double> d = flux_scaling(g);
    const SparseMatrix b = flux_gradient(g);
    for (int row = 0; row < nvel; ++row) {
        double pterm = 0.0;
        const auto cols = b.row_cols(row);
        const auto vals = b.row_values(row);
        for (std::size_t k = 0; k < cols.size(); ++k)
            pterm += vals[k] * state.x[nvel + cols[k]];
        r[row] = r[row] * d[row] + pterm;
    }
    // continuity rows: signed sums of the face fluxes
    std::vector<double> div(g.layout.num_pressures(), 0.0);
    for (int row = 0; row < nvel; ++row) {
        const auto cols = b.row_cols(row);
        const auto vals = b.row_values(row);
        for (std::size_t k = 0; k < cols.size(); ++k)
            div[cols[k]] += vals[k] * state.x[row];
    }
    for (int p = 0; p < g.layout.num_pressures(); ++p) r[nvel + p] = div[p];
    return r;
}

SaddleSystem gen_cavity_jacobian(int nx, double re, const CavityState& state) {
    if (re <= 0.0) throw Error("cavity: re must be positive");
    const Geometry g = make_geometry(nx);
    check_state(g, state);
    const int nvel = g.layout.num_velocities();

    std::vector<Triplet> ts;
    ts.reserve(static_cast<std::size_t>(nvel) * 10);
    Assembly out;
    out.a = &ts;
    out.state = &state.x;
    out.re = re;
    walk_momentum(g, out);

    const std::vector<double> d = flux_scaling(g);
    for (auto& t : ts) t.value *= d[t.row] * d[t.col];
    // At rest the velocity block is the viscous operator, which is symmetric
    // and diagonally dominant; with a moving state nothing is certified.
    const bool at_rest =
        std::all_of(state.x.begin(), state.x.end(), [](double v) { return v == 0.0; });
    return make_saddle_system(SparseMatrix::from_triplets(nvel, nvel, std::move(ts)),
                              flux_gradient(g), false, at_rest);
}

CavityState continue_to_re(int nx, const std::vector<double>& re_schedule) {
    for (std::size_t i = 1; i < re_schedule.size(); ++i)
        if (re_schedule[i] <= re_schedule[i - 1])
            throw Error("cavity: the schedule must be increasing");

    CavityState state = zero_cavity_state(nx);
    for (double re : re_schedule) {
        double first = -1.0;
        bool done = false;
        for (int it = 0; it < 30; ++it) {
            std::vector<double> r = cavity_residual(nx, re, state);
            const double nr = norm2(r);
            if (first < 0.0) first = nr;
            state.last_residual = nr;
            if (nr <= 1e-8 * first || nr <= 1e-14) {
                done = true;
                break;
            }
            SaddleSystem j = gen_cavity_jacobian(nx, re, state);
            for (double& v : r) v = -v;
            const std::vector<double> delta = solve_linearized(make_geometry(nx), j, r);

            // backtrack if the full step grows the residual
            double step = 1.0;
            std::vector<double> trial = state.x;
            for (int half = 0; half < 6; ++half) {
                for (std::size_t k = 0; k < trial.size(); ++k)
                    trial[k] = state.x[k] + step * delta[k];
                CavityState probe = state;
                probe.x = trial;
                if (norm2(cavity_residual(nx, re, probe)) < nr) break;
                step *= 0.5;
            }
            for (std::size_t k = 0; k < state.x.size(); ++k) state.x[k] += step * delta[k];
            ++state.total_newton_iterations;
        }
        if (!done)
            throw Error("cavity: newton did not converge at re " + std::to_string(re) +
                        " (last converged re " + std::to_string(state.reached_re) + ")");
        state.reached_re = re;
    }
    return state;
}

} // namespace fmat
