#include "fmat/factor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "fmat/error.hpp"
#include "fmat/matrix_market.hpp"

namespace fmat {

namespace {

// Mutable square working matrix over a subset of the system variables, with a
// symmetric pattern (mirror slots hold stored zeros when values differ) so row
// nonzeros double as column structure.
class Workspace {
public:
    std::vector<int> global;   // local -> global id
    std::vector<char> pressure;
    std::vector<char> scope;
    std::vector<char> alive;
    std::vector<std::vector<std::pair<int, double>>> row;

    int size() const { return static_cast<int>(global.size()); }

    double get(int r, int c) const {
        const auto& rr = row[r];
        const auto it = std::lower_bound(rr.begin(), rr.end(), c,
                                         [](const auto& e, int col) { return e.first < col; });
        return it != rr.end() && it->first == c ? it->second : 0.0;
    }

    void ensure(int r, int c) {
        auto& rr = row[r];
        const auto it = std::lower_bound(rr.begin(), rr.end(), c,
                                         [](const auto& e, int col) { return e.first < col; });
        if (it == rr.end() || it->first != c) rr.insert(it, {c, 0.0});
    }

    void add(int r, int c, double delta) {
        auto& rr = row[r];
        const auto it = std::lower_bound(rr.begin(), rr.end(), c,
                                         [](const auto& e, int col) { return e.first < col; });
        if (it != rr.end() && it->first == c) {
            it->second += delta;
            return;
        }
        if (delta == 0.0) return;
        rr.insert(it, {c, delta});
        ensure(c, r);
    }

    void erase(int r, int c) {
        auto& rr = row[r];
        const auto it = std::lower_bound(rr.begin(), rr.end(), c,
                                         [](const auto& e, int col) { return e.first < col; });
        if (it != rr.end() && it->first == c) rr.erase(it);
    }
};

// Load the subset `vars` (sorted global ids) of the assembled system. With
// skip_boundary_block the entries between two out-of-scope variables are left
// out, so the harvested boundary block holds elimination contributions only.
Workspace load_workspace(const SparseMatrix& k, int nvel, const std::vector<int>& vars,
                         const std::vector<char>& scope_of, bool skip_boundary_block,
                         std::vector<int>& g2l) {
    Workspace w;
    const int nl = static_cast<int>(vars.size());
    w.global = vars;
    w.pressure.resize(nl);
    w.scope.resize(nl);
    w.alive.assign(nl, 1);
    w.row.resize(nl);
    for (int l = 0; l < nl; ++l) {
        g2l[vars[l]] = l;
        w.pressure[l] = vars[l] >= nvel;
        w.scope[l] = scope_of[vars[l]];
    }
    for (int l = 0; l < nl; ++l) {
        const int g = w.global[l];
        const auto cols = k.row_cols(g);
        const auto vals = k.row_values(g);
        for (std::size_t i = 0; i < cols.size(); ++i) {
            const int lc = g2l[cols[i]];
            if (lc < 0) continue;
            if (skip_boundary_block && !w.scope[l] && !w.scope[lc]) continue;
            if (w.pressure[l] != w.pressure[lc] && std::abs(vals[i]) <= kCouplingVanishTol)
                continue; // vanished coupling
            w.row[l].push_back({lc, vals[i]});
        }
    }
    for (int l = 0; l < nl; ++l)
        for (const auto& [c, v] : std::vector<std::pair<int, double>>(w.row[l])) {
            (void)v;
            w.ensure(c, l);
        }
    return w;
}

struct EngineResult {
    std::vector<EliminationStep> steps;
    std::vector<PivotStep> log; // global ids
    std::int64_t fill_entries = 0;
};

struct Candidate {
    int col;
    double kvs, kps; // pivot-row values K(v,s), K(p,s)
    double kvr, kpr; // pivot-column values K(r,v), K(r,p)
};

// Lowest-index pressure the velocity still couples to, or -1. Pairing must
// stay inside the scope; the legality of a single pivot must not (a coupling
// to a kept pressure fills the zero block just the same).
int coupled_pressure(const Workspace& w, int lv, bool scope_only = false) {
    for (const auto& [c, val] : w.row[lv])
        if (w.pressure[c] && w.alive[c] && (!scope_only || w.scope[c]) &&
            std::abs(val) > kCouplingVanishTol)
            return c;
    return -1;
}

EliminationStep do_pivot(Workspace& w, int lv, int lp, std::int64_t& fill_entries) {
    const double alpha = w.get(lv, lv);
    const double beta = lp >= 0 ? w.get(lv, lp) : 0.0;

    std::vector<Candidate> cands;
    {
        const auto& rv = w.row[lv];
        static const std::vector<std::pair<int, double>> kEmpty;
        const auto& rp = lp >= 0 ? w.row[lp] : kEmpty;
        std::size_t iv = 0, ip = 0;
        while (iv < rv.size() || ip < rp.size()) {
            int col;
            double kvs = 0.0, kps = 0.0;
            if (ip >= rp.size() || (iv < rv.size() && rv[iv].first <= rp[ip].first)) {
                col = rv[iv].first;
                kvs = rv[iv].second;
                ++iv;
                if (ip < rp.size() && rp[ip].first == col) {
                    kps = rp[ip].second;
                    ++ip;
                }
            } else {
                col = rp[ip].first;
                kps = rp[ip].second;
                ++ip;
            }
            if (col == lv || col == lp || !w.alive[col]) continue;
            cands.push_back({col, kvs, kps, 0.0, 0.0});
        }
    }
    for (auto& c : cands) {
        c.kvr = w.get(c.col, lv);
        c.kpr = lp >= 0 ? w.get(c.col, lp) : 0.0;
    }

    if (lp >= 0) {
        for (const auto& s : cands) {
            if (s.kvs == 0.0 && s.kps == 0.0) continue;
            const double t0 = s.kps / beta;
            const double t1 = s.kvs / beta - alpha * s.kps / (beta * beta);
            for (const auto& r : cands) {
                const double delta = r.kvr * t0 + r.kpr * t1;
                if (delta != 0.0) w.add(r.col, s.col, -delta);
            }
        }
    } else {
        for (const auto& s : cands) {
            if (s.kvs == 0.0) continue;
            const double t = s.kvs / alpha;
            for (const auto& r : cands)
                if (r.kvr != 0.0) w.add(r.col, s.col, -r.kvr * t);
        }
    }

    w.alive[lv] = 0;
    if (lp >= 0) w.alive[lp] = 0;
    for (const auto& c : cands) {
        w.erase(c.col, lv);
        if (lp >= 0) w.erase(c.col, lp);
    }
    w.row[lv].clear();
    if (lp >= 0) w.row[lp].clear();

    // Couplings that cancelled leave the pattern on both sides.
    for (const auto& c : cands) {
        if (w.pressure[c.col]) continue;
        auto& rr = w.row[c.col];
        for (std::size_t i = rr.size(); i-- > 0;) {
            if (!w.pressure[rr[i].first]) continue;
            if (std::abs(rr[i].second) <= kCouplingVanishTol) {
                w.erase(rr[i].first, c.col);
                rr.erase(rr.begin() + static_cast<std::ptrdiff_t>(i));
            }
        }
    }

    EliminationStep step;
    step.v = w.global[lv];
    step.p = lp >= 0 ? w.global[lp] : -1;
    step.alpha = alpha;
    step.beta = beta;
    fill_entries += lp >= 0 ? 4 : 1;
    for (const auto& c : cands) {
        if (c.kvr != 0.0 || c.kpr != 0.0) {
            step.lcol.push_back({w.global[c.col], c.kvr, c.kpr});
            fill_entries += (c.kvr != 0.0) + (c.kpr != 0.0);
        }
        if (c.kvs != 0.0 || c.kps != 0.0) {
            step.urow.push_back({w.global[c.col], c.kvs, c.kps});
            fill_entries += (c.kvs != 0.0) + (c.kps != 0.0);
        }
    }
    return step;
}

// Run the elimination over the workspace scope. With a replay log the pivot
// sequence is taken as given and validated; otherwise pairing follows the
// coupling state (plan mode).
EngineResult run_elimination(Workspace& w, const std::vector<int>& order_local,
                             const std::vector<int>* replay_pressure_local) {
    EngineResult res;
    res.steps.reserve(order_local.size());
    for (std::size_t i = 0; i < order_local.size(); ++i) {
        const int lv = order_local[i];
        if (!w.alive[lv] || !w.scope[lv])
            throw Error("eliminate: pivot velocity repeated or out of scope");
        int lp;
        if (replay_pressure_local) {
            lp = (*replay_pressure_local)[i];
            if (lp < 0) {
                if (coupled_pressure(w, lv) >= 0)
                    throw Error("eliminate: step " + std::to_string(i) +
                                ": single pivot on a pressure-coupled velocity would create a "
                                "nonzero in the zero block");
            } else {
                if (!w.alive[lp] || !w.scope[lp])
                    throw Error("eliminate: pivot pressure repeated or out of scope");
                if (std::abs(w.get(lv, lp)) <= kCouplingVanishTol)
                    throw Error("eliminate: step " + std::to_string(i) +
                                ": zero 2x2 pivot determinant");
            }
        } else {
            lp = coupled_pressure(w, lv, true);
            if (lp < 0 && coupled_pressure(w, lv) >= 0)
                throw Error("eliminate: velocity node " + std::to_string(w.global[lv]) +
                            " couples a kept pressure and cannot pivot alone");
        }
        if (lp < 0 && w.get(lv, lv) == 0.0)
            throw Error("eliminate: step " + std::to_string(i) + ": zero pivot");
        res.log.push_back({w.global[lv], lp >= 0 ? w.global[lp] : -1});
        res.steps.push_back(do_pivot(w, lv, lp, res.fill_entries));
    }
    for (int l = 0; l < w.size(); ++l)
        if (w.alive[l] && w.scope[l] && w.pressure[l])
            throw Error("eliminate: pressure node " + std::to_string(w.global[l]) +
                        " has no coupled velocity in scope (structurally singular)");
    return res;
}

// Fill-reducing order over the scope velocities on the union of the velocity
// coupling graph and the shared-pressure graph.
std::vector<int> scope_order(const SparseMatrix& a, const SparseMatrix& bt,
                             const std::vector<int>& scope_velocities,
                             const std::vector<int>& scope_pressures,
                             std::vector<int>& vmap) {
    const int ns = static_cast<int>(scope_velocities.size());
    for (int l = 0; l < ns; ++l) vmap[scope_velocities[l]] = l;
    std::vector<Triplet> ts;
    for (int l = 0; l < ns; ++l) {
        ts.push_back({l, l, 1.0});
        for (int c : a.row_cols(scope_velocities[l])) {
            const int lc = vmap[c];
            if (lc >= 0 && lc != l) {
                ts.push_back({l, lc, 1.0});
                ts.push_back({lc, l, 1.0});
            }
        }
    }
    for (int p : scope_pressures) {
        std::vector<int> clique;
        const auto cols = bt.row_cols(p);
        const auto vals = bt.row_values(p);
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (vmap[cols[i]] >= 0 && std::abs(vals[i]) > kCouplingVanishTol)
                clique.push_back(vmap[cols[i]]);
        for (std::size_t i = 0; i < clique.size(); ++i)
            for (std::size_t j = i + 1; j < clique.size(); ++j) {
                ts.push_back({clique[i], clique[j], 1.0});
                ts.push_back({clique[j], clique[i], 1.0});
            }
    }
    const auto g = SparseMatrix::from_triplets(ns, ns, std::move(ts));
    const auto order = min_degree_order(g);
    std::vector<int> out(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) out[i] = scope_velocities[order[i]];
    for (int v : scope_velocities) vmap[v] = -1;
    return out;
}

void split_scope(const SaddleSystem& k, const std::vector<int>& scope,
                 std::vector<int>& velocities, std::vector<int>& pressures,
                 std::vector<char>& scope_of) {
    const int n = k.n();
    scope_of.assign(k.size(), 0);
    for (int id : scope) {
        if (id < 0 || id >= k.size()) throw Error("plan_elimination: scope id out of range");
        if (scope_of[id]) throw Error("plan_elimination: duplicate variable in scope");
        scope_of[id] = 1;
        if (id < n)
            velocities.push_back(id);
        else
            pressures.push_back(id - n);
    }
    std::sort(velocities.begin(), velocities.end());
    std::sort(pressures.begin(), pressures.end());
}

} // namespace

EliminationPlan plan_elimination(const SaddleSystem& k, const std::vector<int>& scope) {
    std::vector<int> vel, pres;
    std::vector<char> scope_of;
    split_scope(k, scope, vel, pres, scope_of);

    const SparseMatrix bt = k.B.transpose();
    std::vector<int> vmap(k.n(), -1);
    const auto order = scope_order(k.A, bt, vel, pres, vmap);

    const SparseMatrix assembled = assemble(k);
    std::vector<int> all(k.size());
    std::iota(all.begin(), all.end(), 0);
    std::vector<int> g2l(k.size(), -1);
    Workspace w = load_workspace(assembled, k.n(), all, scope_of, false, g2l);
    const auto res = run_elimination(w, order, nullptr);

    EliminationPlan plan;
    plan.v_order = order;
    plan.pivot_log = res.log;
    return plan;
}

FactorState eliminate(const SaddleSystem& k, const EliminationPlan& plan) {
    if (plan.v_order.size() != plan.pivot_log.size())
        throw Error("eliminate: pivot log does not cover the velocity order");
    std::vector<int> scope;
    std::vector<int> pressures;
    for (std::size_t i = 0; i < plan.pivot_log.size(); ++i) {
        const auto& s = plan.pivot_log[i];
        if (s.v != plan.v_order[i]) throw Error("eliminate: pivot log disagrees with v_order");
        scope.push_back(s.v);
        if (s.p >= 0) {
            scope.push_back(s.p);
            pressures.push_back(s.p - k.n());
        }
    }
    std::vector<char> scope_of(k.size(), 0);
    for (int id : scope) {
        if (id < 0 || id >= k.size()) throw Error("eliminate: plan variable out of range");
        if (scope_of[id]) throw Error("eliminate: plan eliminates a variable twice");
        scope_of[id] = 1;
    }

    const SparseMatrix assembled = assemble(k);
    std::vector<int> all(k.size());
    std::iota(all.begin(), all.end(), 0);
    std::vector<int> g2l(k.size(), -1);
    Workspace w = load_workspace(assembled, k.n(), all, scope_of, false, g2l);

    std::vector<int> replay_p(plan.pivot_log.size());
    for (std::size_t i = 0; i < plan.pivot_log.size(); ++i)
        replay_p[i] = plan.pivot_log[i].p; // local == global here
    auto res = run_elimination(w, plan.v_order, &replay_p);

    FactorState f;
    f.symmetric = k.symmetric;
    f.subdomain_factors.push_back({0, std::move(res.steps)});
    f.fill.factor_entries = res.fill_entries;

    for (int id = 0; id < k.size(); ++id)
        if (!scope_of[id]) f.schur_vars.push_back(id);
    f.schur_velocity_count = static_cast<int>(
        std::count_if(f.schur_vars.begin(), f.schur_vars.end(),
                      [&](int id) { return id < k.n(); }));
    std::vector<int> s2l(k.size(), -1);
    for (std::size_t l = 0; l < f.schur_vars.size(); ++l)
        s2l[f.schur_vars[l]] = static_cast<int>(l);
    std::vector<Triplet> ts;
    for (int l = 0; l < w.size(); ++l) {
        if (!w.alive[l]) continue;
        for (const auto& [c, val] : w.row[l])
            if (val != 0.0) ts.push_back({s2l[w.global[l]], s2l[w.global[c]], val});
    }
    const int ns = static_cast<int>(f.schur_vars.size());
    f.schur = SparseMatrix::from_triplets(ns, ns, std::move(ts));
    f.fill.schur_entries = f.schur.nnz();
    return f;
}

FactorState eliminate_interiors(const SaddleSystem& k, const Decomposition& d) {
    if (static_cast<int>(d.kind.size()) != k.size() || d.velocity_count != k.n())
        throw Error("eliminate_interiors: decomposition does not match the system");
    const SparseMatrix assembled = assemble(k);
    const SparseMatrix bt = k.B.transpose();

    std::vector<std::vector<int>> tile_vars(d.num_subdomains);
    for (int id = 0; id < k.size(); ++id)
        if (d.kind[id] == VarKind::interior) tile_vars[d.subdomain_of[id]].push_back(id);

    FactorState f;
    f.symmetric = k.symmetric;
    f.schur_vars = d.schur_variables();
    f.schur_velocity_count = static_cast<int>(
        std::count_if(f.schur_vars.begin(), f.schur_vars.end(),
                      [&](int id) { return id < k.n(); }));
    std::vector<char> is_schur(k.size(), 0);
    for (int id : f.schur_vars) is_schur[id] = 1;

    std::vector<int> g2l(k.size(), -1);
    std::vector<int> vmap(k.n(), -1);
    std::vector<char> scope_of(k.size(), 0);
    std::vector<Triplet> acc;

    for (int t = 0; t < d.num_subdomains; ++t) {
        const auto& interior = tile_vars[t];
        std::vector<int> boundary;
        for (int id : interior)
            for (int c : assembled.row_cols(id))
                if (d.kind[c] != VarKind::interior || d.subdomain_of[c] != t) {
                    if (!is_schur[c])
                        throw Error("eliminate_interiors: subdomain " + std::to_string(t) +
                                    " couples to a foreign interior variable");
                    if (g2l[c] == -2) continue;
                    g2l[c] = -2;
                    boundary.push_back(c);
                }
        for (int id : boundary) g2l[id] = -1;
        std::vector<int> vars(interior.begin(), interior.end());
        vars.insert(vars.end(), boundary.begin(), boundary.end());
        std::sort(vars.begin(), vars.end());

        std::vector<int> vel, pres;
        for (int id : interior) {
            scope_of[id] = 1;
            if (id < k.n())
                vel.push_back(id);
            else
                pres.push_back(id - k.n());
        }
        std::sort(vel.begin(), vel.end());
        std::sort(pres.begin(), pres.end());
        const auto order = scope_order(k.A, bt, vel, pres, vmap);

        Workspace w = load_workspace(assembled, k.n(), vars, scope_of, true, g2l);
        std::vector<int> order_local(order.size());
        for (std::size_t i = 0; i < order.size(); ++i) order_local[i] = g2l[order[i]];
        EngineResult res;
        try {
            res = run_elimination(w, order_local, nullptr);
        } catch (const Error& e) {
            throw Error("subdomain " + std::to_string(t) + ": " + e.what());
        }
        f.fill.factor_entries += res.fill_entries;
        f.subdomain_factors.push_back({t, std::move(res.steps)});

        for (int l = 0; l < w.size(); ++l) {
            if (!w.alive[l]) continue;
            for (const auto& [c, val] : w.row[l])
                if (val != 0.0) acc.push_back({w.global[l], w.global[c], val});
        }

        for (int id : vars) g2l[id] = -1;
        for (int id : interior) scope_of[id] = 0;
    }

    // The untouched coupling block among the kept variables enters once.
    std::vector<int> s2l(k.size(), -1);
    for (std::size_t l = 0; l < f.schur_vars.size(); ++l)
        s2l[f.schur_vars[l]] = static_cast<int>(l);
    for (int id : f.schur_vars) {
        const auto cols = assembled.row_cols(id);
        const auto vals = assembled.row_values(id);
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (is_schur[cols[i]]) acc.push_back({id, cols[i], vals[i]});
    }
    for (auto& tr : acc) {
        tr.row = s2l[tr.row];
        tr.col = s2l[tr.col];
    }
    const int ns = static_cast<int>(f.schur_vars.size());
    f.schur = SparseMatrix::from_triplets(ns, ns, std::move(acc));
    f.fill.schur_entries = f.schur.nnz();
    return f;
}

SaddleSystem schur_as_saddle(const FactorState& f) {
    const int nv = f.schur_velocity_count;
    const int ns = f.schur.rows();
    std::vector<int> vset(nv), pset(ns - nv);
    std::iota(vset.begin(), vset.end(), 0);
    std::iota(pset.begin(), pset.end(), nv);
    for (int r = nv; r < ns; ++r)
        for (int c : f.schur.row_cols(r))
            if (c >= nv) throw Error("schur_as_saddle: pressure block is not empty");
    return make_saddle_system(f.schur.submatrix(vset, vset), f.schur.submatrix(vset, pset),
                              f.symmetric, false);
}

void forward_substitute(const FactorState& f, std::vector<double>& y) {
    for (const auto& sf : f.subdomain_factors)
        for (const auto& s : sf.steps) {
            double t0, t1 = 0.0;
            if (s.p >= 0) {
                const double zv = y[s.v], zp = y[s.p];
                t0 = zp / s.beta;
                t1 = zv / s.beta - s.alpha * zp / (s.beta * s.beta);
            } else {
                t0 = y[s.v] / s.alpha;
            }
            for (const auto& e : s.lcol) y[e.id] -= e.kv * t0 + e.kp * t1;
        }
}

void back_substitute(const FactorState& f, std::vector<double>& y) {
    for (auto sf = f.subdomain_factors.rbegin(); sf != f.subdomain_factors.rend(); ++sf)
        for (auto s = sf->steps.rbegin(); s != sf->steps.rend(); ++s) {
            double s0 = y[s->v];
            double s1 = s->p >= 0 ? y[s->p] : 0.0;
            for (const auto& e : s->urow) {
                s0 -= e.kv * y[e.id];
                s1 -= e.kp * y[e.id];
            }
            if (s->p >= 0) {
                y[s->v] = s1 / s->beta;
                y[s->p] = s0 / s->beta - s->alpha * s1 / (s->beta * s->beta);
            } else {
                y[s->v] = s0 / s->alpha;
            }
        }
}

std::vector<double> direct_solve(const SaddleSystem& k, const std::vector<double>& b) {
    if (static_cast<int>(b.size()) != k.size())
        throw Error("direct_solve: right-hand side size mismatch");
    const bool singular = k.m() > 0 && validate_gradient_matrix(k.B).is_gradient;
    const int ground = k.size() - 1;

    std::vector<int> scope;
    for (int id = 0; id < k.size(); ++id)
        if (!singular || id != ground) scope.push_back(id);
    const auto plan = plan_elimination(k, scope);
    const auto f = eliminate(k, plan);

    std::vector<double> y = b;
    forward_substitute(f, y);
    if (singular) {
        double nb = 0.0;
        for (double v : b) nb += v * v;
        if (std::abs(y[ground]) > 1e-8 * std::sqrt(nb))
            throw Error("direct_solve: incompatible right-hand side for singular system");
        y[ground] = 0.0;
    }
    back_substitute(f, y);
    if (singular) {
        double mean = 0.0;
        for (int i = k.n(); i < k.size(); ++i) mean += y[i];
        mean /= k.m();
        for (int i = k.n(); i < k.size(); ++i) y[i] -= mean;
    }
    return y;
}

std::string dump_pivot_log(const EliminationPlan& plan) {
    std::string out;
    char buf[64];
    for (std::size_t i = 0; i < plan.pivot_log.size(); ++i) {
        const auto& s = plan.pivot_log[i];
        if (s.p >= 0)
            std::snprintf(buf, sizeof buf, "step %zu: v %d p %d\n", i, s.v, s.p);
        else
            std::snprintf(buf, sizeof buf, "step %zu: v %d single\n", i, s.v);
        out += buf;
    }
    return out;
}

void export_schur(const FactorState& f, const std::string& path) {
    write_matrix_market(path, f.schur, MatrixMarketSymmetry::general);
}

} // namespace fmat
