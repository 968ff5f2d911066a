#include "fmat/krylov.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "fmat/error.hpp"
#include "fmat/spectral.hpp"

namespace fmat {

namespace {

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double norm2_tail(const std::vector<double>& v, int from) {
    double s = 0.0;
    for (std::size_t i = from; i < v.size(); ++i) s += v[i] * v[i];
    return std::sqrt(s);
}

struct CgTrace {
    std::vector<double> alpha;
    std::vector<double> beta; // beta_j links step j to j+1; beta.size() == alpha.size()-1
};

// Conjugate gradient core. svc >= 0 runs the constrained variant: the pressure
// residual is pinned to zero every step and the constraint drift of the
// iterate is tracked through the pressure rows of the operator.
KrylovResult cg_engine(const LinearOp& a, const LinearOp& m, int n,
                       const std::vector<double>& b, const KrylovOptions& opt, int svc,
                       CgTrace* trace) {
    KrylovResult res;
    res.x.assign(n, 0.0);
    const double nb = norm2(b);
    if (nb == 0.0) {
        res.converged = true;
        res.residual_history = {0.0};
        return res;
    }
    const bool constrained = svc >= 0;

    std::vector<double> r = b, z(n), p(n), q(n);
    std::vector<double> cx(constrained ? n - svc : 0, 0.0);
    if (constrained) {
        const double nbp = norm2_tail(b, svc);
        if (nbp > 1e-12 * nb) {
            // particular solution satisfying the constraint rows
            m(b.data(), res.x.data());
            a(res.x.data(), q.data());
            for (int i = 0; i < n; ++i) r[i] = b[i] - q[i];
        }
        std::fill(r.begin() + svc, r.end(), 0.0);
    }

    double rel = norm2(r) / nb;
    res.residual_history.push_back(rel);
    if (rel <= opt.tol) {
        res.converged = true;
        return res;
    }

    double rho_prev = 0.0;
    for (int it = 1; it <= opt.max_iter; ++it) {
        m(r.data(), z.data());
        double rho = 0.0;
        for (int i = 0; i < n; ++i) rho += r[i] * z[i];
        if (!(rho > 0.0))
            throw Error("pcg: preconditioner produced a non-positive inner product at iteration " +
                        std::to_string(it));
        if (it == 1) {
            p = z;
        } else {
            const double beta = rho / rho_prev;
            if (trace) trace->beta.push_back(beta);
            for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
        }
        a(p.data(), q.data());
        double pq = 0.0;
        for (int i = 0; i < n; ++i) pq += p[i] * q[i];
        if (!(pq > 0.0))
            throw Error("pcg: non-positive curvature at iteration " + std::to_string(it));
        const double alpha = rho / pq;
        if (trace) trace->alpha.push_back(alpha);
        for (int i = 0; i < n; ++i) res.x[i] += alpha * p[i];
        for (int i = 0; i < n; ++i) r[i] -= alpha * q[i];
        if (constrained) {
            for (int i = svc; i < n; ++i) cx[i - svc] += alpha * q[i];
            std::fill(r.begin() + svc, r.end(), 0.0);
            const double nx = norm2(res.x);
            if (nx > 0.0) {
                double ncx = 0.0;
                for (double v : cx) ncx += v * v;
                res.constraint_drift = std::max(res.constraint_drift, std::sqrt(ncx) / nx);
            }
        }
        rel = norm2(r) / nb;
        res.residual_history.push_back(rel);
        res.iterations = it;
        if (rel <= opt.tol) {
            res.converged = true;
            break;
        }
        rho_prev = rho;
    }
    return res;
}

} // namespace

KrylovResult pcg(const LinearOp& a, const LinearOp& m, int n, const std::vector<double>& b,
                 const KrylovOptions& opt) {
    return cg_engine(a, m, n, b, opt, -1, nullptr);
}

KrylovResult pcg(const SparseMatrix& a, const Preconditioner& m, const std::vector<double>& b,
                 const KrylovOptions& opt) {
    return cg_engine([&](const double* x, double* y) { a.multiply(x, y); },
                     [&](const double* r, double* z) { m.apply(r, z); },
                     a.rows(), b, opt, -1, nullptr);
}

KrylovResult ppcg(const SparseMatrix& s, const Preconditioner& m, const std::vector<double>& b,
                  const KrylovOptions& opt) {
    return cg_engine([&](const double* x, double* y) { s.multiply(x, y); },
                     [&](const double* r, double* z) { m.apply(r, z); },
                     s.rows(), b, opt, m.velocity_count(), nullptr);
}

namespace {

KrylovResult gmres_engine(const LinearOp& a, const LinearOp& m, int n,
                          const std::vector<double>& b, const KrylovOptions& opt) {
    KrylovResult res;
    res.x.assign(n, 0.0);
    const double nb = norm2(b);
    if (nb == 0.0) {
        res.converged = true;
        res.residual_history = {0.0};
        return res;
    }
    const int cycle = opt.restart > 0 ? opt.restart : opt.max_iter;
    std::vector<double> r = b;

    std::vector<std::vector<double>> v;
    std::vector<std::vector<double>> h;
    std::vector<double> cs, sn, g;
    std::vector<double> w(n), zt(n);

    res.residual_history.push_back(1.0);
    while (res.iterations < opt.max_iter) {
        const double beta = norm2(r);
        if (beta / nb <= opt.tol) {
            res.converged = true;
            break;
        }
        v.assign(1, r);
        for (double& x : v[0]) x /= beta;
        h.clear();
        cs.clear();
        sn.clear();
        g.assign(1, beta);
        int j = 0;
        for (; j < cycle && res.iterations < opt.max_iter; ++j) {
            m(v[j].data(), zt.data());
            a(zt.data(), w.data());
            h.emplace_back(j + 2, 0.0);
            for (int i = 0; i <= j; ++i) {
                double dot = 0.0;
                for (int l = 0; l < n; ++l) dot += w[l] * v[i][l];
                h[j][i] = dot;
                for (int l = 0; l < n; ++l) w[l] -= dot * v[i][l];
            }
            const double hnext = norm2(w);
            h[j][j + 1] = hnext;
            for (int i = 0; i < j; ++i) {
                const double t = cs[i] * h[j][i] + sn[i] * h[j][i + 1];
                h[j][i + 1] = -sn[i] * h[j][i] + cs[i] * h[j][i + 1];
                h[j][i] = t;
            }
            const double denom = std::hypot(h[j][j], h[j][j + 1]);
            if (denom == 0.0) throw Error("gmres: breakdown, zero subdiagonal");
            cs.push_back(h[j][j] / denom);
            sn.push_back(h[j][j + 1] / denom);
            h[j][j] = denom;
            h[j][j + 1] = 0.0;
            g.push_back(-sn[j] * g[j]);
            g[j] *= cs[j];

            ++res.iterations;
            const double rel = std::abs(g[j + 1]) / nb;
            res.residual_history.push_back(rel);
            if (hnext > 0.0) {
                v.push_back(w);
                for (double& x : v.back()) x /= hnext;
            }
            const std::size_t hist = res.residual_history.size();
            if (hist > 50 &&
                res.residual_history[hist - 1] > 0.999 * res.residual_history[hist - 51])
                throw Error("gmres: stagnation, residual reduced by less than 0.1% over 50 "
                            "iterations");
            if (rel <= opt.tol || hnext == 0.0) {
                ++j;
                break;
            }
        }
        // assemble the cycle's correction
        std::vector<double> y(j, 0.0);
        for (int i = j - 1; i >= 0; --i) {
            double s = g[i];
            for (int l = i + 1; l < j; ++l) s -= h[l][i] * y[l];
            y[i] = s / h[i][i];
        }
        std::fill(w.begin(), w.end(), 0.0);
        for (int i = 0; i < j; ++i)
            for (int l = 0; l < n; ++l) w[l] += y[i] * v[i][l];
        m(w.data(), zt.data());
        for (int l = 0; l < n; ++l) res.x[l] += zt[l];
        a(res.x.data(), w.data());
        for (int l = 0; l < n; ++l) r[l] = b[l] - w[l];
        if (res.residual_history.back() <= opt.tol) {
            res.converged = true;
            break;
        }
    }
    if (!res.converged && norm2(r) / nb <= opt.tol) res.converged = true;
    return res;
}

} // namespace

KrylovResult gmres(const LinearOp& a, const LinearOp& m, int n, const std::vector<double>& b,
                   const KrylovOptions& opt) {
    return gmres_engine(a, m, n, b, opt);
}

KrylovResult gmres(const SparseMatrix& a, const Preconditioner& m, const std::vector<double>& b,
                   const KrylovOptions& opt) {
    return gmres_engine([&](const double* x, double* y) { a.multiply(x, y); },
                        [&](const double* r, double* z) { m.apply(r, z); },
                        a.rows(), b, opt);
}

double condition_estimate(const SparseMatrix& s, const Preconditioner& m) {
    if (!m.symmetric())
        throw Error("condition_estimate: defined for symmetric systems only");
    const int n = s.rows();
    if (n <= 2000) return dense_condition(s, m);

    // Lanczos through the conjugate gradient recurrence: the alpha/beta
    // coefficients tridiagonalize the preconditioned operator on the subspace
    // the iteration explores, and its extreme eigenvalues converge first.
    std::mt19937_64 gen(0x517eedULL);
    std::vector<double> b(n);
    for (double& x : b) x = ((gen() >> 11) * 0x1.0p-53) * 2.0 - 1.0;
    const bool saddle = m.velocity_count() < n;
    if (saddle) std::fill(b.begin() + m.velocity_count(), b.end(), 0.0);

    KrylovOptions opt;
    opt.tol = 0.0;
    opt.max_iter = 40;
    CgTrace trace;
    cg_engine([&](const double* x, double* y) { s.multiply(x, y); },
              [&](const double* r, double* z) { m.apply(r, z); }, n, b, opt,
              saddle ? m.velocity_count() : -1, &trace);
    const int k = static_cast<int>(trace.alpha.size());
    if (k == 0) throw Error("condition_estimate: no iterations recorded");
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
        t(i, i) = 1.0 / trace.alpha[i];
        if (i > 0) t(i, i) += trace.beta[i - 1] / trace.alpha[i - 1];
        if (i + 1 < k) {
            const double off = std::sqrt(trace.beta[i]) / trace.alpha[i];
            t(i, i + 1) = off;
            t(i + 1, i) = off;
        }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    double lo = es.eigenvalues().minCoeff();
    double hi = es.eigenvalues().maxCoeff();
    if (saddle) {
        lo = std::min(lo, 1.0);
        hi = std::max(hi, 1.0);
    }
    if (!(lo > 0.0)) throw Error("condition_estimate: non-positive eigenvalue estimate");
    return hi / lo;
}

} // namespace fmat
