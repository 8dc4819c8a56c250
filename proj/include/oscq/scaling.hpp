#pragma once
// Quench-strength scaling: sweep (N, gamma) grids and fit the scaling forms
//   Delta W^2 = lambda N^b (gamma - 1/gamma)^2
//   C-bar     = lambda N^b [(gamma - 1/gamma)^2 + k]
// plus the linear regression of C-bar against Delta W^2 at fixed N.
// The amplitude lambda is shared across N: with a free per-N amplitude the
// exponent b is a gauge direction (lambda_N absorbs any N^db) and the fit
// cannot determine it.

#include "oscq/otoc.hpp"

#include <functional>
#include <set>

namespace oscq {

struct SweepRow {
    int N = 0;
    double g = 0.0, gamma = 1.0, e_cut = 0.0;
    double var_w = 0.0;  // Delta W^2
    double c_bar = 0.0;  // time-averaged squared commutator of x1 (exact route)
    double completeness = 1.0;
    std::string method;  // "exact" class sums
    std::string error;   // nonempty if the point failed; values then NaN
};

struct SweepTable {
    std::vector<SweepRow> rows;
};

struct SweepRequest {
    std::vector<int> Ns{2, 3};
    // gamma > 1 squeezes against the unit basis and eats completeness much
    // faster than gamma < 1 broadens, so the default grid leans broad
    std::vector<double> gammas{0.4, 0.5, 0.625, 0.75, 1.25, 1.5};
    double g = 5.0;
    std::function<double(int)> e_cut_for_N;  // default set in sweep()
    double completeness_gate = 0.999;
    bool with_otoc = true;  // work statistics only when false (cheaper, larger N)
    int kb_syn_pair = 48, kb_syn_many = 24;
};

// One full pipeline run per grid point; failures are recorded per-row, not
// thrown, so a sweep survives individual refusals (e.g. extreme gamma at a
// modest cutoff).
inline SweepTable sweep(const SweepRequest& req) {
    SweepTable tab;
    auto cut = req.e_cut_for_N;
    if (!cut) cut = [](int N) { return N <= 2 ? 30.0 : (N == 3 ? 17.0 : 16.0); };
    for (int N : req.Ns) {
        double e_cut = cut(N);
        auto sp = build_tagged_space(N, e_cut);
        auto H = build_hamiltonian(sp, req.g, 1.0);
        auto es = diagonalize(H);
        auto ops = particle_operators(sp);
        for (double gamma : req.gammas) {
            SweepRow row;
            row.N = N;
            row.g = req.g;
            row.gamma = gamma;
            row.e_cut = e_cut;
            row.method = "exact";
            try {
                auto init = initial_ground_state(sp, req.g, gamma, InteractionMode::effective,
                                                 4, req.completeness_gate);
                auto q = overlaps(es, init, req.completeness_gate);
                row.completeness = q.completeness;
                row.var_w = work_stats(q, es.energies).variance;
                if (req.with_otoc) {
                    CmRelOptions opt;
                    opt.kb_syn = (N == 2) ? req.kb_syn_pair : req.kb_syn_many;
                    auto dec = cm_rel_decomposition(es, ops, init, N, gamma, opt);
                    row.c_bar = dec.c_xx;
                } else {
                    row.c_bar = std::nan("");
                    row.method = "work-only";
                }
            } catch (const std::exception& e) {
                row.error = e.what();
                row.var_w = row.c_bar = std::nan("");
            }
            tab.rows.push_back(row);
        }
    }
    return tab;
}

enum class FitObservable { work, otoc };

struct ScalingFit {
    double b = 0.0;       // shared N exponent
    double lambda = 0.0;  // shared amplitude
    double k = 0.0;       // inner offset (otoc form only; 0 for work)
    double residual_rms = 0.0;
    MatrixXd covariance;  // Gauss-Newton estimate, parameter order (lambda, b[, k])
    int iterations = 0;
    bool converged = false;
    bool singular_warning = false;
};

namespace detail {

inline double scaling_model(double lambda, double b, double k, int N, double s) {
    return lambda * std::pow(double(N), b) * (s * s + k);
}

}  // namespace detail

// Levenberg-style damped least squares for the scaling forms, three (otoc)
// or two (work) shared parameters. Initialization: b = 2, k = 0, lambda read
// off the largest-N row; convergence when the relative step drops below tol.
inline ScalingFit fit_scaling(const SweepTable& tab, FitObservable which,
                              double tol = 1e-10, int max_iter = 500) {
    struct Pt {
        int N;
        double s, y;
    };
    std::vector<Pt> pts;
    std::set<int> Ns;
    std::set<double> gammas;
    for (const auto& r : tab.rows) {
        if (!r.error.empty()) continue;
        double y = (which == FitObservable::work) ? r.var_w : r.c_bar;
        double s = r.gamma - 1.0 / r.gamma;
        if (!std::isfinite(y)) continue;
        pts.push_back({r.N, s, y});
        Ns.insert(r.N);
        gammas.insert(r.gamma);
    }
    if (int(Ns.size()) < 3)
        throw std::invalid_argument("fit_scaling: need at least 3 distinct N values");
    if (int(gammas.size()) < 4)
        throw std::invalid_argument("fit_scaling: need at least 4 distinct gamma values");

    int m = int(pts.size());
    int np = (which == FitObservable::otoc) ? 3 : 2;
    double b = 2.0, k = 0.0;
    double lambda = 0.1;
    {
        int n_big = *Ns.rbegin();
        for (const auto& p : pts)
            if (p.N == n_big && std::abs(p.s) > 1e-9) {
                lambda = p.y / (std::pow(double(n_big), b) * p.s * p.s);
                break;
            }
    }
    ScalingFit fit;
    auto rms = [&](double la, double bb, double kk) {
        double acc = 0.0;
        for (const auto& p : pts) {
            double r = detail::scaling_model(la, bb, kk, p.N, p.s) - p.y;
            acc += r * r;
        }
        return std::sqrt(acc / m);
    };
    double mu = 1e-3;
    double best = rms(lambda, b, k);
    MatrixXd JtJ_last = MatrixXd::Zero(np, np);
    for (int it = 0; it < max_iter; ++it) {
        MatrixXd J(m, np);
        VectorXd r(m);
        for (int i = 0; i < m; ++i) {
            const auto& p = pts[i];
            double nb = std::pow(double(p.N), b);
            double f = lambda * nb * (p.s * p.s + k);
            r[i] = f - p.y;
            J(i, 0) = nb * (p.s * p.s + k);
            J(i, 1) = f * std::log(double(p.N));
            if (np == 3) J(i, 2) = lambda * nb;
        }
        MatrixXd JtJ = J.transpose() * J;
        JtJ_last = JtJ;
        VectorXd grad = J.transpose() * r;
        MatrixXd M = JtJ;
        for (int i = 0; i < np; ++i) M(i, i) += mu * std::max(JtJ(i, i), 1e-12);
        Eigen::LDLT<MatrixXd> ldlt(M);
        VectorXd step = ldlt.solve(-grad);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) {
            fit.singular_warning = true;
            break;
        }
        double la2 = lambda + step[0], b2 = b + step[1];
        double k2 = (np == 3) ? k + step[2] : 0.0;
        if (!(la2 > 0)) la2 = 0.5 * lambda;
        double cand = rms(la2, b2, k2);
        fit.iterations = it + 1;
        if (cand <= best) {
            double rel = std::abs(step[0]) / std::max(1e-12, std::abs(lambda)) +
                         std::abs(step[1]) + ((np == 3) ? std::abs(step[2]) : 0.0);
            lambda = la2;
            b = b2;
            k = k2;
            best = cand;
            mu = std::max(mu * 0.3, 1e-14);
            if (rel < tol) {
                fit.converged = true;
                break;
            }
        } else {
            mu *= 4.0;
            if (mu > 1e12) break;
        }
    }
    fit.b = b;
    fit.lambda = lambda;
    fit.k = k;
    fit.residual_rms = best;
    // Gauss-Newton covariance: sigma^2 (J^T J)^{-1}
    double dof = std::max(1, m - np);
    double sigma2 = best * best * m / dof;
    Eigen::FullPivLU<MatrixXd> lu(JtJ_last);
    if (lu.isInvertible()) fit.covariance = sigma2 * lu.inverse();
    else {
        fit.covariance = MatrixXd::Constant(np, np, std::nan(""));
        fit.singular_warning = true;
    }
    return fit;
}

struct LinearRelation {
    double slope = 0.0, intercept = 0.0, r2 = 0.0;
    int n = 0;
};

inline LinearRelation linear_relation(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("linear_relation: need two equal-length samples");
    int n = 0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
        ++n;
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    if (n < 2) throw std::invalid_argument("linear_relation: fewer than two finite points");
    double det = n * sxx - sx * sx;
    if (std::abs(det) < 1e-300) throw std::invalid_argument("linear_relation: degenerate x");
    LinearRelation lr;
    lr.n = n;
    lr.slope = (n * sxy - sx * sy) / det;
    lr.intercept = (sy * sxx - sx * sxy) / det;
    double ss_res = 0.0, ss_tot = 0.0, ybar = sy / n;
    for (size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
        double fy = lr.slope * x[i] + lr.intercept;
        ss_res += (y[i] - fy) * (y[i] - fy);
        ss_tot += (y[i] - ybar) * (y[i] - ybar);
    }
    lr.r2 = (ss_tot > 0) ? 1.0 - ss_res / ss_tot : 1.0;
    return lr;
}

// C-bar against Delta W^2 within one N of the sweep.
inline LinearRelation linear_relation(const SweepTable& tab, int N) {
    std::vector<double> x, y;
    for (const auto& r : tab.rows)
        if (r.N == N && r.error.empty()) {
            x.push_back(r.var_w);
            y.push_back(r.c_bar);
        }
    return linear_relation(x, y);
}

}  // namespace oscq
