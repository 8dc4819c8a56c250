#pragma once
// Sudden trap quench gamma -> 1: initial ground state in the final-trap
// basis, overlap coefficients, work probability distribution and its
// moments, plus the closed-form g=0 / Tonks-Girardeau variance limits.

#include "oscq/fock.hpp"
#include "oscq/spectral.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace oscq {

struct InitialState {
    VectorXd psi;          // in the working space, deliberately NOT renormalized
    double E_I = 0.0;      // variational ground energy (enlarged space)
    double completeness = 1.0;  // weight of the enlarged-space ground state captured
};

// Ground state of H(g, gamma) expressed in the final-trap working space.
// Computed in a space enlarged by margin_quanta so the truncation loss is
// measurable: completeness below the gate refuses (gamma too extreme for the
// cutoff).
inline InitialState initial_ground_state(const TaggedSpace& sp, double g, double gamma,
                                         InteractionMode mode = InteractionMode::effective,
                                         int margin_quanta = 4, double gate = 0.999) {
    if (!(gamma > 0)) throw std::invalid_argument("initial_ground_state: gamma > 0");
    InitialState out;
    if (margin_quanta <= 0) {
        ManyBodyOperator H = build_hamiltonian(sp, g, gamma, mode);
        EigenSystem es = diagonalize(H, 1);
        out.psi = es.vectors.col(0);
        if (out.psi[0] < 0) out.psi = -out.psi;
        out.E_I = es.energies[0];
        out.completeness = 1.0;
        return out;
    }
    TaggedSpace big = build_tagged_space(sp.N, sp.e_cut + margin_quanta);
    ManyBodyOperator H = build_hamiltonian(big, g, gamma, mode);
    EigenSystem es = diagonalize(H, 1);
    VectorXd psi_big = es.vectors.col(0);
    out.psi = VectorXd::Zero(sp.dim());
    for (int i = 0; i < sp.dim(); ++i) {
        Occ occ = sp.states[i].occ;
        if (sp.N > 1) occ.resize(big.n_orb, 0);  // N = 1 keeps the empty occupation
        int j = big.index(sp.states[i].m, occ);
        if (j >= 0) out.psi[i] = psi_big[j];
    }
    out.completeness = out.psi.squaredNorm();
    out.E_I = es.energies[0];
    if (out.completeness < gate)
        throw std::runtime_error("initial_ground_state: completeness " +
                                 std::to_string(out.completeness) + " below gate " +
                                 std::to_string(gate) + "; raise e_cut or moderate gamma");
    double amax = out.psi.cwiseAbs().maxCoeff();
    for (int i = 0; i < sp.dim(); ++i)
        if (std::abs(out.psi[i]) == amax) {
            if (out.psi[i] < 0) out.psi = -out.psi;
            break;
        }
    return out;
}

struct QuenchRecord {
    int N = 0;
    double g = 0.0, gamma = 1.0;
    double E_I = 0.0;
    double completeness = 1.0;  // sum of |c_j|^2
    VectorXd c;                 // overlap coefficients <psi_j | psi_I>
};

inline QuenchRecord overlaps(const EigenSystem& eig_final, const InitialState& init,
                             double gate = 0.999) {
    QuenchRecord q;
    q.c = eig_final.vectors.transpose() * init.psi;
    if (q.c.size() > 0 && q.c[0] < 0) q.c = -q.c;  // global phase: c_0 >= 0
    q.completeness = q.c.squaredNorm();
    q.E_I = init.E_I;
    if (q.completeness < gate)
        throw std::runtime_error("overlaps: completeness " + std::to_string(q.completeness) +
                                 " below gate " + std::to_string(gate));
    return q;
}

struct WorkStats {
    VectorXd W;       // W_j = E_j - E_I
    VectorXd weight;  // |c_j|^2
    double mean = 0.0, second = 0.0, variance = 0.0;
};

inline WorkStats work_stats(const QuenchRecord& q, const VectorXd& energies) {
    if (energies.size() != q.c.size())
        throw std::invalid_argument("work_stats: energy/overlap size mismatch");
    WorkStats w;
    w.W = energies.array() - q.E_I;
    w.weight = q.c.array().square();
    w.mean = w.weight.dot(w.W);
    w.second = w.weight.dot(w.W.cwiseProduct(w.W).eval());
    w.variance = w.second - w.mean * w.mean;
    return w;
}

enum class VarianceLimit { g0, tg };

// Closed forms: Delta W^2 = N/8 (gamma - 1/gamma)^2 at g=0 and
// N(N^2+2)/24 (gamma - 1/gamma)^2 in the Tonks-Girardeau limit.
inline double analytic_limit_variance(int N, double gamma, VarianceLimit limit) {
    if (N < 1 || !(gamma > 0))
        throw std::invalid_argument("analytic_limit_variance: N >= 1, gamma > 0");
    double s = gamma - 1.0 / gamma;
    double pref = (limit == VarianceLimit::g0) ? N / 8.0 : N * (double(N) * N + 2.0) / 24.0;
    return pref * s * s;
}

// Single-particle frequency-quench overlaps <n | ground(gamma)> in the
// unit-trap basis; nonzero only for even n, with
// c_{2m} = sqrt(2 sqrt(gamma)/(1+gamma)) * sqrt((2m)!)/(2^m m!) * r^m,
// r = (1-gamma)/(1+gamma).
inline VectorXd single_particle_quench_overlaps(double gamma, int n_max) {
    VectorXd c = VectorXd::Zero(n_max);
    double r = (1.0 - gamma) / (1.0 + gamma);
    double pref = std::sqrt(2.0 * std::sqrt(gamma) / (1.0 + gamma));
    for (int n = 0; n < n_max; n += 2) {
        int m = n / 2;
        double ln = 0.5 * std::lgamma(2.0 * m + 1.0) - m * std::log(2.0) - std::lgamma(m + 1.0);
        c[n] = pref * std::exp(ln) * std::pow(r, m);
    }
    return c;
}

}  // namespace oscq
