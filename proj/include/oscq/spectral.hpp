#pragma once
// Eigensolution of many-body operators plus the structural audits behind the
// time-average formulas: degeneracy scan, pair-difference resonance classes
// (sort-and-sweep, never O(d^4)), and diagonal-element checks.

#include "oscq/fock.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace oscq {

struct EigenSystem {
    VectorXd energies;       // ascending
    MatrixXd vectors;        // orthonormal columns
    double ortho_residual = 0.0;
    double recon_residual = 0.0;  // ||H V - V E||_max / ||H||_max

    int dim() const { return int(energies.size()); }
};

// Full dense decomposition (k = 0) or the lowest k eigenpairs. Sparse
// operators are densified first: desk-scale dimensions make the dense
// eigensolvers both simpler and faster than iterative refinement.
inline EigenSystem diagonalize(const ManyBodyOperator& op, int k = 0) {
    if (!op.hermitian) throw std::invalid_argument("diagonalize: hermitian flag not set");
    MatrixXd H = op.to_dense();
    int n = int(H.rows());
    double hmax = std::max(1e-300, H.cwiseAbs().maxCoeff());
    EigenSystem es;
    if (k <= 0 || k >= n) {
        es.energies.resize(n);
        es.vectors = H;  // dsyevd overwrites in place with eigenvectors
        int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, es.vectors.data(), n,
                                  es.energies.data());
        if (info != 0)
            throw std::runtime_error("diagonalize: dsyevd failed, info " + std::to_string(info));
    } else {
        es.energies.resize(k);
        es.vectors.resize(n, k);
        std::vector<double> w(n);
        std::vector<lapack_int> isuppz(2 * std::max(1, k));
        lapack_int m = 0;
        int info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'V', 'I', 'L', n, H.data(), n, 0.0, 0.0,
                                  1, k, 0.0, &m, w.data(), es.vectors.data(), n, isuppz.data());
        if (info != 0 || m < k)
            throw std::runtime_error("diagonalize: dsyevr failed, info " + std::to_string(info));
        for (int i = 0; i < k; ++i) es.energies[i] = w[i];
        H = op.to_dense();  // dsyevr clobbered it
    }
    int nc = int(es.vectors.cols());
    es.ortho_residual = (es.vectors.transpose() * es.vectors - MatrixXd::Identity(nc, nc))
                             .cwiseAbs()
                             .maxCoeff();
    MatrixXd resid = H * es.vectors - es.vectors * es.energies.asDiagonal();
    es.recon_residual = resid.cwiseAbs().maxCoeff() / hmax;
    if (es.ortho_residual > 1e-9 || es.recon_residual > 1e-8)
        throw std::runtime_error("diagonalize: residuals above gate (ortho " +
                                 std::to_string(es.ortho_residual) + ", recon " +
                                 std::to_string(es.recon_residual) + ")");
    return es;
}

// Within each degenerate eigenvalue block, LAPACK returns an arbitrary
// orthonormal mixture. Re-rotate every block so that `label` (e.g. the CM
// number operator) is diagonal inside it; degenerate but label-distinct
// states then come out with clean labels.
inline void rotate_degenerate_blocks(EigenSystem& es, const MatrixXd& label,
                                     double tol_deg = 1e-9) {
    int d = es.dim();
    int i0 = 0;
    while (i0 < d) {
        int i1 = i0 + 1;
        while (i1 < d && es.energies[i1] - es.energies[i1 - 1] < tol_deg) ++i1;
        if (i1 - i0 > 1) {
            MatrixXd blk = es.vectors.middleCols(i0, i1 - i0);
            MatrixXd M = blk.transpose() * (label * blk);
            M = 0.5 * (M + M.transpose());
            Eigen::SelfAdjointEigenSolver<MatrixXd> sub(M);
            es.vectors.middleCols(i0, i1 - i0) = blk * sub.eigenvectors();
        }
        i0 = i1;
    }
}

// One ordered pair (a, b) contributing difference E_b - E_a.
struct ResonancePair {
    double beta;
    std::int32_t a, b;
};

struct ResonanceClass {
    double beta = 0.0;                 // representative difference
    std::vector<ResonancePair> pairs;  // members, |beta_i - beta_class| within tol sweep
};

// Partition all d^2 ordered pair differences by tolerance-respecting
// transitive closure: sort, then sweep merging neighbours closer than tol.
inline std::vector<ResonanceClass> resonance_classes(const VectorXd& E, double tol) {
    int d = int(E.size());
    for (int i = 1; i < d; ++i)
        if (E[i] < E[i - 1]) throw std::invalid_argument("resonance_classes: energies not sorted");
    std::vector<ResonancePair> pairs;
    pairs.reserve(std::size_t(d) * d);
    for (std::int32_t a = 0; a < d; ++a)
        for (std::int32_t b = 0; b < d; ++b)
            pairs.push_back({E[b] - E[a], a, b});
    std::sort(pairs.begin(), pairs.end(),
              [](const ResonancePair& x, const ResonancePair& y) { return x.beta < y.beta; });
    std::vector<ResonanceClass> classes;
    std::size_t i0 = 0;
    while (i0 < pairs.size()) {
        std::size_t i1 = i0 + 1;
        while (i1 < pairs.size() && (pairs[i1].beta - pairs[i1 - 1].beta < tol ||
                                     pairs[i1].beta == pairs[i1 - 1].beta))
            ++i1;
        ResonanceClass cls;
        cls.beta = 0.5 * (pairs[i0].beta + pairs[i1 - 1].beta);
        cls.pairs.assign(pairs.begin() + i0, pairs.begin() + i1);
        classes.push_back(std::move(cls));
        i0 = i1;
    }
    return classes;
}

struct ResonanceReport {
    double tol_degeneracy = 0.0;
    double tol_resonance = 0.0;
    std::vector<std::pair<int, int>> degenerate_pairs;  // adjacent (j, j+1)
    long quadruplet_resonances = 0;  // nontrivial E_k-E_j+E_n-E_m = 0 combinations
    std::vector<double> diag_residual;  // max_j |A_jj| per audited operator
    bool spacing_warning = false;       // tol above smallest level spacing

    bool conditions_met(double diag_tol = 1e-10) const {
        if (!degenerate_pairs.empty() || quadruplet_resonances > 0) return false;
        for (double r : diag_residual)
            if (r > diag_tol) return false;
        return true;
    }
};

// Audit conditions (i)-(iii): non-degeneracy, absence of nontrivial
// pair-difference resonances, and vanishing eigenbasis diagonals of the
// audited operators. ops entries are given directly in the eigenbasis.
inline ResonanceReport check_conditions(const VectorXd& E, const std::vector<MatrixXd>& ops_eig,
                                        double tol_resonance = 1e-8,
                                        double tol_degeneracy = -1.0) {
    int d = int(E.size());
    ResonanceReport rep;
    if (tol_degeneracy <= 0)
        tol_degeneracy = 1e-9 * std::max(1.0, E.cwiseAbs().maxCoeff());
    rep.tol_degeneracy = tol_degeneracy;
    rep.tol_resonance = tol_resonance;
    double min_gap = 1e300;
    for (int j = 0; j + 1 < d; ++j) {
        double gap = E[j + 1] - E[j];
        if (gap < tol_degeneracy) rep.degenerate_pairs.push_back({j, j + 1});
        if (gap > tol_degeneracy) min_gap = std::min(min_gap, gap);
    }
    rep.spacing_warning = (d > 1 && tol_resonance > min_gap);
    // nontrivial quadruplets per nonzero class: every ordered pair (j,k) in a
    // class matches each (m,n) of the mirror class except its own reverse
    auto classes = resonance_classes(E, tol_resonance);
    for (const auto& cls : classes) {
        if (std::abs(cls.beta) < tol_resonance) continue;
        long s = long(cls.pairs.size());
        rep.quadruplet_resonances += s * s - s;
    }
    rep.quadruplet_resonances /= 2;  // mirror classes counted twice (beta and -beta)
    for (const auto& A : ops_eig) {
        double r = 0.0;
        for (int j = 0; j < d && j < A.rows(); ++j) r = std::max(r, std::abs(A(j, j)));
        rep.diag_residual.push_back(r);
    }
    return rep;
}

}  // namespace oscq
