#pragma once
// N=2 relative-motion machinery: the Busch-type transcendental spectrum for a
// 1D contact interaction in a harmonic trap, a finite-difference grid solver
// for the same problem (eigenfunction source + cross-check), equal-mass
// oscillator brackets for the 45-degree (x1,x2)->(R,y) rotation, and the
// effective-interaction renormalization built from them.

#include "oscq/hobasis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oscq {

// sign-aware Gamma ratio Gamma(a)/Gamma(b) for possibly negative arguments
inline double gamma_ratio(double a, double b) {
    auto sg = [](double x) {
        if (x > 0) return 1.0;
        int k = int(-std::floor(x));
        return (k % 2 == 0) ? 1.0 : -1.0;
    };
    return sg(a) / sg(b) * std::exp(std::lgamma(a) - std::lgamma(b));
}

// Left-hand side of the even-channel quantization condition; the even relative
// energies solve busch_F(E) = c with c the delta strength in the relative
// coordinate. The constant convention is pinned by the grid oracle in tests.
inline double busch_F(double E) {
    return -2.0 * gamma_ratio(0.75 - E / 2.0, 0.25 - E / 2.0);
}

struct RelSpectrum {
    double g = 0.0;
    std::vector<double> energies;  // even-channel E^REL_j ascending
    std::vector<double> shifts;    // E_j - (2j + 1/2)
};

// Even-channel relative energies for trap strength gamma (default: final trap).
// For gamma != 1 the oscillator-units rescaling E = gamma * E_1(c/sqrt(gamma))
// reduces everything to the unit-trap equation.
inline RelSpectrum rel_even_energies(double g, int count, double gamma = 1.0) {
    if (g < 0) throw std::invalid_argument("rel_even_energies: repulsive g >= 0 only");
    if (count < 1) throw std::invalid_argument("rel_even_energies: count >= 1");
    RelSpectrum out;
    out.g = g;
    double c = (g / std::sqrt(2.0)) / std::sqrt(gamma);
    for (int j = 0; j < count; ++j) {
        double lo = 2 * j + 0.5 + 1e-12, hi = 2 * j + 1.5 - 1e-12;
        if (g == 0.0) {
            out.energies.push_back(gamma * (2 * j + 0.5));
            out.shifts.push_back(0.0);
            continue;
        }
        double flo = busch_F(lo) - c, fhi = busch_F(hi) - c;
        if (!(flo < 0) || !(fhi > 0)) {
            if (flo * fhi > 0)
                throw std::runtime_error(
                    "rel_even_energies: root not bracketed in (2j+1/2, 2j+3/2); "
                    "convention error, refusing to continue");
        }
        for (int it = 0; it < 200 && hi - lo > 1e-15 * (2 * j + 1.5); ++it) {
            double mid = 0.5 * (lo + hi);
            double fm = busch_F(mid) - c;
            if (fm < 0) lo = mid; else hi = mid;
        }
        double E = 0.5 * (lo + hi);
        // convergence check; the slope of F grows like c^2 toward fermionization,
        // so the achievable residual scales accordingly
        double resid = std::abs(busch_F(E) - c);
        if (resid > 1e-12 * (1.0 + std::abs(c)) * (1.0 + std::abs(c)))
            throw std::runtime_error("rel_even_energies: root residual too large");
        out.energies.push_back(gamma * E);
        out.shifts.push_back(gamma * E - gamma * (2 * j + 0.5));
    }
    return out;
}

// Odd channel: the relative wavefunction has a node at contact, so the delta
// never couples and the energies stay at 2j + 3/2 for every g.
inline std::vector<double> rel_odd_energies(int count) {
    std::vector<double> out(count);
    for (int j = 0; j < count; ++j) out[j] = 2 * j + 1.5;
    return out;
}

// Finite-difference solution of -1/2 psi'' + 1/2 gamma^2 y^2 psi + (g/sqrt2) delta(y) psi
// on [-L, L]; delta realized as 1/h on the midpoint. Supplies eigenfunctions for
// the effective interaction and an independent energy oracle (with Richardson).
struct GridSolution {
    VectorXd energies;
    MatrixXd vectors;  // columns, normalized so that h * v^T v = 1
    VectorXd y;
    double h = 0.0;
};

inline GridSolution grid_rel(double g, double gamma, int k,
                             double L = 12.0, double h = 1e-3) {
    int n = int(std::lround(2 * L / h)) + 1;
    std::vector<double> diag(n), off(n - 1, -0.5 / (h * h));
    int mid = (n - 1) / 2;
    for (int i = 0; i < n; ++i) {
        double y = -L + h * i;
        diag[i] = 1.0 / (h * h) + 0.5 * gamma * gamma * y * y;
    }
    diag[mid] += (g / std::sqrt(2.0)) / h;
    GridSolution sol;
    sol.h = h;
    sol.y.resize(n);
    for (int i = 0; i < n; ++i) sol.y[i] = -L + h * i;
    sol.energies.resize(k);
    sol.vectors.resize(n, k);
    std::vector<double> w(n);
    std::vector<lapack_int> isuppz(2 * std::max(1, k));
    lapack_int m = 0;
    int info = LAPACKE_dstevr(LAPACK_COL_MAJOR, 'V', 'I', n, diag.data(), off.data(),
                              0.0, 0.0, 1, k, 0.0, &m, w.data(), sol.vectors.data(),
                              n, isuppz.data());
    if (info != 0 || m < k) throw std::runtime_error("grid_rel: dstevr failed");
    for (int j = 0; j < k; ++j) sol.energies[j] = w[j];
    sol.vectors /= std::sqrt(h);
    return sol;
}

// Richardson-extrapolated even-channel energies from the grid. The on-site
// delta gives a leading O(h) error, so a three-point extrapolation over
// (h, 2h, 4h) removes both the O(h) and O(h^2) terms.
inline std::vector<double> grid_even_energies(double g, double gamma, int count) {
    int k = 2 * count + 2;
    auto evens = [count, k](const GridSolution& s) {
        std::vector<double> out;
        int n = int(s.y.size());
        for (int j = 0; j < k && int(out.size()) < count; ++j) {
            // even states are the interacting ones; identify by eigenvector parity
            double asym = 0.0, amax = 0.0;
            for (int i = 0; i < n; ++i) {
                asym = std::max(asym, std::abs(s.vectors(i, j) - s.vectors(n - 1 - i, j)));
                amax = std::max(amax, std::abs(s.vectors(i, j)));
            }
            if (asym / amax < 1e-6) out.push_back(s.energies[j]);
        }
        if (int(out.size()) < count)
            throw std::runtime_error("grid_even_energies: too few even states");
        return out;
    };
    std::vector<double> e1 = evens(grid_rel(g, gamma, k, 12.0, 1e-3));
    std::vector<double> e2 = evens(grid_rel(g, gamma, k, 12.0, 2e-3));
    std::vector<double> e4 = evens(grid_rel(g, gamma, k, 12.0, 4e-3));
    std::vector<double> out(count);
    for (int j = 0; j < count; ++j) out[j] = (8.0 * e1[j] - 6.0 * e2[j] + e4[j]) / 3.0;
    return out;
}

// <n1 n2 | N n> for the equal-mass 45-degree rotation; nonzero only on the
// shell n1 + n2 = N + n. Closed form: an exact integer alternating binomial
// sum times a sqrt-factorial scale.
class BracketTable {
public:
    // n_max bounds the single-particle indices n1, n2. The alternating binomial
    // sum is exact in __int128 up to n_max = 64; beyond that it could overflow.
    explicit BracketTable(int n_max) : n_max_(n_max), pascal_(build_pascal(n_max + 1)) {
        if (n_max > 64) throw std::invalid_argument("BracketTable: n_max > 64 unsupported");
    }

    double operator()(int n1, int n2, int N, int n) const {
        if (n1 < 0 || n2 < 0 || N < 0 || n < 0) return 0.0;
        if (n1 > n_max_ || n2 > n_max_)
            throw std::out_of_range("BracketTable: index exceeds n_max");
        if (n1 + n2 != N + n) return 0.0;
        __int128 K = 0;
        for (int p = std::max(0, N - n2); p <= std::min(n1, N); ++p) {
            int q = N - p;
            __int128 term = pascal_[n1][p] * pascal_[n2][q];
            K += ((n2 - q) % 2 == 0) ? term : -term;
        }
        if (K == 0) return 0.0;
        double sign = K > 0 ? 1.0 : -1.0;
        long double absK = K > 0 ? (long double)K : -(long double)K;
        double lg = 0.5 * (std::lgamma(N + 1.0) + std::lgamma(n + 1.0)
                           - std::lgamma(n1 + 1.0) - std::lgamma(n2 + 1.0))
                    - 0.5 * (n1 + n2) * std::log(2.0);
        return sign * double(std::exp((long double)lg + std::log(absK)));
    }

    int n_max() const { return n_max_; }

private:
    static std::vector<std::vector<__int128>> build_pascal(int rows) {
        std::vector<std::vector<__int128>> p(rows);
        for (int i = 0; i < rows; ++i) {
            p[i].assign(i + 1, 1);
            for (int j = 1; j < i; ++j) p[i][j] = p[i - 1][j - 1] + p[i - 1][j];
        }
        return p;
    }
    int n_max_;
    std::vector<std::vector<__int128>> pascal_;
};

inline BracketTable moshinsky_brackets(int n_max) { return BracketTable(n_max); }

struct EffectiveInteraction {
    int d = 0;
    MatrixXd V_eff;  // even relative-oscillator basis (unit frequency), d x d
    std::vector<double> exact_energies;
};

// Project the lowest d exact even relative eigenfunctions onto the truncated
// even oscillator basis, Lowdin-orthogonalize, and back out the interaction:
// V_eff = U diag(E_exact) U^T - H0_rel. Reproduces the exact energies in the
// model space by construction (for weak traps only the lowest d_v that the
// basis can represent; higher channels stay non-interacting).
inline EffectiveInteraction effective_interaction(double g, int d, double gamma = 1.0) {
    if (d < 1) throw std::invalid_argument("effective_interaction: d >= 1");
    EffectiveInteraction eff;
    eff.d = d;
    if (g == 0.0) {
        eff.V_eff = MatrixXd::Zero(d, d);
        RelSpectrum sp = rel_even_energies(0.0, d, gamma);
        eff.exact_energies = sp.energies;
        return eff;
    }
    RelSpectrum sp = rel_even_energies(g, d, gamma);
    eff.exact_energies = sp.energies;
    // box wide enough that the topmost requested state (E ~ gamma*(2d+5/2))
    // turns around well inside it; weak traps otherwise hit the wall and the
    // projection goes rank-deficient
    double L = std::max(12.0, std::ceil(std::sqrt(2.0 * (2 * d + 3) / gamma)) + 4.0);
    GridSolution grid = grid_rel(g, gamma, 2 * d + 2, L);
    // even/interacting eigenfunctions
    std::vector<int> evens;
    int n = int(grid.y.size());
    for (int j = 0; j < grid.vectors.cols() && int(evens.size()) < d; ++j) {
        double asym = 0.0, amax = 0.0;
        for (int i = 0; i < n; ++i) {
            asym = std::max(asym, std::abs(grid.vectors(i, j) - grid.vectors(n - 1 - i, j)));
            amax = std::max(amax, std::abs(grid.vectors(i, j)));
        }
        if (asym / amax < 1e-6) evens.push_back(j);
    }
    if (int(evens.size()) < d)
        throw std::runtime_error("effective_interaction: too few exact even states; reduce d");
    MatrixXd phi = ho_values(2 * d, grid.y);  // unit-frequency orbitals on the grid
    MatrixXd P(d, d);
    for (int a = 0; a < d; ++a)
        for (int j = 0; j < d; ++j)
            P(a, j) = phi.row(2 * a).dot(grid.vectors.col(evens[j])) * grid.h;
    // For weak traps the unit-frequency basis cannot represent all d wide
    // eigenstates: project only the lowest d_v with a healthy Gram matrix and
    // leave the remaining (unpopulated) channels non-interacting.
    auto gram_min = [&](int k) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(P.leftCols(k).transpose() * P.leftCols(k));
        return es.eigenvalues().minCoeff();
    };
    int d_v = d;
    while (d_v > 2 && gram_min(d_v) < 1e-8) --d_v;
    if (gram_min(d_v) < 1e-10)
        throw std::runtime_error("effective_interaction: projection rank-deficient; reduce d");
    // Lowdin: U = P (P^T P)^{-1/2}, columns orthonormal
    MatrixXd Pv = P.leftCols(d_v);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(Pv.transpose() * Pv);
    MatrixXd inv_sqrt = es.eigenvectors()
                        * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal()
                        * es.eigenvectors().transpose();
    MatrixXd U = Pv * inv_sqrt;
    VectorXd Ev = Eigen::Map<const VectorXd>(sp.energies.data(), d_v);
    // even block of the one-body relative Hamiltonian at trap gamma
    double g2 = gamma * gamma;
    MatrixXd h0 = MatrixXd::Zero(d, d);
    for (int a = 0; a < d; ++a) h0(a, a) = (2 * a + 0.5) * (1.0 + g2) / 2.0;
    for (int a = 0; a + 1 < d; ++a) {
        double v = (g2 - 1.0) * std::sqrt(double(2 * a + 1) * (2 * a + 2)) / 4.0;
        h0(a, a + 1) = h0(a + 1, a) = v;
    }
    if (d_v == d) {
        eff.V_eff = U * Ev.asDiagonal() * U.transpose() - h0;
    } else {
        // exact energies on span(U), the bare trap block on its complement
        MatrixXd Q = MatrixXd::Identity(d, d) - U * U.transpose();
        eff.V_eff = U * Ev.asDiagonal() * U.transpose() + Q * h0 * Q - h0;
    }
    return eff;
}

// Lab-frame pair interaction W[(i j),(k l)] = <ij| V2 |kl> for distinguishable
// ordered pairs. Effective mode routes the renormalized relative matrix through
// the brackets (CM quanta conserved per pair); bare mode is g * U_ijkl.
class PairInteraction {
public:
    PairInteraction(int n_orb, std::vector<double> w) : n_(n_orb), w_(std::move(w)) {}
    double operator()(int i, int j, int k, int l) const {
        return w_[((std::size_t(i) * n_ + j) * n_ + k) * n_ + l];
    }
    int n_orb() const { return n_; }
private:
    int n_;
    std::vector<double> w_;
};

inline PairInteraction pair_interaction_bare(const OrbitalBasis& basis, double g) {
    int n = basis.n_orb;
    InteractionTensor U = interaction_tensor(basis);
    std::vector<double> w(std::size_t(n) * n * n * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l)
                    if (((i + j + k + l) % 2) == 0)
                        w[((std::size_t(i) * n + j) * n + k) * n + l] = g * U(i, j, k, l);
    return PairInteraction(n, std::move(w));
}

inline PairInteraction pair_interaction_effective(int n_orb, double g, double gamma, int d) {
    EffectiveInteraction eff = effective_interaction(g, d, gamma);
    BracketTable mosh(n_orb);
    int n = n_orb;
    // precompute mtab[(i,j,a)] = <i j | i+j-2a, 2a>
    std::vector<double> mtab(std::size_t(n) * n * d, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int a = 0; a < d && i + j - 2 * a >= 0; ++a)
                mtab[(std::size_t(i) * n + j) * d + a] = mosh(i, j, i + j - 2 * a, 2 * a);
    std::vector<double> w(std::size_t(n) * n * n * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            int S1 = i + j;
            const double* mi = &mtab[(std::size_t(i) * n + j) * d];
            for (int k = 0; k < n; ++k)
                for (int l = 0; l < n; ++l) {
                    int S2 = k + l;
                    if ((S1 - S2) % 2) continue;
                    const double* mk = &mtab[(std::size_t(k) * n + l) * d];
                    double s = 0.0;
                    for (int a = 0; a < d; ++a) {
                        int Ncm = S1 - 2 * a;
                        if (Ncm < 0) break;
                        int b2 = S2 - Ncm;
                        if (b2 < 0 || b2 % 2 || b2 / 2 >= d) continue;
                        s += mi[a] * eff.V_eff(a, b2 / 2) * mk[b2 / 2];
                    }
                    w[((std::size_t(i) * n + j) * n + k) * n + l] = s;
                }
        }
    return PairInteraction(n, std::move(w));
}

}  // namespace oscq
