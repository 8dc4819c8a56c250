#pragma once
// Harmonic-oscillator orbital basis of the final (unit-frequency) trap:
// stable orbital evaluation, Gauss-Hermite quadrature, exact ladder-algebra
// one-body matrices, and the quartic contact-interaction tensor.

#include <Eigen/Dense>
#include <lapacke.h>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace oscq {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// u_n(x) for n = 0..nmax-1 via the normalized three-term recurrence
//   u_{n+1} = sqrt(2/(n+1)) x u_n - sqrt(n/(n+1)) u_{n-1},
// which keeps every value O(1) instead of letting Hermite polynomials blow up.
inline MatrixXd ho_values(int nmax, const VectorXd& x) {
    MatrixXd out(nmax, x.size());
    const double pi4 = std::pow(M_PI, -0.25);
    for (int q = 0; q < x.size(); ++q) {
        double u0 = pi4 * std::exp(-0.5 * x[q] * x[q]);
        out(0, q) = u0;
        if (nmax > 1) out(1, q) = std::sqrt(2.0) * x[q] * u0;
        for (int n = 1; n + 1 < nmax; ++n)
            out(n + 1, q) = std::sqrt(2.0 / (n + 1)) * x[q] * out(n, q)
                          - std::sqrt(double(n) / (n + 1)) * out(n - 1, q);
    }
    return out;
}

// Gauss-Hermite nodes for weight e^{-x^2}: eigenvalues of the Jacobi matrix
// (Golub-Welsch). Off-diagonals are sqrt(k/2).
inline VectorXd gauss_hermite_nodes(int q) {
    std::vector<double> diag(q, 0.0), off(q > 1 ? q - 1 : 0);
    for (int k = 1; k < q; ++k) off[k - 1] = std::sqrt(k / 2.0);
    std::vector<double> z(1);  // eigenvectors not needed
    int info = LAPACKE_dstev(LAPACK_COL_MAJOR, 'N', q, diag.data(),
                             off.empty() ? z.data() : off.data(), z.data(), 1);
    if (info != 0) throw std::runtime_error("gauss_hermite_nodes: dstev failed");
    VectorXd x(q);
    for (int i = 0; i < q; ++i) x[i] = diag[i];
    // symmetrize so parity relations hold exactly on the grid
    for (int i = 0; i < q / 2; ++i) {
        double v = 0.5 * (x[i] - x[q - 1 - i]);
        x[i] = v;
        x[q - 1 - i] = -v;
    }
    if (q % 2) x[q / 2] = 0.0;
    return x;
}

struct OrbitalBasis {
    int n_orb = 0;
    VectorXd quad_nodes;    // Gauss-Hermite nodes t_q
    VectorXd quad_weights;  // total weights: w_q e^{t_q^2}, so that sum_q w~_q f(t_q) = int f
    MatrixXd orbital_values;  // u_n(t_q), n_orb x Q
};

inline OrbitalBasis build_orbital_basis(int n_orb, int quad_order = 0) {
    if (n_orb < 1) throw std::invalid_argument("build_orbital_basis: n_orb >= 1 required");
    if (quad_order == 0) quad_order = 4 * n_orb;
    if (quad_order < 2 * n_orb)
        throw std::invalid_argument(
            "build_orbital_basis: quad_order " + std::to_string(quad_order) +
            " too small; need >= " + std::to_string(2 * n_orb) +
            " for exact quartic integrands");
    OrbitalBasis b;
    b.n_orb = n_orb;
    b.quad_nodes = gauss_hermite_nodes(quad_order);
    // Total weights via the Christoffel identity 1/sum_n u_n(x_q)^2 over all
    // quad_order orbitals; avoids underflow of the raw Gaussian weights.
    MatrixXd full = ho_values(quad_order, b.quad_nodes);
    b.quad_weights = full.colwise().squaredNorm().cwiseInverse().transpose();
    b.orbital_values = full.topRows(n_orb);
    return b;
}

// Exact ladder-algebra one-body matrices in the unit-frequency basis.
inline MatrixXd ladder_x(int n) {
    MatrixXd x = MatrixXd::Zero(n, n);
    for (int k = 0; k + 1 < n; ++k)
        x(k, k + 1) = x(k + 1, k) = std::sqrt((k + 1) / 2.0);
    return x;
}

inline MatrixXd ladder_ip(int n) {  // i p = (a^dag - a)/sqrt(2), real antisymmetric
    MatrixXd ip = MatrixXd::Zero(n, n);
    for (int k = 0; k + 1 < n; ++k) {
        double v = std::sqrt((k + 1) / 2.0);
        ip(k + 1, k) = -v;
        ip(k, k + 1) = +v;
    }
    return ip;
}

inline MatrixXd ladder_x2(int n) {
    MatrixXd x2 = MatrixXd::Zero(n, n);
    for (int k = 0; k < n; ++k) x2(k, k) = k + 0.5;
    for (int k = 0; k + 2 < n; ++k)
        x2(k, k + 2) = x2(k + 2, k) = std::sqrt(double(k + 1) * (k + 2)) / 2.0;
    return x2;
}

// p^2/2 + gamma^2 x^2/2 expressed in the unit-frequency basis
inline MatrixXd ladder_h(int n, double gamma) {
    if (!(gamma > 0)) throw std::invalid_argument("ladder_h: gamma > 0 required");
    double g2 = gamma * gamma;
    MatrixXd h = MatrixXd::Zero(n, n);
    for (int k = 0; k < n; ++k) h(k, k) = (k + 0.5) * (1.0 + g2) / 2.0;
    for (int k = 0; k + 2 < n; ++k) {
        double v = (g2 - 1.0) * std::sqrt(double(k + 1) * (k + 2)) / 4.0;
        h(k, k + 2) = h(k + 2, k) = v;
    }
    return h;
}

struct OneBodyMatrices {
    double gamma = 1.0;
    MatrixXd x_mat;   // tridiagonal ladder form
    MatrixXd ip_mat;  // i*<m|p|n>, real antisymmetric
    MatrixXd x2_mat;
    MatrixXd h_gamma; // p^2/2 + gamma^2 x^2/2 in the unit-frequency basis
};

inline OneBodyMatrices one_body_matrices(const OrbitalBasis& basis, double gamma) {
    int n = basis.n_orb;
    OneBodyMatrices m;
    m.gamma = gamma;
    m.x_mat = ladder_x(n);
    m.ip_mat = ladder_ip(n);
    m.x2_mat = ladder_x2(n);
    m.h_gamma = ladder_h(n, gamma);
    return m;
}

// U_ijkl = int u_i u_j u_k u_l dx, stored once per canonically ordered
// (i<=j<=k<=l) quadruple; all 24 permutations share the value.
struct InteractionTensor {
    int n_orb = 0;
    std::vector<double> data;  // canonical quadruples
    static std::size_t canon_index(int i, int j, int k, int l) {
        // sort the four indices (network, branch-light)
        int a = i, b = j, c = k, d = l, t;
        if (a > b) { t = a; a = b; b = t; }
        if (c > d) { t = c; c = d; d = t; }
        if (a > c) { t = a; a = c; c = t; }
        if (b > d) { t = b; b = d; d = t; }
        if (b > c) { t = b; b = c; c = t; }
        // multiset (a<=b<=c<=d) -> linear index via tetrahedral numbers
        auto c2 = [](std::size_t n) { return n * (n + 1) / 2; };
        auto c3 = [&](std::size_t n) { return n * (n + 1) * (n + 2) / 6; };
        auto c4 = [&](std::size_t n) { return n * (n + 1) * (n + 2) * (n + 3) / 24; };
        return c4(d) + c3(c) + c2(b) + std::size_t(a);
    }
    double operator()(int i, int j, int k, int l) const {
        return data[canon_index(i, j, k, l)];
    }
};

inline InteractionTensor interaction_tensor(const OrbitalBasis& basis) {
    int n = basis.n_orb;
    int q = int(basis.quad_nodes.size());
    // Substituting x = t/sqrt(2) makes the integrand's Gaussian exactly e^{-t^2},
    // so the same total weights integrate the quartic product exactly.
    VectorXd y = basis.quad_nodes / std::sqrt(2.0);
    MatrixXd uy = ho_values(n, y);
    InteractionTensor U;
    U.n_orb = n;
    U.data.assign(InteractionTensor::canon_index(n - 1, n - 1, n - 1, n - 1) + 1, 0.0);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            VectorXd pij = (uy.row(i).array() * uy.row(j).array()
                            * basis.quad_weights.transpose().array()).matrix();
            for (int k = j; k < n; ++k)
                for (int l = k; l < n; ++l) {
                    if ((i + j + k + l) % 2) continue;  // parity
                    double s = 0.0;
                    for (int p = 0; p < q; ++p) s += pij[p] * uy(k, p) * uy(l, p);
                    U.data[InteractionTensor::canon_index(i, j, k, l)] = s * inv_sqrt2;
                }
        }
    return U;
}

}  // namespace oscq
