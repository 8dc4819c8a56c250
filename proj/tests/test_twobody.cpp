#include "oscq/twobody.hpp"
#include "oscq/fock.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

using namespace oscq;

TEST_CASE("even relative energies: free and fermionized limits") {
    RelSpectrum free0 = rel_even_energies(0.0, 3);
    CHECK(free0.energies[0] == 0.5);
    CHECK(free0.energies[1] == 2.5);
    CHECK(free0.energies[2] == 4.5);
    RelSpectrum hard = rel_even_energies(1e6, 2);
    CHECK(std::abs(hard.energies[0] - 1.5) < 1e-3);
    CHECK(std::abs(hard.energies[1] - 3.5) < 1e-3);
}

TEST_CASE("even relative energies against the finite-difference oracle") {
    // oracle: -1/2 d^2/dy^2 + 1/2 y^2 + (g/sqrt2) delta(y) on a Richardson-
    // extrapolated grid; pins the constant conventions of the transcendental
    // equation
    RelSpectrum busch = rel_even_energies(5.0, 3);
    std::vector<double> grid = grid_even_energies(5.0, 1.0, 3);
    for (int j = 0; j < 3; ++j)
        CHECK(std::abs(busch.energies[j] - grid[j]) < 1e-6);
    // frozen spot value so a broken oracle cannot silently agree with a broken
    // root-finder
    CHECK(busch.energies[0] == Catch::Approx(1.2267804).margin(2e-6));

    // initial-trap variant: scaling relation E = gamma * E_1(c/sqrt(gamma))
    RelSpectrum busch_i = rel_even_energies(5.0, 2, 0.5);
    std::vector<double> grid_i = grid_even_energies(5.0, 0.5, 2);
    for (int j = 0; j < 2; ++j)
        CHECK(std::abs(busch_i.energies[j] - grid_i[j]) < 1e-6);
}

TEST_CASE("interaction-induced shifts: monotonic and ~ j^{-1/2}") {
    RelSpectrum s2 = rel_even_energies(2.0, 48);
    RelSpectrum s8 = rel_even_energies(8.0, 48);
    for (int j = 0; j < 48; ++j) {
        CHECK(s2.shifts[j] > 0.0);
        CHECK(s8.shifts[j] > s2.shifts[j]);  // increasing in g
        if (j > 0) CHECK(s2.shifts[j] < s2.shifts[j - 1]);  // decreasing in j
    }
    // scaled shifts approach a constant
    double a20 = s8.shifts[20] * std::sqrt(20.0);
    double a40 = s8.shifts[40] * std::sqrt(40.0);
    CHECK(std::abs(a40 / a20 - 1.0) < 0.15);
}

TEST_CASE("odd channel never couples") {
    std::vector<double> odd = rel_odd_energies(3);
    CHECK(odd[0] == 1.5);
    CHECK(odd[1] == 3.5);
    CHECK(odd[2] == 5.5);
}

TEST_CASE("root-finder input validation") {
    CHECK_THROWS_AS(rel_even_energies(-1.0, 2), std::invalid_argument);
    CHECK_THROWS_AS(rel_even_energies(1.0, 0), std::invalid_argument);
}

TEST_CASE("oscillator brackets: values, shells, orthogonality") {
    BracketTable mosh = moshinsky_brackets(40);
    CHECK(mosh(0, 0, 0, 0) == Catch::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(mosh(1, 0, 1, 0)) == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-13));
    CHECK(std::abs(mosh(1, 0, 0, 1)) == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-13));
    CHECK(mosh(2, 1, 2, 0) == 0.0);  // off-shell

    for (int S : {1, 5, 12, 30}) {
        // rows (n1, n2 = S - n1), columns (N, n = S - N): square orthogonal
        MatrixXd M(S + 1, S + 1);
        for (int n1 = 0; n1 <= S; ++n1)
            for (int N = 0; N <= S; ++N)
                M(n1, N) = mosh(n1, S - n1, N, S - N);
        MatrixXd err = M * M.transpose() - MatrixXd::Identity(S + 1, S + 1);
        CHECK(err.cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("effective interaction reproduces the exact spectrum in-space") {
    for (double gamma : {1.0, 0.5}) {
        int d = 8;
        EffectiveInteraction eff = effective_interaction(5.0, d, gamma);
        MatrixXd hfull = ladder_h(2 * d, gamma);
        MatrixXd h0(d, d);
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) h0(a, b) = hfull(2 * a, 2 * b);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(h0 + eff.V_eff);
        for (int j = 0; j < d; ++j)
            CHECK(std::abs(es.eigenvalues()[j] - eff.exact_energies[j]) < 1e-10);
        CHECK((eff.V_eff - eff.V_eff.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("effective interaction vanishes with g") {
    EffectiveInteraction z = effective_interaction(0.0, 4);
    CHECK(z.V_eff.cwiseAbs().maxCoeff() == 0.0);
    EffectiveInteraction s = effective_interaction(1e-6, 4);
    CHECK(s.V_eff.cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("bare pair elements agree with the bracket route") {
    // route 1: direct quadrature g*U_ijkl; route 2: bare relative delta matrix
    // (g/sqrt2) u_{2a}(0) u_{2b}(0) rotated to the lab frame
    int norb = 6;
    double g = 5.0;
    OrbitalBasis basis = build_orbital_basis(norb);
    PairInteraction direct = pair_interaction_bare(basis, g);
    BracketTable mosh(norb);
    MatrixXd u0 = ho_values(2 * norb, VectorXd::Zero(1));
    double worst = 0.0;
    for (int i = 0; i < norb; ++i)
        for (int j = 0; j < norb; ++j)
            for (int k = 0; k < norb; ++k)
                for (int l = 0; l < norb; ++l) {
                    int S1 = i + j, S2 = k + l;
                    if ((S1 - S2) % 2) continue;
                    double s = 0.0;
                    for (int a = 0; 2 * a <= S1; ++a) {
                        int Ncm = S1 - 2 * a;
                        int b2 = S2 - Ncm;
                        if (b2 < 0 || b2 % 2) continue;
                        double vrel = (g / std::sqrt(2.0)) * u0(2 * a, 0) * u0(b2, 0);
                        s += mosh(i, j, Ncm, 2 * a) * vrel * mosh(k, l, Ncm, b2);
                    }
                    worst = std::max(worst, std::abs(s - direct(i, j, k, l)));
                }
    CHECK(worst < 1e-12);
}

TEST_CASE("lab-frame N=2 diagonalization reproduces the relative spectrum") {
    // CM-ground states of the triangle-truncated tagged space are exact
    // eigenstates of the effective Hamiltonian by construction
    TaggedSpace sp = build_tagged_space(2, 13.0);
    ManyBodyOperator H = build_hamiltonian(sp, 5.0, 1.0, InteractionMode::effective);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(H.to_dense());
    RelSpectrum rel = rel_even_energies(5.0, 4);
    for (int j = 0; j < 4; ++j) {
        double target = 0.5 + rel.energies[j];
        double best = 1e9;
        for (int i = 0; i < sp.dim(); ++i)
            best = std::min(best, std::abs(es.eigenvalues()[i] - target));
        CHECK(best < 1e-8);
    }
}
