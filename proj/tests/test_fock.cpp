#include "oscq/fock.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

using namespace oscq;

namespace {
Eigen::SelfAdjointEigenSolver<MatrixXd> solve(const ManyBodyOperator& H) {
    return Eigen::SelfAdjointEigenSolver<MatrixXd>(H.to_dense());
}
}  // namespace

TEST_CASE("Fock space enumeration") {
    FockSpace s1 = build_fock_space(1, 5.5);
    CHECK(s1.dim() == 6);

    FockSpace s2 = build_fock_space(2, 3.0);
    CHECK(s2.dim() == 4);
    // states as pair occupancies: (0,0), (0,1), (1,1), (0,2)
    std::set<std::pair<int, int>> pairs;
    for (const auto& occ : s2.states) {
        std::vector<int> orbs;
        for (int i = 0; i < int(occ.size()); ++i)
            for (int c = 0; c < occ[i]; ++c) orbs.push_back(i);
        pairs.insert({orbs[0], orbs[1]});
    }
    std::set<std::pair<int, int>> want{{0, 0}, {0, 1}, {1, 1}, {0, 2}};
    CHECK(pairs == want);

    for (const auto& occ : s2.states) CHECK(occ_energy(occ) <= 3.0 + 1e-12);
    CHECK(std::is_sorted(s2.states.begin(), s2.states.end()));
}

TEST_CASE("N=3 state count against an independent partition oracle") {
    FockSpace s = build_fock_space(3, 12.5);
    // oracle: sorted orbital triples n1 <= n2 <= n3 with n1+n2+n3 + 3/2 <= e_cut
    int count = 0, top = 16;
    for (int n1 = 0; n1 <= top; ++n1)
        for (int n2 = n1; n2 <= top; ++n2)
            for (int n3 = n2; n3 <= top; ++n3)
                if (n1 + n2 + n3 + 1.5 <= 12.5 + 1e-12) ++count;
    CHECK(s.dim() == count);
}

TEST_CASE("empty space is refused") {
    CHECK_THROWS_AS(build_fock_space(2, 0.9), std::invalid_argument);
    CHECK_THROWS_AS(build_tagged_space(3, 1.0), std::invalid_argument);
}

TEST_CASE("tagged dimension identity") {
    TaggedSpace t = build_tagged_space(3, 8.5);
    int total = 0;
    for (int m = 0; m < t.n_orb; ++m) {
        double rem = 8.5 - (m + 0.5);
        if (rem < 1.0 - 1e-12) continue;  // two bosons need >= 1
        FockSpace f = build_fock_space(2, rem);
        // embedded Fock space must share the tagged orbital range
        total += [&] {
            int c = 0;
            for (const auto& occ : f.states) {
                bool ok = true;
                for (int i = t.n_orb; i < int(occ.size()); ++i) ok &= (occ[i] == 0);
                c += ok;
            }
            return c;
        }();
    }
    CHECK(t.dim() == total);
}

TEST_CASE("g=0 Hamiltonian is the diagonal of non-interacting energies") {
    FockSpace sp = build_fock_space(3, 7.5);
    ManyBodyOperator H = build_hamiltonian(sp, 0.0, 1.0);
    MatrixXd Hd = H.to_dense();
    for (int i = 0; i < sp.dim(); ++i)
        for (int j = 0; j < sp.dim(); ++j) {
            double want = (i == j) ? occ_energy(sp.states[i]) : 0.0;
            CHECK(Hd(i, j) == Catch::Approx(want).margin(1e-14));
        }
}

TEST_CASE("two bosons in the lowest orbital: bare energy g*U_0000") {
    FockSpace sp = build_fock_space(2, 1.0);
    REQUIRE(sp.dim() == 1);
    double g = 0.7;
    ManyBodyOperator H = build_hamiltonian(sp, g, 1.0, InteractionMode::bare);
    CHECK(H.to_dense()(0, 0) == Catch::Approx(1.0 + g / std::sqrt(2.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("small-g ground-state shift matches first-order perturbation") {
    FockSpace sp = build_fock_space(2, 16.0);
    double e0 = solve(build_hamiltonian(sp, 0.0, 1.0, InteractionMode::bare)).eigenvalues()[0];
    double e1 = solve(build_hamiltonian(sp, 0.01, 1.0, InteractionMode::bare)).eigenvalues()[0];
    CHECK(std::abs((e1 - e0) - 0.0039894) < 1e-5);
}

TEST_CASE("hermiticity of assembled Hamiltonians") {
    TaggedSpace sp = build_tagged_space(3, 9.5);
    ManyBodyOperator H = build_hamiltonian(sp, 5.0, 1.0, InteractionMode::effective);
    CHECK(H.herm_residual() < 1e-12);
    ManyBodyOperator Hb = build_hamiltonian(sp, 5.0, 0.5, InteractionMode::bare);
    CHECK(Hb.herm_residual() < 1e-12);
}

TEST_CASE("particle operators: identities and expectation values") {
    TaggedSpace sp = build_tagged_space(2, 12.0);
    ParticleOperators ops = particle_operators(sp);

    // x1 = R/sqrt(N) + Y1 as an exact matrix identity
    MatrixXd diff = ops.x1.to_dense() - ops.R.to_dense() / std::sqrt(2.0) - ops.Y1.to_dense();
    CHECK(diff.cwiseAbs().maxCoeff() == 0.0);

    // non-interacting ground state: <x1^2> = 1/2
    ManyBodyOperator H0 = build_hamiltonian(sp, 0.0, 1.0);
    auto es = solve(H0);
    VectorXd gs = es.eigenvectors().col(0);
    MatrixXd x1 = ops.x1.to_dense();
    CHECK(gs.dot(x1 * (x1 * gs)) == Catch::Approx(0.5).margin(1e-12));

    // i*p1 is real antisymmetric
    MatrixXd ip = ops.ip1.to_dense();
    CHECK((ip + ip.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("CM number operator commutes with H on the cutoff interior") {
    double e_cut = 12.0;
    TaggedSpace sp = build_tagged_space(2, e_cut);
    ManyBodyOperator H = build_hamiltonian(sp, 5.0, 1.0, InteractionMode::effective);
    ParticleOperators ops = particle_operators(sp);
    MatrixXd C = ops.n_cm.to_dense() * H.to_dense() - H.to_dense() * ops.n_cm.to_dense();
    // states at least 4 quanta below the cutoff see no truncation artifacts
    std::vector<int> interior;
    for (int i = 0; i < sp.dim(); ++i) {
        double e = sp.states[i].m + 0.5 + occ_energy(sp.states[i].occ);
        if (e <= e_cut - 4.0) interior.push_back(i);
    }
    REQUIRE(interior.size() > 20);
    double worst = 0.0;
    for (int r : interior)
        for (int c : interior) worst = std::max(worst, std::abs(C(r, c)));
    CHECK(worst < 1e-10);
}

TEST_CASE("n_cm eigenvalues on CM-excited ladder are integers") {
    TaggedSpace sp = build_tagged_space(2, 8.0);
    ParticleOperators ops = particle_operators(sp);
    ManyBodyOperator H0 = build_hamiltonian(sp, 0.0, 1.0);
    auto es = solve(H0);
    // ground state has CM quanta 0
    VectorXd gs = es.eigenvectors().col(0);
    CHECK(gs.dot(ops.n_cm.to_dense() * gs) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("embedding symmetric states into the tagged space") {
    FockSpace fsp = build_fock_space(2, 6.0);
    TaggedSpace tsp = build_tagged_space(2, 6.0);

    // product ground state maps to (m=0) x (boson in 0)
    VectorXd v = VectorXd::Zero(fsp.dim());
    Occ gs(fsp.n_orb, 0);
    gs[0] = 2;
    v[fsp.index(gs)] = 1.0;
    VectorXd t = embed_symmetric(fsp, v, tsp);
    CHECK(t.norm() == Catch::Approx(1.0).epsilon(1e-14));
    Occ one(tsp.n_orb, 0);
    one[0] = 1;
    CHECK(t[tsp.index(0, one)] == Catch::Approx(1.0).epsilon(1e-14));

    // (0,1) splits evenly between (m=0)x(orb 1) and (m=1)x(orb 0)
    VectorXd v2 = VectorXd::Zero(fsp.dim());
    Occ mixed(fsp.n_orb, 0);
    mixed[0] = 1;
    mixed[1] = 1;
    v2[fsp.index(mixed)] = 1.0;
    VectorXd t2 = embed_symmetric(fsp, v2, tsp);
    Occ in1(tsp.n_orb, 0), in0(tsp.n_orb, 0);
    in1[1] = 1;
    in0[0] = 1;
    CHECK(t2[tsp.index(0, in1)] == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
    CHECK(t2[tsp.index(1, in0)] == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
    CHECK(t2.norm() == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("embedded interacting ground state preserves norm and energy") {
    double e_cut = 7.5, g = 5.0;
    FockSpace fsp = build_fock_space(3, e_cut);
    TaggedSpace tsp = build_tagged_space(3, e_cut);
    ManyBodyOperator Hf = build_hamiltonian(fsp, g, 1.0, InteractionMode::effective);
    ManyBodyOperator Ht = build_hamiltonian(tsp, g, 1.0, InteractionMode::effective);
    auto es = solve(Hf);
    VectorXd gs = es.eigenvectors().col(0);
    VectorXd emb = embed_symmetric(fsp, gs, tsp);
    CHECK(std::abs(emb.norm() - 1.0) < 1e-12);
    double e_sym = es.eigenvalues()[0];
    double e_tag = emb.dot(Ht.apply(emb));
    CHECK(std::abs(e_sym - e_tag) < 1e-10);
}

TEST_CASE("symmetric spectrum is contained in the tagged spectrum") {
    double e_cut = 6.5, g = 2.0;
    FockSpace fsp = build_fock_space(3, e_cut);
    TaggedSpace tsp = build_tagged_space(3, e_cut);
    auto esym = solve(build_hamiltonian(fsp, g, 1.0, InteractionMode::effective));
    auto etag = solve(build_hamiltonian(tsp, g, 1.0, InteractionMode::effective));
    for (int i = 0; i < fsp.dim(); ++i) {
        double best = 1e9;
        for (int j = 0; j < tsp.dim(); ++j)
            best = std::min(best, std::abs(esym.eigenvalues()[i] - etag.eigenvalues()[j]));
        CHECK(best < 1e-8);
    }
}

TEST_CASE("parity: exact H block structure and vanishing <x1>") {
    TaggedSpace sp = build_tagged_space(2, 10.0);
    ManyBodyOperator H = build_hamiltonian(sp, 5.0, 0.5, InteractionMode::effective);
    VectorXd par = parity_diagonal(sp);
    MatrixXd Hd = H.to_dense();
    double cross = 0.0;
    for (int i = 0; i < sp.dim(); ++i)
        for (int j = 0; j < sp.dim(); ++j)
            if (par[i] * par[j] < 0) cross = std::max(cross, std::abs(Hd(i, j)));
    CHECK(cross == 0.0);

    auto es = solve(H);
    VectorXd gs = es.eigenvectors().col(0);
    ParticleOperators ops = particle_operators(sp);
    CHECK(std::abs(gs.dot(ops.x1.apply(gs))) < 1e-12);
}

TEST_CASE("ground-state energy is monotone in the cutoff") {
    double prev = 1e9;
    for (double e_cut : {6.0, 10.0, 14.0}) {
        FockSpace sp = build_fock_space(2, e_cut);
        double e0 = solve(build_hamiltonian(sp, 5.0, 1.0, InteractionMode::bare)).eigenvalues()[0];
        CHECK(e0 <= prev + 1e-12);
        prev = e0;
    }
}

TEST_CASE("large spaces go sparse and agree with dense application") {
    TaggedSpace sp = build_tagged_space(4, 22.0);
    REQUIRE(sp.dim() > kSparseThreshold);
    ManyBodyOperator H = build_hamiltonian(sp, 1.0, 1.0, InteractionMode::effective);
    CHECK(H.is_sparse());
    CHECK(H.herm_residual() < 1e-12);
    VectorXd v = VectorXd::Random(sp.dim());
    VectorXd a = H.apply(v);
    VectorXd b = H.to_dense() * v;
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}
