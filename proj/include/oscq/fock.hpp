#pragma once
// Many-body bases and operator assembly: energy-truncated symmetric Fock
// space, the tagged-particle space (impurity orbital x Fock space of the
// remaining N-1 bosons) that makes x1/p1 honest operators, Hamiltonians in
// bare or effective-interaction mode, and the Jacobi-coordinate operators.

#include "oscq/hobasis.hpp"
#include "oscq/twobody.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace oscq {

using Occ = std::vector<std::uint8_t>;

inline double occ_energy(const Occ& occ) {
    double e = 0.0;
    for (std::size_t i = 0; i < occ.size(); ++i) e += occ[i] * (i + 0.5);
    return e;
}

namespace detail {
// all occupation vectors with sum = nb and non-interacting energy <= e_cut
inline void enumerate_occ(int n_orb, int nb, double e_cut, std::vector<Occ>& out) {
    Occ occ(n_orb, 0);
    std::function<void(int, int, double)> rec = [&](int i, int left, double budget) {
        if (i == n_orb) {
            if (left == 0) out.push_back(occ);
            return;
        }
        if (left * (i + 0.5) > budget + 1e-12) return;  // cheapest placement already too dear
        for (int o = left; o >= 0; --o) {
            double cost = o * (i + 0.5);
            if (cost <= budget + 1e-12) {
                occ[i] = o;
                rec(i + 1, left - o, budget - cost);
                occ[i] = 0;
            }
        }
    };
    rec(0, nb, e_cut);
    std::sort(out.begin(), out.end());
}
}  // namespace detail

struct FockSpace {
    int N = 0;
    int n_orb = 0;
    double e_cut = 0.0;
    std::vector<Occ> states;  // lexicographically sorted

    int dim() const { return int(states.size()); }
    int index(const Occ& occ) const {
        auto it = std::lower_bound(states.begin(), states.end(), occ);
        if (it == states.end() || *it != occ) return -1;
        return int(it - states.begin());
    }
};

inline int orbitals_for_cutoff(int N, double e_cut) {
    // highest reachable orbital: one particle excited, the rest in the ground orbital
    return int(std::floor(e_cut - N / 2.0 + 1e-9)) + 1;
}

inline FockSpace build_fock_space(int N, double e_cut) {
    if (N < 1) throw std::invalid_argument("build_fock_space: N >= 1");
    if (e_cut < N / 2.0 - 1e-12)
        throw std::invalid_argument("build_fock_space: e_cut below ground-state energy N/2, space empty");
    FockSpace sp;
    sp.N = N;
    sp.e_cut = e_cut;
    sp.n_orb = orbitals_for_cutoff(N, e_cut);
    detail::enumerate_occ(sp.n_orb, N, e_cut, sp.states);
    return sp;
}

struct TaggedState {
    int m = 0;  // impurity orbital
    Occ occ;    // N-1 bosons
    friend bool operator<(const TaggedState& a, const TaggedState& b) {
        return a.m != b.m ? a.m < b.m : a.occ < b.occ;
    }
    friend bool operator==(const TaggedState& a, const TaggedState& b) {
        return a.m == b.m && a.occ == b.occ;
    }
};

struct TaggedSpace {
    int N = 0;
    int n_orb = 0;
    double e_cut = 0.0;
    std::vector<TaggedState> states;  // sorted by (m, occ)

    int dim() const { return int(states.size()); }
    int index(int m, const Occ& occ) const { return index(TaggedState{m, occ}); }
    int index(const TaggedState& key) const {
        auto it = std::lower_bound(states.begin(), states.end(), key);
        if (it == states.end() || !(*it == key)) return -1;
        return int(it - states.begin());
    }
};

inline TaggedSpace build_tagged_space(int N, double e_cut) {
    if (N < 1) throw std::invalid_argument("build_tagged_space: N >= 1");
    if (e_cut < N / 2.0 - 1e-12)
        throw std::invalid_argument("build_tagged_space: e_cut below ground-state energy N/2, space empty");
    TaggedSpace sp;
    sp.N = N;
    sp.e_cut = e_cut;
    sp.n_orb = orbitals_for_cutoff(N, e_cut);
    for (int m = 0; m < sp.n_orb; ++m) {
        double rem = e_cut - (m + 0.5);
        if (N == 1) {
            if (rem >= -1e-12) sp.states.push_back({m, Occ{}});
            continue;
        }
        if (rem < (N - 1) * 0.5 - 1e-12) continue;
        std::vector<Occ> sub;
        detail::enumerate_occ(sp.n_orb, N - 1, rem, sub);
        for (auto& occ : sub) sp.states.push_back({m, std::move(occ)});
    }
    std::sort(sp.states.begin(), sp.states.end());
    return sp;
}

// Hermitian many-body matrix; dense below the threshold where dense
// eigensolvers stay cheap, compressed sparse above (N=4,5 spaces).
inline constexpr int kSparseThreshold = 2000;

struct ManyBodyOperator {
    int dim = 0;
    bool hermitian = true;
    MatrixXd dense;                      // dim <= kSparseThreshold
    Eigen::SparseMatrix<double> sparse;  // otherwise

    bool is_sparse() const { return dense.size() == 0 && dim > 0; }
    VectorXd apply(const VectorXd& v) const {
        return is_sparse() ? VectorXd(sparse * v) : VectorXd(dense * v);
    }
    MatrixXd to_dense() const { return is_sparse() ? MatrixXd(sparse) : dense; }
    double herm_residual() const {
        if (is_sparse()) {
            Eigen::SparseMatrix<double> r = sparse - Eigen::SparseMatrix<double>(sparse.transpose());
            double m = 0.0;
            for (int k = 0; k < r.outerSize(); ++k)
                for (Eigen::SparseMatrix<double>::InnerIterator it(r, k); it; ++it)
                    m = std::max(m, std::abs(it.value()));
            return m;
        }
        return (dense - dense.transpose()).cwiseAbs().maxCoeff();
    }
};

namespace detail {

class OpBuilder {
public:
    explicit OpBuilder(int dim) : dim_(dim) {
        if (dim <= kSparseThreshold) dense_ = MatrixXd::Zero(dim, dim);
    }
    void add(int r, int c, double v) {
        if (dense_.size()) dense_(r, c) += v;
        else trips_.emplace_back(r, c, v);
    }
    // finish with the exact symmetrization (H + H^T)/2
    ManyBodyOperator take_symmetric() {
        ManyBodyOperator op;
        op.dim = dim_;
        if (dense_.size()) {
            op.dense = 0.5 * (dense_ + dense_.transpose());
        } else {
            Eigen::SparseMatrix<double> H(dim_, dim_);
            H.setFromTriplets(trips_.begin(), trips_.end());
            op.sparse = (0.5 * (H + Eigen::SparseMatrix<double>(H.transpose()))).pruned();
            op.sparse.makeCompressed();
        }
        return op;
    }
    ManyBodyOperator take_raw() {
        ManyBodyOperator op;
        op.dim = dim_;
        op.hermitian = false;
        if (dense_.size()) {
            op.dense = std::move(dense_);
        } else {
            Eigen::SparseMatrix<double> H(dim_, dim_);
            H.setFromTriplets(trips_.begin(), trips_.end());
            op.sparse = H.pruned();
            op.sparse.makeCompressed();
        }
        return op;
    }

private:
    int dim_;
    MatrixXd dense_;
    std::vector<Eigen::Triplet<double>> trips_;
};

// one-body operator o acting on the impurity factor
inline void add_impurity_onebody(const TaggedSpace& sp, const MatrixXd& o, OpBuilder& b) {
    for (int col = 0; col < sp.dim(); ++col) {
        const auto& s = sp.states[col];
        for (int mp = 0; mp < sp.n_orb; ++mp) {
            double v = o(mp, s.m);
            if (v == 0.0) continue;
            int row = sp.index(mp, s.occ);
            if (row >= 0) b.add(row, col, v);
        }
    }
}

inline TaggedState state_with(const TaggedState& s, Occ o2) { return {s.m, std::move(o2)}; }
inline Occ state_with(const Occ&, Occ o2) { return o2; }

// one-body operator summed over the boson factor, sum_{ik} o_{ik} b_i^dag b_k
template <class Space, class GetOcc>
inline void add_boson_onebody(const Space& sp, const MatrixXd& o, OpBuilder& b, GetOcc&& get) {
    for (int col = 0; col < int(sp.states.size()); ++col) {
        const Occ& occ = get(sp.states[col]);
        for (int k = 0; k < int(occ.size()); ++k) {
            if (!occ[k]) continue;
            for (int i = 0; i < sp.n_orb; ++i) {
                double v = o(i, k);
                if (v == 0.0) continue;
                Occ o2 = occ;
                double amp = std::sqrt(double(o2[k]));
                o2[k] -= 1;
                amp *= std::sqrt(double(o2[i] + 1));
                o2[i] += 1;
                int row = sp.index(state_with(sp.states[col], std::move(o2)));
                if (row >= 0) b.add(row, col, v * amp);
            }
        }
    }
}

}  // namespace detail

enum class InteractionMode { bare, effective };

inline int default_d_eff(double e_cut) {
    return std::max(1, int(std::floor((e_cut - 1.0) / 2.0)) + 1);
}

// shared pair-term assembly: sum over unordered orbital pairs with the
// (2-delta_ij)(2-delta_kl)/2 convention so two bosons in orbital 0 pick up
// exactly g*U_0000
namespace detail {
template <class Space, class GetOcc>
inline void add_boson_pair(const Space& sp, const PairInteraction& W, OpBuilder& b, GetOcc&& get) {
    int n = sp.n_orb;
    for (int col = 0; col < int(sp.states.size()); ++col) {
        const Occ& occ = get(sp.states[col]);
        for (int k = 0; k < n; ++k) {
            if (!occ[k]) continue;
            for (int l = k; l < n; ++l) {
                if (!occ[l]) continue;
                if (k == l && occ[k] < 2) continue;
                Occ o1 = occ;
                double amp0 = std::sqrt(double(o1[k]));
                o1[k] -= 1;
                amp0 *= std::sqrt(double(o1[l]));
                o1[l] -= 1;
                for (int i = 0; i < n; ++i)
                    for (int j = i; j < n; ++j) {
                        double wv = W(i, j, k, l);
                        if (wv == 0.0) continue;
                        double fac = (2.0 - (i == j)) * (2.0 - (k == l)) / 2.0;
                        Occ o2 = o1;
                        double amp = amp0 * std::sqrt(double(o2[j] + 1));
                        o2[j] += 1;
                        amp *= std::sqrt(double(o2[i] + 1));
                        o2[i] += 1;
                        int row = sp.index(state_with(sp.states[col], std::move(o2)));
                        if (row >= 0) b.add(row, col, wv * amp * fac);
                    }
            }
        }
    }
}

// impurity-boson contact term: distinguishable pair, all (m', i | m, k)
inline void add_impurity_boson_pair(const TaggedSpace& sp, const PairInteraction& W, OpBuilder& b) {
    int n = sp.n_orb;
    for (int col = 0; col < sp.dim(); ++col) {
        const auto& s = sp.states[col];
        for (int k = 0; k < n; ++k) {
            if (!s.occ[k]) continue;
            Occ o1 = s.occ;
            double ampk = std::sqrt(double(o1[k]));
            o1[k] -= 1;
            for (int mp = 0; mp < n; ++mp)
                for (int i = 0; i < n; ++i) {
                    double wv = W(mp, i, s.m, k);
                    if (wv == 0.0) continue;
                    Occ o2 = o1;
                    double amp = ampk * std::sqrt(double(o2[i] + 1));
                    o2[i] += 1;
                    int row = sp.index(mp, o2);
                    if (row >= 0) b.add(row, col, wv * amp);
                }
        }
    }
}
}  // namespace detail

inline PairInteraction make_pair_interaction(int n_orb, double g, double gamma,
                                             InteractionMode mode, double e_cut,
                                             int d_eff = 0) {
    if (mode == InteractionMode::bare) {
        OrbitalBasis basis = build_orbital_basis(n_orb);
        return pair_interaction_bare(basis, g);
    }
    if (d_eff <= 0) d_eff = default_d_eff(e_cut);
    return pair_interaction_effective(n_orb, g, gamma, d_eff);
}

inline ManyBodyOperator build_hamiltonian(const TaggedSpace& sp, double g, double gamma,
                                          InteractionMode mode = InteractionMode::effective,
                                          int d_eff = 0) {
    detail::OpBuilder b(sp.dim());
    MatrixXd h1 = ladder_h(sp.n_orb, gamma);
    detail::add_impurity_onebody(sp, h1, b);
    auto get = [](const TaggedState& s) -> const Occ& { return s.occ; };
    if (sp.N > 1) detail::add_boson_onebody(sp, h1, b, get);
    if (g != 0.0 && sp.N > 1) {
        PairInteraction W = make_pair_interaction(sp.n_orb, g, gamma, mode, sp.e_cut, d_eff);
        detail::add_impurity_boson_pair(sp, W, b);
        if (sp.N > 2) detail::add_boson_pair(sp, W, b, get);
    }
    return b.take_symmetric();
}

inline ManyBodyOperator build_hamiltonian(const FockSpace& sp, double g, double gamma,
                                          InteractionMode mode = InteractionMode::effective,
                                          int d_eff = 0) {
    detail::OpBuilder b(sp.dim());
    MatrixXd h1 = ladder_h(sp.n_orb, gamma);
    auto get = [](const Occ& s) -> const Occ& { return s; };
    detail::add_boson_onebody(sp, h1, b, get);
    if (g != 0.0 && sp.N > 1) {
        PairInteraction W = make_pair_interaction(sp.n_orb, g, gamma, mode, sp.e_cut, d_eff);
        detail::add_boson_pair(sp, W, b, get);
    }
    return b.take_symmetric();
}

struct ParticleOperators {
    ManyBodyOperator x1, ip1, R, iP, Y1, n_cm;
};

// x1/p1 act on the impurity; R = sum_n x_n / sqrt(N) on all particles;
// Y1 = x1 - R/sqrt(N); n_cm counts CM quanta via (R^2 + P^2 - 1)/2.
inline ParticleOperators particle_operators(const TaggedSpace& sp) {
    int d = sp.dim();
    MatrixXd xm = ladder_x(sp.n_orb), pm = ladder_ip(sp.n_orb);
    auto get = [](const TaggedState& s) -> const Occ& { return s.occ; };
    ParticleOperators ops;
    {
        detail::OpBuilder b(d);
        detail::add_impurity_onebody(sp, xm, b);
        ops.x1 = b.take_raw();
        ops.x1.hermitian = true;
    }
    {
        detail::OpBuilder b(d);
        detail::add_impurity_onebody(sp, pm, b);
        ops.ip1 = b.take_raw();  // real antisymmetric, i*p1
    }
    double rn = 1.0 / std::sqrt(double(sp.N));
    {
        detail::OpBuilder b(d);
        detail::add_impurity_onebody(sp, MatrixXd(rn * xm), b);
        if (sp.N > 1) detail::add_boson_onebody(sp, MatrixXd(rn * xm), b, get);
        ops.R = b.take_raw();
        ops.R.hermitian = true;
    }
    {
        detail::OpBuilder b(d);
        detail::add_impurity_onebody(sp, MatrixXd(rn * pm), b);
        if (sp.N > 1) detail::add_boson_onebody(sp, MatrixXd(rn * pm), b, get);
        ops.iP = b.take_raw();
    }
    ops.Y1.dim = d;
    double sqn = std::sqrt(double(sp.N));
    if (ops.x1.is_sparse()) {
        ops.Y1.sparse = ops.x1.sparse - ops.R.sparse / sqn;
    } else {
        ops.Y1.dense = ops.x1.dense - ops.R.dense / sqn;
    }
    // n_cm = (R^2 + P^2 - 1)/2 = n_tot/N + (1/N)[sum_{pairs} (x x + p p)].
    // Assembled exactly: the single-coordinate squares reduce to the diagonal
    // 2n+1 identity and the cross terms embed products of exact one-coordinate
    // ladders as two-body elements. Squaring the truncated R and iP matrices
    // instead would drop intermediate states above the cutoff and corrupt
    // <n_cm> for anything with weight near the boundary shell.
    {
        detail::OpBuilder b(d);
        double invN = 1.0 / double(sp.N);
        for (int col = 0; col < d; ++col) {
            const auto& st = sp.states[col];
            int q = st.m;
            for (std::size_t k = 0; k < st.occ.size(); ++k) q += int(k) * st.occ[k];
            b.add(col, col, q * invN);
        }
        if (sp.N > 1) {
            int n = sp.n_orb;
            std::vector<double> wib(std::size_t(n) * n * n * n, 0.0);
            for (int mp = 0; mp < n; ++mp)
                for (int i = 0; i < n; ++i)
                    for (int m = 0; m < n; ++m)
                        for (int k = 0; k < n; ++k) {
                            double v = xm(mp, m) * xm(i, k) - pm(mp, m) * pm(i, k);
                            if (v != 0.0)
                                wib[((std::size_t(mp) * n + i) * n + m) * n + k] = v * invN;
                        }
            PairInteraction Wib(n, std::move(wib));
            detail::add_impurity_boson_pair(sp, Wib, b);
            if (sp.N > 2) {
                std::vector<double> wbb(std::size_t(n) * n * n * n, 0.0);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        for (int k = 0; k < n; ++k)
                            for (int l = 0; l < n; ++l) {
                                double v = 0.5 * (xm(i, k) * xm(j, l) + xm(i, l) * xm(j, k) -
                                                  pm(i, k) * pm(j, l) - pm(i, l) * pm(j, k));
                                if (v != 0.0)
                                    wbb[((std::size_t(i) * n + j) * n + k) * n + l] = v * invN;
                            }
                PairInteraction Wbb(n, std::move(wbb));
                detail::add_boson_pair(sp, Wbb, b, get);
            }
        }
        ops.n_cm = b.take_symmetric();
    }
    return ops;
}

// diagonal of the orbital parity operator (-1)^(total quanta)
inline VectorXd parity_diagonal(const TaggedSpace& sp) {
    VectorXd p(sp.dim());
    for (int i = 0; i < sp.dim(); ++i) {
        const auto& s = sp.states[i];
        long q = s.m;
        for (std::size_t n = 0; n < s.occ.size(); ++n) q += long(n) * s.occ[n];
        p[i] = (q % 2 == 0) ? 1.0 : -1.0;
    }
    return p;
}

inline VectorXd parity_diagonal(const FockSpace& sp) {
    VectorXd p(sp.dim());
    for (int i = 0; i < sp.dim(); ++i) {
        long q = 0;
        for (std::size_t n = 0; n < sp.states[i].size(); ++n) q += long(n) * sp.states[i][n];
        p[i] = (q % 2 == 0) ? 1.0 : -1.0;
    }
    return p;
}

// isometric embedding of a symmetric N-boson state: |occ> -> sum_m
// sqrt(occ_m/N) |m> (x) |occ - e_m>. Throws if the target cutoff loses weight.
inline VectorXd embed_symmetric(const FockSpace& fsp, const VectorXd& v, const TaggedSpace& tsp) {
    if (v.size() != fsp.dim())
        throw std::invalid_argument("embed_symmetric: vector/space size mismatch");
    if (fsp.N != tsp.N) throw std::invalid_argument("embed_symmetric: particle-number mismatch");
    VectorXd out = VectorXd::Zero(tsp.dim());
    double deficit = 0.0;
    for (int i = 0; i < fsp.dim(); ++i) {
        if (v[i] == 0.0) continue;
        const Occ& occ = fsp.states[i];
        for (int m = 0; m < int(occ.size()); ++m) {
            if (!occ[m]) continue;
            double frac = double(occ[m]) / fsp.N;
            Occ rest = occ;
            rest[m] -= 1;
            if (int(rest.size()) < tsp.n_orb) rest.resize(tsp.n_orb, 0);
            else if (int(rest.size()) > tsp.n_orb) {
                bool trunc_ok = std::all_of(rest.begin() + tsp.n_orb, rest.end(),
                                            [](std::uint8_t o) { return o == 0; });
                if (trunc_ok) rest.resize(tsp.n_orb);
            }
            int idx = (m < tsp.n_orb && int(rest.size()) == tsp.n_orb) ? tsp.index(m, rest) : -1;
            if (idx < 0) {
                deficit += v[i] * v[i] * frac;
                continue;
            }
            out[idx] += v[i] * std::sqrt(frac);
        }
    }
    if (deficit > 1e-12 * v.squaredNorm())
        throw std::runtime_error("embed_symmetric: lossy embedding, norm deficit " +
                                 std::to_string(deficit));
    return out;
}

}  // namespace oscq
