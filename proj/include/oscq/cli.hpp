#pragma once
// Command-line front end: validated run configuration (file + flags, flags
// win), an eigensystem cache, deterministic CSV/manifest emission, and one
// cmd_* entry point per pipeline stage.
//
// Determinism contract: data files (CSV, cache) are byte-identical across
// reruns of the same config and code version. The run manifest additionally
// records wall time and is the one deliberately non-reproducible output.

#include "oscq/scaling.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace oscq {
namespace cli {

constexpr std::uint32_t kCodeVersion = 2;

struct RunConfig {
    int N = 2;
    double g = 5.0;
    double gamma = 0.5;
    int n_orb = 0;  // 0: derived from e_cut
    double e_cut = 30.0;
    std::string mode = "effective";  // bare|effective
    std::string op_a = "x1", op_b = "x1";
    double T = 200.0 * M_PI;
    double dt = 0.0;  // 0: pi / (4 E_max)
    double trap = 1.0;  // trap strength for cmd_spectrum
    double res_tol = 1e-8;
    double gate = 0.999;
    std::string out_dir = ".";
    std::string cache_dir;  // flag > OSCQ_CACHE_DIR > out_dir/cache
    int jobs = 1;
    bool plot_script = false;
};

inline void validate(const RunConfig& c) {
    if (c.N < 1 || c.N > 6) throw std::invalid_argument("config: N must lie in [1,6]");
    if (!(c.g >= 0)) throw std::invalid_argument("config: g must be >= 0");
    if (!(c.gamma >= 0.25 && c.gamma <= 4.0))
        throw std::invalid_argument("config: gamma must lie in [0.25,4]");
    if (!(c.trap >= 0.25 && c.trap <= 4.0))
        throw std::invalid_argument("config: trap must lie in [0.25,4]");
    if (c.mode != "bare" && c.mode != "effective")
        throw std::invalid_argument("config: mode must be bare or effective");
    if (c.op_a != "x1" && c.op_a != "ip1")
        throw std::invalid_argument("config: op-a must be x1 or ip1");
    if (c.op_b != "x1" && c.op_b != "ip1")
        throw std::invalid_argument("config: op-b must be x1 or ip1");
    if (!(c.e_cut >= c.N / 2.0))
        throw std::invalid_argument("config: e_cut below the ground-state energy");
    if (!(c.T > 0) || c.dt < 0) throw std::invalid_argument("config: need T > 0, dt >= 0");
    if (c.jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");
}

// ---------- formatting ----------

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string fmt_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw std::invalid_argument("cannot write " + tmp.string());
        f.write(content.data(), std::streamsize(content.size()));
    }
    fs::rename(tmp, path);
}

struct Manifest {
    std::vector<std::pair<std::string, std::string>> kv;
    void add(const std::string& k, const std::string& v) { kv.push_back({k, v}); }
    void add(const std::string& k, double v) { add(k, fmt(v)); }
    void add(const std::string& k, int v) { add(k, std::to_string(v)); }
};

inline void write_manifest(const RunConfig& cfg, const std::string& command, Manifest m,
                           std::chrono::steady_clock::time_point t0) {
    Manifest full;
    full.add("command", command);
    full.add("code_version", int(kCodeVersion));
    full.add("N", cfg.N);
    full.add("g", cfg.g);
    full.add("gamma", cfg.gamma);
    full.add("e_cut", cfg.e_cut);
    full.add("n_orb", cfg.n_orb);
    full.add("mode", cfg.mode);
    full.add("op_a", cfg.op_a);
    full.add("op_b", cfg.op_b);
    full.add("res_tol", cfg.res_tol);
    full.add("completeness_gate", cfg.gate);
    for (auto& p : m.kv) full.kv.push_back(std::move(p));
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::steady_clock::now() - t0)
                  .count();
    full.add("wall_time_ms", int(ms));
    std::string out;
    for (const auto& p : full.kv) out += p.first + " = " + p.second + "\n";
    write_atomic(std::filesystem::path(cfg.out_dir) / (command + "_manifest.txt"), out);
}

inline void maybe_plot_script(const RunConfig& cfg, const std::string& csv_name,
                              const std::string& title, const std::string& using_expr) {
    if (!cfg.plot_script) return;
    std::string gp = "set datafile separator ','\nset key autotitle columnhead\nset title '" +
                     title + "'\nplot '" + csv_name + "' using " + using_expr + " with linespoints\n";
    write_atomic(std::filesystem::path(cfg.out_dir) / (csv_name + ".gp"), gp);
}

// ---------- cache ----------

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::filesystem::path cache_directory(const RunConfig& cfg) {
    if (!cfg.cache_dir.empty()) return cfg.cache_dir;
    if (const char* env = std::getenv("OSCQ_CACHE_DIR")) return env;
    return std::filesystem::path(cfg.out_dir) / "cache";
}

inline std::uint64_t spectrum_key(const RunConfig& cfg, double trap) {
    std::string desc = "v" + std::to_string(kCodeVersion) + "|N" + std::to_string(cfg.N) + "|g" +
                       fmt(cfg.g) + "|trap" + fmt(trap) + "|no" + std::to_string(cfg.n_orb) +
                       "|ec" + fmt(cfg.e_cut) + "|" + cfg.mode;
    return fnv1a64(desc);
}

namespace detail_io {

template <class T>
void put(std::string& buf, const T& v) {
    const char* p = reinterpret_cast<const char*>(&v);
    buf.append(p, sizeof(T));
}

template <class T>
bool get(std::istream& in, T& v) {
    return bool(in.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

}  // namespace detail_io

// "OSC1" magic, u32 format version, u64 key echo, descriptor, then energies
// and column-major eigenvectors as little-endian 64-bit floats.
inline void store_eigensystem(const std::filesystem::path& file, std::uint64_t key,
                              const RunConfig& cfg, double trap, const EigenSystem& es) {
    std::string buf;
    buf.append("OSC1", 4);
    detail_io::put(buf, kCodeVersion);
    detail_io::put(buf, key);
    detail_io::put(buf, std::int32_t(cfg.N));
    detail_io::put(buf, std::int32_t(cfg.n_orb));
    detail_io::put(buf, cfg.g);
    detail_io::put(buf, trap);
    detail_io::put(buf, cfg.e_cut);
    detail_io::put(buf, std::int32_t(cfg.mode == "effective" ? 1 : 0));
    detail_io::put(buf, std::int64_t(es.energies.size()));
    detail_io::put(buf, std::int64_t(es.vectors.cols()));
    buf.append(reinterpret_cast<const char*>(es.energies.data()),
               sizeof(double) * std::size_t(es.energies.size()));
    buf.append(reinterpret_cast<const char*>(es.vectors.data()),
               sizeof(double) * std::size_t(es.vectors.size()));
    write_atomic(file, buf);
}

inline bool load_eigensystem(const std::filesystem::path& file, std::uint64_t key,
                             EigenSystem& es) {
    std::ifstream in(file, std::ios::binary);
    if (!in) return false;
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "OSC1", 4) != 0) return false;
    std::uint32_t ver = 0;
    std::uint64_t k = 0;
    if (!detail_io::get(in, ver) || ver != kCodeVersion) return false;
    if (!detail_io::get(in, k) || k != key) return false;
    std::int32_t i32;
    double f64;
    for (int skip = 0; skip < 2; ++skip) detail_io::get(in, i32);
    for (int skip = 0; skip < 3; ++skip) detail_io::get(in, f64);
    detail_io::get(in, i32);
    std::int64_t dim = 0, ncols = 0;
    if (!detail_io::get(in, dim) || !detail_io::get(in, ncols)) return false;
    if (dim <= 0 || ncols <= 0 || dim > (1 << 24) || ncols > dim) return false;
    es.energies.resize(dim);
    es.vectors.resize(dim, ncols);
    if (!in.read(reinterpret_cast<char*>(es.energies.data()), sizeof(double) * dim)) return false;
    if (!in.read(reinterpret_cast<char*>(es.vectors.data()), sizeof(double) * dim * ncols))
        return false;
    return true;
}

// Diagonalize H(g, trap) in the configured space, through the cache.
inline EigenSystem cached_spectrum(const RunConfig& cfg, const TaggedSpace& sp, double trap) {
    std::uint64_t key = spectrum_key(cfg, trap);
    char name[32];
    std::snprintf(name, sizeof name, "oscq-%016llx.bin", static_cast<unsigned long long>(key));
    std::filesystem::path file = cache_directory(cfg) / name;
    EigenSystem es;
    if (load_eigensystem(file, key, es)) return es;
    auto mode = cfg.mode == "effective" ? InteractionMode::effective : InteractionMode::bare;
    auto H = build_hamiltonian(sp, cfg.g, trap, mode);
    es = diagonalize(H);
    store_eigensystem(file, key, cfg, trap, es);
    return es;
}

// ---------- shared pipeline pieces ----------

inline TaggedSpace make_space(const RunConfig& cfg) {
    TaggedSpace sp = build_tagged_space(cfg.N, cfg.e_cut);
    if (cfg.n_orb > 0 && cfg.n_orb < sp.n_orb)
        throw std::invalid_argument("config: n_orb below the cutoff requirement; drop it or raise it");
    return sp;
}

inline MatrixXd op_matrix(const ParticleOperators& ops, const std::string& name) {
    if (name == "x1") return ops.x1.to_dense();
    return ops.ip1.to_dense();
}

struct QuenchBundle {
    TaggedSpace sp;
    EigenSystem es;
    InitialState init;
    QuenchRecord q;
};

inline QuenchBundle quench_pipeline(const RunConfig& cfg) {
    QuenchBundle b;
    b.sp = make_space(cfg);
    b.es = cached_spectrum(cfg, b.sp, 1.0);
    auto mode = cfg.mode == "effective" ? InteractionMode::effective : InteractionMode::bare;
    b.init = initial_ground_state(b.sp, cfg.g, cfg.gamma, mode, 4, cfg.gate);
    b.q = overlaps(b.es, b.init, cfg.gate);
    b.q.N = cfg.N;
    b.q.g = cfg.g;
    b.q.gamma = cfg.gamma;
    return b;
}

// ---------- subcommands ----------

inline int cmd_limits(const RunConfig& cfg, const std::string& limit) {
    validate(cfg);
    VarianceLimit which;
    if (limit == "g0") which = VarianceLimit::g0;
    else if (limit == "tg") which = VarianceLimit::tg;
    else throw std::invalid_argument("limits: limit must be g0 or tg");
    std::printf("%s\n", fmt_short(analytic_limit_variance(cfg.N, cfg.gamma, which)).c_str());
    return 0;
}

inline int cmd_spectrum(const RunConfig& cfg) {
    validate(cfg);
    auto t0 = std::chrono::steady_clock::now();
    TaggedSpace sp = make_space(cfg);
    EigenSystem es = cached_spectrum(cfg, sp, cfg.trap);
    std::string csv = "j,E\n";
    for (int j = 0; j < es.dim(); ++j)
        csv += std::to_string(j) + "," + fmt(es.energies[j]) + "\n";
    write_atomic(std::filesystem::path(cfg.out_dir) / "spectrum.csv", csv);
    maybe_plot_script(cfg, "spectrum.csv", "spectrum", "1:2");
    Manifest m;
    m.add("trap", cfg.trap);
    m.add("dim", sp.dim());
    m.add("ortho_residual", es.ortho_residual);
    m.add("recon_residual", es.recon_residual);
    write_manifest(cfg, "spectrum", std::move(m), t0);
    return 0;
}

inline int cmd_quench(const RunConfig& cfg) {
    validate(cfg);
    auto t0 = std::chrono::steady_clock::now();
    QuenchBundle b = quench_pipeline(cfg);
    std::string csv = "j,E,c,weight\n";
    for (int j = 0; j < b.q.c.size(); ++j)
        csv += std::to_string(j) + "," + fmt(b.es.energies[j]) + "," + fmt(b.q.c[j]) + "," +
               fmt(b.q.c[j] * b.q.c[j]) + "\n";
    write_atomic(std::filesystem::path(cfg.out_dir) / "quench.csv", csv);
    maybe_plot_script(cfg, "quench.csv", "overlap weights", "2:4");
    Manifest m;
    m.add("dim", b.sp.dim());
    m.add("E_I", b.q.E_I);
    m.add("completeness", b.q.completeness);
    write_manifest(cfg, "quench", std::move(m), t0);
    return 0;
}

inline int cmd_work(const RunConfig& cfg) {
    validate(cfg);
    auto t0 = std::chrono::steady_clock::now();
    QuenchBundle b = quench_pipeline(cfg);
    WorkStats w = work_stats(b.q, b.es.energies);
    std::string csv = "j,E,W,weight\n";
    for (int j = 0; j < w.W.size(); ++j)
        csv += std::to_string(j) + "," + fmt(b.es.energies[j]) + "," + fmt(w.W[j]) + "," +
               fmt(w.weight[j]) + "\n";
    write_atomic(std::filesystem::path(cfg.out_dir) / "work.csv", csv);
    maybe_plot_script(cfg, "work.csv", "work distribution", "3:4");
    Manifest m;
    m.add("E_I", b.q.E_I);
    m.add("completeness", b.q.completeness);
    m.add("mean_work", w.mean);
    m.add("second_moment", w.second);
    m.add("variance", w.variance);
    write_manifest(cfg, "work", std::move(m), t0);
    return 0;
}

inline int cmd_otoc(const RunConfig& cfg) {
    validate(cfg);
    auto t0 = std::chrono::steady_clock::now();
    QuenchBundle b = quench_pipeline(cfg);
    auto ops = particle_operators(b.sp);
    MatrixXd A = b.es.vectors.transpose() * (op_matrix(ops, cfg.op_a) * b.es.vectors);
    MatrixXd B = (cfg.op_a == cfg.op_b)
                     ? A
                     : MatrixXd(b.es.vectors.transpose() * (op_matrix(ops, cfg.op_b) * b.es.vectors));
    VectorXd c = b.q.c / b.q.c.norm();  // normalized initial state in the captured space
    double emax = std::max(1.0, b.es.energies.cwiseAbs().maxCoeff());
    double dt = cfg.dt > 0 ? cfg.dt : M_PI / (4.0 * emax);
    int nt = std::max(2, int(std::floor(cfg.T / dt)) + 1);
    VectorXd times(nt);
    for (int i = 0; i < nt; ++i) times[i] = cfg.T * double(i) / (nt - 1);
    OtocSeries s = otoc_series(b.es.energies, A, B, c, times);
    std::string csv = "t,ReD,ImD,ReI,ImI,ReF,ImF,C\n";
    for (int i = 0; i < nt; ++i)
        csv += fmt(times[i]) + "," + fmt(s.D[i].real()) + "," + fmt(s.D[i].imag()) + "," +
               fmt(s.I[i].real()) + "," + fmt(s.I[i].imag()) + "," + fmt(s.F[i].real()) + "," +
               fmt(s.F[i].imag()) + "," + fmt(s.C[i]) + "\n";
    write_atomic(std::filesystem::path(cfg.out_dir) / "otoc.csv", csv);
    maybe_plot_script(cfg, "otoc.csv", "squared commutator", "1:8");
    double acc = 0.0;
    for (int i = 0; i + 1 < nt; ++i) acc += 0.5 * (s.C[i] + s.C[i + 1]) * (times[i + 1] - times[i]);
    Manifest m;
    m.add("completeness", b.q.completeness);
    m.add("T", cfg.T);
    m.add("dt", times[1] - times[0]);
    m.add("n_times", nt);
    m.add("window_mean_C", acc / cfg.T);
    write_manifest(cfg, "otoc", std::move(m), t0);
    return 0;
}

inline int cmd_avg(const RunConfig& cfg) {
    validate(cfg);
    if (cfg.N < 2) throw std::invalid_argument("avg: needs N >= 2 (no relative sector at N = 1)");
    if (cfg.op_a != "x1" || cfg.op_b != "x1")
        throw std::invalid_argument(
            "avg: infinite-time averages are produced for the x1 operator pair only");
    auto t0 = std::chrono::steady_clock::now();
    QuenchBundle b = quench_pipeline(cfg);
    auto ops = particle_operators(b.sp);
    CmRelOptions opt;
    opt.res_tol = cfg.res_tol;
    opt.kb_syn = (cfg.N == 2) ? 48 : 24;
    auto dec = cm_rel_decomposition(b.es, ops, b.init, cfg.N, cfg.gamma, opt);
    auto win = window_average(dec.rel_energies, dec.Y_rel, dec.Y_rel, dec.rel_overlaps, cfg.T,
                              cfg.dt);
    WorkStats w = work_stats(b.q, b.es.energies);
    std::string csv = "name,value\n";
    auto row = [&csv](const std::string& k, double v) { csv += k + "," + fmt(v) + "\n"; };
    row("c_xx", dec.c_xx);
    row("c_yy", dec.c_yy);
    row("c_yy_k_route", dec.c_yy_k_route);
    row("c_rr", dec.c_rr);
    row("c_rr_numeric", dec.c_rr_numeric);
    row("additivity_residual", dec.additivity_residual);
    row("window_mean_c_yy", win.value);
    row("var_w", w.variance);
    row("n_rel", dec.n_rel);
    row("rel_weight", dec.rel_norm * dec.rel_norm);
    row("contaminated_weight", dec.contaminated_weight);
    write_atomic(std::filesystem::path(cfg.out_dir) / "avg.csv", csv);
    Manifest m;
    m.add("completeness", b.q.completeness);
    m.add("window_T", win.T);
    m.add("window_dt", win.dt);
    m.add("window_underresolved", win.underresolved_warning ? "yes" : "no");
    write_manifest(cfg, "avg", std::move(m), t0);
    return 0;
}

inline int cmd_check(const RunConfig& cfg) {
    validate(cfg);
    if (cfg.N < 2)
        throw std::invalid_argument("check: needs N >= 2 (no relative sector at N = 1)");
    auto t0 = std::chrono::steady_clock::now();
    QuenchBundle b = quench_pipeline(cfg);
    auto ops = particle_operators(b.sp);
    CmRelOptions opt;
    opt.res_tol = cfg.res_tol;
    opt.kb_syn = (cfg.N == 2) ? 48 : 24;
    auto dec = cm_rel_decomposition(b.es, ops, b.init, cfg.N, cfg.gamma, opt);
    // The audited spectrum is the interacting (even) relative tower: the odd
    // tower keeps its free integer spacings at any g and would always trip
    // condition (ii) benignly. With the CM in its ground state, even relative
    // states carry even global parity, so parity expectation values pick out
    // the tower exactly at any g.
    VectorXd par = parity_diagonal(b.sp);
    std::vector<double> even_sel;
    {
        EigenSystem rot = b.es;  // rotated copy consistent with the decomposition
        rotate_degenerate_blocks(rot, ops.n_cm.to_dense());
        MatrixXd NV = ops.n_cm.to_dense() * rot.vectors;
        for (int j = 0; j < rot.dim(); ++j) {
            double K = rot.vectors.col(j).dot(NV.col(j));
            if (std::abs(K - std::round(K)) > 1e-6 || std::lround(K) != 0) continue;
            double p = rot.vectors.col(j).dot(par.cwiseProduct(rot.vectors.col(j)));
            if (p > 0) even_sel.push_back(rot.energies[j] - 0.5);
        }
    }
    VectorXd E_even = Eigen::Map<VectorXd>(even_sel.data(), long(even_sel.size()));
    // (i)/(ii) on the even tower; (iii) = Y diagonal over the whole sector
    ResonanceReport rep = check_conditions(E_even, {}, cfg.res_tol);
    double y_diag = dec.Y_rel.rows() > 0 ? dec.Y_rel.diagonal().cwiseAbs().maxCoeff() : 0.0;
    bool met = rep.conditions_met() && y_diag <= 1e-10;
    std::string csv = "name,value\n";
    csv += "sector_dim," + std::to_string(dec.n_rel) + "\n";
    csv += "even_levels," + std::to_string(int(E_even.size())) + "\n";
    csv += "degenerate_pairs," + std::to_string(rep.degenerate_pairs.size()) + "\n";
    csv += "quadruplet_resonances," + std::to_string(rep.quadruplet_resonances) + "\n";
    csv += "diag_residual," + fmt(y_diag) + "\n";
    csv += std::string("conditions_met,") + (met ? "1" : "0") + "\n";
    write_atomic(std::filesystem::path(cfg.out_dir) / "check.csv", csv);
    Manifest m;
    m.add("tol_resonance", rep.tol_resonance);
    m.add("tol_degeneracy", rep.tol_degeneracy);
    m.add("conditions_met", met ? "yes" : "no");
    m.add("note", "odd relative tower excluded: free integer spacings");
    write_manifest(cfg, "check", std::move(m), t0);
    if (!met) throw std::runtime_error("check: conditions (i)-(iii) violated; see check.csv");
    return 0;
}

inline int cmd_sweep(const RunConfig& cfg, std::vector<int> Ns, std::vector<double> gammas,
                     double e_cut_pair, double e_cut_many, bool with_otoc) {
    validate(cfg);
    auto t0 = std::chrono::steady_clock::now();
    SweepRequest req;
    if (!Ns.empty()) req.Ns = std::move(Ns);
    if (!gammas.empty()) req.gammas = std::move(gammas);
    req.g = cfg.g;
    req.completeness_gate = cfg.gate;
    req.with_otoc = with_otoc;
    req.e_cut_for_N = [e_cut_pair, e_cut_many](int N) {
        return N <= 2 ? e_cut_pair : e_cut_many;
    };
    for (int N : req.Ns)
        if (N < 1 || N > 6) throw std::invalid_argument("sweep: every N must lie in [1,6]");
    for (double ga : req.gammas)
        if (!(ga >= 0.25 && ga <= 4.0))
            throw std::invalid_argument("sweep: every gamma must lie in [0.25,4]");

    SweepTable tab;
    if (cfg.jobs <= 1) {
        tab = sweep(req);
    } else {
        // worker pool over grid points; rows land in deterministic order
        struct Job {
            int N;
            double gamma;
        };
        std::vector<Job> jobs_list;
        for (int N : req.Ns)
            for (double ga : req.gammas) jobs_list.push_back({N, ga});
        tab.rows.resize(jobs_list.size());
        std::mutex mx;
        std::size_t next = 0;
        auto worker = [&]() {
            for (;;) {
                std::size_t i;
                {
                    std::lock_guard<std::mutex> lk(mx);
                    if (next >= jobs_list.size()) return;
                    i = next++;
                }
                SweepRequest one = req;
                one.Ns = {jobs_list[i].N};
                one.gammas = {jobs_list[i].gamma};
                SweepTable t = sweep(one);
                tab.rows[i] = t.rows.at(0);
            }
        };
        std::vector<std::thread> pool;
        for (int k = 0; k < cfg.jobs; ++k) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    std::string csv = "N,g,gamma,e_cut,var_w,c_bar,completeness,method,error\n";
    for (const auto& r : tab.rows) {
        std::string err = r.error;
        for (auto& ch : err)
            if (ch == ',' || ch == '\n') ch = ';';
        csv += std::to_string(r.N) + "," + fmt(r.g) + "," + fmt(r.gamma) + "," + fmt(r.e_cut) +
               "," + fmt(r.var_w) + "," + fmt(r.c_bar) + "," + fmt(r.completeness) + "," +
               r.method + "," + err + "\n";
    }
    write_atomic(std::filesystem::path(cfg.out_dir) / "sweep.csv", csv);
    maybe_plot_script(cfg, "sweep.csv", "work variance vs gamma", "3:5");
    int failed = 0;
    for (const auto& r : tab.rows)
        if (!r.error.empty()) ++failed;
    Manifest m;
    m.add("rows", int(tab.rows.size()));
    m.add("failed_rows", failed);
    m.add("with_otoc", with_otoc ? "yes" : "no");
    write_manifest(cfg, "sweep", std::move(m), t0);
    return 0;
}

inline SweepTable read_sweep_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::invalid_argument("fit: cannot read " + file.string());
    SweepTable tab;
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("fit: empty sweep file");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 8) throw std::invalid_argument("fit: malformed sweep row: " + line);
        SweepRow r;
        r.N = std::stoi(cells[0]);
        r.g = std::stod(cells[1]);
        r.gamma = std::stod(cells[2]);
        r.e_cut = std::stod(cells[3]);
        r.var_w = std::stod(cells[4]);
        r.c_bar = std::stod(cells[5]);
        r.completeness = std::stod(cells[6]);
        r.method = cells[7];
        if (cells.size() > 8) r.error = cells[8];
        tab.rows.push_back(r);
    }
    return tab;
}

inline int cmd_fit(const RunConfig& cfg, const std::string& input, const std::string& form,
                   int relation_N) {
    validate(cfg);
    auto t0 = std::chrono::steady_clock::now();
    SweepTable tab = read_sweep_csv(input);
    std::string csv = "name,value\n";
    Manifest m;
    m.add("input", input);
    m.add("form", form);
    if (form == "work" || form == "otoc") {
        auto which = (form == "work") ? FitObservable::work : FitObservable::otoc;
        ScalingFit fit = fit_scaling(tab, which);
        csv += "b," + fmt(fit.b) + "\n";
        csv += "lambda," + fmt(fit.lambda) + "\n";
        csv += "k," + fmt(fit.k) + "\n";
        csv += "residual_rms," + fmt(fit.residual_rms) + "\n";
        csv += std::string("converged,") + (fit.converged ? "1" : "0") + "\n";
        csv += std::string("singular_warning,") + (fit.singular_warning ? "1" : "0") + "\n";
        for (int i = 0; i < fit.covariance.rows(); ++i)
            for (int j = 0; j < fit.covariance.cols(); ++j)
                csv += "cov_" + std::to_string(i) + std::to_string(j) + "," +
                       fmt(fit.covariance(i, j)) + "\n";
        m.add("iterations", fit.iterations);
        if (fit.singular_warning) m.add("warning", "singular Jacobian; best-so-far returned");
    } else if (form == "linear") {
        LinearRelation lr = linear_relation(tab, relation_N);
        csv += "slope," + fmt(lr.slope) + "\n";
        csv += "intercept," + fmt(lr.intercept) + "\n";
        csv += "r2," + fmt(lr.r2) + "\n";
        csv += "points," + std::to_string(lr.n) + "\n";
        m.add("N", relation_N);
    } else {
        throw std::invalid_argument("fit: form must be work, otoc or linear");
    }
    write_atomic(std::filesystem::path(cfg.out_dir) / "fit.csv", csv);
    write_manifest(cfg, "fit", std::move(m), t0);
    return 0;
}

// ---------- dispatch ----------

inline void add_common(CLI::App* app, RunConfig& cfg, std::string& config_path) {
    app->add_option("--N", cfg.N, "particle number (1..6)");
    app->add_option("--g", cfg.g, "interaction strength (>= 0)");
    app->add_option("--gamma", cfg.gamma, "initial trap strength (0.25..4)");
    app->add_option("--e-cut", cfg.e_cut, "energy cutoff of the working space");
    app->add_option("--n-orb", cfg.n_orb, "orbital override (0 = derive from e-cut)");
    app->add_option("--mode", cfg.mode, "interaction mode: bare|effective");
    app->add_option("--op-a", cfg.op_a, "first operator: x1|ip1");
    app->add_option("--op-b", cfg.op_b, "second operator: x1|ip1");
    app->add_option("--T", cfg.T, "time window length");
    app->add_option("--dt", cfg.dt, "time step (0 = auto)");
    app->add_option("--trap", cfg.trap, "trap strength for spectrum (0.25..4)");
    app->add_option("--res-tol", cfg.res_tol, "resonance tolerance");
    app->add_option("--gate", cfg.gate, "completeness gate");
    app->add_option("--out", cfg.out_dir, "output directory");
    app->add_option("--cache-dir", cfg.cache_dir, "cache directory (overrides OSCQ_CACHE_DIR)");
    app->add_option("--jobs", cfg.jobs, "worker pool size for sweeps");
    app->add_flag("--emit-plot-script", cfg.plot_script, "write a gnuplot script per CSV");
    app->add_option("--config", config_path, "key = value configuration file; flags win");
}

// key = value lines, '#' comments; applied before flag parsing so flags win.
// Handled here rather than through CLI11's set_config, which only fires on
// the top-level app, not on subcommands.
inline void apply_config_file(const std::string& path, RunConfig& cfg, std::vector<int>& Ns,
                              std::vector<double>& gammas) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot read " + path);
    auto trim = [](std::string s) {
        std::size_t a = s.find_first_not_of(" \t\r");
        std::size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    auto unquote = [](std::string s) {
        if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                              (s.front() == '\'' && s.back() == '\'')))
            return s.substr(1, s.size() - 2);
        return s;
    };
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
        line = trim(line);
        if (line.empty() || line.front() == '[') continue;  // sections ignored
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not key = value");
        std::string key = trim(line.substr(0, eq));
        std::string val = unquote(trim(line.substr(eq + 1)));
        for (auto& ch : key)
            if (ch == '_') ch = '-';
        try {
            if (key == "N") cfg.N = std::stoi(val);
            else if (key == "g") cfg.g = std::stod(val);
            else if (key == "gamma") cfg.gamma = std::stod(val);
            else if (key == "e-cut") cfg.e_cut = std::stod(val);
            else if (key == "n-orb") cfg.n_orb = std::stoi(val);
            else if (key == "mode") cfg.mode = val;
            else if (key == "op-a") cfg.op_a = val;
            else if (key == "op-b") cfg.op_b = val;
            else if (key == "T") cfg.T = std::stod(val);
            else if (key == "dt") cfg.dt = std::stod(val);
            else if (key == "trap") cfg.trap = std::stod(val);
            else if (key == "res-tol") cfg.res_tol = std::stod(val);
            else if (key == "gate") cfg.gate = std::stod(val);
            else if (key == "out") cfg.out_dir = val;
            else if (key == "cache-dir") cfg.cache_dir = val;
            else if (key == "jobs") cfg.jobs = std::stoi(val);
            else if (key == "emit-plot-script") cfg.plot_script = (val == "true" || val == "1");
            else if (key == "Ns" || key == "gammas") {
                std::stringstream ss(val);
                std::string tok;
                if (key == "Ns") Ns.clear();
                else gammas.clear();
                while (ss >> tok) {
                    if (!tok.empty() && tok.back() == ',') tok.pop_back();
                    if (key == "Ns") Ns.push_back(std::stoi(tok));
                    else gammas.push_back(std::stod(tok));
                }
            } else {
                throw std::invalid_argument("config: unknown key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("config: bad value for '" + key + "' on line " +
                                        std::to_string(lineno));
        }
    }
}

inline int cli_main(int argc, char** argv) {
    // accept bare KEY=VALUE tokens as --KEY=VALUE; CLI11's vector overload
    // wants the arguments reversed
    std::vector<std::string> args;
    for (int i = argc - 1; i >= 1; --i) {
        std::string a = argv[i];
        if (!a.empty() && a[0] != '-' && a.find('=') != std::string::npos) a = "--" + a;
        args.push_back(std::move(a));
    }

    CLI::App app{"harmonic-trap quench work statistics and OTOC pipelines"};
    app.require_subcommand(1);
    RunConfig cfg;
    std::string config_path;

    std::string limit_kind = "g0";
    auto* limits = app.add_subcommand("limits", "closed-form variance limits");
    add_common(limits, cfg, config_path);
    limits->add_option("--limit", limit_kind, "g0|tg");

    auto* spectrum = app.add_subcommand("spectrum", "eigenvalues of H(g, trap)");
    add_common(spectrum, cfg, config_path);
    auto* quench = app.add_subcommand("quench", "initial state and overlaps");
    add_common(quench, cfg, config_path);
    auto* work = app.add_subcommand("work", "work probability distribution");
    add_common(work, cfg, config_path);
    auto* otoc = app.add_subcommand("otoc", "time series of D, I, F, C");
    add_common(otoc, cfg, config_path);
    auto* avg = app.add_subcommand("avg", "infinite-time averages via the CM x REL split");
    add_common(avg, cfg, config_path);
    auto* check = app.add_subcommand("check", "audit conditions (i)-(iii) on the relative sector");
    add_common(check, cfg, config_path);

    std::vector<int> sweep_Ns;
    std::vector<double> sweep_gammas;
    double e_cut_pair = 30.0, e_cut_many = 17.0;
    bool work_only = false;
    auto* sweepc = app.add_subcommand("sweep", "grid of quench runs over N and gamma");
    add_common(sweepc, cfg, config_path);
    sweepc->add_option("--Ns", sweep_Ns, "particle numbers");
    sweepc->add_option("--gammas", sweep_gammas, "gamma grid");
    sweepc->add_option("--e-cut-pair", e_cut_pair, "cutoff for N <= 2");
    sweepc->add_option("--e-cut-many", e_cut_many, "cutoff for N >= 3");
    sweepc->add_flag("--work-only", work_only, "skip the OTOC column");

    std::string fit_input = "sweep.csv", fit_form = "work";
    int relation_N = 2;
    auto* fit = app.add_subcommand("fit", "scaling fits over a sweep table");
    add_common(fit, cfg, config_path);
    fit->add_option("--input", fit_input, "sweep CSV path");
    fit->add_option("--form", fit_form, "work|otoc|linear");
    fit->add_option("--relation-N", relation_N, "N for the linear relation");

    // seed defaults from the config file before the flag parse (flags win);
    // args is reversed at this point
    try {
        for (std::size_t i = args.size(); i-- > 0;) {
            if (args[i] == "--config" && i > 0)
                apply_config_file(args[i - 1], cfg, sweep_Ns, sweep_gammas);
            else if (args[i].rfind("--config=", 0) == 0)
                apply_config_file(args[i].substr(9), cfg, sweep_Ns, sweep_gammas);
        }
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }

    try {
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*limits) return cmd_limits(cfg, limit_kind);
        if (*spectrum) return cmd_spectrum(cfg);
        if (*quench) return cmd_quench(cfg);
        if (*work) return cmd_work(cfg);
        if (*otoc) return cmd_otoc(cfg);
        if (*avg) return cmd_avg(cfg);
        if (*check) return cmd_check(cfg);
        if (*sweepc)
            return cmd_sweep(cfg, sweep_Ns, sweep_gammas, e_cut_pair, e_cut_many, !work_only);
        if (*fit) return cmd_fit(cfg, fit_input, fit_form, relation_N);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical gate: %s\n", e.what());
        return 3;
    }
    return 2;
}

}  // namespace cli
}  // namespace oscq
