#include "loco/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

#include "loco/attention.hpp"
#include "loco/scan.hpp"
#include "loco/stats.hpp"

namespace loco {

namespace {

using Clock = std::chrono::steady_clock;

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * (v.size() - 1);
    const size_t i = static_cast<size_t>(pos);
    const double f = pos - i;
    if (i + 1 >= v.size()) return v.back();
    return v[i] * (1 - f) + v[i + 1] * f;
}

BenchRow summarize(const std::string& kernel, int tokens, const std::vector<double>& ns,
                   size_t peak_bytes) {
    BenchRow row;
    row.kernel = kernel;
    row.tokens = tokens;
    row.repeats = static_cast<int>(ns.size());
    double sum = 0;
    for (double t : ns) sum += t;
    row.mean_ns = sum / ns.size();
    row.p50_ns = quantile(ns, 0.5);
    row.p95_ns = quantile(ns, 0.95);
    row.peak_bytes = peak_bytes;
    return row;
}

// Each timed sample batches enough invocations to reach ~2 ms so that fast
// kernels are not dominated by timer resolution and scheduler jitter.
template <class F>
std::vector<double> time_repeats(int repeats, F&& fn) {
    const auto w0 = Clock::now();
    fn();  // warm-up doubles as a cost estimate
    const double est_ns =
        double(std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - w0).count());
    const int iters = std::clamp(int(2e6 / std::max(est_ns, 1.0)), 1, 20000);
    std::vector<double> ns;
    ns.reserve(static_cast<size_t>(repeats));
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = Clock::now();
        for (int i = 0; i < iters; ++i) fn();
        const auto t1 = Clock::now();
        ns.push_back(
            double(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()) / iters);
    }
    return ns;
}

double slope_of(const std::vector<BenchRow>& rows, const std::string& kernel, bool memory) {
    std::vector<double> xs, ys;
    for (const auto& r : rows)
        if (r.kernel == kernel) {
            xs.push_back(std::log(double(r.tokens)));
            ys.push_back(std::log(memory ? double(r.peak_bytes) : r.p50_ns));
        }
    return ls_slope(xs, ys);
}

}  // namespace

BenchReport bench_scan(const BenchConfig& cfg) {
    if (cfg.token_grid.size() < 2) throw std::invalid_argument("bench: need a grid");
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> ua(0.05, 0.95);  // stable decay factors
    std::normal_distribution<double> nb;
    const int lanes = cfg.token_width * cfg.state_dim;

    BenchReport rep;
    AttnConfig acfg;
    acfg.token_width = cfg.token_width;
    acfg.heads = cfg.heads;
    acfg.layers = 1;
    acfg.ff_hidden = cfg.token_width;
    auto attn = init_attn<double>(acfg, rng);

    for (int K : cfg.token_grid) {
        std::vector<double> a(size_t(K) * lanes), b(size_t(K) * lanes), x0(size_t(lanes), 0.0),
            states(size_t(K) * lanes);
        for (auto& v : a) v = ua(rng);
        for (auto& v : b) v = nb(rng);

        auto seq_ns = time_repeats(cfg.repeats, [&]() {
            scan_sequential(a.data(), b.data(), x0.data(), states.data(), K, lanes);
        });
        rep.rows.push_back(summarize("scan_seq", K, seq_ns, 0));

        size_t ws = 0;
        auto par_ns = time_repeats(cfg.repeats, [&]() {
            scan_parallel(a.data(), b.data(), x0.data(), states.data(), K, lanes, 32, &ws);
        });
        rep.rows.push_back(summarize("scan_par", K, par_ns, ws));

        std::vector<double> tok(size_t(K) * cfg.token_width);
        for (auto& v : tok) v = nb(rng);
        TensorT<double> tokens = TensorT<double>::from({K, cfg.token_width}, tok);
        auto attn_ns = time_repeats(cfg.repeats, [&]() {
            attn_layer<double>(nullptr, tokens, attn.layers[0], acfg, 1);
        });
        const size_t score_bytes = size_t(cfg.heads) * K * K * sizeof(double);
        rep.rows.push_back(summarize("attention", K, attn_ns, score_bytes));
    }

    rep.slope_scan_seq = slope_of(rep.rows, "scan_seq", false);
    rep.slope_scan_par = slope_of(rep.rows, "scan_par", false);
    rep.slope_attention = slope_of(rep.rows, "attention", false);
    rep.mem_slope_scan = slope_of(rep.rows, "scan_par", true);
    rep.mem_slope_attention = slope_of(rep.rows, "attention", true);
    return rep;
}

void write_bench_csv(const std::string& path, const BenchReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("bench: cannot open " + path);
    out << "kernel,tokens,repeats,mean_ns,p50_ns,p95_ns,peak_bytes\n";
    for (const auto& r : report.rows)
        out << r.kernel << ',' << r.tokens << ',' << r.repeats << ',' << r.mean_ns << ','
            << r.p50_ns << ',' << r.p95_ns << ',' << r.peak_bytes << '\n';
    out << "# time slopes: scan_seq=" << report.slope_scan_seq
        << " scan_par=" << report.slope_scan_par << " attention=" << report.slope_attention
        << "\n# memory slopes: scan=" << report.mem_slope_scan
        << " attention=" << report.mem_slope_attention << '\n';
}

}  // namespace loco
