#pragma once

// Scaling benchmark: wall time of the sequential scan, blocked parallel scan,
// and a self-attention layer over a shared token-count grid, plus log-log
// slope fits backing the near-linear-vs-quadratic complexity comparison.

#include <string>
#include <vector>

namespace loco {

struct BenchRow {
    std::string kernel;  // scan_seq | scan_par | attention
    int tokens = 0;
    int repeats = 0;
    double mean_ns = 0;
    double p50_ns = 0;
    double p95_ns = 0;
    size_t peak_bytes = 0;  // scan workspace / attention score matrix
};

struct BenchConfig {
    std::vector<int> token_grid = {64, 128, 256, 512, 1024};
    int repeats = 7;
    int token_width = 32;  // d; slopes are measured in the pre-asymptotic regime
    int state_dim = 8;
    int heads = 2;
    uint64_t seed = 1234;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    double slope_scan_seq = 0;   // log-log time slopes
    double slope_scan_par = 0;
    double slope_attention = 0;
    double mem_slope_scan = 0;       // parallel-scan workspace bytes
    double mem_slope_attention = 0;  // score-matrix bytes
};

BenchReport bench_scan(const BenchConfig& cfg);

void write_bench_csv(const std::string& path, const BenchReport& report);

}  // namespace loco
