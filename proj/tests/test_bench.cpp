#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "loco/bench.hpp"

TEST_CASE("benchmark covers every kernel on every grid point") {
    loco::BenchConfig cfg;
    cfg.token_grid = {64, 128};
    cfg.repeats = 2;
    auto rep = loco::bench_scan(cfg);
    CHECK(rep.rows.size() == 6);  // 3 kernels x 2 grid points
    for (const auto& r : rep.rows) {
        CHECK(r.mean_ns > 0);
        CHECK(r.p50_ns > 0);
        CHECK(r.p95_ns >= r.p50_ns);
        CHECK(r.repeats == 2);
    }
}

TEST_CASE("attention score-matrix bytes scale exactly quadratically") {
    loco::BenchConfig cfg;
    cfg.token_grid = {64, 128, 256};
    cfg.repeats = 1;
    auto rep = loco::bench_scan(cfg);
    CHECK(rep.mem_slope_attention == doctest::Approx(2.0).epsilon(1e-9));
    // blocked scan workspace is linear in the token count
    CHECK(rep.mem_slope_scan == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("csv output carries the documented header and slope footer") {
    loco::BenchConfig cfg;
    cfg.token_grid = {64, 128};
    cfg.repeats = 1;
    auto rep = loco::bench_scan(cfg);
    const std::string path = "bench_test_out.csv";
    loco::write_bench_csv(path, rep);
    std::ifstream in(path);
    REQUIRE(bool(in));
    std::string line;
    std::getline(in, line);
    CHECK(line == "kernel,tokens,repeats,mean_ns,p50_ns,p95_ns,peak_bytes");
    int rows = 0;
    bool footer = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '#')
            footer = true;
        else
            ++rows;
    }
    CHECK(rows == 6);
    CHECK(footer);
    std::remove(path.c_str());
}

TEST_CASE("degenerate grids are rejected") {
    loco::BenchConfig cfg;
    cfg.token_grid = {64};
    CHECK_THROWS_AS(loco::bench_scan(cfg), std::invalid_argument);
}
