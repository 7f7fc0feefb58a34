#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "loco/config.hpp"

using loco::KeyValueConfig;

TEST_CASE("sections, comments and whitespace parse") {
    auto cfg = KeyValueConfig::parse(
        "# top comment\n"
        "global = 1\n"
        "[env]\n"
        "scenario = thin   # trailing comment\n"
        "depth =  16\n"
        "\n"
        "[ppo]\n"
        "lr = 2e-4\n"
        "salt = true\n");
    CHECK(cfg.get("global", 0) == 1);
    CHECK(cfg.get("env.scenario", std::string()) == "thin");
    CHECK(cfg.get("env.depth", 0) == 16);
    CHECK(cfg.get("ppo.lr", 0.0) == doctest::Approx(2e-4));
    CHECK(cfg.get("ppo.salt", false) == true);
    CHECK(!cfg.has("env.missing"));
    CHECK(cfg.get("env.missing", 7) == 7);
}

TEST_CASE("malformed lines are rejected with line numbers") {
    CHECK_THROWS_AS(KeyValueConfig::parse("[env\nkey=1\n"), std::runtime_error);
    CHECK_THROWS_AS(KeyValueConfig::parse("justtext\n"), std::runtime_error);
    CHECK_THROWS_AS(KeyValueConfig::parse("= value\n"), std::runtime_error);
}

TEST_CASE("typed getters validate their values") {
    auto cfg = KeyValueConfig::parse("[a]\nx = hello\n");
    CHECK_THROWS_AS(cfg.get("a.x", 1), std::exception);
    CHECK_THROWS_AS(cfg.get("a.x", 1.0), std::exception);
    CHECK_THROWS_AS(cfg.get("a.x", true), std::runtime_error);
    CHECK(cfg.get("a.x", std::string("d")) == "hello");
}

TEST_CASE("missing files raise") {
    CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/p.cfg"), std::runtime_error);
}

TEST_CASE("seed lists parse and reject empties") {
    auto seeds = loco::parse_seed_list("1, 2,42");
    REQUIRE(seeds.size() == 3);
    CHECK(seeds[2] == 42);
    CHECK_THROWS_AS(loco::parse_seed_list(""), std::invalid_argument);
}
