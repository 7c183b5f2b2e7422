#include <catch2/catch_amalgamated.hpp>

#include "leibenson/run_config.hpp"

using namespace leibenson;

namespace {

const char* kMinimal = R"(# minimal run config
energy.p = 2
energy.gamma = 2
)";

}  // namespace

TEST_CASE("key-value parser: comments, whitespace, and diagnostics") {
    auto kv = KeyValueConfig::parse_text(
        "  energy.p = 2   # trailing comment\n"
        "\n"
        "# full-line comment\n"
        "output.dir=runs\n");
    REQUIRE(kv.get_double("energy.p") == 2.0);
    REQUIRE(kv.get_string("output.dir") == "runs");

    REQUIRE_THROWS_AS(KeyValueConfig::parse_text("energy.p\n"), ConfigError);
    REQUIRE_THROWS_AS(KeyValueConfig::parse_text("= 2\n"), ConfigError);
    try {
        KeyValueConfig::parse_text("a = 1\nbroken line\n", "cfg.txt");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(std::string(e.what()).find("cfg.txt:2") != std::string::npos);
    }
}

TEST_CASE("missing required key names the key") {
    auto kv = KeyValueConfig::parse_text("energy.gamma = 2\n");
    try {
        RunConfig::from_kv(kv);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(std::string(e.what()).find("energy.p") != std::string::npos);
    }
}

TEST_CASE("typed getters reject malformed values") {
    auto kv = KeyValueConfig::parse_text(
        "a = not_a_number\nb = 2.5\nc = maybe\nd = 1,2,,3\n");
    REQUIRE_THROWS_AS(kv.get_double("a"), ConfigError);
    REQUIRE_THROWS_AS(kv.get_int("b"), ConfigError);   // non-integral
    REQUIRE_THROWS_AS(kv.get_bool("c"), ConfigError);
    REQUIRE(kv.get_double_list("d") == std::vector<double>{1.0, 2.0, 3.0});
    REQUIRE(kv.get_double("missing", 7.0) == 7.0);
    REQUIRE(kv.get_bool("missing", true));
}

TEST_CASE("--set overrides replace file values") {
    auto kv = KeyValueConfig::parse_text(kMinimal);
    kv.apply_override("energy.p=3");
    kv.apply_override("energy.gamma = 4");
    kv.apply_override("initial.N = 20");
    REQUIRE_THROWS_AS(kv.apply_override("no_equals_sign"), ConfigError);
    auto rc = RunConfig::from_kv(kv);
    REQUIRE(rc.params.p == 3.0);
    REQUIRE(rc.N == 20);
}

TEST_CASE("cross-field validation rejects inadmissible power laws") {
    auto kv = KeyValueConfig::parse_text("energy.p = 2\nenergy.gamma = 0.5\n");
    REQUIRE_THROWS_AS(RunConfig::from_kv(kv), ConfigError);  // gamma + 1 - p <= 0
    auto kv2 = KeyValueConfig::parse_text("energy.p = 1\nenergy.gamma = 2\n");
    REQUIRE_THROWS_AS(RunConfig::from_kv(kv2), ConfigError);
}

TEST_CASE("defaults fill a minimal config") {
    auto rc = RunConfig::from_kv(KeyValueConfig::parse_text(kMinimal));
    REQUIRE(rc.params.p == 2.0);
    REQUIRE(rc.interval_domain);
    REQUIRE(rc.domain_l == 1.0);
    REQUIRE(rc.density == "uniform");
    REQUIRE(rc.N == 50);
    REQUIRE(rc.integrator.scheme == IntegratorSpec::Scheme::explicit_descent);
    REQUIRE(rc.integrator.pinned);  // interval domain defaults to pinned
    REQUIRE(rc.pde_M == 512);
    REQUIRE(rc.workers == 1);

    auto rho = rc.initial_density();
    REQUIRE(rho.eval(0.0) == Catch::Approx(0.5));
    REQUIRE(rho.mass() == Catch::Approx(1.0));
}

TEST_CASE("explicit particle lists override the density") {
    auto kv = KeyValueConfig::parse_text(kMinimal);
    kv.apply_override("initial.particles = -1, -0.2, 0.4, 1");
    auto rc = RunConfig::from_kv(kv);
    REQUIRE(rc.particles.size() == 4);

    kv.apply_override("initial.particles = -1, 0.4, 0.4, 1");
    REQUIRE_THROWS_AS(RunConfig::from_kv(kv), ConfigError);  // not increasing
}

TEST_CASE("integrator and study blocks resolve and validate") {
    auto kv = KeyValueConfig::parse_text(kMinimal);
    kv.apply_override("integrator.scheme = minimizing_movement");
    kv.apply_override("integrator.dt = 5e-4");
    kv.apply_override("integrator.t_end = 0.05");
    kv.apply_override("study.kind = edi_residual");
    kv.apply_override("study.N_list = 25,50");
    kv.apply_override("study.t_samples = 0.05");
    kv.apply_override("study.t_end = 0.05");
    auto rc = RunConfig::from_kv(kv);
    REQUIRE(rc.integrator.scheme == IntegratorSpec::Scheme::minimizing_movement);
    REQUIRE(rc.integrator.dt == 5e-4);
    REQUIRE(rc.study.study == StudySpec::Kind::edi_residual);
    REQUIRE(rc.study.N_list == std::vector<int>{25, 50});
    REQUIRE(rc.study.params.p == rc.params.p);

    kv.apply_override("study.kind = bogus");
    REQUIRE_THROWS_AS(RunConfig::from_kv(kv), ConfigError);
    kv.apply_override("study.kind = edi_residual");
    kv.apply_override("integrator.dt = 1.0");  // dt > t_end
    REQUIRE_THROWS_AS(RunConfig::from_kv(kv), ConfigError);
}

TEST_CASE("unused keys are reported") {
    auto kv = KeyValueConfig::parse_text("energy.p = 2\nenergy.gamma = 2\ntypo.key = 1\n");
    RunConfig::from_kv(kv);
    auto unused = kv.unused_keys();
    REQUIRE(unused == std::vector<std::string>{"typo.key"});
}
