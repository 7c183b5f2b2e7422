#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "leibenson/transport_tools.hpp"

using namespace leibenson;

namespace {

// Brute-force optimal assignment cost over permutations (equal counts).
double assignment_wp(const std::vector<double>& a, const std::vector<double>& b, double p) {
    std::vector<std::size_t> perm(a.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    double best = kInf;
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i)
            c += std::pow(std::abs(a[i] - b[perm[i]]), p);
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return std::pow(best / static_cast<double>(a.size()), 1.0 / p);
}

DensityProfile parabola() {
    return DensityProfile::from_function(
        [](double x) { return 0.75 * (1.0 - x * x); }, -1.0, 1.0,
        [](double x) { return -1.5 * x; });
}

}  // namespace

TEST_CASE("density profile mass, cdf and quantile round trip") {
    auto rho = parabola();
    REQUIRE(rho.mass() == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(rho.cdf(0.0) == Catch::Approx(0.5).epsilon(1e-10));
    for (double x : {-0.9, -0.4, 0.0, 0.3, 0.77})
        REQUIRE(rho.quantile(rho.cdf(x)) == Catch::Approx(x).margin(1e-8));
    REQUIRE_THROWS_AS(rho.quantile(1.5), std::domain_error);
}

TEST_CASE("piecewise-constant profile with vacuum cell") {
    auto rho = DensityProfile::piecewise_constant({0.0, 1.0, 2.0, 3.0}, {0.5, 0.0, 0.5});
    REQUIRE(rho.mass() == Catch::Approx(1.0));
    REQUIRE(rho.cdf(1.5) == Catch::Approx(0.5));
    REQUIRE(rho.quantile(0.25) == Catch::Approx(0.5).margin(1e-10));
    // Quantile jumps across the vacuum cell.
    REQUIRE(rho.quantile(0.5 + 1e-9) >= 2.0 - 1e-6);
}

TEST_CASE("block density geometry and exact mass") {
    auto cfg = ParticleConfig::create({0.0, 1.0, 3.0}, DomainSpec::whole_line());
    auto rho = block_density(cfg);
    REQUIRE(rho.mass() == Catch::Approx(1.0).epsilon(1e-12));
    // B_2 has radius 1/2 around 1; B_3 radius 1 around 3.
    REQUIRE(rho.eval(1.2) == Catch::Approx(1.0 / 3.0));
    REQUIRE(rho.eval(3.6) == Catch::Approx(1.0 / 6.0));
    REQUIRE(rho.eval(1.8) == 0.0);  // between the balls

    auto uni = block_density(ParticleConfig::create({0.0, 1.0, 2.0, 3.0},
                                                    DomainSpec::whole_line()));
    REQUIRE(uni.mass() == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(uni.eval(1.4) == Catch::Approx(0.25));
}

TEST_CASE("narrow-convergence proxy: test functions move by at most max ball") {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> gap(0.1, 1.0);
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<double> x{0.0};
        for (int i = 1; i < 8; ++i) x.push_back(x.back() + gap(rng));
        auto cfg = ParticleConfig::create(x, DomainSpec::whole_line());
        auto rho = block_density(cfg);
        double max_ball = 0.0;
        for (int i = 1; i <= cfg.size(); ++i)
            max_ball = std::max(max_ball, cfg.ball_size(i));
        for (double lip : {1.0, 3.0}) {
            auto phi = [lip](double t) { return lip * std::abs(t - 0.4); };
            double ip = 0.0;
            for (int i = 1; i <= cfg.size(); ++i) ip += phi(cfg.pos(i));
            ip /= cfg.size();
            double id = detail::adaptive_gauss(
                [&](double t) { return phi(t) * rho.eval(t); },
                rho.support_lo(), rho.support_hi(), 1e-10);
            REQUIRE(std::abs(id - ip) <= lip * max_ball + 1e-8);
        }
    }
}

TEST_CASE("wasserstein distance between particle sets") {
    double p = 2.0;
    auto a = ParticleConfig::create({0.0, 1.0}, DomainSpec::whole_line());
    auto b = ParticleConfig::create({0.5, 1.5}, DomainSpec::whole_line());
    REQUIRE(wasserstein_p(a, b, p) == Catch::Approx(0.5));
    REQUIRE(wasserstein_p(a, a, p) == 0.0);

    std::mt19937 rng(17);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (double pp : {1.5, 2.0, 3.0}) {
        for (int rep = 0; rep < 10; ++rep) {
            int n = 2 + static_cast<int>(rng() % 5);
            std::vector<double> xa, xb;
            for (int i = 0; i < n; ++i) { xa.push_back(u(rng)); xb.push_back(u(rng)); }
            std::sort(xa.begin(), xa.end());
            std::sort(xb.begin(), xb.end());
            if (std::adjacent_find(xa.begin(), xa.end()) != xa.end()) continue;
            auto ca = ParticleConfig::create(xa, DomainSpec::whole_line());
            auto cb = ParticleConfig::create(xb, DomainSpec::whole_line());
            REQUIRE(wasserstein_p(ca, cb, pp) ==
                    Catch::Approx(assignment_wp(xa, xb, pp)).epsilon(1e-9));
        }
    }
}

TEST_CASE("wasserstein triangle inequality and symmetry on random triples") {
    std::mt19937 rng(29);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    double p = 2.0;
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<std::vector<double>> xs(3);
        for (auto& v : xs) {
            for (int i = 0; i < 5; ++i) v.push_back(u(rng));
            std::sort(v.begin(), v.end());
        }
        auto a = ParticleConfig::create(xs[0], DomainSpec::whole_line());
        auto b = ParticleConfig::create(xs[1], DomainSpec::whole_line());
        auto c = ParticleConfig::create(xs[2], DomainSpec::whole_line());
        REQUIRE(wasserstein_p(a, b, p) == Catch::Approx(wasserstein_p(b, a, p)));
        REQUIRE(wasserstein_p(a, c, p) <=
                wasserstein_p(a, b, p) + wasserstein_p(b, c, p) + 1e-9);
    }
}

TEST_CASE("particle set stays within one ball of its block density") {
    auto cfg = ParticleConfig::create({0.0, 1.0, 3.0, 3.5}, DomainSpec::whole_line());
    double max_ball = 0.0;
    for (int i = 1; i <= cfg.size(); ++i)
        max_ball = std::max(max_ball, cfg.ball_size(i));
    REQUIRE(wasserstein_p(cfg, block_density(cfg), 2.0) <= max_ball);
}

TEST_CASE("continuum energy closed forms") {
    auto mdl = power_law_model(FlowParams::make(2.0, 2.0));  // H(u) = u^2
    auto uni01 = DensityProfile::piecewise_linear({0.0, 1.0}, {1.0, 1.0});
    REQUIRE(continuum_energy(uni01, mdl) == Catch::Approx(1.0).epsilon(1e-10));
    double l = 0.8;
    auto unil = DensityProfile::piecewise_linear({-l, l},
                                                 {1.0 / (2.0 * l), 1.0 / (2.0 * l)});
    REQUIRE(continuum_energy(unil, mdl) == Catch::Approx(mdl.h(2.0 * l)).epsilon(1e-10));
    REQUIRE(continuum_energy(parabola(), mdl) == Catch::Approx(0.6).epsilon(1e-9));
}

TEST_CASE("fisher information: uniform is zero, parabola is 9/5") {
    auto params = FlowParams::make(2.0, 2.0);
    auto mdl = power_law_model(params);
    auto uni = DensityProfile::piecewise_linear({-1.0, 1.0}, {0.5, 0.5});
    REQUIRE(fisher_information(uni, mdl, params).value == Catch::Approx(0.0).margin(1e-12));
    auto res = fisher_information(parabola(), mdl, params);
    REQUIRE(res.value == Catch::Approx(1.8).epsilon(1e-6));
}

TEST_CASE("fisher scaling inequality from the homogeneity minorant") {
    auto params = FlowParams::make(2.0, 2.0);
    auto mdl = power_law_model(params);
    auto rho = parabola();
    double base = fisher_information(rho, mdl, params).value;
    for (double m : {0.9, 0.95, 1.05, 1.1}) {
        auto scaled = DensityProfile::from_function(
            [m](double x) { return m * 0.75 * (1.0 - x * x); }, -1.0, 1.0,
            [m](double x) { return -m * 1.5 * x; });
        double lhs = fisher_information(scaled, mdl, params).value;
        double rhs = std::pow(m, params.p + 1.0) * std::pow(mdl.f(m), params.p) * base;
        REQUIRE(lhs >= rhs - 1e-9 * std::max(1.0, rhs));
    }
}

TEST_CASE("smooth-set certificate") {
    auto uni = DensityProfile::piecewise_linear({-1.0, 1.0}, {0.5, 0.5});
    auto cert = certify_smooth_set(uni);
    REQUIRE(cert.r == 1.0);
    REQUIRE(cert.min_density == Catch::Approx(0.5));
    REQUIRE_THROWS_AS(certify_smooth_set(parabola()), std::invalid_argument);  // touches 0
    auto shifted = DensityProfile::piecewise_linear({0.0, 2.0}, {0.5, 0.5});
    REQUIRE_THROWS_AS(certify_smooth_set(shifted), std::invalid_argument);
}

TEST_CASE("recovery sequence of the uniform density") {
    auto uni = DensityProfile::piecewise_linear({-1.0, 1.0}, {0.5, 0.5});
    auto cert = certify_smooth_set(uni);
    auto rec = recovery_sequence(uni, cert, 4, DomainSpec::interval(1.0));
    REQUIRE(rec.cfg.pos(1) == -1.0);
    REQUIRE(rec.cfg.pos(2) == Catch::Approx(-0.25).margin(1e-9));
    REQUIRE(rec.cfg.pos(3) == Catch::Approx(0.25).margin(1e-9));
    REQUIRE(rec.cfg.pos(4) == 1.0);
    REQUIRE(rec.a1 > 0.0);
    REQUIRE(rec.a2 >= rec.a1);
}

TEST_CASE("recovery sequence converges in energy and distance") {
    auto mdl = power_law_model(FlowParams::make(2.0, 2.0));
    auto uni = DensityProfile::piecewise_linear({-1.0, 1.0}, {0.5, 0.5});
    auto cert = certify_smooth_set(uni);
    double prev_gap = kInf, prev_w = kInf;
    for (int n : {8, 16, 32, 64, 128, 256, 512}) {
        auto rec = recovery_sequence(uni, cert, n, DomainSpec::interval(1.0));
        double gap = std::abs(discrete_energy(rec.cfg, mdl) - 0.5);
        double w = wasserstein_p(rec.cfg, uni, 2.0);
        REQUIRE(gap <= prev_gap);
        REQUIRE(w <= prev_w);
        REQUIRE(gap <= 3.0 / n);  // measured O(1/N) constant with headroom
        prev_gap = gap;
        prev_w = w;
    }
}

TEST_CASE("interpolant of a uniform pinned configuration is flat") {
    auto mdl = power_law_model(FlowParams::make(2.0, 2.0));
    int n = 5;
    auto cfg = ParticleConfig::create({-1.0, -0.5, 0.0, 0.5, 1.0},
                                      DomainSpec::interval(1.0), true);
    Interpolant itp(cfg, mdl);
    REQUIRE(itp.normalization() == Catch::Approx((n - 1.0) / n).epsilon(1e-10));
    double d = 0.5;
    for (double x : {-0.8, -0.2, 0.1, 0.9})
        REQUIRE(itp.rho_tilde(x) ==
                Catch::Approx(1.0 / (itp.normalization() * n * d)).epsilon(1e-10));
}

TEST_CASE("interpolant cell bracket on random configs") {
    std::mt19937 rng(41);
    std::uniform_real_distribution<double> gap(0.1, 1.2);
    auto mdl = power_law_model(FlowParams::make(2.0, 2.0));
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> x{0.0};
        for (int i = 1; i < 7; ++i) x.push_back(x.back() + gap(rng));
        auto cfg = ParticleConfig::create(x, DomainSpec::whole_line());
        Interpolant itp(cfg, mdl);
        const int n = cfg.size();
        for (int i = 1; i < n; ++i) {
            double lo = n * std::min(cfg.gap(i), cfg.gap(i + 1));
            double hi = n * std::max(cfg.gap(i), cfg.gap(i + 1));
            for (int k = 1; k < 10; ++k) {
                double xx = cfg.pos(i) + (cfg.pos(i + 1) - cfg.pos(i)) * k / 10.0;
                double pv = itp.dual_value(xx);
                if (!(pv > 0.0)) continue;  // infinite-gap cell end
                double w = mdl.psi_inverse(pv);
                REQUIRE(w >= lo - 1e-10 * hi);
                if (std::isfinite(hi)) REQUIRE(w <= hi + 1e-10 * hi);
            }
        }
    }
}

TEST_CASE("interpolant tracks the density along recovery sequences") {
    auto mdl = power_law_model(FlowParams::make(2.0, 2.0));
    auto uni = DensityProfile::piecewise_linear({-1.0, 1.0}, {0.5, 0.5});
    auto cert = certify_smooth_set(uni);
    double prev = kInf;
    for (int n : {16, 64, 256}) {
        auto rec = recovery_sequence(uni, cert, n, DomainSpec::interval(1.0));
        Interpolant itp(rec.cfg, mdl);
        double w1 = wasserstein_p(itp.as_profile(), uni, 1.0);
        REQUIRE(w1 < prev);
        prev = w1;
    }
    REQUIRE(prev < 0.02);
}
