#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "leibenson/reference_pde.hpp"

using namespace leibenson;

namespace {

DensityProfile barenblatt_profile(double t, double l, int cells = 4096) {
    return DensityProfile::from_function(
        [t](double x) { return barenblatt_pme2(x, t); }, -l, l, {}, cells);
}

double l1_distance(const FvGrid& g, double t) {
    double s = 0.0;
    for (int j = 0; j < g.M; ++j)
        s += std::abs(g.u[static_cast<std::size_t>(j)] - barenblatt_pme2(g.center(j), t)) *
             g.dx();
    return s;
}

}  // namespace

TEST_CASE("grid restriction is mass exact") {
    auto rho = DensityProfile::from_function(
        [](double x) { return 0.75 * (1.0 - x * x); }, -1.0, 1.0,
        [](double x) { return -1.5 * x; });
    auto g = FvGrid::from_profile(rho, 2.0, 128);
    REQUIRE(g.mass() == Catch::Approx(1.0).epsilon(1e-10));
    REQUIRE(g.center(0) == Catch::Approx(-2.0 + g.dx() / 2.0));
    REQUIRE_THROWS_AS(FvGrid::from_profile(rho, 0.5, 128), std::invalid_argument);
}

TEST_CASE("constant profiles are fixed points with exact mass conservation") {
    auto params = FlowParams::make(2.0, 2.0);
    auto u0 = DensityProfile::piecewise_linear({-1.0, 1.0}, {0.5, 0.5});
    auto g = FvGrid::from_profile(u0, 1.0, 64);
    double m0 = g.mass();
    for (int s = 0; s < 50; ++s) g = fv_step(g, params, 1e-4);
    REQUIRE(g.mass() == Catch::Approx(m0).epsilon(1e-12));
    for (double v : g.u) REQUIRE(v == Catch::Approx(0.5).margin(1e-13));
}

TEST_CASE("mass conserved and energy non-increasing along the solve") {
    auto params = FlowParams::make(2.0, 2.0);
    auto mdl = power_law_model(params);
    auto u0 = barenblatt_profile(1.0, 3.0);
    auto series = fv_solve(u0, params, mdl, 3.0, 128, 0.5, {0.1, 0.25});
    REQUIRE(series.times.size() == 4);
    double m0 = series.states.front().mass();
    double prev_e = kInf;
    for (std::size_t k = 0; k < series.times.size(); ++k) {
        REQUIRE(series.states[k].mass() == Catch::Approx(m0).epsilon(1e-12));
        REQUIRE(series.energies[k] <= prev_e + 1e-10);
        prev_e = series.energies[k];
    }
}

TEST_CASE("barenblatt profile solves u_t = (u^2)_xx pointwise") {
    // Residual of the closed form inside its support, away from the free
    // boundary: u_t and (u^2)_xx by central differences.
    double t = 1.5, eps = 1e-5;
    for (double x : {0.0, 0.3, 0.8, -1.1}) {
        double ut = (barenblatt_pme2(x, t + eps) - barenblatt_pme2(x, t - eps)) / (2 * eps);
        auto u2 = [t](double xx) { return std::pow(barenblatt_pme2(xx, t), 2.0); };
        double uxx = (u2(x + eps) - 2.0 * u2(x) + u2(x - eps)) / (eps * eps);
        REQUIRE(ut == Catch::Approx(uxx).margin(1e-5));
    }
    // Unit mass and support radius sqrt(12 C) t^{1/3}.
    auto prof = barenblatt_profile(2.0, 3.0);
    REQUIRE(prof.mass() == Catch::Approx(1.0).epsilon(1e-6));
    double r = std::sqrt(12.0 * std::cbrt(3.0) / 4.0) * std::cbrt(2.0);
    REQUIRE(barenblatt_pme2(r - 1e-3, 2.0) > 0.0);
    REQUIRE(barenblatt_pme2(r + 1e-3, 2.0) == 0.0);
}

TEST_CASE("solver tracks the barenblatt solution from t=1 to t=2") {
    auto params = FlowParams::make(2.0, 2.0);
    auto mdl = power_law_model(params);
    auto series = fv_solve(barenblatt_profile(1.0, 3.0), params, mdl, 3.0, 256, 1.0);
    double err = l1_distance(series.states.back(), 2.0);
    REQUIRE(err < 1e-2);
}

TEST_CASE("grid refinement reduces the error") {
    auto params = FlowParams::make(2.0, 2.0);
    auto mdl = power_law_model(params);
    double prev = kInf;
    for (int M : {64, 128, 256}) {
        auto series = fv_solve(barenblatt_profile(1.0, 3.0), params, mdl, 3.0, M, 0.5);
        double err = l1_distance(series.states.back(), 1.5);
        REQUIRE(err < prev);
        prev = err;
    }
}

TEST_CASE("even initial data stays even") {
    auto params = FlowParams::make(2.0, 2.0);
    auto mdl = power_law_model(params);
    auto series = fv_solve(barenblatt_profile(1.0, 3.0), params, mdl, 3.0, 128, 0.3);
    const auto& g = series.states.back();
    for (int j = 0; j < g.M / 2; ++j)
        REQUIRE(g.u[static_cast<std::size_t>(j)] ==
                Catch::Approx(g.u[static_cast<std::size_t>(g.M - 1 - j)]).margin(1e-12));
}

TEST_CASE("q-heat flow obeys the max principle") {
    // p = 1.5, gamma = 1: q = 3, flux j_3(D(u)) (q-heat flow).
    auto params = FlowParams::make(1.5, 1.0);
    auto mdl = power_law_model(params);
    auto u0 = DensityProfile::from_function(
        [](double x) { return 0.75 * (1.0 - x * x); }, -1.0, 1.0,
        [](double x) { return -1.5 * x; });
    auto series = fv_solve(u0, params, mdl, 2.0, 96, 0.2);
    double max0 = 0.0, min_last = kInf, max_last = 0.0;
    for (double v : series.states.front().u) max0 = std::max(max0, v);
    for (double v : series.states.back().u) {
        min_last = std::min(min_last, v);
        max_last = std::max(max_last, v);
    }
    REQUIRE(max_last <= max0 + 1e-12);
    REQUIRE(min_last >= -1e-13);
    REQUIRE(series.states.back().mass() ==
            Catch::Approx(series.states.front().mass()).epsilon(1e-12));
}
