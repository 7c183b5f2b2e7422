#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>

#include "leibenson/experiments.hpp"

using namespace leibenson;

namespace {

StudySpec base_spec(StudySpec::Kind kind) {
    StudySpec s;
    s.study = kind;
    s.workers = 1;
    return s;
}

}  // namespace

TEST_CASE("format_float round-trips doubles exactly") {
    for (double v : {0.1, 1.0 / 3.0, -2.7182818284590452, 1e-300, 6.02214076e23, 0.0}) {
        REQUIRE(std::strtod(format_float(v).c_str(), nullptr) == v);
    }
}

TEST_CASE("Table serializes a CSV with header and row-width checking") {
    Table t;
    t.columns = {"a", "b"};
    t.add_row({1.0, 0.5});
    REQUIRE(t.to_csv() == "a,b\n1,0.5\n");
    REQUIRE_THROWS_AS(t.add_row({1.0}), std::logic_error);
}

TEST_CASE("StudySpec validates its fields and resolves kind names") {
    StudySpec s;
    REQUIRE_NOTHROW(s.validate());
    REQUIRE(StudySpec::kind_from_name("edi_residual") == StudySpec::Kind::edi_residual);
    REQUIRE_THROWS_AS(StudySpec::kind_from_name("nope"), std::invalid_argument);

    StudySpec bad = s;
    bad.N_list = {16, 8};
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = s;
    bad.dt = 2.0 * bad.t_end;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = s;
    bad.t_samples = {2.0 * bad.t_end};
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("well-prepared trajectories are deterministic and dissipative") {
    auto params = FlowParams::make(2.0, 2.0);
    auto mdl = power_law_model(params);
    auto rho = smooth_bump();

    auto a = well_prepared_trajectory(rho, mdl, params, 20, 1e-3, {0.01, 0.03});
    auto b = well_prepared_trajectory(rho, mdl, params, 20, 1e-3, {0.01, 0.03});

    REQUIRE(a.snapshots.size() == 3);  // t = 0 plus the two marks
    REQUIRE(a.snapshots[1].t == 0.01);
    REQUIRE(a.snapshots[2].t == 0.03);
    REQUIRE(a.step_dt.size() == b.step_dt.size());
    for (std::size_t k = 0; k < a.step_energy.size(); ++k) {
        REQUIRE(a.step_energy[k] == b.step_energy[k]);  // bit-identical replay
        double prev = k ? a.step_energy[k - 1] : a.energy0;
        REQUIRE(a.step_energy[k] <= prev + 1e-12 * (1.0 + std::abs(prev)));
    }
    for (std::size_t s = 0; s < a.snapshots.size(); ++s) {
        REQUIRE(a.snapshots[s].energy == b.snapshots[s].energy);
        REQUIRE(a.snapshots[s].state.positions() == b.snapshots[s].state.positions());
    }
}

TEST_CASE("gamma-limsup study: uniform density recovery gap shrinks") {
    StudySpec s = base_spec(StudySpec::Kind::gamma_limsup);
    s.N_list = {8, 16, 32, 64};
    auto r = run_study(DensityProfile::piecewise_linear({-1.0, 1.0}, {0.5, 0.5}), s);
    REQUIRE(r.passed());
    REQUIRE(r.study == "gamma_limsup");
    // E(rho) = 1/2 for the uniform density on [-1,1] at p = gamma = 2;
    // the recovery gap at N = 64 is 1/(3*64^2) = 5.2083e-3 for this profile.
    REQUIRE(r.table.rows.back()[2] == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(std::abs(r.table.rows.back()[3]) == Catch::Approx(5.208333333e-3).epsilon(1e-6));
}

TEST_CASE("energy-dissipation residual halves with dt under the dual slope") {
    StudySpec s = base_spec(StudySpec::Kind::edi_residual);
    s.N_list = {50};
    s.dt = 1e-3;
    s.t_end = 0.1;
    auto r = run_study(smooth_bump(), s);
    REQUIRE(r.passed());
    // Frozen values: rows are (N, dt, R_dual_q, R_paper_p, E_0, E_end) at dt
    // and dt/2.  At p = 2 the two slope conventions coincide.
    REQUIRE(r.table.rows[0][2] == Catch::Approx(-6.702459824e-3).epsilon(1e-6));
    REQUIRE(r.table.rows[1][2] == Catch::Approx(-3.334304207e-3).epsilon(1e-6));
    REQUIRE(r.table.rows[0][2] == Catch::Approx(r.table.rows[0][3]).epsilon(1e-12));
    REQUIRE(r.table.rows[0][4] == Catch::Approx(0.51703585698605137).epsilon(1e-12));
    REQUIRE(r.table.rows[1][5] == Catch::Approx(0.49322146460424326).epsilon(1e-9));
}

TEST_CASE("paper-convention residual persists at p != 2") {
    StudySpec s = base_spec(StudySpec::Kind::edi_residual);
    s.params = FlowParams::make(1.5, 1.0);
    s.N_list = {12};
    s.dt = 2e-3;
    s.t_end = 0.02;
    s.t_samples = {0.02};
    auto r = run_study(smooth_bump(), s);
    REQUIRE(r.passed());
    REQUIRE(r.assertions.size() == 2);
    REQUIRE(r.assertions[1].name == "paper_p_residual_persists");
    // dual_q closes as dt halves; paper_p stays positive and does not shrink.
    REQUIRE(r.table.rows[0][2] == Catch::Approx(-5.7805e-3).epsilon(1e-3));
    REQUIRE(r.table.rows[1][2] == Catch::Approx(-2.767e-3).epsilon(1e-3));
    REQUIRE(r.table.rows[0][3] > 0.0);
    REQUIRE(r.table.rows[1][3] > 0.0);
}

TEST_CASE("condition (C2)/(C3) study passes on the smooth bump") {
    StudySpec s = base_spec(StudySpec::Kind::c3_slope);
    s.N_list = {16, 32, 64};
    s.dt = 1e-3;
    s.t_end = 0.05;
    s.t_samples = {0.02, 0.05};
    s.pde_M = 256;
    auto r = run_study(smooth_bump(), s);
    REQUIRE(r.passed());
    REQUIRE(r.study == "c3_slope");
    REQUIRE(r.assertions[0].name == "c2_energy_gap_decreasing");
    REQUIRE(r.assertions[0].value == Catch::Approx(5.388328992e-3).epsilon(1e-4));
    REQUIRE(r.assertions[1].name == "c3_slope_chain");
    REQUIRE(r.assertions[1].value <= 1.0);  // chain ratio never exceeds one
    REQUIRE(r.assertions[1].value == Catch::Approx(0.9151696512).epsilon(1e-4));
}

TEST_CASE("pde-convergence study: W_p error shrinks like 1/N") {
    StudySpec s = base_spec(StudySpec::Kind::pde_convergence);
    s.N_list = {12, 25, 50};
    s.dt = 1e-3;
    s.t_end = 0.05;
    s.t_samples = {0.05};
    s.pde_M = 256;
    auto r = run_study(smooth_bump(), s);
    REQUIRE(r.passed());
    REQUIRE(r.table.rows[0][2] == Catch::Approx(0.065948274).epsilon(1e-4));
    REQUIRE(r.table.rows[1][2] == Catch::Approx(0.029560565).epsilon(1e-4));
    REQUIRE(r.table.rows[2][2] == Catch::Approx(0.014465162).epsilon(1e-4));
}

TEST_CASE("mesh-ratio study: excess decreasing with slack-2 gap bounds") {
    StudySpec s = base_spec(StudySpec::Kind::mesh_ratio);
    s.N_list = {16, 32, 64};
    s.dt = 1e-3;
    s.t_end = 0.05;
    s.t_samples = {0.05};
    auto r = run_study(smooth_bump(), s);
    REQUIRE(r.passed());
    REQUIRE(r.table.rows[0][2] == Catch::Approx(0.19973534).epsilon(1e-4));
    REQUIRE(r.table.rows[1][2] == Catch::Approx(0.062636797).epsilon(1e-4));
    REQUIRE(r.table.rows[2][2] == Catch::Approx(0.023813952).epsilon(1e-4));
}

TEST_CASE("study results serialize a summary JSON") {
    StudySpec s = base_spec(StudySpec::Kind::gamma_limsup);
    s.N_list = {8, 16};
    auto r = run_study(smooth_bump(), s);
    auto j = r.summary();
    REQUIRE(j["study"] == "gamma_limsup");
    REQUIRE(j["passed"].is_boolean());
    REQUIRE(j["assertions"].size() == r.assertions.size());
}
