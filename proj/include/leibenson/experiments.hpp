#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "leibenson/flow_integrator.hpp"
#include "leibenson/reference_pde.hpp"
#include "leibenson/transport_tools.hpp"

namespace leibenson {

// Round-trip-exact float formatting shared by every artifact writer.
inline std::string format_float(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Result plumbing: numeric tables with named columns, assertion records, and
// the per-study bundle serialized to CSV + JSON.

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void add_row(std::vector<double> r) {
        if (r.size() != columns.size())
            throw std::logic_error("Table: row width does not match the header");
        rows.push_back(std::move(r));
    }

    std::string to_csv() const {
        std::string out;
        for (std::size_t c = 0; c < columns.size(); ++c) {
            if (c) out += ',';
            out += columns[c];
        }
        out += '\n';
        for (const auto& r : rows) {
            for (std::size_t c = 0; c < r.size(); ++c) {
                if (c) out += ',';
                out += format_float(r[c]);
            }
            out += '\n';
        }
        return out;
    }
};

struct StudyAssertion {
    std::string name;
    bool pass = false;
    double value = 0.0;  // the measured quantity the assertion judged
    std::string detail;
};

struct StudyResult {
    std::string study;
    Table table;
    std::vector<StudyAssertion> assertions;

    bool passed() const {
        for (const auto& a : assertions)
            if (!a.pass) return false;
        return true;
    }

    nlohmann::json summary() const {
        nlohmann::json j;
        j["study"] = study;
        j["passed"] = passed();
        j["assertions"] = nlohmann::json::array();
        for (const auto& a : assertions)
            j["assertions"].push_back(
                {{"name", a.name}, {"pass", a.pass}, {"value", a.value}, {"detail", a.detail}});
        return j;
    }
};

// ---------------------------------------------------------------------------
// Study specification.

struct StudySpec {
    enum class Kind {
        gamma_limsup,
        c2_energy,
        c3_slope,
        mesh_ratio,
        pde_convergence,
        edi_residual
    };

    Kind study = Kind::gamma_limsup;
    std::vector<int> N_list{8, 16, 32, 64, 128};
    FlowParams params = FlowParams::make(2.0, 2.0);
    double t_end = 0.1;
    double dt = 1e-3;
    std::vector<double> t_samples{0.01, 0.05, 0.1};
    int pde_M = 512;
    int workers = static_cast<int>(std::thread::hardware_concurrency());
    unsigned seed = 987654321u;
    std::string output;

    static const std::vector<std::string>& kind_names() {
        static const std::vector<std::string> names{"gamma_limsup",    "c2_energy",
                                                    "c3_slope",        "mesh_ratio",
                                                    "pde_convergence", "edi_residual"};
        return names;
    }

    static Kind kind_from_name(const std::string& s) {
        const auto& names = kind_names();
        for (std::size_t k = 0; k < names.size(); ++k)
            if (names[k] == s) return static_cast<Kind>(k);
        std::string msg = "unknown study '" + s + "'; valid studies:";
        for (const auto& n : names) msg += " " + n;
        throw std::invalid_argument(msg);
    }

    std::string kind_name() const { return kind_names()[static_cast<std::size_t>(study)]; }

    void validate() const {
        if (N_list.empty()) throw std::invalid_argument("StudySpec: empty N_list");
        for (std::size_t k = 0; k < N_list.size(); ++k) {
            if (N_list[k] < 2) throw std::invalid_argument("StudySpec: every N must be >= 2");
            if (k && N_list[k] <= N_list[k - 1])
                throw std::invalid_argument("StudySpec: N_list must be sorted increasing");
        }
        if (!(t_end > 0.0) || !(dt > 0.0) || dt > t_end)
            throw std::invalid_argument("StudySpec: need 0 < dt <= t_end");
        for (double t : t_samples)
            if (!(t > 0.0) || t > t_end + 1e-12)
                throw std::invalid_argument("StudySpec: t_samples must lie in (0, t_end]");
        if (pde_M < 8) throw std::invalid_argument("StudySpec: pde.M must be >= 8");
        if (workers < 1) throw std::invalid_argument("StudySpec: workers must be >= 1");
    }
};

namespace detail {

// Fan work items out over a bounded pool; exceptions from any cell are
// re-thrown on the caller after all threads join.
template <class F>
inline void parallel_for(int n, int workers, F&& fn) {
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int i; (i = next.fetch_add(1)) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!err) err = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

inline bool trend_decreasing(const std::vector<double>& v, double noise = 0.1) {
    for (std::size_t k = 1; k < v.size(); ++k)
        if (v[k] > v[k - 1] + noise * std::abs(v[k - 1]) + 1e-15) return false;
    return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Shared well-prepared trajectory recording. A study trajectory carries both
// the dense per-step record needed by the energy-dissipation residual and the
// snapshots at requested sample times; two studies with equal inputs replay
// the identical recording bit for bit.

struct StudySnapshot {
    double t = 0.0;
    ParticleConfig state;
    double energy = 0.0;
    double slope_dual_q = 0.0;
    double slope_paper_p = 0.0;
    double speed_wp = 0.0;  // mean speed since the previous snapshot
    double moment_p = 0.0;
    double mesh_excess = 0.0;
};

struct StudyTrajectory {
    double energy0 = 0.0;
    std::vector<double> step_dt;       // actual dt of every accepted step
    std::vector<double> step_speed;    // ||dx||_{w,p} / dt over the step
    std::vector<double> step_slope_q;  // dual_q slope at the step start
    std::vector<double> step_slope_p;  // paper_p slope at the step start
    std::vector<double> step_energy;   // energy after the step
    std::vector<StudySnapshot> snapshots;

    // Left-endpoint quadrature of E(0) - E(t) - int [(1/p)|x'|^p + (1/q)g^q].
    double edi_residual(const FlowParams& params, SlopeConvention conv) const {
        const double p = params.p, q = params.q;
        double integral = 0.0, e_end = energy0;
        for (std::size_t k = 0; k < step_dt.size(); ++k) {
            double g = conv == SlopeConvention::dual_q ? step_slope_q[k] : step_slope_p[k];
            integral += step_dt[k] * (std::pow(step_speed[k], p) / p + std::pow(g, q) / q);
            e_end = step_energy[k];
        }
        return energy0 - e_end - integral;
    }
};

inline StudyTrajectory well_prepared_trajectory(const DensityProfile& rho0,
                                                const EnergyModel& mdl,
                                                const FlowParams& params, int N, double dt,
                                                const std::vector<double>& t_samples) {
    auto cert = certify_smooth_set(rho0);
    auto rec = recovery_sequence(rho0, cert, N, DomainSpec::interval(cert.r));

    std::vector<double> marks(t_samples);
    std::sort(marks.begin(), marks.end());
    if (marks.empty() || !(marks.front() > 0.0))
        throw std::invalid_argument("well_prepared_trajectory: sample times must be positive");

    StudyTrajectory out;
    out.energy0 = discrete_energy(rec.cfg, mdl);
    ParticleConfig cur = rec.cfg;
    ParticleConfig prev_snap = rec.cfg;

    auto snapshot = [&](double t, double t_prev) {
        StudySnapshot s;
        s.t = t;
        s.state = cur;
        s.energy = discrete_energy(cur, mdl);
        s.slope_dual_q = discrete_slope(cur, mdl, SlopeConvention::dual_q);
        s.slope_paper_p = discrete_slope(cur, mdl, SlopeConvention::paper_p);
        if (t > t_prev) {
            std::vector<double> diff = cur.positions();
            const auto& xp = prev_snap.positions();
            for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= xp[i];
            s.speed_wp = weighted_norm(diff, params.p) / (t - t_prev);
        }
        s.moment_p = cur.moment(params.p);
        s.mesh_excess = cur.mesh_ratio_excess();
        out.snapshots.push_back(std::move(s));
        prev_snap = cur;
    };

    // Minimizing-movement steps: the implicit scheme tracks the flow at
    // O(tau) uniformly in N, where the forward scheme's acceptance-limited
    // step rides the stability boundary and under-dissipates.
    std::vector<char> mask(cur.positions().size(), 1);
    mask[0] = 0;
    mask[mask.size() - 1] = 0;

    snapshot(0.0, 0.0);
    double t = 0.0, t_prev_snap = 0.0;
    std::size_t mark = 0;
    while (mark < marks.size()) {
        double target = marks[mark];
        double step_dt = std::min(dt, target - t);

        // Slopes at the step start; pinned endpoints carry no dual component.
        Subgradient sg = minimal_selection(cur, mdl, 1e-12, nullptr, &mask);
        std::vector<double> z = sg.z;
        z.front() = 0.0;
        z.back() = 0.0;

        ParticleConfig next = minimizing_movement_step(cur, mdl, params, step_dt,
                                                       /*pinned=*/true);
        std::vector<double> diff = next.positions();
        const auto& xc = cur.positions();
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= xc[i];
        out.step_dt.push_back(step_dt);
        out.step_speed.push_back(weighted_norm(diff, params.p) / step_dt);
        out.step_slope_q.push_back(weighted_norm(z, params.q));
        out.step_slope_p.push_back(weighted_norm(z, params.p));
        out.step_energy.push_back(discrete_energy(next, mdl));

        cur = std::move(next);
        t += step_dt;
        if (t >= target - 1e-14 * std::max(1.0, target)) {
            snapshot(target, t_prev_snap);
            t_prev_snap = target;
            t = target;
            ++mark;
        }
    }
    return out;
}

// Unit-mass smooth bump 0.3 (2 - x^2) on [-1, 1]: strictly positive on a
// symmetric support, the default well-prepared initial density.
inline DensityProfile smooth_bump() {
    return DensityProfile::from_function([](double x) { return 0.3 * (2.0 - x * x); }, -1.0,
                                         1.0, [](double x) { return -0.6 * x; });
}

// ---------------------------------------------------------------------------
// Gamma-limsup study: recovery-sequence energies against the continuum
// energy, plus a deterministic perturbation harness for the liminf direction.

inline StudyResult gamma_limsup_study(const DensityProfile& rho, const EnergyModel& mdl,
                                      const StudySpec& spec) {
    spec.validate();
    auto cert = certify_smooth_set(rho);  // aborts the study outside the smooth set
    const double p = spec.params.p;
    const double e_rho = continuum_energy(rho, mdl);

    StudyResult res;
    res.study = "gamma_limsup";
    res.table.columns = {"N",  "E_N",          "E_rho",        "gap",
                         "W_p", "min_perturbed_E", "liminf_margin"};

    const int cells = static_cast<int>(spec.N_list.size());
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(cells));
    detail::parallel_for(cells, spec.workers, [&](int k) {
        int N = spec.N_list[static_cast<std::size_t>(k)];
        auto rec = recovery_sequence(rho, cert, N);
        double e_N = discrete_energy(rec.cfg, mdl);
        double wp = wasserstein_p(rec.cfg, rho, p);

        // Liminf harness: vanishing deterministic perturbations of the
        // recovery particles keep W_p(mu_N, rho) -> 0; their energies must
        // stay above E(rho) minus a vanishing margin.
        std::mt19937 rng(spec.seed + static_cast<unsigned>(N));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        double amp = 0.25 * rec.cfg.min_interior_gap();
        double min_pert = kInf;
        for (int trial = 0; trial < 8; ++trial) {
            std::vector<double> delta(static_cast<std::size_t>(N));
            for (double& d : delta) d = amp * u(rng);
            min_pert = std::min(min_pert, discrete_energy(rec.cfg.displaced(delta), mdl));
        }
        rows[static_cast<std::size_t>(k)] = {static_cast<double>(N), e_N,      e_rho,
                                             e_N - e_rho,            wp,       min_pert,
                                             min_pert - e_rho};
    });
    for (auto& r : rows) res.table.add_row(std::move(r));

    std::vector<double> abs_gap, liminf_margin;
    for (const auto& r : res.table.rows) {
        abs_gap.push_back(std::abs(r[3]));
        liminf_margin.push_back(r[6]);
    }
    res.assertions.push_back({"gap_decreasing", detail::trend_decreasing(abs_gap), abs_gap.back(),
                              "|E_N - E(rho)| decreasing over N_list (10% noise allowance)"});
    res.assertions.push_back({"limsup_bound", abs_gap.back() <= 0.02, abs_gap.back(),
                              "|E_N - E(rho)| <= 0.02 at the largest N"});
    bool liminf_ok = true;
    for (std::size_t k = 0; k < liminf_margin.size(); ++k)
        liminf_ok = liminf_ok && liminf_margin[k] >= -(2.0 * abs_gap[k] + 1e-6);
    res.assertions.push_back({"liminf_bound", liminf_ok, liminf_margin.back(),
                              "perturbed energies stay above E(rho) minus a vanishing margin"});
    return res;
}

// ---------------------------------------------------------------------------
// Conditions (C1)-(C3) study: particle trajectories vs the finite-volume
// reference from the same initial density, at shared sample times.

inline StudyResult c_conditions_study(const DensityProfile& rho0, const EnergyModel& mdl,
                                      const StudySpec& spec) {
    spec.validate();
    auto cert = certify_smooth_set(rho0);
    const double p = spec.params.p, q = spec.params.q;

    std::vector<double> marks(spec.t_samples);
    std::sort(marks.begin(), marks.end());
    auto ref = fv_solve(rho0, spec.params, mdl, cert.r, spec.pde_M, marks.back(), marks);
    std::vector<double> e_ref(marks.size()), g_ref(marks.size());
    std::vector<DensityProfile> ref_profiles;
    for (std::size_t s = 0; s < marks.size(); ++s) {
        std::size_t idx = 0;
        for (std::size_t j = 0; j < ref.times.size(); ++j)
            if (std::abs(ref.times[j] - marks[s]) < 1e-12) idx = j;
        e_ref[s] = ref.energies[idx];
        auto prof = ref.states[idx].to_profile();
        g_ref[s] = fisher_information(prof, mdl, spec.params).slope(p);
        ref_profiles.push_back(std::move(prof));
    }

    StudyResult res;
    res.study = "c_conditions";
    res.table.columns = {"N",          "t",         "E_N",        "E_ref",     "energy_gap",
                         "g_N_dual_q", "g_N_paper_p", "g_nu_p_pow", "psi_diff_p", "eps_N",
                         "g_ref",      "speed_p_pow", "g_ref_q_pow", "mesh_excess", "W_p_ref"};

    const int cells = static_cast<int>(spec.N_list.size());
    std::vector<std::vector<std::vector<double>>> rows(static_cast<std::size_t>(cells));
    detail::parallel_for(cells, spec.workers, [&](int k) {
        int N = spec.N_list[static_cast<std::size_t>(k)];
        auto traj = well_prepared_trajectory(rho0, mdl, spec.params, N, spec.dt, marks);
        for (std::size_t s = 0; s < marks.size(); ++s) {
            const StudySnapshot& snap = traj.snapshots[s + 1];  // snapshot 0 is t = 0
            Interpolant itp(snap.state, mdl);
            double g_nu_p = itp.fisher_nu(p);
            auto psi = psi_vector(snap.state, mdl);
            double psi_diff = 0.0;
            for (std::size_t i = 1; i + 2 < psi.size(); ++i)
                psi_diff += std::pow(std::abs(psi[i + 1] - psi[i]), p);
            psi_diff /= static_cast<double>(N);
            double eps_N = std::pow(1.0 + snap.mesh_excess, p - 1.0) - 1.0;
            rows[static_cast<std::size_t>(k)].push_back(
                {static_cast<double>(N), snap.t, snap.energy, e_ref[s],
                 snap.energy - e_ref[s], snap.slope_dual_q, snap.slope_paper_p, g_nu_p,
                 psi_diff, eps_N, g_ref[s], std::pow(snap.speed_wp, p),
                 std::pow(g_ref[s], q), snap.mesh_excess,
                 wasserstein_p(snap.state, ref_profiles[s], p)});
        }
    });
    for (auto& cell : rows)
        for (auto& r : cell) res.table.add_row(std::move(r));

    // (C2): |E_N(t) - E_ref(t)| decreasing in N at every fixed sample time.
    bool c2_ok = true;
    double c2_last = 0.0;
    for (std::size_t s = 0; s < marks.size(); ++s) {
        std::vector<double> gaps;
        for (const auto& r : res.table.rows)
            if (r[1] == marks[s]) gaps.push_back(std::abs(r[4]));
        c2_ok = c2_ok && detail::trend_decreasing(gaps);
        c2_last = gaps.back();
    }
    res.assertions.push_back({"c2_energy_gap_decreasing", c2_ok, c2_last,
                              "|E_N(t) - E(rho_ref(t))| decreasing in N at each sample time"});

    // (C3) chain: g(nu_N)^p <= (1+eps_N) (1/N) sum |psi_{i+1}-psi_i|^p
    //            <= (1+eps_N) g_N(mu_N)^p, eps_N from the measured mesh ratio.
    bool chain_ok = true;
    double worst = 0.0;
    for (const auto& r : res.table.rows) {
        double lhs = r[7], mid = (1.0 + r[9]) * r[8];
        double rhs = (1.0 + r[9]) * std::pow(r[6], p);
        double slack = 1e-9 * std::max(1.0, rhs);
        chain_ok = chain_ok && lhs <= mid + slack && mid <= rhs + slack;
        worst = std::max(worst, lhs / std::max(rhs, 1e-300));
    }
    res.assertions.push_back({"c3_slope_chain", chain_ok, worst,
                              "g(nu_N)^p <= (1+eps) (1/N) sum|dpsi|^p <= (1+eps) g_N^p"});

    // Mesh ratio decreasing in N at the final sample time.
    std::vector<double> mesh;
    for (const auto& r : res.table.rows)
        if (r[1] == marks.back()) mesh.push_back(r[13]);
    res.assertions.push_back({"mesh_ratio_decreasing", detail::trend_decreasing(mesh),
                              mesh.back(),
                              "max|dx_{i+1}/dx_i - 1| at t_end decreasing in N"});
    return res;
}

// ---------------------------------------------------------------------------
// Particle-vs-PDE convergence in N at the final time.

inline StudyResult pde_convergence_study(const DensityProfile& rho0, const EnergyModel& mdl,
                                         const StudySpec& spec) {
    spec.validate();
    auto cert = certify_smooth_set(rho0);
    const double p = spec.params.p;
    auto ref = fv_solve(rho0, spec.params, mdl, cert.r, spec.pde_M, spec.t_end);
    auto ref_prof = ref.states.back().to_profile();

    StudyResult res;
    res.study = "pde_convergence";
    res.table.columns = {"N", "t", "W_p_error", "E_N", "E_ref"};

    const int cells = static_cast<int>(spec.N_list.size());
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(cells));
    detail::parallel_for(cells, spec.workers, [&](int k) {
        int N = spec.N_list[static_cast<std::size_t>(k)];
        auto traj = well_prepared_trajectory(rho0, mdl, spec.params, N, spec.dt, {spec.t_end});
        const auto& snap = traj.snapshots.back();
        rows[static_cast<std::size_t>(k)] = {static_cast<double>(N), snap.t,
                                             wasserstein_p(snap.state, ref_prof, p),
                                             snap.energy, ref.energies.back()};
    });
    for (auto& r : rows) res.table.add_row(std::move(r));

    std::vector<double> err;
    for (const auto& r : res.table.rows) err.push_back(r[2]);
    bool decreasing = true;
    for (std::size_t k = 1; k < err.size(); ++k) decreasing = decreasing && err[k] < err[k - 1];
    res.assertions.push_back({"w_error_decreasing", decreasing, err.back(),
                              "W_p(mu_N(t_end), u_FV(t_end)) strictly decreasing in N"});
    res.assertions.push_back({"w_error_end_ratio", err.back() <= 0.5 * err.front(),
                              err.back() / err.front(),
                              "error at the largest N at most half the error at the smallest"});
    return res;
}

// ---------------------------------------------------------------------------
// Mesh-ratio study: gap-regularity trend and the a1/N <= dx <= a2/N bounds.

inline StudyResult mesh_ratio_study(const DensityProfile& rho0, const EnergyModel& mdl,
                                    const StudySpec& spec) {
    spec.validate();
    auto cert = certify_smooth_set(rho0);

    StudyResult res;
    res.study = "mesh_ratio";
    res.table.columns = {"N", "t", "mesh_excess", "N_min_gap", "N_max_gap", "a1", "a2"};

    const int cells = static_cast<int>(spec.N_list.size());
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(cells));
    std::vector<char> bounds_ok(static_cast<std::size_t>(cells), 1);
    detail::parallel_for(cells, spec.workers, [&](int k) {
        int N = spec.N_list[static_cast<std::size_t>(k)];
        auto rec = recovery_sequence(rho0, cert, N, DomainSpec::interval(cert.r));
        auto traj = well_prepared_trajectory(rho0, mdl, spec.params, N, spec.dt, {spec.t_end});
        const double n = static_cast<double>(N);
        for (const auto& snap : traj.snapshots) {
            // Lemma-style gap bounds with slack factor 2 at every snapshot.
            if (snap.state.min_interior_gap() < 0.5 * rec.a1 / n ||
                snap.state.max_interior_gap() > 2.0 * rec.a2 / n)
                bounds_ok[static_cast<std::size_t>(k)] = 0;
        }
        const auto& last = traj.snapshots.back();
        rows[static_cast<std::size_t>(k)] = {n,
                                             last.t,
                                             last.mesh_excess,
                                             n * last.state.min_interior_gap(),
                                             n * last.state.max_interior_gap(),
                                             rec.a1,
                                             rec.a2};
    });
    for (auto& r : rows) res.table.add_row(std::move(r));

    std::vector<double> mesh;
    for (const auto& r : res.table.rows) mesh.push_back(r[2]);
    res.assertions.push_back({"mesh_ratio_decreasing", detail::trend_decreasing(mesh),
                              mesh.back(), "mesh-ratio excess at t_end decreasing in N"});
    bool all_bounds = std::all_of(bounds_ok.begin(), bounds_ok.end(),
                                  [](char b) { return b != 0; });
    res.assertions.push_back({"gap_bounds_slack2", all_bounds, 0.0,
                              "a1/(2N) <= dx_i <= 2 a2/N along every trajectory"});
    return res;
}

// ---------------------------------------------------------------------------
// Energy-dissipation residual study: R(T) under both slope conventions at
// dt and dt/2, per N.

inline StudyResult edi_residual_study(const DensityProfile& rho0, const EnergyModel& mdl,
                                      const StudySpec& spec) {
    spec.validate();
    const double p = spec.params.p;

    StudyResult res;
    res.study = "edi_residual";
    res.table.columns = {"N", "dt", "R_dual_q", "R_paper_p", "E_0", "E_end"};

    struct Cell {
        int N;
        double dt;
    };
    std::vector<Cell> cells;
    for (int N : spec.N_list) {
        cells.push_back({N, spec.dt});
        cells.push_back({N, spec.dt / 2.0});
    }
    std::vector<std::vector<double>> rows(cells.size());
    detail::parallel_for(static_cast<int>(cells.size()), spec.workers, [&](int k) {
        const Cell& c = cells[static_cast<std::size_t>(k)];
        auto traj = well_prepared_trajectory(rho0, mdl, spec.params, c.N, c.dt, {spec.t_end});
        rows[static_cast<std::size_t>(k)] = {
            static_cast<double>(c.N), c.dt,
            traj.edi_residual(spec.params, SlopeConvention::dual_q),
            traj.edi_residual(spec.params, SlopeConvention::paper_p), traj.energy0,
            traj.snapshots.back().energy};
    });
    for (auto& r : rows) res.table.add_row(std::move(r));

    bool halving_ok = true, persist_ok = true;
    double halving_worst = 0.0, persist_best = kInf;
    for (std::size_t k = 0; k + 1 < res.table.rows.size(); k += 2) {
        double r_coarse = std::abs(res.table.rows[k][2]);
        double r_fine = std::abs(res.table.rows[k + 1][2]);
        double ratio = r_coarse / std::max(r_fine, 1e-300);
        halving_ok = halving_ok && ratio >= 1.8;
        halving_worst = std::max(halving_worst, r_fine);
        if (p != 2.0) {
            double rp_coarse = std::abs(res.table.rows[k][3]);
            double rp_fine = std::abs(res.table.rows[k + 1][3]);
            persist_ok = persist_ok && rp_fine >= 0.5 * rp_coarse && rp_fine > 1e-6;
            persist_best = std::min(persist_best, rp_fine);
        }
    }
    res.assertions.push_back({"dual_q_residual_halving", halving_ok, halving_worst,
                              "|R(T)| under dual_q shrinks by >= 1.8x when dt halves"});
    if (p != 2.0)
        res.assertions.push_back(
            {"paper_p_residual_persists", persist_ok, persist_best,
             "|R(T)| under paper_p does not vanish as dt halves (open-question evidence)"});
    return res;
}

// ---------------------------------------------------------------------------
// Dispatcher.

inline StudyResult run_study(const DensityProfile& rho0, const StudySpec& spec) {
    spec.validate();
    EnergyModel mdl = power_law_model(spec.params);
    switch (spec.study) {
        case StudySpec::Kind::gamma_limsup:
            return gamma_limsup_study(rho0, mdl, spec);
        case StudySpec::Kind::c2_energy:
        case StudySpec::Kind::c3_slope: {
            StudyResult r = c_conditions_study(rho0, mdl, spec);
            r.study = spec.kind_name();
            return r;
        }
        case StudySpec::Kind::mesh_ratio:
            return mesh_ratio_study(rho0, mdl, spec);
        case StudySpec::Kind::pde_convergence:
            return pde_convergence_study(rho0, mdl, spec);
        case StudySpec::Kind::edi_residual:
            return edi_residual_study(rho0, mdl, spec);
    }
    throw std::logic_error("run_study: unreachable");
}

}  // namespace leibenson
