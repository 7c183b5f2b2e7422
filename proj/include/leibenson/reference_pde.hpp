#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "leibenson/energy_model.hpp"
#include "leibenson/flow_integrator.hpp"
#include "leibenson/transport_tools.hpp"

namespace leibenson {

// Uniform finite-volume grid on [-l, l] with nonnegative cell averages.
struct FvGrid {
    double l = 1.0;
    int M = 0;
    std::vector<double> u;

    double dx() const { return 2.0 * l / M; }
    double center(int j) const { return -l + (j + 0.5) * dx(); }
    double mass() const {
        double s = 0.0;
        for (double v : u) s += v;
        return s * dx();
    }

    static FvGrid from_profile(const DensityProfile& rho, double l, int M) {
        if (M < 2) throw std::invalid_argument("FvGrid: need M >= 2 cells");
        if (rho.support_lo() < -l || rho.support_hi() > l)
            throw std::invalid_argument("FvGrid: initial data not supported in [-l, l]");
        FvGrid g{l, M, std::vector<double>(static_cast<std::size_t>(M))};
        double h = g.dx();
        // Cell averages from CDF differences: mass-exact restriction.
        for (int j = 0; j < M; ++j)
            g.u[static_cast<std::size_t>(j)] =
                (rho.cdf(-l + (j + 1) * h) - rho.cdf(-l + j * h)) / h;
        return g;
    }

    DensityProfile to_profile() const {
        std::vector<double> nodes(static_cast<std::size_t>(M) + 1);
        for (int j = 0; j <= M; ++j) nodes[static_cast<std::size_t>(j)] = -l + j * dx();
        return DensityProfile::piecewise_constant(std::move(nodes), u);
    }
};

namespace detail {

// Face fluxes F_{j+1/2} = j_q(D(u^gamma)) for j = 0..M, zero at the boundary.
inline std::vector<double> fv_fluxes(const FvGrid& g, const FlowParams& params) {
    const int M = g.M;
    const double h = g.dx(), gam = params.gamma, q = params.q;
    std::vector<double> F(static_cast<std::size_t>(M) + 1, 0.0);
    for (int j = 1; j < M; ++j) {
        double D = (std::pow(g.u[static_cast<std::size_t>(j)], gam) -
                    std::pow(g.u[static_cast<std::size_t>(j - 1)], gam)) / h;
        F[static_cast<std::size_t>(j)] = duality_map(D, q);
    }
    return F;
}

}  // namespace detail

// CFL-type bound dt = safety * dx^q / (q * max a_face + eps), with the local
// effective diffusivity a_face = |D(u^gamma)|^{q-2} * gamma * max(u)^{gamma-1}.
inline double fv_stable_dt(const FvGrid& g, const FlowParams& params, double safety = 0.4) {
    const double h = g.dx(), gam = params.gamma, q = params.q;
    double umax = 0.0;
    for (double v : g.u) umax = std::max(umax, v);
    if (umax <= 0.0) return kInf;
    double amax = 0.0;
    for (int j = 1; j < g.M; ++j) {
        double D = (std::pow(g.u[static_cast<std::size_t>(j)], gam) -
                    std::pow(g.u[static_cast<std::size_t>(j - 1)], gam)) / h;
        double a = (D == 0.0 && q < 2.0) ? 0.0
                                         : std::pow(std::abs(D), q - 2.0) *
                                               gam * std::pow(umax, gam - 1.0);
        amax = std::max(amax, a);
    }
    return safety * std::pow(h, q) / (q * amax + 1e-300);
}

// One explicit conservative step of u_t = Delta_q(u^gamma) with no-flux
// boundary faces.
inline FvGrid fv_step(const FvGrid& g, const FlowParams& params, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("fv_step: dt must be > 0");
    std::vector<double> F = detail::fv_fluxes(g, params);
    FvGrid out = g;
    const double r = dt / g.dx();
    for (int j = 0; j < g.M; ++j) {
        std::size_t sj = static_cast<std::size_t>(j);
        out.u[sj] = g.u[sj] + r * (F[sj + 1] - F[sj]);
        if (out.u[sj] < -1e-13)
            throw std::runtime_error("fv_step: negative cell value (dt too large)");
    }
    return out;
}

struct FvSeries {
    std::vector<double> times;
    std::vector<FvGrid> states;
    std::vector<double> energies;
};

// Solve to t_end sampling at the requested times (plus t = 0 and t_end if
// absent); dt is re-chosen from the stability bound each step.
inline FvSeries fv_solve(const DensityProfile& u0, const FlowParams& params,
                         const EnergyModel& mdl, double l, int M, double t_end,
                         std::vector<double> sample_times = {}, double safety = 0.4) {
    FvGrid g = FvGrid::from_profile(u0, l, M);
    std::sort(sample_times.begin(), sample_times.end());
    if (sample_times.empty() || sample_times.front() > 0.0)
        sample_times.insert(sample_times.begin(), 0.0);
    if (sample_times.back() < t_end) sample_times.push_back(t_end);

    FvSeries out;
    auto record = [&](double t) {
        out.times.push_back(t);
        out.states.push_back(g);
        out.energies.push_back(continuum_energy(g.to_profile(), mdl));
    };

    double t = 0.0;
    std::size_t next = 0;
    while (next < sample_times.size() && sample_times[next] <= t + 1e-15) {
        record(t);
        ++next;
    }
    while (next < sample_times.size()) {
        double dt = std::min(fv_stable_dt(g, params, safety), sample_times[next] - t);
        g = fv_step(g, params, dt);
        t += dt;
        if (t >= sample_times[next] - 1e-14 * std::max(1.0, sample_times[next])) {
            record(sample_times[next]);
            ++next;
        }
    }
    return out;
}

// Barenblatt self-similar solution of u_t = (u^2)_xx with unit mass,
// B(x,t) = t^{-1/3} (C - x^2 / (12 t^{2/3}))_+ with C = 3^{1/3}/4.
inline double barenblatt_pme2(double x, double t) {
    const double C = std::cbrt(3.0) / 4.0;
    double s = C - x * x / (12.0 * std::pow(t, 2.0 / 3.0));
    return s > 0.0 ? std::pow(t, -1.0 / 3.0) * s : 0.0;
}

}  // namespace leibenson
