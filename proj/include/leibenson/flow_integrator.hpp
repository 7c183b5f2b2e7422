#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "leibenson/energy_model.hpp"
#include "leibenson/particle_system.hpp"

namespace leibenson {

// Duality map j_q(v) = |v|^{q-2} v (0 at 0).
inline double duality_map(double v, double q) {
    if (v == 0.0) return 0.0;
    return std::pow(std::abs(v), q - 2.0) * v;
}

struct IntegratorSpec {
    enum class Scheme { explicit_descent, minimizing_movement };
    Scheme scheme = Scheme::explicit_descent;
    double dt = 1e-3;
    double t_end = 0.1;
    bool adaptive = true;
    double safety = 1.0;
    int record_every = 1;
    bool pinned = false;

    void validate() const {
        if (!(dt > 0.0) || !(t_end > 0.0) || dt > t_end)
            throw std::invalid_argument("IntegratorSpec: need 0 < dt <= t_end");
        if (!(safety > 0.0 && safety <= 1.0))
            throw std::invalid_argument("IntegratorSpec: safety must be in (0, 1]");
        if (record_every < 1)
            throw std::invalid_argument("IntegratorSpec: record_every must be >= 1");
    }
};

struct TrajectorySample {
    double t = 0.0;
    ParticleConfig state;
    double energy = 0.0;
    double slope_dual_q = 0.0;
    double slope_paper_p = 0.0;
    double speed_wp = 0.0;  // ||x(t_k) - x(t_{k-1})||_{w,p} / dt over the step into this sample
    double moment_p = 0.0;
};

struct Trajectory {
    std::vector<TrajectorySample> samples;

    const TrajectorySample& front() const { return samples.front(); }
    const TrajectorySample& back() const { return samples.back(); }
};

class StiffnessError : public std::runtime_error {
public:
    StiffnessError(std::string what, ParticleConfig state)
        : std::runtime_error(std::move(what)), state(std::move(state)) {}
    ParticleConfig state;
};

class ToleranceNotMet : public std::runtime_error {
public:
    ToleranceNotMet(std::string what, std::vector<double> best)
        : std::runtime_error(std::move(what)), best_iterate(std::move(best)) {}
    std::vector<double> best_iterate;
};

// x'_i = -j_q(z_i): the unique velocity saturating Young's inequality
// against z, so that dE_N/dt = -(1/p)||x'||_{w,p}^p - (1/q)||z||_{w,q}^q.
inline std::vector<double> velocity_from_subgradient(const Subgradient& z,
                                                     const FlowParams& params) {
    std::vector<double> v(z.z.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = -duality_map(z.z[i], params.q);
    return v;
}

namespace detail {

inline void apply_pinning(std::vector<double>& v, bool pinned) {
    if (pinned && !v.empty()) {
        v.front() = 0.0;
        v.back() = 0.0;
    }
}

// Component mask for the pinned (endpoints fixed) constrained flow: the
// minimal selection must be taken over the interior components only, or the
// interior velocity is not a descent direction.
inline std::vector<char> interior_mask(int n) {
    std::vector<char> m(static_cast<std::size_t>(n), 1);
    if (n >= 1) { m.front() = 0; m.back() = 0; }
    return m;
}

inline Subgradient pinned_aware_selection(const ParticleConfig& cfg, const EnergyModel& mdl,
                                          bool pinned,
                                          const std::vector<double>* shift = nullptr) {
    if (!pinned) return minimal_selection(cfg, mdl, 1e-12, shift);
    std::vector<char> mask = interior_mask(cfg.size());
    return minimal_selection(cfg, mdl, 1e-12, shift, &mask);
}

inline bool ordering_ok(const std::vector<double>& x, double margin) {
    for (std::size_t i = 1; i < x.size(); ++i)
        if (!(x[i] - x[i - 1] >= margin)) return false;
    return true;
}

// Project runs of nearly equal adjacent gaps onto exact equality by
// re-spacing each run uniformly between its end particles. This selects the
// sliding representative of the descent inclusion at the kinks of
// min(dx_i, dx_{i+1}); without it explicit steps chatter across the kinks
// and the acceptance loop drives dt to zero. Endpoints never move. When
// `eligible` is non-null, the pair of gaps (g, g+1) may only be merged if
// (*eligible)[g] is set; this is how callers restrict snapping to attracting
// kinks and avoid locking ties the true flow separates.
inline void snap_tied_gaps(std::vector<double>& y, double band_rel,
                           const std::vector<char>* eligible = nullptr) {
    const std::size_t n = y.size();
    if (n < 3 || band_rel <= 0.0) return;
    auto gap = [&](std::size_t g) { return y[g + 1] - y[g]; };
    auto near = [&](std::size_t g) {
        if (eligible && !(*eligible)[g]) return false;
        return std::abs(gap(g + 1) - gap(g)) <=
               band_rel * std::max(gap(g + 1), gap(g));
    };
    std::size_t a = 0;  // gaps indexed 0..n-2; [a, b] is the current run
    while (a + 1 <= n - 2) {
        std::size_t b = a;
        while (b + 1 <= n - 2 && near(b)) ++b;
        if (b > a) {
            double lo = y[a], hi = y[b + 1];
            double m = (hi - lo) / static_cast<double>(b + 1 - a);
            for (std::size_t k = a + 1; k <= b; ++k)
                y[k] = lo + m * static_cast<double>(k - a);
        }
        a = b + 1;
    }
}

}  // namespace detail

struct StepResult {
    ParticleConfig state;
    double dt_used = 0.0;
    double dt_next = 0.0;
    Subgradient selection;  // the pre-step selection that produced the velocity
};

// One explicit descent step with an acceptance loop: the candidate must keep
// the ordering with margin, stay in the interval, and not increase E_N;
// otherwise dt is halved (at most 40 times).
inline StepResult explicit_step(const ParticleConfig& cfg, const EnergyModel& mdl,
                                const FlowParams& params, double dt,
                                bool pinned = false, bool adaptive = false) {
    if (!(dt > 0.0)) throw std::invalid_argument("explicit_step: dt must be > 0");
    Subgradient sg = detail::pinned_aware_selection(cfg, mdl, pinned);
    std::vector<double> v = velocity_from_subgradient(sg, params);
    detail::apply_pinning(v, pinned);

    // Regularize the start state: snapped candidates from earlier steps drift
    // off the tie manifold by rounding, leaving gap pairs in the band where
    // the tie classification is unstable and the one-sided gradient flips
    // within a single step. Re-merge attracting runs exactly before
    // differentiating; the projection may only lower the energy.
    ParticleConfig base = cfg;
    if (cfg.size() >= 3) {
        const auto& x0 = cfg.positions();
        std::vector<char> attract(x0.size() - 2, 0);
        bool any = false;
        for (std::size_t g = 0; g + 2 < x0.size(); ++g) {
            double ga = x0[g + 1] - x0[g], gb = x0[g + 2] - x0[g + 1];
            double delta = gb - ga;
            double rate = (v[g + 2] - v[g + 1]) - (v[g + 1] - v[g]);
            // Pairs already classified tied must stay eligible: re-spacing an
            // adjacent run perturbs their gaps by more than the tie tolerance,
            // and excluding them would break the plateau they belong to.
            bool tied = std::abs(delta) <= 1e-12 * std::max(ga, gb);
            bool unstable =
                !tied && std::abs(delta) <= 1e-6 * std::max(ga, gb) && delta * rate < 0.0;
            attract[g] = tied || unstable;
            any = any || unstable;
        }
        if (any) {
            std::vector<double> xs = x0;
            detail::snap_tied_gaps(xs, 1e-6, &attract);
            if (xs != x0 && detail::ordering_ok(xs, 0.0)) {
                ParticleConfig snapped = ParticleConfig::create(xs, cfg.domain(), pinned);
                double es = discrete_energy(snapped, mdl);
                if (es <= discrete_energy(cfg, mdl) + 1e-12 * (1.0 + std::abs(es))) {
                    base = std::move(snapped);
                    sg = detail::pinned_aware_selection(base, mdl, pinned);
                    v = velocity_from_subgradient(sg, params);
                    detail::apply_pinning(v, pinned);
                }
            }
        }
    }

    double vmax = 0.0;
    for (double vi : v) vmax = std::max(vmax, std::abs(vi));
    const double min_gap = base.min_interior_gap();
    const double dt_max = min_gap * base.size() / (10.0 * vmax + 1e-300);
    const double e0 = discrete_energy(base, mdl);
    const double e_slack = 1e-12 * (1.0 + std::abs(e0));

    if (vmax == 0.0) return {base, dt, adaptive ? std::min(dt * 2.0, dt_max) : dt, sg};

    for (int halvings = 0; halvings <= 40; ++halvings) {
        std::vector<double> y = base.positions();
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += dt * v[i];
        bool ok = detail::ordering_ok(y, 0.1 * min_gap);
        if (ok && base.domain().is_interval())
            ok = y.front() >= -base.domain().l && y.back() <= base.domain().l;
        if (ok) {
            // Crossing flags. Strict (sign change within the step): the pair
            // is crossing a kink of min(dx_i, dx_{i+1}) and its sliding
            // representative is preferred. Weak (also pairs already exactly on
            // the kink): merging these is only a rescue when the raw step is
            // an energy ascent -- the chattering signature -- because an exact
            // tie whose raw separation passes the energy test is a tie the
            // descent flow genuinely leaves, and re-merging it every step
            // would lock the configuration onto ties the flow has passed.
            std::vector<double> ys = y, yw = y;
            if (y.size() >= 3) {
                const auto& x0 = base.positions();
                const double band =
                    std::max(1e-7, std::min(0.02, 10.0 * dt * vmax / min_gap));
                std::vector<char> strict(y.size() - 2, 0), weak(y.size() - 2, 0);
                bool any_s = false, any_w = false;
                for (std::size_t g = 0; g + 2 < y.size(); ++g) {
                    double d0 = (x0[g + 2] - x0[g + 1]) - (x0[g + 1] - x0[g]);
                    double ga = y[g + 1] - y[g], gb = y[g + 2] - y[g + 1];
                    double d1 = gb - ga;
                    // A pair still tied to rounding dust at the candidate is
                    // sliding and must stay eligible so an adjacent merge does
                    // not knock it off the tie manifold; a genuinely released
                    // tie has |d1| = dt * |rate|, far above the dust scale.
                    bool dust = std::abs(d1) <= 1e-12 * std::max(ga, gb);
                    strict[g] = d0 * d1 < 0.0 || dust;
                    weak[g] = d0 * d1 <= 0.0 || dust;
                    any_s = any_s || strict[g];
                    any_w = any_w || weak[g];
                }
                if (any_s) detail::snap_tied_gaps(ys, band, &strict);
                if (any_w) detail::snap_tied_gaps(yw, band, &weak);
            }
            // Sliding candidate first, raw second, chatter rescue last.
            for (std::vector<double>* cand : {&ys, &y, &yw}) {
                if (!detail::ordering_ok(*cand, 0.1 * min_gap)) continue;
                ParticleConfig next = ParticleConfig::create(*cand, base.domain(), pinned);
                double e1 = discrete_energy(next, mdl);
                if (e1 <= e0 + e_slack) {
                    double dt_next = adaptive ? std::min(dt * 2.0, dt_max) : dt;
                    return {std::move(next), dt, dt_next, sg};
                }
            }
        }
        dt *= 0.5;
    }
    throw StiffnessError("explicit_step: step size underflow after 40 halvings", base);
}

// Minimizing-movement step: minimizer of
//   Phi(y) = E_N(y) + ||y - x||_{w,p}^p / (p tau^{p-1})
// over ordered admissible configurations, by projected subgradient descent
// with Armijo backtracking from the initial point x. Phi is convex in 1D.
inline ParticleConfig minimizing_movement_step(const ParticleConfig& cfg,
                                               const EnergyModel& mdl,
                                               const FlowParams& params, double tau,
                                               bool pinned = false, double tol = 0.0) {
    if (!(tau > 0.0)) throw std::invalid_argument("minimizing_movement_step: tau must be > 0");
    const int n = cfg.size();
    const double p = params.p, q = params.q;
    const double tp = std::pow(tau, p - 1.0);
    const std::vector<double>& x = cfg.positions();

    auto admissible = [&](const std::vector<double>& y) {
        if (!detail::ordering_ok(y, 1e-14)) return false;
        if (cfg.domain().is_interval() &&
            (y.front() < -cfg.domain().l || y.back() > cfg.domain().l)) return false;
        return true;
    };
    auto phi = [&](const std::vector<double>& y) {
        ParticleConfig c = ParticleConfig::create(y, cfg.domain(), pinned);
        double pen = 0.0;
        for (int i = 0; i < n; ++i)
            pen += std::pow(std::abs(y[static_cast<std::size_t>(i)] -
                                     x[static_cast<std::size_t>(i)]), p);
        pen /= static_cast<double>(n);
        return discrete_energy(c, mdl) + pen / (p * tp);
    };
    // Weighted dual gradient of Phi at y: z(y) + j_p(y - x) / tau^{p-1},
    // with the lambda freedom of the tied comparisons spent on minimizing the
    // combined norm (the steepest-descent selection for Phi at kinks).
    auto grad_w = [&](const std::vector<double>& y) {
        ParticleConfig c = ParticleConfig::create(y, cfg.domain(), pinned);
        std::vector<double> shift(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i)
            shift[static_cast<std::size_t>(i)] =
                duality_map(y[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(i)], p) / tp;
        Subgradient sg = detail::pinned_aware_selection(c, mdl, pinned, &shift);
        std::vector<double> w = sg.z;
        for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] += shift[static_cast<std::size_t>(i)];
        if (pinned) { w.front() = 0.0; w.back() = 0.0; }
        return w;
    };

    if (tol <= 0.0) tol = 1e-10 * static_cast<double>(n);
    std::vector<double> y = x;
    double fy = phi(y);
    double alpha0 = tau;  // natural scale of one implicit step
    int stagnant = 0;
    std::vector<double> y_prev, w_prev;
    for (int it = 0; it < 20000; ++it) {
        // Pull the iterate onto nearby kinks of min(dx_i, dx_{i+1}): at a
        // near-tie the energy is differentiable with a one-sided gradient,
        // the steepest-descent selection over the lambda hull is valid only
        // on the kink itself, and iterates are attracted to the kinks anyway.
        {
            std::vector<double> ys(y);
            detail::snap_tied_gaps(ys, 1e-6);
            if (ys != y && admissible(ys)) {
                double fs = phi(ys);
                if (fs <= fy + 1e-12 * (1.0 + std::abs(fy))) {
                    y = std::move(ys);
                    fy = fs;
                }
            }
        }
        std::vector<double> w = grad_w(y);
        double wq = weighted_norm(w, q);
        if (wq <= tol) break;
        std::vector<double> d(w.size());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = -duality_map(w[i], q);
        double slope = weighted_inner(w, d);  // = -||w||_q^q < 0

        double alpha = alpha0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            std::vector<double> yt(y);
            for (std::size_t i = 0; i < yt.size(); ++i) yt[i] += alpha * d[i];
            if (admissible(yt)) {
                double ft = phi(yt);
                if (ft <= fy + 1e-4 * alpha * slope) {
                    double drop = fy - ft;
                    y = std::move(yt);
                    fy = ft;
                    accepted = true;
                    alpha0 = std::min(alpha * 2.0, tau);
                    stagnant = drop <= 1e-15 * (1.0 + std::abs(fy)) ? stagnant + 1 : 0;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if (accepted && stagnant >= 3) break;  // at the float floor of Phi
        if (!accepted) {
            // Sixty halvings put the Armijo decrease below the float
            // resolution of Phi; with a near-tolerance gradient this is the
            // numerical floor, otherwise the tolerance is unreachable.
            if (wq <= 1e3 * tol) break;
            throw ToleranceNotMet("minimizing_movement_step: line search failed", y);
        }
    }
    return ParticleConfig::create(y, cfg.domain(), pinned);
}

// Advance the discrete gradient flow from t = 0 to t_end, recording energy,
// slope (both conventions), per-step metric speed and the p-th moment.
inline Trajectory run(const ParticleConfig& cfg0, const EnergyModel& mdl,
                      const FlowParams& params, const IntegratorSpec& spec) {
    spec.validate();
    if (spec.pinned && !cfg0.pinned())
        throw std::invalid_argument("run: pinned spec requires a pinned initial config");

    Trajectory traj;
    auto record = [&](double t, const ParticleConfig& c, double speed) {
        TrajectorySample s{t, c, discrete_energy(c, mdl),
                           discrete_slope(c, mdl, SlopeConvention::dual_q),
                           discrete_slope(c, mdl, SlopeConvention::paper_p), speed,
                           c.moment(params.p)};
        traj.samples.push_back(std::move(s));
    };

    record(0.0, cfg0, 0.0);
    ParticleConfig cur = cfg0;
    ParticleConfig last_recorded = cfg0;
    double t = 0.0, t_last_rec = 0.0;
    double dt = spec.dt;
    int steps_since_record = 0;

    while (t < spec.t_end - 1e-15 * spec.t_end) {
        double step_dt = std::min(dt, spec.t_end - t);
        if (spec.scheme == IntegratorSpec::Scheme::explicit_descent) {
            StepResult r = explicit_step(cur, mdl, params, step_dt, spec.pinned, spec.adaptive);
            cur = std::move(r.state);
            t += r.dt_used;
            dt = spec.adaptive ? r.dt_next * spec.safety : spec.dt;
        } else {
            cur = minimizing_movement_step(cur, mdl, params, step_dt, spec.pinned);
            t += step_dt;
        }
        if (++steps_since_record >= spec.record_every || t >= spec.t_end - 1e-15 * spec.t_end) {
            std::vector<double> diff(cur.positions());
            const std::vector<double>& prev = last_recorded.positions();
            for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= prev[i];
            double speed = weighted_norm(diff, params.p) / (t - t_last_rec);
            record(t, cur, speed);
            last_recorded = cur;
            t_last_rec = t;
            steps_since_record = 0;
        }
    }
    return traj;
}

}  // namespace leibenson
