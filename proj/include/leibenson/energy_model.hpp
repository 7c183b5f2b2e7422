#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace leibenson {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Exponents of the flow: p of the Wasserstein space, its conjugate q,
// and the polytropy-related exponent gamma for the power-law family.
struct FlowParams {
    double p = 2.0;
    double q = 2.0;
    double gamma = 2.0;

    static FlowParams make(double p, double gamma) {
        if (!(p > 1.0))
            throw std::invalid_argument("FlowParams: p must be > 1");
        if (!(gamma > 0.0))
            throw std::invalid_argument("FlowParams: gamma must be > 0");
        FlowParams fp;
        fp.p = p;
        fp.q = p / (p - 1.0);
        fp.gamma = gamma;
        return fp;
    }
};

// Internal-energy function family. H acts on densities u > 0 with H(0) = 0;
// h(x) = x*H(1/x) acts on local volumes and must be strictly convex and
// non-increasing, so that psi = -h' is positive, strictly decreasing and
// invertible. Closed forms (psi_inverse, doubling constant, the scaling
// functions f, f1, f2) are model-supplied where known and left empty
// ("unverified") otherwise.
class EnergyModel {
public:
    FlowParams params;
    std::string family = "custom";

    std::function<double(double)> H_raw;   // u > 0
    std::function<double(double)> dH;      // H'
    std::function<double(double)> d2H;     // H''
    std::function<double(double)> h;       // x > 0
    std::function<double(double)> dh;      // h'
    std::function<double(double)> d2h;     // h''

    std::function<double(double)> psi_closed_inverse;  // optional
    std::optional<double> doubling_A;                  // optional
    std::function<double(double)> f;                   // Hypothesis-2 minorant, optional
    std::function<double(double)> f1, f2;              // scaling majorants, optional

    // H evaluated with the vacuum convention: exactly 0 at u = 0, and the
    // argument clipped below at u_min to avoid 0^negative overflow.
    double H(double u) const {
        if (u == 0.0) return 0.0;
        if (u < 0.0) throw std::domain_error("EnergyModel::H: negative density");
        return H_raw(std::max(u, 1e-300));
    }

    double psi(double x) const { return -dh(x); }
    double dpsi(double x) const { return -d2h(x); }
    double L_H(double u) const { return u * dH(u) - H(u); }

    // Inverse of psi on (0, inf). Uses the closed form when available,
    // otherwise monotone bracket expansion followed by bisection with a
    // Newton polish. psi is strictly decreasing so the bracket is
    // [x_lo, x_hi] with psi(x_lo) >= y >= psi(x_hi).
    double psi_inverse(double y) const {
        if (!(y > 0.0))
            throw std::domain_error("EnergyModel::psi_inverse: y outside range of psi");
        if (psi_closed_inverse) return psi_closed_inverse(y);

        double lo = 1.0, hi = 1.0;
        int guard = 0;
        while (psi(lo) < y) {
            lo *= 0.5;
            if (++guard > 2000) throw std::domain_error("psi_inverse: y above range of psi");
        }
        guard = 0;
        while (psi(hi) > y) {
            hi *= 2.0;
            if (++guard > 2000) throw std::domain_error("psi_inverse: y below range of psi");
        }
        for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (lo + hi);
            double v = psi(mid);
            if (v >= y) lo = mid; else hi = mid;
            if (hi - lo <= 1e-15 * hi) break;
        }
        double x = 0.5 * (lo + hi);
        for (int it = 0; it < 8; ++it) {  // Newton polish
            double r = psi(x) - y;
            double d = dpsi(x);
            if (d == 0.0) break;
            double xn = x - r / d;
            if (!(xn > 0.0) || xn < lo || xn > hi) break;
            x = xn;
            if (std::abs(r) <= 1e-13 * std::max(1.0, std::abs(y))) break;
        }
        return x;
    }
};

// The power-law family H(u) = c*u^m with m = gamma+2-p and
// c = gamma/((gamma+1-p)(gamma+2-p)), whose gradient flow is the
// Leibenson equation u_t = Delta_q(u^gamma).
inline EnergyModel power_law_model(FlowParams params) {
    const double p = params.p, g = params.gamma;
    if (!(g + 1.0 - p > 0.0))
        throw std::invalid_argument(
            "power_law_model: gamma + 1 - p must be > 0 (psi not invertible otherwise)");
    const double m = g + 2.0 - p;
    const double c = g / ((g + 1.0 - p) * (g + 2.0 - p));

    EnergyModel mdl;
    mdl.params = params;
    mdl.family = "power_law";
    mdl.H_raw = [c, m](double u) { return c * std::pow(u, m); };
    mdl.dH = [c, m](double u) { return c * m * std::pow(u, m - 1.0); };
    mdl.d2H = [c, m](double u) { return c * m * (m - 1.0) * std::pow(u, m - 2.0); };
    mdl.h = [c, m](double x) { return c * std::pow(x, 1.0 - m); };
    mdl.dh = [c, m](double x) { return c * (1.0 - m) * std::pow(x, -m); };
    mdl.d2h = [c, m](double x) { return c * m * (m - 1.0) * std::pow(x, -m - 1.0); };
    mdl.psi_closed_inverse = [c, m](double y) {
        if (!(y > 0.0)) throw std::domain_error("psi_inverse: y outside range of psi");
        return std::pow(c * (m - 1.0) / y, 1.0 / m);
    };
    mdl.doubling_A = std::pow(2.0, m - 1.0);
    mdl.f = [m](double a) { return std::pow(a, m - 2.0); };
    mdl.f1 = [m](double a) { return std::pow(a, m); };
    mdl.f2 = [](double) { return 0.0; };
    return mdl;
}

struct ValidationClause {
    std::string name;
    bool checked = true;  // false: no closed form supplied, clause unverified
    bool pass = false;
    double worst = 0.0;   // worst signed violation over the sample grid
};

struct ValidationReport {
    std::vector<ValidationClause> clauses;

    bool all_pass() const {
        for (const auto& c : clauses)
            if (c.checked && !c.pass) return false;
        return true;
    }
};

// Sampled check of Hypotheses 1-2 and the scaling condition on H.
// Inequalities are tested on the supplied grid (and its products) with
// tolerance `tol`, reporting the worst violation per clause.
inline ValidationReport validate_hypotheses(const EnergyModel& mdl,
                                            const std::vector<double>& grid,
                                            double tol = 1e-10) {
    if (grid.empty())
        throw std::invalid_argument("validate_hypotheses: empty sample grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0))
            throw std::invalid_argument("validate_hypotheses: non-positive grid entry");
        if (i > 0 && !(grid[i] > grid[i - 1]))
            throw std::invalid_argument("validate_hypotheses: grid not sorted");
    }

    ValidationReport rep;
    auto push = [&rep](std::string name, bool checked, bool pass, double worst) {
        rep.clauses.push_back({std::move(name), checked, pass, worst});
    };

    // H convex: second differences >= -tol.
    {
        double worst = 0.0;
        for (double u : grid) {
            double du = 1e-4 * u;
            double sd = mdl.H(u + du) - 2.0 * mdl.H(u) + mdl.H(u - du);
            worst = std::min(worst, sd / (du * du));
        }
        push("H_convex", true, worst >= -tol, worst);
    }

    // h strictly convex and non-increasing.
    {
        double worst_conv = kInf, worst_mono = -kInf;
        for (double x : grid) {
            worst_conv = std::min(worst_conv, mdl.d2h(x));
            worst_mono = std::max(worst_mono, mdl.dh(x));
        }
        push("h_strictly_convex", true, worst_conv > 0.0, worst_conv);
        push("h_non_increasing", true, worst_mono <= tol, worst_mono);
    }

    // Doubling: H(x+y) <= A(1 + H(x) + H(y)) over the grid product.
    if (mdl.doubling_A) {
        double A = *mdl.doubling_A, worst = -kInf;
        for (double x : grid)
            for (double y : grid) {
                double v = mdl.H(x + y) - A * (1.0 + mdl.H(x) + mdl.H(y));
                worst = std::max(worst, v);
            }
        push("doubling", true, worst <= tol, worst);
    } else {
        push("doubling", false, false, 0.0);
    }

    // Hypothesis 2: H''(a*x) >= f(a) H''(x) over the (x, a) grid.
    if (mdl.f) {
        double worst = -kInf;
        bool f1ok = std::abs(mdl.f(1.0) - 1.0) <= tol;
        for (double x : grid)
            for (double a : grid) {
                double lhs = mdl.d2H(a * x);
                double v = (mdl.f(a) * mdl.d2H(x) - lhs) / std::max(1.0, std::abs(lhs));
                worst = std::max(worst, v);
            }
        push("hypothesis2", true, f1ok && worst <= tol, worst);
    } else {
        push("hypothesis2", false, false, 0.0);
    }

    // Scaling condition: H(a*x) <= f1(a) H(x) + f2(a) x.
    if (mdl.f1 && mdl.f2) {
        double worst = -kInf;
        bool edge = std::abs(mdl.f1(1.0) - 1.0) <= tol && std::abs(mdl.f2(1.0)) <= tol;
        for (double x : grid)
            for (double a : grid) {
                double rhs = mdl.f1(a) * mdl.H(x) + mdl.f2(a) * x;
                // Relative slack: the power-law case holds with equality, so
                // the check must absorb roundoff proportional to the terms.
                worst = std::max(worst, (mdl.H(a * x) - rhs) / std::max(1.0, rhs));
            }
        push("scaling_condition", true, edge && worst <= tol, worst);
    } else {
        push("scaling_condition", false, false, 0.0);
    }

    // Superlinear growth: H(u)/u increasing beyond the largest grid point.
    {
        double u = grid.back();
        double prev = mdl.H(u) / u;
        bool incr = true;
        double worst = 0.0;
        for (int k = 1; k <= 20; ++k) {
            double v = u * std::pow(2.0, k);
            double ratio = mdl.H(v) / v;
            if (ratio < prev * (1.0 + tol)) {
                incr = false;
                worst = std::min(worst, ratio - prev);
            }
            prev = ratio;
        }
        push("superlinear", true, incr, worst);
    }

    return rep;
}

}  // namespace leibenson
