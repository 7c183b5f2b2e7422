#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "leibenson/energy_model.hpp"
#include "leibenson/particle_system.hpp"

namespace leibenson {
namespace detail {

// 16-point Gauss-Legendre on [-1, 1].
inline const double kGlx[16] = {
    -0.9894009349916499, -0.9445750230732326, -0.8656312023878318, -0.7554044083550030,
    -0.6178762444026438, -0.4580167776572274, -0.2816035507792589, -0.0950125098376374,
    0.0950125098376374,  0.2816035507792589,  0.4580167776572274,  0.6178762444026438,
    0.7554044083550030,  0.8656312023878318,  0.9445750230732326,  0.9894009349916499};
inline const double kGlw[16] = {
    0.0271524594117541, 0.0622535239386479, 0.0951585116824928, 0.1246289712555339,
    0.1495959888165767, 0.1691565193950025, 0.1826034150449236, 0.1894506104550685,
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};

template <typename F>
double gauss16(F&& f, double a, double b) {
    double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = 0.0;
    for (int i = 0; i < 16; ++i) s += kGlw[i] * f(c + h * kGlx[i]);
    return s * h;
}

// Recursive bisection against the 16-point rule until the refinement stops
// moving at relative tolerance `tol`.
template <typename F>
double adaptive_gauss(F&& f, double a, double b, double tol, int depth = 0,
                      double whole = kInf) {
    if (whole == kInf) whole = gauss16(f, a, b);
    double m = 0.5 * (a + b);
    double left = gauss16(f, a, m), right = gauss16(f, m, b);
    if (depth >= 24 ||
        std::abs(left + right - whole) <= tol * std::max(1.0, std::abs(left + right)))
        return left + right;
    return adaptive_gauss(f, a, m, tol, depth + 1, left) +
           adaptive_gauss(f, m, b, tol, depth + 1, right);
}

}  // namespace detail

// Piecewise continuum density on a compact support with CDF/quantile access.
// Two representations: piecewise-constant cell values (block densities, FV
// states) and piecewise-linear node values, the latter optionally backed by
// an exact callable (and derivative) used wherever available.
class DensityProfile {
public:
    enum class Rep { piecewise_constant, piecewise_linear };

    static DensityProfile piecewise_constant(std::vector<double> nodes,
                                             std::vector<double> cells) {
        check_nodes(nodes, cells.size() + 1);
        for (double c : cells)
            if (c < 0.0) throw std::invalid_argument("DensityProfile: negative density");
        DensityProfile d;
        d.rep_ = Rep::piecewise_constant;
        d.nodes_ = std::move(nodes);
        d.vals_ = std::move(cells);
        d.build_cum();
        return d;
    }

    static DensityProfile piecewise_linear(std::vector<double> nodes,
                                           std::vector<double> node_vals) {
        check_nodes(nodes, node_vals.size());
        for (double v : node_vals)
            if (v < 0.0) throw std::invalid_argument("DensityProfile: negative density");
        DensityProfile d;
        d.rep_ = Rep::piecewise_linear;
        d.nodes_ = std::move(nodes);
        d.vals_ = std::move(node_vals);
        d.build_cum();
        return d;
    }

    static DensityProfile from_function(std::function<double(double)> f, double a, double b,
                                        std::function<double(double)> df = {},
                                        int cells = 4096) {
        if (!(b > a)) throw std::invalid_argument("DensityProfile: empty support");
        std::vector<double> nodes(static_cast<std::size_t>(cells) + 1);
        std::vector<double> vals(nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            nodes[i] = a + (b - a) * static_cast<double>(i) / cells;
            vals[i] = f(nodes[i]);
            if (vals[i] < 0.0) throw std::invalid_argument("DensityProfile: negative density");
        }
        DensityProfile d;
        d.rep_ = Rep::piecewise_linear;
        d.nodes_ = std::move(nodes);
        d.vals_ = std::move(vals);
        d.fn_ = std::move(f);
        d.dfn_ = std::move(df);
        d.build_cum();
        return d;
    }

    Rep rep() const { return rep_; }
    const std::vector<double>& nodes() const { return nodes_; }
    double support_lo() const { return nodes_.front(); }
    double support_hi() const { return nodes_.back(); }
    double mass() const { return cum_.back(); }

    void normalize() {
        double m = mass();
        if (!(m > 0.0)) throw std::runtime_error("DensityProfile: zero mass");
        for (double& v : vals_) v /= m;
        for (double& c : cum_) c /= m;
        if (fn_) {
            auto f = fn_;
            fn_ = [f, m](double x) { return f(x) / m; };
        }
        if (dfn_) {
            auto df = dfn_;
            dfn_ = [df, m](double x) { return df(x) / m; };
        }
    }

    double eval(double x) const {
        if (x < nodes_.front() || x > nodes_.back()) return 0.0;
        if (fn_) return fn_(x);
        std::size_t c = cell_of(x);
        if (rep_ == Rep::piecewise_constant) return vals_[c];
        double t = (x - nodes_[c]) / (nodes_[c + 1] - nodes_[c]);
        return vals_[c] + t * (vals_[c + 1] - vals_[c]);
    }

    double derivative(double x) const {
        if (x < nodes_.front() || x > nodes_.back()) return 0.0;
        if (dfn_) return dfn_(x);
        if (rep_ == Rep::piecewise_constant) {
            // Central difference of cell values at cell centers.
            std::size_t c = cell_of(x);
            std::size_t lo = c > 0 ? c - 1 : c;
            std::size_t hi = c + 1 < vals_.size() ? c + 1 : c;
            double xl = 0.5 * (nodes_[lo] + nodes_[lo + 1]);
            double xh = 0.5 * (nodes_[hi] + nodes_[hi + 1]);
            return xh > xl ? (vals_[hi] - vals_[lo]) / (xh - xl) : 0.0;
        }
        std::size_t c = cell_of(x);
        return (vals_[c + 1] - vals_[c]) / (nodes_[c + 1] - nodes_[c]);
    }

    double cdf(double x) const {
        if (x <= nodes_.front()) return 0.0;
        if (x >= nodes_.back()) return cum_.back();
        std::size_t c = cell_of(x);
        if (fn_) return cum_[c] + detail::gauss16(fn_, nodes_[c], x);
        double h = x - nodes_[c];
        if (rep_ == Rep::piecewise_constant) return cum_[c] + vals_[c] * h;
        double slope = (vals_[c + 1] - vals_[c]) / (nodes_[c + 1] - nodes_[c]);
        return cum_[c] + vals_[c] * h + 0.5 * slope * h * h;
    }

    // Monotone bisection on the CDF with a Newton polish; robust across flat
    // (vacuum) cells.
    double quantile(double s) const {
        double m = cum_.back();
        if (!(s >= 0.0 && s <= m * (1.0 + 1e-12)))
            throw std::domain_error("DensityProfile::quantile: s outside [0, mass]");
        s = std::min(s, m);
        if (s <= 0.0) return nodes_.front();
        if (s >= m) return nodes_.back();
        auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
        std::size_t c = static_cast<std::size_t>(it - cum_.begin());
        c = c > 0 ? c - 1 : 0;
        double lo = nodes_[c], hi = nodes_[c + 1];
        for (int k = 0; k < 100; ++k) {
            double mid = 0.5 * (lo + hi);
            if (cdf(mid) < s) lo = mid; else hi = mid;
            if (hi - lo <= 1e-15 * std::max(1.0, std::abs(hi))) break;
        }
        double x = 0.5 * (lo + hi);
        for (int k = 0; k < 4; ++k) {
            double d = eval(x);
            if (!(d > 0.0)) break;
            double xn = x - (cdf(x) - s) / d;
            if (xn < lo || xn > hi) break;
            x = xn;
        }
        return x;
    }

    double moment(double p) const {
        double s = 0.0;
        for (std::size_t c = 0; c + 1 < nodes_.size(); ++c)
            s += detail::gauss16(
                [&](double x) { return std::pow(std::abs(x), p) * eval(x); },
                nodes_[c], nodes_[c + 1]);
        return s;
    }

    double min_on_support() const {
        double m = kInf;
        for (double v : vals_) m = std::min(m, v);
        return m;
    }

    DensityProfile as_piecewise_linear() const {
        if (rep_ == Rep::piecewise_linear) return *this;
        // Node values at cell centers; support endpoints keep the end cells.
        std::vector<double> xs, vs;
        xs.push_back(nodes_.front());
        vs.push_back(vals_.front());
        for (std::size_t c = 0; c < vals_.size(); ++c) {
            xs.push_back(0.5 * (nodes_[c] + nodes_[c + 1]));
            vs.push_back(vals_[c]);
        }
        xs.push_back(nodes_.back());
        vs.push_back(vals_.back());
        return piecewise_linear(std::move(xs), std::move(vs));
    }

private:
    static void check_nodes(const std::vector<double>& nodes, std::size_t expect_vals) {
        if (nodes.size() < 2 || nodes.size() != expect_vals)
            throw std::invalid_argument("DensityProfile: node/value size mismatch");
        for (std::size_t i = 1; i < nodes.size(); ++i)
            if (!(nodes[i] > nodes[i - 1]))
                throw std::invalid_argument("DensityProfile: nodes must be increasing");
    }

    std::size_t cell_of(double x) const {
        auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
        std::size_t c = static_cast<std::size_t>(it - nodes_.begin());
        if (c == 0) return 0;
        if (c >= nodes_.size()) return nodes_.size() - 2;
        return c - 1;
    }

    void build_cum() {
        cum_.assign(nodes_.size(), 0.0);
        for (std::size_t c = 0; c + 1 < nodes_.size(); ++c) {
            double h = nodes_[c + 1] - nodes_[c];
            double dm;
            if (fn_) {
                double mid = 0.5 * (nodes_[c] + nodes_[c + 1]);
                dm = h / 6.0 * (fn_(nodes_[c]) + 4.0 * fn_(mid) + fn_(nodes_[c + 1]));
            } else if (rep_ == Rep::piecewise_constant) {
                dm = vals_[c] * h;
            } else {
                dm = 0.5 * (vals_[c] + vals_[c + 1]) * h;
            }
            cum_[c + 1] = cum_[c] + dm;
        }
    }

    Rep rep_ = Rep::piecewise_linear;
    std::vector<double> nodes_;
    std::vector<double> vals_;
    std::vector<double> cum_;
    std::function<double(double)> fn_, dfn_;
};

// Block density rho_N = (1/N) sum chi_{B_i}/|B_i| of a particle
// configuration; the balls are disjoint, so cells between consecutive ball
// endpoints carry either one block height or vacuum.
inline DensityProfile block_density(const ParticleConfig& cfg) {
    const int n = cfg.size();
    const double N = static_cast<double>(n);
    std::vector<double> nodes;
    std::vector<double> cells;
    for (int i = 1; i <= n; ++i) {
        double r = cfg.ball_size(i);
        if (!(r > 0.0) || std::isinf(r))
            throw std::runtime_error("block_density: degenerate ball");
        double lo = cfg.pos(i) - 0.5 * r, hi = cfg.pos(i) + 0.5 * r;
        double height = 1.0 / (N * r);
        if (!nodes.empty() && lo > nodes.back()) {
            nodes.push_back(lo);
            cells.push_back(0.0);  // vacuum between balls
            nodes.push_back(hi);
            cells.push_back(height);
        } else {
            if (nodes.empty()) nodes.push_back(lo);
            nodes.push_back(hi);
            cells.push_back(height);
        }
    }
    return DensityProfile::piecewise_constant(std::move(nodes), std::move(cells));
}

namespace detail {

struct QuantileSource {
    std::function<double(double)> Q;
    std::vector<double> breakpoints;  // s-values where Q may kink or jump
};

inline QuantileSource quantile_source(const ParticleConfig& cfg) {
    const int n = cfg.size();
    QuantileSource qs;
    qs.Q = [cfg, n](double s) {
        int i = static_cast<int>(std::ceil(s * n));
        i = std::max(1, std::min(n, i));
        return cfg.pos(i);
    };
    for (int i = 0; i <= n; ++i)
        qs.breakpoints.push_back(static_cast<double>(i) / n);
    return qs;
}

inline QuantileSource quantile_source(const DensityProfile& rho) {
    QuantileSource qs;
    qs.Q = [rho](double s) { return rho.quantile(s * rho.mass()); };
    for (double x : rho.nodes()) qs.breakpoints.push_back(rho.cdf(x) / rho.mass());
    return qs;
}

inline double wasserstein_from_quantiles(const QuantileSource& a, const QuantileSource& b,
                                         double p) {
    std::vector<double> bp(a.breakpoints);
    bp.insert(bp.end(), b.breakpoints.begin(), b.breakpoints.end());
    bp.push_back(0.0);
    bp.push_back(1.0);
    std::sort(bp.begin(), bp.end());
    bp.erase(std::unique(bp.begin(), bp.end(),
                         [](double x, double y) { return std::abs(x - y) <= 1e-15; }),
             bp.end());
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
        double lo = std::max(0.0, bp[k]), hi = std::min(1.0, bp[k + 1]);
        if (hi <= lo) continue;
        total += adaptive_gauss(
            [&](double s) { return std::pow(std::abs(a.Q(s) - b.Q(s)), p); }, lo, hi, 1e-12);
    }
    return std::pow(total, 1.0 / p);
}

}  // namespace detail

// Exact 1D W_p between two empirical measures: the quantile functions are
// staircases, so the integral is a finite sum over merged level segments.
// Equal particle counts reduce to the weighted p-norm of sorted differences.
inline double wasserstein_p(const ParticleConfig& mu, const ParticleConfig& nu, double p) {
    const int n = mu.size(), m = nu.size();
    if (n == m) {
        std::vector<double> d(static_cast<std::size_t>(n));
        for (int i = 1; i <= n; ++i) d[i - 1] = mu.pos(i) - nu.pos(i);
        return weighted_norm(d, p);
    }
    double total = 0.0;
    double s = 0.0;
    int i = 1, j = 1;
    while (i <= n && j <= m) {
        double si = static_cast<double>(i) / n, sj = static_cast<double>(j) / m;
        double s_next = std::min(si, sj);
        total += (s_next - s) * std::pow(std::abs(mu.pos(i) - nu.pos(j)), p);
        s = s_next;
        if (si <= sj) ++i;
        if (sj <= si) ++j;
    }
    return std::pow(total, 1.0 / p);
}

inline double wasserstein_p(const DensityProfile& mu, const DensityProfile& nu, double p) {
    return detail::wasserstein_from_quantiles(detail::quantile_source(mu),
                                              detail::quantile_source(nu), p);
}

inline double wasserstein_p(const ParticleConfig& mu, const DensityProfile& nu, double p) {
    return detail::wasserstein_from_quantiles(detail::quantile_source(mu),
                                              detail::quantile_source(nu), p);
}

inline double wasserstein_p(const DensityProfile& mu, const ParticleConfig& nu, double p) {
    return wasserstein_p(nu, mu, p);
}

// E(rho) = int H(rho) dx by per-cell adaptive quadrature.
inline double continuum_energy(const DensityProfile& rho, const EnergyModel& mdl) {
    double total = 0.0;
    const auto& xs = rho.nodes();
    for (std::size_t c = 0; c + 1 < xs.size(); ++c)
        total += detail::adaptive_gauss([&](double x) { return mdl.H(rho.eval(x)); },
                                        xs[c], xs[c + 1], 1e-11);
    return total;
}

// Generalized Fisher information I_p = int |H''(rho) rho'|^p rho dx and the
// continuum slope g = I_p^{1/p}. The integrand is cut off where rho falls
// below `vacuum_cut`; the result is flagged when the near-vacuum band
// contributes materially (the true I_p may then be +inf).
struct FisherResult {
    double value = 0.0;
    bool truncated = false;
    double slope(double p) const { return std::pow(value, 1.0 / p); }
};

inline FisherResult fisher_information(const DensityProfile& rho, const EnergyModel& mdl,
                                       const FlowParams& params,
                                       double vacuum_cut = 1e-12) {
    const DensityProfile prof =
        rho.rep() == DensityProfile::Rep::piecewise_constant ? rho.as_piecewise_linear() : rho;
    const double p = params.p;
    auto integrand = [&](double x, double cut) {
        double d = prof.eval(x);
        if (d < cut) return 0.0;
        double dr = prof.derivative(x);
        return std::pow(std::abs(mdl.d2H(d) * dr), p) * d;
    };
    FisherResult res;
    const auto& xs = prof.nodes();
    double band = 0.0;
    for (std::size_t c = 0; c + 1 < xs.size(); ++c) {
        res.value += detail::adaptive_gauss(
            [&](double x) { return integrand(x, vacuum_cut); }, xs[c], xs[c + 1], 1e-10);
        band += detail::adaptive_gauss(
            [&](double x) {
                double d = prof.eval(x);
                return (d >= vacuum_cut && d < 1e-6) ? integrand(x, vacuum_cut) : 0.0;
            },
            xs[c], xs[c + 1], 1e-10);
    }
    res.truncated = band > 1e-6 * std::max(1e-300, res.value);
    return res;
}

// Membership certificate for the smooth set: symmetric compact support with
// strictly positive density on it.
struct SmoothSetCertificate {
    double r = 0.0;
    double min_density = 0.0;
    bool c1_flag = true;
};

inline SmoothSetCertificate certify_smooth_set(const DensityProfile& rho) {
    double lo = rho.support_lo(), hi = rho.support_hi();
    if (std::abs(lo + hi) > 1e-12 * std::max(1.0, std::abs(hi)))
        throw std::invalid_argument("certify_smooth_set: support not symmetric about 0");
    SmoothSetCertificate cert;
    cert.r = hi;
    cert.min_density = kInf;
    const int samples = 2048;
    for (int k = 0; k <= samples; ++k) {
        double x = lo + (hi - lo) * static_cast<double>(k) / samples;
        cert.min_density = std::min(cert.min_density, rho.eval(x));
    }
    if (!(cert.min_density > 0.0))
        throw std::invalid_argument("certify_smooth_set: density not bounded away from 0");
    return cert;
}

// Well-prepared particle initialization: interior particles at the quantiles
// (2i-1)/(2N), endpoints overridden to +-r, with the measured gap constants
// a1/N <= dx_i <= a2/N.
struct RecoveryResult {
    ParticleConfig cfg;
    double a1 = 0.0;
    double a2 = 0.0;
};

inline RecoveryResult recovery_sequence(const DensityProfile& rho,
                                        const SmoothSetCertificate& cert, int N,
                                        DomainSpec domain = DomainSpec::whole_line()) {
    if (N < 2) throw std::invalid_argument("recovery_sequence: N must be >= 2");
    if (!(cert.min_density > 0.0))
        throw std::invalid_argument("recovery_sequence: certificate has zero min density");
    double m = rho.mass();
    std::vector<double> x(static_cast<std::size_t>(N));
    for (int i = 1; i <= N; ++i)
        x[i - 1] = rho.quantile(m * (2.0 * i - 1.0) / (2.0 * N));
    x.front() = -cert.r;
    x.back() = cert.r;
    bool pinned = domain.is_interval();
    ParticleConfig cfg = ParticleConfig::create(std::move(x), domain, pinned);
    double a1 = kInf, a2 = 0.0;
    for (int i = 2; i <= N; ++i) {
        a1 = std::min(a1, cfg.gap(i) * N);
        a2 = std::max(a2, cfg.gap(i) * N);
    }
    return {std::move(cfg), a1, a2};
}

// The interpolant of a particle configuration: on each cell [x_i, x_{i+1}]
// the dual variable p_i is the linear interpolation between psi_i/N and
// psi_{i+1}/N (the endpoint values govern the definition) and
//   rho_tilde(x) = (1/m_N) / psi^{-1}(p_i(x)).
// nu = m_N * rho_tilde is the unnormalized version used in the slope chain.
class Interpolant {
public:
    Interpolant(ParticleConfig cfg, const EnergyModel& mdl)
        : cfg_(std::move(cfg)), mdl_(&mdl), psi_(psi_vector(cfg_, mdl)) {
        const int n = cfg_.size();
        const double N = static_cast<double>(n);
        m_N_ = 0.0;
        for (int i = 1; i < n; ++i) {
            m_N_ += detail::adaptive_gauss([&](double x) { return nu(x); },
                                           cfg_.pos(i), cfg_.pos(i + 1), 1e-12);
        }
        (void)N;
        if (!(m_N_ > 0.0)) throw std::runtime_error("Interpolant: zero mass");
    }

    double normalization() const { return m_N_; }
    const ParticleConfig& config() const { return cfg_; }

    // p_i(x) on the covering cell, in 1..N-1.
    double dual_value(double x) const {
        int i = cell_of(x);
        double xi = cfg_.pos(i), xj = cfg_.pos(i + 1);
        double t = (x - xi) / (xj - xi);
        const double N = static_cast<double>(cfg_.size());
        return ((1.0 - t) * psi_[i - 1] + t * psi_[i]) / N;
    }

    // nu = 1 / psi^{-1}(p_i(x)); zero outside [x_1, x_N] and at p_i <= 0
    // (the no-neighbor limit of an infinite sentinel gap).
    double nu(double x) const {
        if (x < cfg_.pos(1) || x > cfg_.pos(cfg_.size())) return 0.0;
        double pv = dual_value(x);
        if (!(pv > 0.0)) return 0.0;
        return 1.0 / mdl_->psi_inverse(pv);
    }

    double nu_prime(double x) const {
        int i = cell_of(x);
        const double N = static_cast<double>(cfg_.size());
        double slope = (psi_[i] - psi_[i - 1]) / (N * (cfg_.pos(i + 1) - cfg_.pos(i)));
        double pv = dual_value(x);
        if (!(pv > 0.0)) return 0.0;
        double w = mdl_->psi_inverse(pv);
        double dpsi = mdl_->dpsi(w);  // psi'(w) < 0
        if (dpsi == 0.0) return 0.0;
        double dw = slope / dpsi;
        return -dw / (w * w);
    }

    double rho_tilde(double x) const { return nu(x) / m_N_; }
    double rho_tilde_prime(double x) const { return nu_prime(x) / m_N_; }

    // I_p of nu (unnormalized) and of rho_tilde, via exact derivatives.
    double fisher_nu(double p) const { return fisher_of(p, 1.0); }
    double fisher_rho_tilde(double p) const { return fisher_of(p, 1.0 / m_N_); }

    DensityProfile as_profile(int cells_per_gap = 32) const {
        std::vector<double> xs, vs;
        const int n = cfg_.size();
        for (int i = 1; i < n; ++i) {
            for (int k = 0; k < cells_per_gap; ++k) {
                double x = cfg_.pos(i) +
                           (cfg_.pos(i + 1) - cfg_.pos(i)) * static_cast<double>(k) / cells_per_gap;
                xs.push_back(x);
                vs.push_back(rho_tilde(x));
            }
        }
        xs.push_back(cfg_.pos(n));
        vs.push_back(rho_tilde(cfg_.pos(n)));
        return DensityProfile::piecewise_linear(std::move(xs), std::move(vs));
    }

private:
    int cell_of(double x) const {
        const auto& xs = cfg_.positions();
        auto it = std::upper_bound(xs.begin(), xs.end(), x);
        int i = static_cast<int>(it - xs.begin());
        return std::max(1, std::min(cfg_.size() - 1, i));
    }

    double fisher_of(double p, double scale) const {
        double total = 0.0;
        for (int i = 1; i < cfg_.size(); ++i) {
            total += detail::adaptive_gauss(
                [&](double x) {
                    double d = scale * nu(x);
                    if (!(d > 0.0)) return 0.0;
                    double dr = scale * nu_prime(x);
                    return std::pow(std::abs(mdl_->d2H(d) * dr), p) * d;
                },
                cfg_.pos(i), cfg_.pos(i + 1), 1e-11);
        }
        return total;
    }

    ParticleConfig cfg_;
    const EnergyModel* mdl_;
    std::vector<double> psi_;
    double m_N_ = 1.0;
};

}  // namespace leibenson
