#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "leibenson/energy_model.hpp"

namespace leibenson {

struct DomainSpec {
    enum class Kind { whole_line, interval };
    Kind kind = Kind::whole_line;
    double l = 0.0;  // interval is [-l, l]

    static DomainSpec whole_line() { return {Kind::whole_line, 0.0}; }
    static DomainSpec interval(double l) {
        if (!(l > 0.0)) throw std::invalid_argument("DomainSpec: interval half-width must be > 0");
        return {Kind::interval, l};
    }
    bool is_interval() const { return kind == Kind::interval; }
};

// Sorted particle positions x_1 < ... < x_N with gap bookkeeping.
// Gap indices are 1-based: gap(i) = x_i - x_{i-1} for i = 2..N; the boundary
// gaps gap(1), gap(N+1) come from the fictitious mirror particles on an
// interval (x_0 = -2l - x_1, x_{N+1} = 2l - x_N), from the +inf sentinel on
// the whole line, or from the pinned convention gap(1) = gap(2),
// gap(N+1) = gap(N) when the endpoints sit exactly at +-l.
class ParticleConfig {
public:
    static ParticleConfig create(std::vector<double> positions, DomainSpec domain,
                                 bool pinned = false) {
        if (positions.size() < 2)
            throw std::invalid_argument("ParticleConfig: need N >= 2 particles");
        std::sort(positions.begin(), positions.end());
        for (std::size_t i = 1; i < positions.size(); ++i)
            if (!(positions[i] > positions[i - 1]))
                throw std::invalid_argument("ParticleConfig: positions must be distinct");
        if (domain.is_interval()) {
            if (positions.front() < -domain.l || positions.back() > domain.l)
                throw std::invalid_argument("ParticleConfig: particle outside interval");
            if (pinned &&
                (positions.front() != -domain.l || positions.back() != domain.l))
                throw std::invalid_argument(
                    "ParticleConfig: pinned requires x_1 = -l and x_N = l");
            if (!pinned &&
                (positions.front() == -domain.l || positions.back() == domain.l))
                throw std::invalid_argument(
                    "ParticleConfig: endpoint on the boundary degenerates the mirror gap; "
                    "use pinned = true");
        } else if (pinned) {
            throw std::invalid_argument("ParticleConfig: pinned requires an interval domain");
        }
        ParticleConfig cfg;
        cfg.x_ = std::move(positions);
        cfg.domain_ = domain;
        cfg.pinned_ = pinned;
        return cfg;
    }

    int size() const { return static_cast<int>(x_.size()); }
    double pos(int i) const { return x_[static_cast<std::size_t>(i - 1)]; }  // 1-based
    const std::vector<double>& positions() const { return x_; }
    const DomainSpec& domain() const { return domain_; }
    bool pinned() const { return pinned_; }

    double gap(int i) const {  // i in 1..N+1
        const int n = size();
        if (i >= 2 && i <= n) return x_[i - 1] - x_[i - 2];
        if (i == 1) {
            if (!domain_.is_interval()) return kInf;
            return pinned_ ? gap(2) : 2.0 * (x_.front() + domain_.l);
        }
        if (i == n + 1) {
            if (!domain_.is_interval()) return kInf;
            return pinned_ ? gap(n) : 2.0 * (domain_.l - x_.back());
        }
        throw std::out_of_range("ParticleConfig::gap");
    }

    // |B_i| in 1D: the minimal distance to a neighbor.
    double ball_size(int i) const { return std::min(gap(i), gap(i + 1)); }

    double min_interior_gap() const {
        double m = kInf;
        for (int i = 2; i <= size(); ++i) m = std::min(m, gap(i));
        return m;
    }
    double max_interior_gap() const {
        double m = 0.0;
        for (int i = 2; i <= size(); ++i) m = std::max(m, gap(i));
        return m;
    }

    // max_i |gap(i+1)/gap(i) - 1| over interior gap pairs.
    double mesh_ratio_excess() const {
        double m = 0.0;
        for (int i = 2; i < size(); ++i)
            m = std::max(m, std::abs(gap(i + 1) / gap(i) - 1.0));
        return m;
    }

    double moment(double p) const {
        double s = 0.0;
        for (double xi : x_) s += std::pow(std::abs(xi), p);
        return s / static_cast<double>(size());
    }

    ParticleConfig displaced(const std::vector<double>& delta) const {
        std::vector<double> y(x_);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += delta[i];
        return create(std::move(y), domain_, pinned_);
    }

private:
    std::vector<double> x_;
    DomainSpec domain_;
    bool pinned_ = false;
};

// Weighted p-norm ((1/N) sum |v_i|^e)^(1/e) and the associated pairing.
inline double weighted_norm(const std::vector<double>& v, double exponent) {
    if (!(exponent >= 1.0)) throw std::invalid_argument("weighted_norm: exponent must be >= 1");
    double s = 0.0;
    for (double vi : v) s += std::pow(std::abs(vi), exponent);
    return std::pow(s / static_cast<double>(v.size()), 1.0 / exponent);
}

inline double weighted_inner(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s / static_cast<double>(a.size());
}

// Discrete energy E_N = sum_i |B_i| H(1/(N|B_i|)) = (1/N) sum_i h(N r_i).
// Both closed forms are evaluated and cross-checked; they are algebraically
// equal in 1D through h(x) = x H(1/x).
inline double discrete_energy(const ParticleConfig& cfg, const EnergyModel& mdl) {
    const int n = cfg.size();
    const double N = static_cast<double>(n);
    double ball_form = 0.0, h_form = 0.0;
    for (int i = 1; i <= n; ++i) {
        double r = cfg.ball_size(i);
        if (!(r > 0.0))
            throw std::runtime_error("discrete_energy: degenerate configuration (zero gap)");
        ball_form += r * mdl.H(1.0 / (N * r));
        h_form += mdl.h(N * r) / N;
    }
    double scale = std::max({1.0, std::abs(ball_form), std::abs(h_form)});
    if (std::abs(ball_form - h_form) > 1e-12 * scale)
        throw std::runtime_error("discrete_energy: ball form and h form disagree");
    return h_form;
}

// psi_i = -N h'(N dx_i) for i = 1..N+1 (returned 0-based: out[i-1] = psi_i).
// Infinite sentinel gaps give psi_i = 0, the no-neighbor limit.
inline std::vector<double> psi_vector(const ParticleConfig& cfg, const EnergyModel& mdl) {
    const int n = cfg.size();
    const double N = static_cast<double>(n);
    std::vector<double> out(static_cast<std::size_t>(n) + 1);
    for (int i = 1; i <= n + 1; ++i) {
        double dx = cfg.gap(i);
        if (std::isinf(dx)) {
            out[i - 1] = 0.0;
        } else {
            if (!(dx > 0.0)) throw std::runtime_error("psi_vector: degenerate gap");
            out[i - 1] = -N * mdl.dh(N * dx);
        }
    }
    return out;
}

// Classification of the adjacent-gap comparisons c_k: gap(k+1) vs gap(k),
// k = 0..N+1. Each tied comparison carries one free lambda coordinate shared
// by every triplet entry referring to it; the end comparisons c_0, c_{N+1}
// are forced by the conventions dx_1 > dx_0 and dx_{N+1} > dx_{N+2}.
struct LambdaStructure {
    enum class Cmp { greater, tied, less };  // gap(k+1) vs gap(k)
    std::vector<Cmp> comp;                   // size N+2, index k
    std::vector<int> free_ks;                // tied comparison indices
    std::vector<std::vector<int>> clusters;  // maximal runs of consecutive tied k

    // lambda value of comparison k given the free coordinates.
    double value(int k, const std::vector<double>& free_vals) const {
        switch (comp[static_cast<std::size_t>(k)]) {
            case Cmp::greater: return 0.0;
            case Cmp::less: return 1.0;
            case Cmp::tied: {
                auto it = std::lower_bound(free_ks.begin(), free_ks.end(), k);
                return free_vals[static_cast<std::size_t>(it - free_ks.begin())];
            }
        }
        return 0.0;
    }
};

inline LambdaStructure lambda_structure(const ParticleConfig& cfg, double tie_tol = 1e-12) {
    if (tie_tol < 0.0) throw std::invalid_argument("lambda_structure: tie_tol must be >= 0");
    const int n = cfg.size();
    LambdaStructure ls;
    ls.comp.resize(static_cast<std::size_t>(n) + 2);
    ls.comp[0] = LambdaStructure::Cmp::greater;
    ls.comp[static_cast<std::size_t>(n) + 1] = LambdaStructure::Cmp::less;
    for (int k = 1; k <= n; ++k) {
        double a = cfg.gap(k), b = cfg.gap(k + 1);
        LambdaStructure::Cmp c;
        if (std::isinf(a) && std::isinf(b)) {
            c = LambdaStructure::Cmp::tied;
        } else if (std::isinf(b)) {
            c = LambdaStructure::Cmp::greater;
        } else if (std::isinf(a)) {
            c = LambdaStructure::Cmp::less;
        } else if (std::abs(b - a) <= tie_tol * std::max(a, b)) {
            c = LambdaStructure::Cmp::tied;
        } else {
            c = b > a ? LambdaStructure::Cmp::greater : LambdaStructure::Cmp::less;
        }
        ls.comp[static_cast<std::size_t>(k)] = c;
        if (c == LambdaStructure::Cmp::tied) ls.free_ks.push_back(k);
    }
    for (std::size_t j = 0; j < ls.free_ks.size(); ++j) {
        if (j == 0 || ls.free_ks[j] != ls.free_ks[j - 1] + 1) ls.clusters.emplace_back();
        ls.clusters.back().push_back(ls.free_ks[j]);
    }
    return ls;
}

// An element of the weighted subdifferential with its lambda provenance.
struct Subgradient {
    std::vector<double> z;
    std::vector<int> free_ks;          // tied comparisons, as in LambdaStructure
    std::vector<double> lambda_free;   // chosen values for them
    bool is_minimal_selection = false;
};

namespace detail {

// z_i = (l_i - l_i^+ + 1) psi_{i+1} - (l_i^- - l_i + 1) psi_i, where the
// triplet entries are the values of the comparisons c_{i-1}, c_i, c_{i+1}.
// This is the index placement of the subdifferential lemma's statement; its
// proof swaps psi_i and psi_{i+1}. The statement branch is the one matching
// the finite-difference gradient at no-tie configurations (see
// subgradient_index_resolution below and the unit tests), so it is the one
// implemented.
inline std::vector<double> assemble_z(const std::vector<double>& psi,
                                      const LambdaStructure& ls,
                                      const std::vector<double>& free_vals) {
    const int n = static_cast<int>(psi.size()) - 1;
    std::vector<double> z(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        double lm = ls.value(i - 1, free_vals);
        double l0 = ls.value(i, free_vals);
        double lp = ls.value(i + 1, free_vals);
        z[i - 1] = (l0 - lp + 1.0) * psi[i] - (lm - l0 + 1.0) * psi[i - 1];
    }
    return z;
}

}  // namespace detail

inline Subgradient subgradient_element(const ParticleConfig& cfg, const EnergyModel& mdl,
                                       const std::vector<double>& lambdas,
                                       double tie_tol = 1e-12) {
    LambdaStructure ls = lambda_structure(cfg, tie_tol);
    if (lambdas.size() != ls.free_ks.size())
        throw std::invalid_argument(
            "subgradient_element: lambda count does not match the tie structure");
    for (double l : lambdas)
        if (!(l >= 0.0 && l <= 1.0))
            throw std::invalid_argument("subgradient_element: lambda outside [0, 1]");
    Subgradient sg;
    sg.z = detail::assemble_z(psi_vector(cfg, mdl), ls, lambdas);
    sg.free_ks = ls.free_ks;
    sg.lambda_free = lambdas;
    sg.is_minimal_selection = lambdas.empty();
    return sg;
}

namespace detail {

// Minimize the convex 1D section lambda -> ||z(lambda)||_{w,q}^q on [0, 1]
// by golden-section search. z is affine in each free coordinate.
template <typename F>
double golden_min(F&& obj, double lo = 0.0, double hi = 1.0, double tol = 1e-12) {
    constexpr double invphi = 0.6180339887498949;
    double a = lo, b = hi;
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = obj(c), fd = obj(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d; d = c; fd = fc;
            c = b - invphi * (b - a);
            fc = obj(c);
        } else {
            a = c; c = d; fc = fd;
            d = a + invphi * (b - a);
            fd = obj(d);
        }
    }
    double mid = 0.5 * (a + b);
    // Snap to the ends when they are at least as good: ties are typically
    // minimized on the boundary of the lambda cube.
    double fm = obj(mid);
    if (obj(0.0) <= fm) { if (obj(0.0) <= obj(1.0)) return 0.0; }
    if (obj(1.0) <= fm) return 1.0;
    return mid;
}

}  // namespace detail

// Element of minimal (w,q) dual norm in the lambda-parameterized
// subdifferential set. The objective ||z(lambda)||_{w,q}^q is convex and C^1
// (z is affine in lambda, q > 1) with a separable box constraint, so cyclic
// coordinate descent converges to the global minimum over the lambda cube;
// the golden-section line minimizer snaps boundary-optimal coordinates to
// exact 0/1.
inline Subgradient minimal_selection(const ParticleConfig& cfg, const EnergyModel& mdl,
                                     double tie_tol = 1e-12,
                                     const std::vector<double>* shift = nullptr,
                                     const std::vector<char>* active = nullptr) {
    LambdaStructure ls = lambda_structure(cfg, tie_tol);
    std::vector<double> psi = psi_vector(cfg, mdl);
    const double q = mdl.params.q;
    const int n = cfg.size();
    const double invN = 1.0 / static_cast<double>(n);
    if (shift && static_cast<int>(shift->size()) != n)
        throw std::invalid_argument("minimal_selection: shift size mismatch");
    if (active && static_cast<int>(active->size()) != n)
        throw std::invalid_argument("minimal_selection: active mask size mismatch");
    auto norm_q = [&](const std::vector<double>& free_vals) {
        std::vector<double> z = detail::assemble_z(psi, ls, free_vals);
        double s = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            if (active && !(*active)[i]) continue;
            double zi = shift ? z[i] + (*shift)[i] : z[i];
            s += std::pow(std::abs(zi), q);
        }
        return s * invN;
    };

    std::vector<double> lam(ls.free_ks.size(), 0.5);
    if (!lam.empty() && q == 2.0) {
        // Fast path for q = 2: z is affine in lambda, so the objective is a
        // box-constrained convex quadratic min ||z0 + B lam + s||^2_w. Solve
        // it exactly by projected Newton with active-set reduction; lambda_k
        // enters only z[k-2], z[k-1], z[k], so B has three entries per column.
        const std::size_t K = lam.size();
        std::vector<double> z0 = detail::assemble_z(psi, ls, std::vector<double>(K, 0.0));
        if (shift)
            for (int m = 0; m < n; ++m) z0[static_cast<std::size_t>(m)] += (*shift)[static_cast<std::size_t>(m)];
        // Column j of B: rows k-2, k-1, k with k = free_ks[j].
        auto col = [&](std::size_t j, int row[3], double val[3]) {
            const int k = ls.free_ks[j];
            int cnt = 0;
            auto put = [&](int m, double v) {
                if (m >= 0 && m < n && (!active || (*active)[static_cast<std::size_t>(m)])) {
                    row[cnt] = m;
                    val[cnt++] = v;
                }
            };
            put(k - 2, -psi[static_cast<std::size_t>(k - 1)]);
            put(k - 1, psi[static_cast<std::size_t>(k)] + psi[static_cast<std::size_t>(k - 1)]);
            put(k, -psi[static_cast<std::size_t>(k)]);
            return cnt;
        };
        std::vector<double> H(K * K, 0.0), c(K, 0.0);
        double diag_max = 0.0;
        for (std::size_t j = 0; j < K; ++j) {
            int rj[3];
            double vj[3];
            int cj = col(j, rj, vj);
            for (int a = 0; a < cj; ++a) c[j] += vj[a] * z0[static_cast<std::size_t>(rj[a])];
            for (std::size_t l = j; l < K; ++l) {
                if (ls.free_ks[l] - ls.free_ks[j] > 2) break;
                int rl[3];
                double vl[3];
                int cl = col(l, rl, vl);
                double s = 0.0;
                for (int a = 0; a < cj; ++a)
                    for (int b = 0; b < cl; ++b)
                        if (rj[a] == rl[b]) s += vj[a] * vl[b];
                H[j * K + l] = H[l * K + j] = s;
            }
            diag_max = std::max(diag_max, H[j * K + j]);
        }
        // Tiny ridge keeps the solve well-posed along cluster-translation
        // null directions; the polish below removes its bias.
        const double ridge = 1e-12 * std::max(diag_max, 1.0);
        for (std::size_t j = 0; j < K; ++j) H[j * K + j] += ridge;
        auto fval = [&](const std::vector<double>& v) {
            double s = 0.0;
            for (std::size_t j = 0; j < K; ++j) {
                double hj = 0.0;
                for (std::size_t l = 0; l < K; ++l) hj += H[j * K + l] * v[l];
                s += v[j] * (0.5 * hj + c[j]);
            }
            return s;
        };
        double f = fval(lam);
        std::vector<double> g(K), d(K), lam_new(K);
        std::vector<char> freec(K);
        std::vector<double> A;
        std::vector<double> rhs;
        std::vector<std::size_t> idx;
        for (int it = 0; it < 200; ++it) {
            for (std::size_t j = 0; j < K; ++j) {
                g[j] = c[j];
                for (std::size_t l = 0; l < K; ++l) g[j] += H[j * K + l] * lam[l];
            }
            double kkt = 0.0;
            for (std::size_t j = 0; j < K; ++j) {
                freec[j] = !((lam[j] <= 0.0 && g[j] > 0.0) || (lam[j] >= 1.0 && g[j] < 0.0));
                if (freec[j]) kkt = std::max(kkt, std::abs(g[j]));
            }
            if (kkt <= 1e-13 * std::max(diag_max, 1.0)) break;
            // Newton step on the free set (dense Gaussian elimination with
            // partial pivoting; K is the number of tied comparisons).
            idx.clear();
            for (std::size_t j = 0; j < K; ++j)
                if (freec[j]) idx.push_back(j);
            const std::size_t F = idx.size();
            A.assign(F * F, 0.0);
            rhs.assign(F, 0.0);
            for (std::size_t a = 0; a < F; ++a) {
                rhs[a] = -g[idx[a]];
                for (std::size_t b = 0; b < F; ++b) A[a * F + b] = H[idx[a] * K + idx[b]];
            }
            for (std::size_t a = 0; a < F; ++a) {
                std::size_t piv = a;
                for (std::size_t r = a + 1; r < F; ++r)
                    if (std::abs(A[r * F + a]) > std::abs(A[piv * F + a])) piv = r;
                if (piv != a) {
                    for (std::size_t cc = 0; cc < F; ++cc) std::swap(A[a * F + cc], A[piv * F + cc]);
                    std::swap(rhs[a], rhs[piv]);
                }
                double pv = A[a * F + a];
                if (pv == 0.0) continue;
                for (std::size_t r = a + 1; r < F; ++r) {
                    double fac = A[r * F + a] / pv;
                    if (fac == 0.0) continue;
                    for (std::size_t cc = a; cc < F; ++cc) A[r * F + cc] -= fac * A[a * F + cc];
                    rhs[r] -= fac * rhs[a];
                }
            }
            std::fill(d.begin(), d.end(), 0.0);
            for (std::size_t a = F; a-- > 0;) {
                double s = rhs[a];
                for (std::size_t cc = a + 1; cc < F; ++cc) s -= A[a * F + cc] * d[idx[cc]];
                d[idx[a]] = A[a * F + a] != 0.0 ? s / A[a * F + a] : 0.0;
            }
            // Projected backtracking from the full Newton step.
            double alpha = 1.0, step_inf = 0.0;
            bool moved = false;
            for (int bt = 0; bt < 40; ++bt) {
                step_inf = 0.0;
                for (std::size_t j = 0; j < K; ++j) {
                    lam_new[j] = std::clamp(lam[j] + alpha * d[j], 0.0, 1.0);
                    step_inf = std::max(step_inf, std::abs(lam_new[j] - lam[j]));
                }
                double fn = fval(lam_new);
                if (fn <= f + 1e-300) {
                    lam.swap(lam_new);
                    f = fn;
                    moved = step_inf > 1e-14;
                    break;
                }
                alpha *= 0.5;
            }
            if (!moved) break;
        }
    } else if (!lam.empty()) {
        // General q: the objective ||z(lambda)||^q_w is smooth convex; use a
        // projected gradient method with Barzilai-Borwein steps and Armijo
        // backtracking over the lambda cube.
        // slot[k] = position of comparison k among the free coordinates.
        std::vector<int> slot(ls.comp.size(), -1);
        for (std::size_t j = 0; j < ls.free_ks.size(); ++j)
            slot[static_cast<std::size_t>(ls.free_ks[j])] = static_cast<int>(j);
        auto gradient = [&](const std::vector<double>& vals, std::vector<double>& g) {
            std::vector<double> z = detail::assemble_z(psi, ls, vals);
            std::fill(g.begin(), g.end(), 0.0);
            for (int i = 1; i <= n; ++i) {
                if (active && !(*active)[static_cast<std::size_t>(i - 1)]) continue;
                double zi = z[static_cast<std::size_t>(i - 1)];
                if (shift) zi += (*shift)[static_cast<std::size_t>(i - 1)];
                if (zi == 0.0) continue;
                double w = q * std::pow(std::abs(zi), q - 2.0) * zi * invN;
                if (slot[static_cast<std::size_t>(i - 1)] >= 0)
                    g[static_cast<std::size_t>(slot[static_cast<std::size_t>(i - 1)])] -=
                        w * psi[static_cast<std::size_t>(i - 1)];
                if (slot[static_cast<std::size_t>(i)] >= 0)
                    g[static_cast<std::size_t>(slot[static_cast<std::size_t>(i)])] +=
                        w * (psi[static_cast<std::size_t>(i)] +
                             psi[static_cast<std::size_t>(i - 1)]);
                if (slot[static_cast<std::size_t>(i + 1)] >= 0)
                    g[static_cast<std::size_t>(slot[static_cast<std::size_t>(i + 1)])] -=
                        w * psi[static_cast<std::size_t>(i)];
            }
        };
        auto project = [](double v) { return std::clamp(v, 0.0, 1.0); };

        std::vector<double> g(lam.size()), lam_new(lam.size()), g_new(lam.size());
        double f = norm_q(lam);
        gradient(lam, g);
        double step = 1.0;
        double f_ref = f;
        for (int it = 0; it < 50000; ++it) {
            double res = 0.0;
            for (std::size_t j = 0; j < lam.size(); ++j)
                res = std::max(res, std::abs(project(lam[j] - g[j]) - lam[j]));
            if (res <= 1e-14) break;
            if (it % 50 == 0) {
                // Stagnation exit: active box constraints keep the projected
                // residual finite even at the constrained optimum.
                if (it > 0 && f_ref - f <= 1e-15 * std::max(1.0, f)) break;
                f_ref = f;
            }
            double t = step, fn = f;
            for (int bt = 0; bt < 60; ++bt) {
                for (std::size_t j = 0; j < lam.size(); ++j)
                    lam_new[j] = project(lam[j] - t * g[j]);
                fn = norm_q(lam_new);
                double decr = 0.0;
                for (std::size_t j = 0; j < lam.size(); ++j)
                    decr += g[j] * (lam[j] - lam_new[j]);
                if (fn <= f - 1e-4 * decr + 1e-300) break;
                t *= 0.5;
            }
            gradient(lam_new, g_new);
            double ss = 0.0, sy = 0.0;
            for (std::size_t j = 0; j < lam.size(); ++j) {
                double sj = lam_new[j] - lam[j], yj = g_new[j] - g[j];
                ss += sj * sj;
                sy += sj * yj;
            }
            step = sy > 1e-300 ? std::clamp(ss / sy, 1e-10, 1e10) : 1.0;
            lam.swap(lam_new);
            g.swap(g_new);
            f = fn;
        }
    }
    if (!lam.empty()) {
        // Golden-section coordinate polish with a local objective: it snaps
        // boundary-optimal coordinates to exact 0/1 and removes the ridge
        // bias of the fast path. lambda_k enters only z[k-2], z[k-1], z[k],
        // so each evaluation is O(1).
        std::vector<double> z = detail::assemble_z(psi, ls, lam);
        auto term = [&](int m) {
            if (m < 0 || m >= n) return 0.0;
            if (active && !(*active)[static_cast<std::size_t>(m)]) return 0.0;
            double zm = z[static_cast<std::size_t>(m)];
            if (shift) zm += (*shift)[static_cast<std::size_t>(m)];
            return std::pow(std::abs(zm), q) * invN;
        };
        auto z_at = [&](int m) {
            double lm = ls.value(m, lam);
            double l0 = ls.value(m + 1, lam);
            double lp = ls.value(m + 2, lam);
            return (l0 - lp + 1.0) * psi[static_cast<std::size_t>(m + 1)] -
                   (lm - l0 + 1.0) * psi[static_cast<std::size_t>(m)];
        };
        for (int sweep = 0; sweep < 3; ++sweep) {
            double max_delta = 0.0;
            for (std::size_t j = 0; j < lam.size(); ++j) {
                const int k = ls.free_ks[j];
                double before = lam[j];
                lam[j] = detail::golden_min([&](double l) {
                    double saved = lam[j];
                    lam[j] = l;
                    double s = 0.0;
                    for (int m = k - 2; m <= k; ++m)
                        if (m >= 0 && m < n) {
                            z[static_cast<std::size_t>(m)] = z_at(m);
                            s += term(m);
                        }
                    lam[j] = saved;
                    return s;
                });
                for (int m = k - 2; m <= k; ++m)
                    if (m >= 0 && m < n) z[static_cast<std::size_t>(m)] = z_at(m);
                max_delta = std::max(max_delta, std::abs(lam[j] - before));
            }
            // The golden bracket is ~1e-12 wide, so converged coordinates
            // still jitter at that scale between sweeps.
            if (max_delta <= 1e-11) break;
        }
    }

    Subgradient sg;
    sg.z = detail::assemble_z(psi, ls, lam);
    sg.free_ks = ls.free_ks;
    sg.lambda_free = lam;
    sg.is_minimal_selection = shift == nullptr;
    return sg;
}

enum class SlopeConvention { dual_q, paper_p };

// Discrete slope g_N = norm of the minimal selection: (w,q) dual norm under
// dual_q (the convention closing the energy-dissipation identity), (w,p)
// under paper_p. Pinned configs restrict the selection and the norm to the
// interior components, matching the constrained flow where the endpoints
// carry no velocity.
inline double discrete_slope(const ParticleConfig& cfg, const EnergyModel& mdl,
                             SlopeConvention conv = SlopeConvention::dual_q) {
    const int n = cfg.size();
    std::vector<char> mask;
    const std::vector<char>* maskp = nullptr;
    if (cfg.pinned() && n >= 2) {
        mask.assign(static_cast<std::size_t>(n), 1);
        mask.front() = 0;
        mask.back() = 0;
        maskp = &mask;
    }
    Subgradient sg = minimal_selection(cfg, mdl, 1e-12, nullptr, maskp);
    double e = conv == SlopeConvention::dual_q ? mdl.params.q : mdl.params.p;
    std::vector<double> z = sg.z;
    if (maskp) { z.front() = 0.0; z.back() = 0.0; }
    return weighted_norm(z, e);
}

// Central finite-difference gradient of E_N scaled to weighted-dual
// coordinates (z_i = N * dE/dx_i). Test oracle; valid away from ties.
inline std::vector<double> fd_gradient(const ParticleConfig& cfg, const EnergyModel& mdl,
                                       double eps = 1e-6) {
    const int n = cfg.size();
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::vector<double> dp(static_cast<std::size_t>(n), 0.0), dm(dp);
        dp[static_cast<std::size_t>(i)] = eps;
        dm[static_cast<std::size_t>(i)] = -eps;
        double ep = discrete_energy(cfg.displaced(dp), mdl);
        double em = discrete_energy(cfg.displaced(dm), mdl);
        g[static_cast<std::size_t>(i)] = static_cast<double>(n) * (ep - em) / (2.0 * eps);
    }
    return g;
}

// Report on the lemma-statement vs lemma-proof index placement, resolved by
// matching the finite-difference gradient at a canonical no-tie configuration.
struct IndexResolution {
    double err_statement = 0.0;  // max relative error of the implemented branch
    double err_swapped = 0.0;    // same for the proof's swapped placement
    bool statement_branch_correct = false;
};

inline IndexResolution subgradient_index_resolution(const EnergyModel& mdl) {
    ParticleConfig cfg =
        ParticleConfig::create({0.0, 0.35, 1.0, 1.9, 3.1}, DomainSpec::whole_line());
    LambdaStructure ls = lambda_structure(cfg);
    std::vector<double> psi = psi_vector(cfg, mdl);
    std::vector<double> z_stmt = detail::assemble_z(psi, ls, {});
    const int n = cfg.size();
    std::vector<double> z_swap(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        double lm = ls.value(i - 1, {}), l0 = ls.value(i, {}), lp = ls.value(i + 1, {});
        z_swap[i - 1] = (l0 - lp + 1.0) * psi[i - 1] - (lm - l0 + 1.0) * psi[i];
    }
    std::vector<double> fd = fd_gradient(cfg, mdl);
    IndexResolution res;
    for (int i = 0; i < n; ++i) {
        double scale = std::max(1.0, std::abs(fd[static_cast<std::size_t>(i)]));
        res.err_statement = std::max(
            res.err_statement,
            std::abs(z_stmt[static_cast<std::size_t>(i)] - fd[static_cast<std::size_t>(i)]) / scale);
        res.err_swapped = std::max(
            res.err_swapped,
            std::abs(z_swap[static_cast<std::size_t>(i)] - fd[static_cast<std::size_t>(i)]) / scale);
    }
    res.statement_branch_correct = res.err_statement < 1e-6 && res.err_swapped > 1e-3;
    return res;
}

}  // namespace leibenson
