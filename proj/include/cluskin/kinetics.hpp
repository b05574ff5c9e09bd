#pragma once

// Closed-form Maxwell-molecule cluster statistics. Time is dimensionless
// kinetic time: the unit is one mean free time per particle, so each particle
// collides at unit rate and gelation occurs at t = 1.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cluskin::kinetics {

inline constexpr double critical_time = 1.0;

class series_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_time(double t) {
    if (!(t >= 0.0) || !std::isfinite(t)) {
        throw std::invalid_argument("kinetic time must be finite and nonnegative");
    }
}

inline void require_size(std::int64_t k) {
    if (k < 1) throw std::invalid_argument("cluster size must be >= 1");
}

// log of k^{k-2}/k! * t^{k-1} * e^{-kt}; all series terms go through this so
// that nothing overflows (k^{k-2} alone overflows doubles near k = 140).
inline double log_weight_term(std::int64_t k, double t) {
    const double kk = static_cast<double>(k);
    return (kk - 2.0) * std::log(kk) - std::lgamma(kk + 1.0) +
           (kk - 1.0) * std::log(t) - kk * t;
}

struct kahan_sum {
    double s = 0.0;
    double c = 0.0;
    void add(double x) {
        const double y = x - c;
        const double u = s + y;
        c = (u - s) - y;
        s = u;
    }
};

}  // namespace detail

/// f_t(k): fraction of gas mass in clusters of size k,
/// k^{k-2}/(k-1)! * t^{k-1} * e^{-kt}, evaluated in log space.
/// At t = 0 the distribution is the point mass on k = 1.
inline double mass_fraction(std::int64_t k, double t) {
    detail::require_size(k);
    detail::require_time(t);
    if (t == 0.0) return k == 1 ? 1.0 : 0.0;
    if (k == 1) return std::exp(-t);
    return std::exp(detail::log_weight_term(k, t) + std::log(static_cast<double>(k)));
}

/// Unnormalized cluster-number weight k^{k-2}/k! * t^{k-1} * e^{-kt},
/// i.e. mass_fraction(k, t) / k. Dividing by the partition function turns it
/// into the fraction of clusters that have size k.
inline double cluster_weight(std::int64_t k, double t) {
    detail::require_size(k);
    detail::require_time(t);
    if (t == 0.0) return k == 1 ? 1.0 : 0.0;
    if (k == 1) return std::exp(-t);
    return std::exp(detail::log_weight_term(k, t));
}

/// Truncation policy for the cluster series.
///
/// direct_sum adds terms up to kmax and reports a rigorous tail bound derived
/// from the Stirling majorant (e t e^{-t})^k / (sqrt(2 pi) t k^{5/2}); it
/// fails if the bound cannot meet tail_tol. tree_identity evaluates the same
/// series in closed form through the tree function and reports no truncation
/// error. automatic switches to the identity near the critical point, where
/// the direct sum decays only like k^{-5/2}.
struct series_policy {
    enum class mode { automatic, direct_sum, tree_identity };

    std::int64_t kmax = 1'000'000;
    double tail_tol = 1e-9;
    mode eval = mode::automatic;

    static series_policy direct(std::int64_t kmax = 1'000'000, double tail_tol = 1e-9) {
        return {kmax, tail_tol, mode::direct_sum};
    }
    static series_policy identity() { return {0, 0.0, mode::tree_identity}; }
};

/// A truncated series value together with its declared tail bound
/// (zero when the value comes from a closed form).
struct series_value {
    double value = 0.0;
    double tail_bound = 0.0;
};

/// Conjugate time: for t > 1 the unique t* in (0,1) with t* e^{-t*} = t e^{-t}.
struct conjugate_solution {
    double t = 0.0;
    double t_star = 0.0;
};

/// Solves t* e^{-t*} = t e^{-t} for t* in (0,1) by safeguarded Newton
/// iteration on phi(x) = ln x - x - (ln t - t), which is strictly increasing
/// and concave on (0,1). The defect |t* e^{-t*} - t e^{-t}| stays below
/// 1e-12 both absolutely and relative to t e^{-t}.
inline conjugate_solution solve_conjugate(double t) {
    if (!(t > 1.0) || !std::isfinite(t)) {
        throw std::invalid_argument("solve_conjugate requires t > 1");
    }
    const double target_log = std::log(t) - t;
    const double y = t * std::exp(-t);

    // Root bracket: phi(y/2) < 0 and phi(min(e y, 1)) > 0 for t > 1.
    double lo = 0.5 * y;
    double hi = std::min(std::exp(1.0) * y, 1.0);
    auto phi = [target_log](double x) { return std::log(x) - x - target_log; };

    double x = 0.5 * (lo + hi);
    double fx = phi(x);
    for (int iter = 0; iter < 200; ++iter) {
        if (std::abs(fx) < 1e-15) break;
        if (fx > 0.0) hi = x; else lo = x;
        const double dphi = 1.0 / x - 1.0;
        double next = dphi > 0.0 ? x - fx / dphi : lo;
        if (!(next > lo) || !(next < hi)) next = 0.5 * (lo + hi);  // bisection fallback
        if (next == x) break;
        x = next;
        fx = phi(x);
    }
    if (std::abs(x * std::exp(-x) - y) > 1e-12 * std::max(1.0, y)) {
        throw series_error("conjugate solver did not converge");
    }
    return {t, x};
}

namespace detail {

// Tree function T(x) at x = t e^{-t}: T = t for t <= 1, else the conjugate
// point t* < 1. T satisfies T e^{-T} = x on the principal branch.
inline double tree_function_at(double t) {
    return t <= 1.0 ? t : solve_conjugate(t).t_star;
}

// Tail of sum_{k > K} x^k / k^p with x = e t e^{-t} <= 1, using the Stirling
// majorant of the series terms. Combines the integral bound (valid for any
// x <= 1) with the geometric bound (sharper for x well below 1).
inline double stirling_tail_bound(double t, std::int64_t trunc_k, double power) {
    const double k = static_cast<double>(trunc_k);
    const double log_x = 1.0 + std::log(t) - t;  // log(e t e^{-t}) <= 0
    const double pref = std::exp(static_cast<double>(trunc_k + 1) * log_x) /
                        (std::sqrt(2.0 * 3.14159265358979323846) * t);
    const double integral = std::pow(k, 1.0 - power) / (power - 1.0);
    double bound = pref * integral;
    if (log_x < 0.0) {
        const double x = std::exp(log_x);
        bound = std::min(bound, pref * std::pow(k, -power) / (1.0 - x));
    }
    return bound;
}

enum class series_kind { weight, mass };  // exponent 5/2 vs 3/2 in the majorant

inline series_value direct_series(double t, const series_policy& policy, series_kind kind) {
    kahan_sum sum;
    const double power = kind == series_kind::weight ? 2.5 : 1.5;
    double bound = std::numeric_limits<double>::infinity();
    for (std::int64_t k = 1; k <= policy.kmax; ++k) {
        double lt = log_weight_term(k, t);
        if (kind == series_kind::mass) lt += std::log(static_cast<double>(k));
        sum.add(lt < -745.0 ? 0.0 : std::exp(lt));
        if ((k & 63) == 0 || k == policy.kmax) {
            bound = stirling_tail_bound(t, k, power);
            if (bound <= policy.tail_tol) return {sum.s, bound};
        }
    }
    if (bound > policy.tail_tol) {
        throw series_error("direct sum cannot reach tail tolerance " +
                           std::to_string(policy.tail_tol) + " within kmax " +
                           std::to_string(policy.kmax));
    }
    return {sum.s, bound};
}

inline series_policy::mode resolve_mode(double t, const series_policy& policy) {
    if (policy.eval != series_policy::mode::automatic) return policy.eval;
    return std::abs(t - critical_time) < 0.05 ? series_policy::mode::tree_identity
                                              : series_policy::mode::direct_sum;
}

}  // namespace detail

/// Z_t = sum_k k^{k-2}/k! t^{k-1} e^{-kt}: the limiting number of clusters
/// per particle. Monotone decreasing from Z_0 = 1. The identity route uses
/// sum_k k^{k-2} x^k / k! = T(x) - T(x)^2/2 at x = t e^{-t}.
inline series_value partition_function(double t, const series_policy& policy = {}) {
    detail::require_time(t);
    if (t == 0.0) return {1.0, 0.0};
    if (detail::resolve_mode(t, policy) == series_policy::mode::tree_identity) {
        const double T = detail::tree_function_at(t);
        return {(T - 0.5 * T * T) / t, 0.0};
    }
    return detail::direct_series(t, policy, detail::series_kind::weight);
}

/// F_t = sum_k f_t(k): total mass in finite clusters. Equals 1 up to the
/// critical time and t*/t beyond it (sum_k k^{k-1} x^k / k! = T(x)).
inline series_value total_mass(double t, const series_policy& policy = {}) {
    detail::require_time(t);
    if (t == 0.0) return {1.0, 0.0};
    if (detail::resolve_mode(t, policy) == series_policy::mode::tree_identity) {
        return {t <= 1.0 ? 1.0 : solve_conjugate(t).t_star / t, 0.0};
    }
    return detail::direct_series(t, policy, detail::series_kind::mass);
}

/// F^inf_t = 1 - F_t: mass fraction in the giant cluster. Zero up to the
/// critical time; the truncation bound of F_t carries over unchanged.
inline series_value giant_mass(double t, const series_policy& policy = {}) {
    const auto f = total_mass(t, policy);
    return {1.0 - f.value, f.tail_bound};
}

/// g_t(k): fraction of clusters that have size k, cluster_weight normalized
/// by the partition function.
inline double cluster_fraction(std::int64_t k, double t, const series_policy& policy = {}) {
    return cluster_weight(k, t) / partition_function(t, policy).value;
}

/// Exponential damping scale gamma(t) = 1/|ln(e t e^{-t})| of the cluster
/// size law k^{-5/2} e^{-k/gamma}. Diverges at the critical time, where the
/// distribution is a pure power law; callers plot 1/gamma, which vanishes
/// there, so t = 1 returns infinity rather than failing.
inline double damping_scale(double t) {
    if (!(t > 0.0) || !std::isfinite(t)) {
        throw std::invalid_argument("damping_scale requires t > 0");
    }
    const double log_x = 1.0 + std::log(t) - t;
    if (log_x == 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / std::abs(log_x);
}

/// Stirling asymptotic of the mass fraction: (e t e^{-t})^k / (sqrt(2 pi) t k^{3/2}).
inline double stirling_mass(std::int64_t k, double t) {
    detail::require_size(k);
    if (!(t > 0.0)) throw std::invalid_argument("stirling forms require t > 0");
    const double kk = static_cast<double>(k);
    return std::exp(kk * (1.0 + std::log(t) - t) - 0.5 * std::log(2.0 * 3.14159265358979323846) -
                    std::log(t) - 1.5 * std::log(kk));
}

/// Stirling asymptotic of the cluster-number weight; same as stirling_mass
/// with exponent 5/2, a pure k^{-5/2} power law at the critical time.
inline double stirling_weight(std::int64_t k, double t) {
    return stirling_mass(k, t) / static_cast<double>(k);
}

/// Probability that a tagged particle's backward cluster on (0, t) has size
/// n + 1: e^{-t} (1 - e^{-t})^n. n = 0 is the density of collision-free
/// particles.
inline double backward_size_law(std::int64_t n, double t) {
    if (n < 0) throw std::invalid_argument("backward cluster size offset must be >= 0");
    detail::require_time(t);
    return std::exp(-t) * std::pow(1.0 - std::exp(-t), static_cast<double>(n));
}

/// Result of the log-space least-squares fit ln p(k) = c - alpha ln k - k/gamma.
struct power_law_fit {
    double exponent = 0.0;      // alpha
    double damping_rate = 0.0;  // 1/gamma, clamped at 0
    std::int64_t k_min = 0;
    std::int64_t k_max = 0;
    double residual = 0.0;  // rms residual of ln p over the fitted bins
};

/// Unweighted least squares on log-transformed data over bins in
/// [kmin, kmax] with positive weight. Requires kmax/kmin >= 4 and at least
/// four supported bins.
inline power_law_fit fit_power_law(const std::map<std::int64_t, double>& weights,
                                   std::int64_t kmin, std::int64_t kmax) {
    if (kmin < 1 || kmax < 4 * kmin) {
        throw std::invalid_argument("fit range must satisfy kmax/kmin >= 4");
    }
    std::vector<double> u, kk, y;  // ln k, k, ln p
    for (const auto& [k, w] : weights) {
        if (k < kmin || k > kmax || !(w > 0.0)) continue;
        u.push_back(std::log(static_cast<double>(k)));
        kk.push_back(static_cast<double>(k));
        y.push_back(std::log(w));
    }
    const std::size_t m = y.size();
    if (m < 4) throw series_error("fit_power_law: insufficient support on the range");

    // Normal equations for y = c - alpha u - beta k.
    double a[3][3] = {};
    double rhs[3] = {};
    for (std::size_t i = 0; i < m; ++i) {
        const double row[3] = {1.0, -u[i], -kk[i]};
        for (int p = 0; p < 3; ++p) {
            for (int q = 0; q < 3; ++q) a[p][q] += row[p] * row[q];
            rhs[p] += row[p] * y[i];
        }
    }
    // Gaussian elimination with partial pivoting on the 3x3 system.
    int idx[3] = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r) {
            if (std::abs(a[idx[r]][col]) > std::abs(a[idx[piv]][col])) piv = r;
        }
        std::swap(idx[col], idx[piv]);
        if (a[idx[col]][col] == 0.0) throw series_error("fit_power_law: singular system");
        for (int r = col + 1; r < 3; ++r) {
            const double f = a[idx[r]][col] / a[idx[col]][col];
            for (int q = col; q < 3; ++q) a[idx[r]][q] -= f * a[idx[col]][q];
            rhs[idx[r]] -= f * rhs[idx[col]];
        }
    }
    double sol[3];
    for (int col = 2; col >= 0; --col) {
        double s = rhs[idx[col]];
        for (int q = col + 1; q < 3; ++q) s -= a[idx[col]][q] * sol[q];
        sol[col] = s / a[idx[col]][col];
    }

    power_law_fit fit;
    fit.exponent = sol[1];
    fit.damping_rate = std::max(0.0, sol[2]);
    fit.k_min = kmin;
    fit.k_max = kmax;
    double ss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double pred = sol[0] - sol[1] * u[i] - sol[2] * kk[i];
        ss += (y[i] - pred) * (y[i] - pred);
    }
    fit.residual = std::sqrt(ss / static_cast<double>(m));
    return fit;
}

/// Full analytic prediction at one time: mass and cluster-fraction arrays for
/// k = 1..kmax plus the scalar observables.
struct analytic_distribution {
    double t = 0.0;
    std::int64_t kmax = 0;
    std::vector<double> mass;      // f_t(k), index k-1
    std::vector<double> fraction;  // g_t(k), index k-1
    double z = 0.0;
    double z_tail_bound = 0.0;
    double total = 0.0;  // F_t; total + giant = 1
    double total_tail_bound = 0.0;
    double giant = 0.0;
    double fraction_deficit_bound = 0.0;  // bound on 1 - sum_k fraction[k]
    double gamma = 0.0;                   // damping scale; infinity at t = 1
};

inline analytic_distribution evaluate_distribution(double t, std::int64_t kmax,
                                                   const series_policy& policy = {}) {
    detail::require_size(kmax);
    detail::require_time(t);
    analytic_distribution d;
    d.t = t;
    d.kmax = kmax;
    const auto z = partition_function(t, policy);
    const auto f = total_mass(t, policy);
    d.z = z.value;
    d.z_tail_bound = z.tail_bound;
    d.total = f.value;
    d.total_tail_bound = f.tail_bound;
    d.giant = 1.0 - f.value;
    d.gamma = t > 0.0 ? damping_scale(t) : 0.0;
    d.mass.resize(static_cast<std::size_t>(kmax));
    d.fraction.resize(static_cast<std::size_t>(kmax));
    for (std::int64_t k = 1; k <= kmax; ++k) {
        const double w = cluster_weight(k, t);
        d.mass[static_cast<std::size_t>(k - 1)] = w * static_cast<double>(k);
        d.fraction[static_cast<std::size_t>(k - 1)] = w / d.z;
    }
    d.fraction_deficit_bound =
        t == 0.0 ? 0.0 : detail::stirling_tail_bound(t, kmax, 2.5) / d.z + d.z_tail_bound / d.z;
    return d;
}

}  // namespace cluskin::kinetics
