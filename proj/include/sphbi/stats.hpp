#pragma once

// Summary statistics with Student-t confidence intervals, Welch's and the
// paired t-test.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "sphbi/core.hpp"

namespace sphbi {

inline double t_quantile(double p, double df) {
    return boost::math::quantile(boost::math::students_t_distribution<double>(df), p);
}

/// Two-sided p-value for statistic t with df degrees of freedom.
inline double t_two_sided_p(double t, double df) {
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(t)) return 0.0;
    const boost::math::students_t_distribution<double> dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

struct StatSummary {
    std::size_t n = 0;
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation (n - 1)
    double ci_low = 0.0;
    double ci_high = 0.0;
    double level = 0.95;

    double half_width() const { return (ci_high - ci_low) / 2.0; }

    /// From published moments.
    static StatSummary from_moments(double mean, double sd, std::size_t n, double level = 0.95) {
        if (n < 2) throw ConfigError("summary needs at least 2 values");
        if (sd < 0.0) throw ConfigError("standard deviation must be non-negative");
        if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0,1)");
        StatSummary s;
        s.n = n;
        s.mean = mean;
        s.std = sd;
        s.level = level;
        const double h = t_quantile(0.5 + level / 2.0, static_cast<double>(n - 1)) * sd / std::sqrt(double(n));
        s.ci_low = mean - h;
        s.ci_high = mean + h;
        return s;
    }

    static StatSummary from_values(std::span<const double> v, double level = 0.95) {
        if (v.size() < 2) throw ConfigError("summary needs at least 2 values");
        if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) {
            return from_moments(v.front(), 0.0, v.size(), level);
        }
        const double n = static_cast<double>(v.size());
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        return from_moments(mean, std::sqrt(ss / (n - 1.0)), v.size(), level);
    }

    nlohmann::json to_json() const {
        return {{"n", n}, {"mean", mean}, {"std", std}, {"ci_low", ci_low}, {"ci_high", ci_high}, {"level", level}};
    }
};

struct TTest {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;

    nlohmann::json to_json() const { return {{"t", t}, {"df", df}, {"p", p}}; }
};

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of freedom.
inline TTest welch_t(const StatSummary& a, const StatSummary& b) {
    if (a.n < 2 || b.n < 2) throw ConfigError("welch_t needs n >= 2 in both samples");
    const double va = a.std * a.std / double(a.n);
    const double vb = b.std * b.std / double(b.n);
    const double se2 = va + vb;
    TTest r;
    if (se2 == 0.0) {
        r.df = double(a.n + b.n - 2);
        if (a.mean == b.mean) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = a.mean > b.mean ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
            r.p = 0.0;
        }
        return r;
    }
    r.t = (a.mean - b.mean) / std::sqrt(se2);
    const double num = se2 * se2;
    double den = 0.0;
    if (va > 0.0) den += va * va / double(a.n - 1);
    if (vb > 0.0) den += vb * vb / double(b.n - 1);
    r.df = num / den;
    r.p = t_two_sided_p(r.t, r.df);
    return r;
}

/// Paired t-test on matched samples (e.g. the same seeds under two configs).
inline TTest paired_t(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ConfigError("paired_t: samples differ in length");
    if (a.size() < 2) throw ConfigError("paired_t needs at least 2 pairs");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const auto s = StatSummary::from_values(d);
    TTest r;
    r.df = double(a.size() - 1);
    if (s.std == 0.0) {
        r.t = s.mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), s.mean);
        r.p = s.mean == 0.0 ? 1.0 : 0.0;
        return r;
    }
    r.t = s.mean / (s.std / std::sqrt(double(a.size())));
    r.p = t_two_sided_p(r.t, r.df);
    return r;
}

}  // namespace sphbi
