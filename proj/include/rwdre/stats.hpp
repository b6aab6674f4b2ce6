#pragma once

// Shared statistical estimators and gates. All gates are deterministic
// functions of their inputs and configured thresholds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

namespace rwdre::stats {

struct GateResult {
    std::string name;
    double statistic = 0.0;
    double pValue = -1.0;     // -1 when the gate is threshold-based, not p-based
    double threshold = 0.0;
    bool pass = false;
    std::size_t sampleSize = 0;
    std::string detail;
};

inline double mean(const std::vector<double>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean: empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double variance(const std::vector<double>& xs) {
    if (xs.size() < 2) throw std::invalid_argument("variance: need n >= 2");
    double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

inline double stderrOfMean(const std::vector<double>& xs) {
    return std::sqrt(variance(xs) / static_cast<double>(xs.size()));
}

inline double normalCdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double normalQuantile(double p) {
    // Acklam's rational approximation, |rel err| < 1.15e-9.
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normalQuantile: p in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01, -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    double q, r;
    if (p < plow) {
        q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > phigh) {
        q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

inline double chiSquareSf(double x, double df) {
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(df / 2.0, x / 2.0);
}

// --- Kolmogorov-Smirnov -----------------------------------------------------

inline double kolmogorovQ(double lambda) {
    if (lambda < 0.05) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 101; ++k) {
        double term = 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
        sum += term;
        if (std::fabs(term) < 1e-12) break;
    }
    return std::min(1.0, std::max(0.0, sum));
}

inline GateResult ksTest(std::vector<double> sample, const std::function<double(double)>& referenceCdf,
                         double alpha = 0.01, const std::string& name = "ks") {
    if (sample.size() < 20) throw std::invalid_argument("ksTest: need n >= 20");
    std::sort(sample.begin(), sample.end());
    const std::size_t n = sample.size();
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double f = referenceCdf(sample[i]);
        d = std::max(d, f - static_cast<double>(i) / n);
        d = std::max(d, static_cast<double>(i + 1) / n - f);
    }
    double sn = std::sqrt(static_cast<double>(n));
    double p = kolmogorovQ((sn + 0.12 + 0.11 / sn) * d);
    return {name, d, p, alpha, p >= alpha, n, ""};
}

inline GateResult ksTwoSample(std::vector<double> a, std::vector<double> b,
                              double alpha = 0.01, const std::string& name = "ks2") {
    if (a.size() < 10 || b.size() < 10) throw std::invalid_argument("ksTwoSample: samples too small");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    double ne = static_cast<double>(a.size()) * b.size() / (a.size() + b.size());
    double sn = std::sqrt(ne);
    double p = kolmogorovQ((sn + 0.12 + 0.11 / sn) * d);
    return {name, d, p, alpha, p >= alpha, a.size() + b.size(), ""};
}

// --- Chi-square goodness of fit ---------------------------------------------

// observed[i] against expected[i] (same total mass); bins with small expected
// counts are merged into the preceding bin before forming the statistic.
inline GateResult chiSquareGof(const std::vector<double>& observed, const std::vector<double>& expected,
                               double alpha = 0.01, const std::string& name = "chi2",
                               double minExpected = 5.0) {
    if (observed.size() != expected.size() || observed.size() < 2)
        throw std::invalid_argument("chiSquareGof: bad bins");
    std::vector<double> obs, exp;
    double co = 0.0, ce = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        co += observed[i];
        ce += expected[i];
        if (ce >= minExpected || i + 1 == observed.size()) {
            obs.push_back(co);
            exp.push_back(ce);
            co = ce = 0.0;
        }
    }
    if (exp.size() >= 2 && exp.back() < minExpected) {
        exp[exp.size() - 2] += exp.back();
        obs[obs.size() - 2] += obs.back();
        exp.pop_back();
        obs.pop_back();
    }
    if (exp.size() < 2) throw std::invalid_argument("chiSquareGof: fewer than 2 usable bins");
    double stat = 0.0;
    double n = 0.0;
    for (std::size_t i = 0; i < exp.size(); ++i) {
        if (exp[i] <= 0.0) throw std::invalid_argument("chiSquareGof: zero expected bin");
        stat += (obs[i] - exp[i]) * (obs[i] - exp[i]) / exp[i];
        n += obs[i];
    }
    double df = static_cast<double>(exp.size() - 1);
    double p = chiSquareSf(stat, df);
    return {name, stat, p, alpha, p >= alpha, static_cast<std::size_t>(n), "df=" + std::to_string(exp.size() - 1)};
}

// --- Anderson-Darling normality ----------------------------------------------

// Input is expected to be standardized by externally estimated location/scale;
// the case-3 small-sample correction and its 1% critical value are used.
inline GateResult adNormal(std::vector<double> z, double alpha = 0.01,
                           const std::string& name = "ad-normal") {
    const std::size_t n = z.size();
    if (n < 8) throw std::invalid_argument("adNormal: need n >= 8");
    std::sort(z.begin(), z.end());
    double a2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double lo = std::max(normalCdf(z[i]), 1e-300);
        double hi = std::max(1.0 - normalCdf(z[n - 1 - i]), 1e-300);
        a2 += (2.0 * static_cast<double>(i) + 1.0) * (std::log(lo) + std::log(hi));
    }
    a2 = -static_cast<double>(n) - a2 / static_cast<double>(n);
    double astar = a2 * (1.0 + 0.75 / n + 2.25 / (static_cast<double>(n) * n));
    double crit;  // d'Agostino & Stephens, case 3 (mean and variance estimated)
    if (alpha <= 0.01) crit = 1.035;
    else if (alpha <= 0.025) crit = 0.873;
    else if (alpha <= 0.05) crit = 0.752;
    else crit = 0.631;
    return {name, astar, -1.0, crit, astar < crit, n, "A2=" + std::to_string(a2)};
}

// --- Regression and ratio estimators -----------------------------------------

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderrSlope = 0.0;
    double r2 = 0.0;
};

inline SlopeFit slopeFit(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 4)
        throw std::invalid_argument("slopeFit: need >= 4 paired points");
    const auto n = static_cast<double>(xs.size());
    double mx = mean(xs), my = mean(ys);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx <= 0.0) throw std::invalid_argument("slopeFit: degenerate xs");
    SlopeFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = std::max(0.0, syy - f.slope * sxy);
    f.stderrSlope = (xs.size() > 2) ? std::sqrt(sse / (n - 2.0) / sxx) : 0.0;
    f.r2 = (syy > 0.0) ? 1.0 - sse / syy : 1.0;
    return f;
}

struct RatioEstimate {
    double ratio = 0.0;
    double se = 0.0;
};

// Ratio of means with delta-method standard error (includes the covariance term).
inline RatioEstimate ratioEstimator(const std::vector<double>& nums, const std::vector<double>& dens) {
    if (nums.size() != dens.size() || nums.empty())
        throw std::invalid_argument("ratioEstimator: mismatched samples");
    double mn = mean(nums), md = mean(dens);
    if (md <= 0.0) throw std::invalid_argument("ratioEstimator: denominator mean not positive");
    double r = mn / md;
    if (nums.size() < 2) return {r, 0.0};
    double snn = 0.0, sdd = 0.0, snd = 0.0;
    for (std::size_t i = 0; i < nums.size(); ++i) {
        snn += (nums[i] - mn) * (nums[i] - mn);
        sdd += (dens[i] - md) * (dens[i] - md);
        snd += (nums[i] - mn) * (dens[i] - md);
    }
    double nm1 = static_cast<double>(nums.size() - 1);
    snn /= nm1; sdd /= nm1; snd /= nm1;
    double var = (snn - 2.0 * r * snd + r * r * sdd) / (md * md * static_cast<double>(nums.size()));
    return {r, std::sqrt(std::max(0.0, var))};
}

struct WilsonInterval {
    double phat = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

inline WilsonInterval wilson(std::size_t successes, std::size_t trials, double confidence = 0.95) {
    if (trials == 0) throw std::invalid_argument("wilson: zero trials");
    double z = normalQuantile(0.5 + confidence / 2.0);
    double n = static_cast<double>(trials);
    double p = static_cast<double>(successes) / n;
    double z2 = z * z;
    double denom = 1.0 + z2 / n;
    double center = (p + z2 / (2.0 * n)) / denom;
    double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {p, std::max(0.0, center - half), std::min(1.0, center + half)};
}

// Pooled lag-1 autocorrelation of per-group sequences (groups are independent).
inline double lag1Autocorrelation(const std::vector<std::vector<double>>& groups, std::size_t* pairsOut = nullptr) {
    double m = 0.0;
    std::size_t n = 0;
    for (const auto& g : groups)
        for (double x : g) { m += x; ++n; }
    if (n < 3) throw std::invalid_argument("lag1Autocorrelation: too few values");
    m /= static_cast<double>(n);
    double num = 0.0, den = 0.0;
    std::size_t pairs = 0;
    for (const auto& g : groups) {
        for (std::size_t i = 0; i < g.size(); ++i) {
            den += (g[i] - m) * (g[i] - m);
            if (i + 1 < g.size()) {
                num += (g[i] - m) * (g[i + 1] - m);
                ++pairs;
            }
        }
    }
    if (pairsOut) *pairsOut = pairs;
    return (den > 0.0) ? num / den : 0.0;
}

} // namespace rwdre::stats
