#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace gps {

// Neumaier compensated accumulator.
class KahanSum {
public:
    void add(double x) {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }
    void reset() { sum_ = comp_ = 0.0; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_sum(const std::vector<double>& xs) {
    KahanSum s;
    for (double x : xs) s.add(x);
    return s.value();
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
    MeanSe out;
    out.n = xs.size();
    if (xs.empty()) return out;
    KahanSum s;
    for (double x : xs) s.add(x);
    out.mean = s.value() / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        KahanSum q;
        for (double x : xs) {
            double d = x - out.mean;
            q.add(d * d);
        }
        double var = q.value() / static_cast<double>(xs.size() - 1);
        out.se = std::sqrt(var / static_cast<double>(xs.size()));
    }
    return out;
}

// Mean and variance of a sample together with standard errors for both.
struct MomentSummary {
    double mean = 0.0, se_mean = 0.0;
    double var = 0.0, se_var = 0.0;
    std::size_t n = 0;
};

inline MomentSummary moment_summary(const std::vector<double>& xs) {
    MomentSummary out;
    out.n = xs.size();
    if (xs.size() < 2) return out;
    const double n = static_cast<double>(xs.size());
    MeanSe m = mean_se(xs);
    out.mean = m.mean;
    out.se_mean = m.se;
    KahanSum q2, q4;
    for (double x : xs) {
        double d = x - out.mean;
        q2.add(d * d);
        q4.add(d * d * d * d);
    }
    double m2 = q2.value() / n;
    double m4 = q4.value() / n;
    out.var = q2.value() / (n - 1.0);
    // standard error of the sample variance
    double v = (m4 - (n - 3.0) / (n - 1.0) * m2 * m2) / n;
    out.se_var = v > 0.0 ? std::sqrt(v) : 0.0;
    return out;
}

// Delete-one jackknife for the plug-in estimator sum f(x_i)/n of E[f(X)].
// For higher moments this is the honest error bar (heavy-tailed estimators).
inline MeanSe jackknife_moment(const std::vector<double>& xs, int power) {
    MeanSe out;
    const std::size_t n = xs.size();
    out.n = n;
    if (n < 2) return out;
    std::vector<double> fx(n);
    for (std::size_t i = 0; i < n; ++i) fx[i] = std::pow(xs[i], power);
    KahanSum tot;
    for (double v : fx) tot.add(v);
    const double total = tot.value();
    out.mean = total / static_cast<double>(n);
    KahanSum q;
    for (std::size_t i = 0; i < n; ++i) {
        double loo = (total - fx[i]) / static_cast<double>(n - 1);
        double d = loo - out.mean;
        q.add(d * d);
    }
    out.se = std::sqrt(q.value() * static_cast<double>(n - 1) / static_cast<double>(n));
    return out;
}

// Ordinary least squares fit y = a + b x returning (a, b, r_squared).
struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    double r_squared = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("fit_line: need two samples of equal size");
    const double n = static_cast<double>(x.size());
    KahanSum sx, sy, sxx, sxy, syy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx.add(x[i]);
        sy.add(y[i]);
        sxx.add(x[i] * x[i]);
        sxy.add(x[i] * y[i]);
        syy.add(y[i] * y[i]);
    }
    double mx = sx.value() / n, my = sy.value() / n;
    double cxx = sxx.value() / n - mx * mx;
    double cxy = sxy.value() / n - mx * my;
    double cyy = syy.value() / n - my * my;
    LineFit f;
    f.slope = cxy / cxx;
    f.intercept = my - f.slope * mx;
    f.r_squared = (cyy > 0.0) ? (cxy * cxy) / (cxx * cyy) : 1.0;
    return f;
}

// Median of block means; robust location estimate plus a spread measure.
struct RobustMean {
    double value = 0.0;
    double err = 0.0;
};

inline RobustMean median_of_means(const std::vector<double>& xs, std::size_t blocks) {
    RobustMean out;
    if (xs.empty()) return out;
    blocks = std::min(blocks, xs.size());
    std::vector<double> bm;
    bm.reserve(blocks);
    std::size_t per = xs.size() / blocks;
    for (std::size_t b = 0; b < blocks; ++b) {
        KahanSum s;
        std::size_t lo = b * per;
        std::size_t hi = (b + 1 == blocks) ? xs.size() : lo + per;
        for (std::size_t i = lo; i < hi; ++i) s.add(xs[i]);
        bm.push_back(s.value() / static_cast<double>(hi - lo));
    }
    std::sort(bm.begin(), bm.end());
    std::size_t m = bm.size() / 2;
    out.value = (bm.size() % 2 == 1) ? bm[m] : 0.5 * (bm[m - 1] + bm[m]);
    MeanSe ms = mean_se(bm);
    out.err = ms.se;
    return out;
}

} // namespace gps
