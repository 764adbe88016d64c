#include "gps/renewal.hpp"

#include "gps/rng.hpp"
#include "gps/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace gps {

namespace {

// sum_{s >= from} s^(-p) by direct summation plus an Euler-Maclaurin tail.
double tail_power_sum(double p, long from) {
    const long direct = 4096;
    KahanSum s;
    long m = from + direct;
    for (long k = from; k < m; ++k) s.add(std::pow(static_cast<double>(k), -p));
    // Euler-Maclaurin from m: integral + m^-p/2 + p m^-(p+1)/12
    double dm = static_cast<double>(m);
    double tail = std::pow(dm, 1.0 - p) / (p - 1.0) + 0.5 * std::pow(dm, -p) +
                  p * std::pow(dm, -p - 1.0) / 12.0;
    return s.value() + tail;
}

} // namespace

RenewalLaw RenewalLaw::make(double alpha, double slow_constant, double tol) {
    if (!(alpha > 0.0))
        throw std::invalid_argument("RenewalLaw: alpha must be > 0");
    if (!(slow_constant > 0.0))
        throw std::invalid_argument("RenewalLaw: slow_constant must be > 0");
    if (!(tol > 0.0))
        throw std::invalid_argument("RenewalLaw: tol must be > 0");

    RenewalLaw law;
    law.alpha_ = alpha;
    law.slow_constant_ = slow_constant;
    law.tol_ = tol;

    // total = sum_{s>=2} (s-1) s^(-2-alpha); terms decay like s^(-1-alpha).
    // Sum until the term drops below tol*1e-3, then close with the
    // Euler-Maclaurin corrected integral tail (bracket width << tol).
    const double term_cut = tol * 1e-3;
    KahanSum series;
    long s = 2;
    double term = 0.0;
    for (;;) {
        term = (s - 1.0) * std::pow(static_cast<double>(s), -2.0 - alpha);
        if (term < term_cut || s > 50000000L) break;
        series.add(term);
        ++s;
    }
    // tail: sum_{k>=s} (k-1) k^(-2-alpha) = sum k^(-1-alpha) - sum k^(-2-alpha)
    double tail = tail_power_sum(1.0 + alpha, s) - tail_power_sum(2.0 + alpha, s);
    law.cutoff_ = s;
    law.series_part_ = series.value();
    law.tail_part_ = tail;
    double total = series.value() + tail;
    law.normalizer_ = 1.0 / (slow_constant * total);
    return law;
}

double RenewalLaw::pmf_total(int s) const {
    if (s < 2) return 0.0;
    return normalizer_ * slow_constant_ * std::pow(static_cast<double>(s), -2.0 - alpha_);
}

double RenewalLaw::interarrival_pmf(int l1, int l2) const {
    if (l1 <= 0 || l2 <= 0)
        throw std::invalid_argument("interarrival_pmf: increments are >= 1 in each coordinate");
    return pmf_total(l1 + l2);
}

std::vector<double> RenewalLaw::pmf_upto(int smax) const {
    std::vector<double> k(static_cast<std::size_t>(smax) + 1, 0.0);
    for (int s = 2; s <= smax; ++s) k[s] = pmf_total(s);
    return k;
}

double RenewalLaw::marginal_pmf(int l) const {
    if (l <= 0) throw std::invalid_argument("marginal_pmf: l must be >= 1");
    // sum_{s > l} K(s)
    return normalizer_ * slow_constant_ * tail_power_sum(2.0 + alpha_, l + 1);
}

double RenewalLaw::total_length_tail(int s) const {
    long from = std::max(2, s + 1);
    double t = tail_power_sum(1.0 + alpha_, from) - tail_power_sum(2.0 + alpha_, from);
    return normalizer_ * slow_constant_ * t;
}

MassTable mass_function(const RenewalLaw& law, LatticeBox box) {
    if (box.n1 < 0 || box.n2 < 0) throw std::invalid_argument("mass_function: bad box");
    MassTable t;
    t.box = box;
    t.values.assign(static_cast<std::size_t>(box.n1 + 1) * (box.n2 + 1), 0.0);
    t.at(0, 0) = 1.0;
    const std::vector<double> K = law.pmf_upto(box.diameter());
    // anti-diagonal cell order; the inner sum runs over predecessors in
    // lexicographic order, which depends only on the cell itself
    for (int d = 2; d <= box.n1 + box.n2; ++d) {
        int i1lo = std::max(1, d - box.n2);
        int i1hi = std::min(box.n1, d - 1);
        for (int i1 = i1lo; i1 <= i1hi; ++i1) {
            int i2 = d - i1;
            KahanSum acc;
            for (int j1 = 0; j1 < i1; ++j1) {
                const double* row = &t.values[static_cast<std::size_t>(j1) * (box.n2 + 1)];
                int base = i1 - j1 + i2;
                for (int j2 = 0; j2 < i2; ++j2) {
                    double uj = row[j2];
                    if (uj != 0.0) acc.add(K[base - j2] * uj);
                }
            }
            t.at(i1, i2) = acc.value();
        }
    }
    return t;
}

MassTable mass_function_fast(const RenewalLaw& law, LatticeBox box) {
    MassTable t;
    t.box = box;
    const int n1 = box.n1, n2 = box.n2;
    t.values.assign(static_cast<std::size_t>(n1 + 1) * (n2 + 1), 0.0);
    t.at(0, 0) = 1.0;
    const std::vector<double> K = law.pmf_upto(box.diameter());

    // prefix[d][x] = sum over j1 <= x on anti-diagonal d of u(j1, d-j1)
    std::vector<std::vector<double>> prefix(static_cast<std::size_t>(n1 + n2 + 1));
    auto build_prefix = [&](int d) {
        int lo = std::max(0, d - n2), hi = std::min(n1, d);
        auto& p = prefix[d];
        p.assign(static_cast<std::size_t>(hi - lo) + 2, 0.0);
        KahanSum acc;
        for (int j1 = lo; j1 <= hi; ++j1) {
            acc.add(t(j1, d - j1));
            p[j1 - lo + 1] = acc.value();
        }
    };
    build_prefix(0);
    if (n1 + n2 >= 1) build_prefix(1);

    for (int d = 2; d <= n1 + n2; ++d) {
        int i1lo = std::max(1, d - n2);
        int i1hi = std::min(n1, d - 1);
        for (int i1 = i1lo; i1 <= i1hi; ++i1) {
            int i2 = d - i1;
            KahanSum acc;
            for (int s = 2; s <= d; ++s) {
                int dd = d - s;
                int lo = std::max(std::max(0, dd - n2), dd - i2 + 1);
                int hi = std::min(std::min(n1, dd), i1 - 1);
                if (lo > hi) continue;
                int base = std::max(0, dd - n2);
                const auto& p = prefix[dd];
                double seg = p[hi - base + 1] - p[lo - base];
                if (seg != 0.0) acc.add(K[s] * seg);
            }
            t.at(i1, i2) = acc.value();
        }
        build_prefix(d);
    }
    return t;
}

double phi_estimate(const RenewalLaw& law, const MassTable& table,
                    double s1, double s2, int n) {
    if (!(s1 > 0.0) || !(s2 > 0.0))
        throw std::invalid_argument("phi_estimate: s must have positive coordinates");
    int i1 = static_cast<int>(std::floor(n * s1));
    int i2 = static_cast<int>(std::floor(n * s2));
    if (i1 > table.box.n1 || i2 > table.box.n2)
        throw std::invalid_argument("phi_estimate: floor(n s) outside the table");
    double scale = std::pow(static_cast<double>(n), 2.0 - law.alpha()) * law.slow_constant();
    return scale * table(i1, i2);
}

double phi_estimate(const RenewalLaw& law, double s1, double s2, int n) {
    int i1 = static_cast<int>(std::floor(n * s1));
    int i2 = static_cast<int>(std::floor(n * s2));
    MassTable t = mass_function_fast(law, LatticeBox{i1, i2});
    return phi_estimate(law, t, s1, s2, n);
}

std::vector<double> marginal_mass(const RenewalLaw& law, int n) {
    std::vector<double> k1(static_cast<std::size_t>(n) + 1, 0.0);
    for (int l = 1; l <= n; ++l) k1[l] = law.marginal_pmf(l);
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    u[0] = 1.0;
    for (int i = 1; i <= n; ++i) {
        KahanSum acc;
        for (int l = 1; l <= i; ++l) acc.add(k1[l] * u[i - l]);
        u[i] = acc.value();
    }
    return u;
}

Trajectory sample_renewal(const RenewalLaw& law, LatticeBox box, uint64_t seed) {
    Trajectory traj;
    const int diam = box.diameter();
    if (diam < 2) return traj;
    // CDF of the total length up to the box diameter; residual mass exits.
    std::vector<double> cdf(static_cast<std::size_t>(diam) + 1, 0.0);
    {
        KahanSum acc;
        for (int s = 2; s <= diam; ++s) {
            acc.add((s - 1.0) * law.pmf_total(s));
            cdf[s] = acc.value();
        }
    }
    Rng rng(seed);
    int x = 0, y = 0;
    for (;;) {
        double r = rng.uniform();
        if (r >= cdf[diam]) break; // tail mass: the jump exits the box
        int lo = 2, hi = diam;
        while (lo < hi) {
            int mid = (lo + hi) / 2;
            if (cdf[mid] > r)
                hi = mid;
            else
                lo = mid + 1;
        }
        int s = lo;
        int l1 = 1 + static_cast<int>(rng.below(static_cast<uint64_t>(s - 1)));
        int l2 = s - l1;
        x += l1;
        y += l2;
        if (x > box.n1 || y > box.n2) break;
        traj.points.emplace_back(x, y);
    }
    return traj;
}

namespace {

struct PairRepResult {
    int inter_count = 0;
    int occ1 = 0, occ2 = 0;
};

// Samples the renewal until both coordinates have left the box, so the
// coordinate projections within [0, n_a] are complete. Jump totals beyond
// the cdf window are dropped (they leave both projections with overwhelming
// probability; the truncation error is O(diam^-alpha) per trajectory).
Trajectory sample_renewal_projected(const std::vector<double>& cdf, LatticeBox box,
                                    uint64_t seed) {
    Trajectory traj;
    const long smax = static_cast<long>(cdf.size()) - 1;
    Rng rng(seed);
    long x = 0, y = 0;
    for (int step = 0; step < 1000000; ++step) {
        if (x > box.n1 && y > box.n2) break;
        double r = rng.uniform();
        if (r >= cdf[static_cast<std::size_t>(smax)]) break; // beyond the window
        long lo = 2, hi = smax;
        while (lo < hi) {
            long mid = (lo + hi) / 2;
            if (cdf[static_cast<std::size_t>(mid)] > r)
                hi = mid;
            else
                lo = mid + 1;
        }
        long s = lo;
        long l1 = 1 + static_cast<long>(rng.below(static_cast<uint64_t>(s - 1)));
        x += l1;
        y += s - l1;
        traj.points.emplace_back(static_cast<int>(std::min<long>(x, 1 << 30)),
                                 static_cast<int>(std::min<long>(y, 1 << 30)));
    }
    return traj;
}

PairRepResult one_pair(const std::vector<double>& cdf, LatticeBox box, uint64_t seed) {
    Trajectory a = sample_renewal_projected(cdf, box, seed * 2 + 1);
    Trajectory b = sample_renewal_projected(cdf, box, seed * 2 + 2);
    PairRepResult r;
    {
        std::size_t i = 0, j = 0;
        while (i < a.points.size() && j < b.points.size()) {
            if (a.points[i] == b.points[j]) {
                if (a.points[i].first <= box.n1 && a.points[i].second <= box.n2)
                    ++r.inter_count;
                ++i;
                ++j;
            } else if (a.points[i] < b.points[j]) {
                ++i;
            } else {
                ++j;
            }
        }
    }
    auto proj_occ = [](const Trajectory& s, const Trajectory& t, bool first, int bound) {
        std::vector<int> u, v;
        for (auto& p : s.points) {
            int c = first ? p.first : p.second;
            if (c <= bound) u.push_back(c);
        }
        for (auto& p : t.points) {
            int c = first ? p.first : p.second;
            if (c <= bound) v.push_back(c);
        }
        int c = 0;
        std::size_t i = 0, j = 0;
        while (i < u.size() && j < v.size()) {
            if (u[i] == v[j]) {
                ++c;
                ++i;
                ++j;
            } else if (u[i] < v[j]) {
                ++i;
            } else {
                ++j;
            }
        }
        return c;
    };
    r.occ1 = proj_occ(a, b, true, box.n1);
    r.occ2 = proj_occ(a, b, false, box.n2);
    return r;
}

} // namespace

IntersectionStats intersection_stats(const RenewalLaw& law, LatticeBox box,
                                     int reps, uint64_t seed, int threads) {
    if (reps < 1) throw std::invalid_argument("intersection_stats: reps >= 1");
    IntersectionStats out;
    out.reps = reps;
    out.box = box;

    // shared total-length cdf for the projected sampler
    const long smax = 32L * std::max(2, box.diameter());
    std::vector<double> cdf(static_cast<std::size_t>(smax) + 1, 0.0);
    {
        KahanSum acc;
        for (long s = 2; s <= smax; ++s) {
            acc.add((s - 1.0) * law.pmf_total(static_cast<int>(s)));
            cdf[static_cast<std::size_t>(s)] = acc.value();
        }
    }

    std::vector<PairRepResult> results(static_cast<std::size_t>(reps));
    threads = std::max(1, threads);
    auto worker = [&](int t0) {
        for (int i = t0; i < reps; i += threads)
            results[i] = one_pair(cdf, box, seed + static_cast<uint64_t>(i));
    };
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t0 = 0; t0 < threads; ++t0) pool.emplace_back(worker, t0);
        for (auto& th : pool) th.join();
    }

    int maxk = 0;
    for (auto& r : results) maxk = std::max(maxk, r.inter_count);
    out.intersection_tail_counts.assign(static_cast<std::size_t>(maxk) + 1, 0);
    for (auto& r : results)
        for (int k = 0; k < r.inter_count; ++k) ++out.intersection_tail_counts[k];

    // least-squares fit of log P(|cap| > k) against k where counts >= 100
    {
        std::vector<double> xs, ys;
        for (std::size_t k = 0; k < out.intersection_tail_counts.size(); ++k) {
            long c = out.intersection_tail_counts[k];
            if (c >= 100)
                xs.push_back(static_cast<double>(k)),
                    ys.push_back(std::log(static_cast<double>(c) / reps));
        }
        if (xs.size() >= 3) {
            LineFit f = fit_line(xs, ys);
            out.geometric_fit_slope = f.slope;
            out.geometric_fit_r2 = f.r_squared;
        }
    }

    // expected occupation U_n = sum_i P(i in rho^(a)) from squared marginals
    {
        std::vector<double> u1 = marginal_mass(law, box.n1);
        std::vector<double> u2 = (box.n2 == box.n1) ? u1 : marginal_mass(law, box.n2);
        KahanSum a, b;
        for (int i = 1; i <= box.n1; ++i) a.add(u1[i] * u1[i]);
        for (int i = 1; i <= box.n2; ++i) b.add(u2[i] * u2[i]);
        out.expected_occupation[0] = a.value();
        out.expected_occupation[1] = b.value();
    }

    for (int axis = 0; axis < 2; ++axis) {
        std::vector<double> occ(results.size());
        for (std::size_t i = 0; i < results.size(); ++i)
            occ[i] = static_cast<double>(axis == 0 ? results[i].occ1 : results[i].occ2);
        MeanSe m = mean_se(occ);
        out.occupation_mean[axis] = m.mean;
        out.occupation_se[axis] = m.se;
        double un = out.expected_occupation[axis];
        std::vector<double> scaled(occ.size());
        for (std::size_t i = 0; i < occ.size(); ++i) scaled[i] = occ[i] / un;
        for (int k = 1; k <= 6; ++k) {
            MeanSe jm = jackknife_moment(scaled, k);
            out.occupation_moments[axis].push_back(jm.mean);
            out.occupation_moments_se[axis].push_back(jm.se);
        }
    }
    return out;
}

void write_mass_csv(const MassTable& table, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_mass_csv: cannot open " + path);
    f << "i1,i2,u\n";
    char buf[64];
    for (int i1 = 0; i1 <= table.box.n1; ++i1)
        for (int i2 = 0; i2 <= table.box.n2; ++i2) {
            std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", i1, i2, table(i1, i2));
            f << buf;
        }
}

} // namespace gps
