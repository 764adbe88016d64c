#include "gps/field.hpp"

#include "gps/rng.hpp"
#include "gps/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace gps {

double cov_K(double u1, double u2, double v1, double v2) {
    return std::min(u1, v1) * std::min(u2, v2) * (std::max(u1, v1) + std::max(u2, v2));
}

double cov_K_product_form(double u1, double u2, double v1, double v2) {
    return u1 * v1 * std::min(u2, v2) + u2 * v2 * std::min(u1, v1);
}

FieldGrid partial_sum_field(const DisorderSample& sample, const ScalingSchedule& schedule,
                            int n, double t1, double t2, int grid_resolution,
                            double sigma_r_sq) {
    const int m1 = static_cast<int>(std::floor(n * t1));
    const int m2 = static_cast<int>(std::floor(n * t2));
    if (static_cast<int>(sample.hat_idx.size()) < m1 ||
        static_cast<int>(sample.bar_idx.size()) < m2)
        throw std::invalid_argument("partial_sum_field: sample does not cover floor(n t)");

    // 2-d prefix sums of zeta
    std::vector<double> prefix(static_cast<std::size_t>(m1 + 1) * (m2 + 1), 0.0);
    const std::size_t stride = static_cast<std::size_t>(m2) + 1;
    for (int i1 = 1; i1 <= m1; ++i1) {
        KahanSum row;
        for (int i2 = 1; i2 <= m2; ++i2) {
            row.add(sample.zeta(i1, i2));
            prefix[static_cast<std::size_t>(i1) * stride + i2] =
                prefix[static_cast<std::size_t>(i1 - 1) * stride + i2] + row.value();
        }
    }

    const double beta_n = sample.beta;
    FieldGrid g;
    g.kind = FieldGrid::Kind::Discrete;
    g.n = n;
    g.beta_n = beta_n;
    g.sigma_r = std::sqrt(sigma_r_sq);
    const double norm =
        g.sigma_r * std::pow(static_cast<double>(n), 1.5) * std::pow(beta_n, schedule.r);
    for (int i = 0; i <= grid_resolution; ++i) {
        g.xs.push_back(t1 * i / grid_resolution);
        g.ys.push_back(t2 * i / grid_resolution);
    }
    g.values.assign(g.xs.size() * g.ys.size(), 0.0);
    for (std::size_t ix = 0; ix < g.xs.size(); ++ix)
        for (std::size_t iy = 0; iy < g.ys.size(); ++iy) {
            int i1 = static_cast<int>(std::floor(n * g.xs[ix]));
            int i2 = static_cast<int>(std::floor(n * g.ys[iy]));
            if (i1 < 1 || i2 < 1) continue;
            i1 = std::min(i1, m1);
            i2 = std::min(i2, m2);
            g.at(ix, iy) = prefix[static_cast<std::size_t>(i1) * stride + i2] / norm;
        }
    return g;
}

FieldGrid sample_limit_field(const std::vector<double>& xs, const std::vector<double>& ys,
                             uint64_t seed) {
    FieldGrid g;
    g.kind = FieldGrid::Kind::Limit;
    g.xs = xs;
    g.ys = ys;
    Rng r1 = make_stream(seed, "field/bm1");
    Rng r2 = make_stream(seed, "field/bm2");
    std::vector<double> b1(xs.size()), b2(ys.size());
    double prev = 0.0, val = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double dt = xs[i] - prev;
        if (dt > 0.0) val += std::sqrt(dt) * r1.normal();
        b1[i] = val;
        prev = xs[i];
    }
    prev = 0.0;
    val = 0.0;
    for (std::size_t i = 0; i < ys.size(); ++i) {
        double dt = ys[i] - prev;
        if (dt > 0.0) val += std::sqrt(dt) * r2.normal();
        b2[i] = val;
        prev = ys[i];
    }
    g.values.assign(xs.size() * ys.size(), 0.0);
    for (std::size_t ix = 0; ix < xs.size(); ++ix)
        for (std::size_t iy = 0; iy < ys.size(); ++iy)
            g.at(ix, iy) = ys[iy] * b1[ix] + xs[ix] * b2[iy];
    return g;
}

FieldGrid sample_limit_field_cholesky(const std::vector<double>& xs,
                                      const std::vector<double>& ys, uint64_t seed) {
    FieldGrid g;
    g.kind = FieldGrid::Kind::Limit;
    g.xs = xs;
    g.ys = ys;
    const std::size_t n = xs.size() * ys.size();
    if (n > 4096)
        throw std::invalid_argument("sample_limit_field_cholesky: grid too large");
    std::vector<double> cov(n * n);
    std::vector<std::pair<double, double>> pts;
    pts.reserve(n);
    for (double x : xs)
        for (double y : ys) pts.push_back({x, y});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            cov[i * n + j] =
                cov_K(pts[i].first, pts[i].second, pts[j].first, pts[j].second);
    // Cholesky with a tiny jitter for the semi-definite axis rows
    std::vector<double> L(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = cov[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= L[i * n + k] * L[j * n + k];
            if (i == j) {
                L[i * n + i] = std::sqrt(std::max(s, 0.0) + 1e-14);
            } else {
                L[i * n + j] = s / L[j * n + j];
            }
        }
    }
    Rng rng = make_stream(seed, "field/cholesky");
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = rng.normal();
    g.values.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        KahanSum s;
        for (std::size_t k = 0; k <= i; ++k) s.add(L[i * n + k] * z[k]);
        g.values[i] = s.value();
    }
    return g;
}

namespace {

std::size_t grid_index(const std::vector<double>& axis, double x) {
    for (std::size_t i = 0; i < axis.size(); ++i)
        if (std::abs(axis[i] - x) <= 1e-12 * std::max(1.0, std::abs(x))) return i;
    throw std::invalid_argument("rectangle_increment: corner is not a grid node");
}

} // namespace

double rectangle_increment(const FieldGrid& grid, double x0, double x1, double y0,
                           double y1) {
    std::size_t ix0 = grid_index(grid.xs, x0), ix1 = grid_index(grid.xs, x1);
    std::size_t iy0 = grid_index(grid.ys, y0), iy1 = grid_index(grid.ys, y1);
    return grid.at(ix1, iy1) - grid.at(ix0, iy1) - grid.at(ix1, iy0) + grid.at(ix0, iy0);
}

double gaussian_moment(int ell, double K_ss) {
    if (ell < 0) throw std::invalid_argument("gaussian_moment: ell >= 0");
    if (ell % 2 == 1) return 0.0;
    int half = ell / 2;
    double dfact = 1.0; // (ell-1)!! = ell! / (2^{ell/2} (ell/2)!)
    for (int i = 1; i < ell; i += 2) dfact *= i;
    (void)half;
    return dfact * std::pow(K_ss, ell / 2);
}

double nu_measure_rectangles(double a1, double b1, double a2, double b2,
                             double c1, double d1, double c2, double d2) {
    auto overlap = [](double lo1, double hi1, double lo2, double hi2) {
        return std::max(0.0, std::min(hi1, hi2) - std::max(lo1, lo2));
    };
    // lambda_3 form: shared first coordinate + shared second coordinate
    double t1 = overlap(a1, b1, c1, d1) * (b2 - a2) * (d2 - c2);
    double t2 = overlap(a2, b2, c2, d2) * (b1 - a1) * (d1 - c1);
    return t1 + t2;
}

double discrete_second_moment_exact(const DisorderSpec& spec, const ScalingSchedule& schedule,
                                    int n, double sigma_r_sq) {
    const double beta = schedule.beta_n(n);
    double e_zz_equal = two_point_correlation(spec, beta, PairRelation::Equal);
    double e_zz_aligned = two_point_correlation(spec, beta, PairRelation::AlignedDistinct);
    const double nn = static_cast<double>(n);
    double numer = nn * nn * e_zz_equal + nn * nn * 2.0 * (nn - 1.0) * e_zz_aligned;
    double denom = sigma_r_sq * nn * nn * nn * std::pow(beta, 2 * schedule.r);
    return numer / denom;
}

std::vector<FieldMomentEstimate> discrete_field_moments(const DisorderSpec& spec,
                                                        const ScalingSchedule& schedule,
                                                        int n, double t1, double t2,
                                                        double sigma_r_sq,
                                                        const std::vector<int>& ells,
                                                        int reps, uint64_t seed,
                                                        int threads) {
    const int m1 = static_cast<int>(std::floor(n * t1));
    const int m2 = static_cast<int>(std::floor(n * t2));
    const int m = spec.size();
    const double beta = schedule.beta_n(n);
    const double lambda = log_mgf(spec, beta);
    std::vector<double> zt(static_cast<std::size_t>(m) * m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            zt[static_cast<std::size_t>(i) * m + j] = std::expm1(beta * spec.V(i, j) - lambda);
    const double norm = std::sqrt(sigma_r_sq) * std::pow(static_cast<double>(n), 1.5) *
                        std::pow(beta, schedule.r);

    // cumulative marginal
    std::vector<double> cdf(static_cast<std::size_t>(m));
    {
        KahanSum s;
        for (int i = 0; i < m; ++i) {
            s.add(spec.probs()[i]);
            cdf[static_cast<std::size_t>(i)] = s.value();
        }
        cdf[static_cast<std::size_t>(m) - 1] = 1.0;
    }

    std::vector<double> vals(static_cast<std::size_t>(reps));
    threads = std::max(1, threads);
    auto worker = [&](int t0) {
        std::vector<double> ch(static_cast<std::size_t>(m)), cb(static_cast<std::size_t>(m));
        for (int rep = t0; rep < reps; rep += threads) {
            Rng rh = make_stream(seed + static_cast<uint64_t>(rep), "disorder/hat");
            Rng rb = make_stream(seed + static_cast<uint64_t>(rep), "disorder/bar");
            std::fill(ch.begin(), ch.end(), 0.0);
            std::fill(cb.begin(), cb.end(), 0.0);
            auto draw = [&](Rng& rng) {
                double u = rng.uniform();
                int lo = 0;
                while (cdf[static_cast<std::size_t>(lo)] <= u && lo + 1 < m) ++lo;
                return lo;
            };
            for (int i = 0; i < m1; ++i) ch[static_cast<std::size_t>(draw(rh))] += 1.0;
            for (int j = 0; j < m2; ++j) cb[static_cast<std::size_t>(draw(rb))] += 1.0;
            KahanSum s;
            for (int a = 0; a < m; ++a) {
                if (ch[static_cast<std::size_t>(a)] == 0.0) continue;
                for (int b = 0; b < m; ++b)
                    s.add(ch[static_cast<std::size_t>(a)] * cb[static_cast<std::size_t>(b)] *
                          zt[static_cast<std::size_t>(a) * m + b]);
            }
            vals[static_cast<std::size_t>(rep)] = s.value() / norm;
        }
    };
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
        for (auto& th : pool) th.join();
    }

    std::vector<FieldMomentEstimate> out;
    for (int ell : ells) {
        MeanSe js = jackknife_moment(vals, ell);
        out.push_back({ell, js.mean, js.se});
    }
    return out;
}

void write_field_csv(const FieldGrid& grid, const std::string& path, bool timestamp) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_field_csv: cannot open " + path);
    if (timestamp) {
        auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        f << "# generated " << now << "\n";
    }
    f << "s1,s2,value\n";
    char buf[96];
    for (std::size_t ix = 0; ix < grid.xs.size(); ++ix)
        for (std::size_t iy = 0; iy < grid.ys.size(); ++iy) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", grid.xs[ix], grid.ys[iy],
                          grid.at(ix, iy));
            f << buf;
        }
}

namespace {
constexpr char kFieldMagic[8] = {'G', 'P', 'S', 'F', 'L', 'D', '0', '1'};
}

void write_field_binary(const FieldGrid& grid, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_field_binary: cannot open " + path);
    char header[32] = {0};
    std::memcpy(header, kFieldMagic, 8);
    uint32_t n1 = static_cast<uint32_t>(grid.xs.size());
    uint32_t n2 = static_cast<uint32_t>(grid.ys.size());
    uint32_t kind = grid.kind == FieldGrid::Kind::Discrete ? 0u : 1u;
    std::memcpy(header + 8, &n1, 4);
    std::memcpy(header + 12, &n2, 4);
    std::memcpy(header + 16, &kind, 4);
    f.write(header, 32);
    auto write_doubles = [&](const std::vector<double>& v) {
        f.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    write_doubles(grid.xs);
    write_doubles(grid.ys);
    write_doubles(grid.values);
}

FieldGrid read_field_binary(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_field_binary: cannot open " + path);
    char header[32];
    f.read(header, 32);
    if (std::memcmp(header, kFieldMagic, 8) != 0)
        throw std::runtime_error("read_field_binary: bad magic");
    uint32_t n1, n2, kind;
    std::memcpy(&n1, header + 8, 4);
    std::memcpy(&n2, header + 12, 4);
    std::memcpy(&kind, header + 16, 4);
    FieldGrid g;
    g.kind = kind == 0 ? FieldGrid::Kind::Discrete : FieldGrid::Kind::Limit;
    g.xs.resize(n1);
    g.ys.resize(n2);
    g.values.resize(static_cast<std::size_t>(n1) * n2);
    auto read_doubles = [&](std::vector<double>& v) {
        f.read(reinterpret_cast<char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    read_doubles(g.xs);
    read_doubles(g.ys);
    read_doubles(g.values);
    return g;
}

} // namespace gps
