#include "gps/polymer.hpp"

#include "gps/rng.hpp"
#include "gps/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <thread>

namespace gps {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Constrained: return "q";
        case Variant::Conditioned: return "cond";
        case Variant::Free: return "free";
    }
    return "?";
}

double ScalingSchedule::beta_n(int n) const {
    return beta_hat * std::pow(std::pow(static_cast<double>(n), 0.5 - alpha) * slow_constant,
                               1.0 / static_cast<double>(r));
}

double ScalingSchedule::h_n(int n) const {
    return h_hat * slow_constant * std::pow(static_cast<double>(n), -alpha);
}

namespace {

// Z(i) = w(i) * sum_{j < i} K(|i-j|) Z(j), Z(0,0) = 1; returns the whole table.
std::vector<double> dp_linear(const std::vector<double>& K, const std::vector<double>& w,
                              LatticeBox box) {
    const int n1 = box.n1, n2 = box.n2;
    std::vector<double> Z(static_cast<std::size_t>(n1 + 1) * (n2 + 1), 0.0);
    Z[0] = 1.0;
    for (int d = 2; d <= n1 + n2; ++d) {
        int i1lo = std::max(1, d - n2);
        int i1hi = std::min(n1, d - 1);
        for (int i1 = i1lo; i1 <= i1hi; ++i1) {
            int i2 = d - i1;
            KahanSum acc;
            for (int j1 = 0; j1 < i1; ++j1) {
                const double* row = &Z[static_cast<std::size_t>(j1) * (n2 + 1)];
                int base = i1 - j1 + i2;
                for (int j2 = 0; j2 < i2; ++j2) {
                    double zj = row[j2];
                    if (zj != 0.0) acc.add(K[base - j2] * zj);
                }
            }
            Z[static_cast<std::size_t>(i1) * (n2 + 1) + i2] =
                w[static_cast<std::size_t>(i1) * (n2 + 1) + i2] * acc.value();
        }
    }
    return Z;
}

// log-domain DP with streaming log-sum-exp; logw entries are log-weights.
std::vector<double> dp_log(const std::vector<double>& logK, const std::vector<double>& logw,
                           LatticeBox box) {
    const int n1 = box.n1, n2 = box.n2;
    const double NEG = -1e300;
    std::vector<double> LZ(static_cast<std::size_t>(n1 + 1) * (n2 + 1), NEG);
    LZ[0] = 0.0;
    for (int d = 2; d <= n1 + n2; ++d) {
        int i1lo = std::max(1, d - n2);
        int i1hi = std::min(n1, d - 1);
        for (int i1 = i1lo; i1 <= i1hi; ++i1) {
            int i2 = d - i1;
            double mx = NEG;
            double s = 0.0;
            for (int j1 = 0; j1 < i1; ++j1) {
                const double* row = &LZ[static_cast<std::size_t>(j1) * (n2 + 1)];
                int base = i1 - j1 + i2;
                for (int j2 = 0; j2 < i2; ++j2) {
                    double term = row[j2];
                    if (term <= NEG) continue;
                    term += logK[base - j2];
                    if (term <= mx) {
                        s += std::exp(term - mx);
                    } else {
                        s = s * std::exp(mx - term) + 1.0;
                        mx = term;
                    }
                }
            }
            LZ[static_cast<std::size_t>(i1) * (n2 + 1) + i2] =
                (mx <= NEG) ? NEG
                            : logw[static_cast<std::size_t>(i1) * (n2 + 1) + i2] + mx + std::log(s);
        }
    }
    return LZ;
}

// P(the next renewal increment from j stays inside the box): prefix sums of
// K over the rectangle of admissible jumps. The free partition function sums
// pinned values times the probability that the walk then leaves the box, so
// that at beta = h = 0 it collapses to E[1] = 1 exactly.
std::vector<double> exit_weights(const std::vector<double>& K, LatticeBox box) {
    const int n1 = box.n1, n2 = box.n2;
    std::vector<double> T(static_cast<std::size_t>(n1 + 1) * (n2 + 1), 0.0);
    const std::size_t stride = static_cast<std::size_t>(n2) + 1;
    for (int a = 1; a <= n1; ++a)
        for (int b = 1; b <= n2; ++b)
            T[static_cast<std::size_t>(a) * stride + b] =
                T[static_cast<std::size_t>(a - 1) * stride + b] +
                T[static_cast<std::size_t>(a) * stride + b - 1] -
                T[static_cast<std::size_t>(a - 1) * stride + b - 1] +
                K[static_cast<std::size_t>(a + b)];
    std::vector<double> X(static_cast<std::size_t>(n1 + 1) * (n2 + 1), 0.0);
    for (int j1 = 0; j1 <= n1; ++j1)
        for (int j2 = 0; j2 <= n2; ++j2)
            X[static_cast<std::size_t>(j1) * stride + j2] =
                1.0 - T[static_cast<std::size_t>(n1 - j1) * stride + (n2 - j2)];
    return X;
}

double free_sum(const std::vector<double>& Z, const std::vector<double>& K, LatticeBox box) {
    std::vector<double> X = exit_weights(K, box);
    const std::size_t stride = static_cast<std::size_t>(box.n2) + 1;
    KahanSum acc;
    acc.add(X[0]); // no contact at all
    for (int i1 = 1; i1 <= box.n1; ++i1)
        for (int i2 = 1; i2 <= box.n2; ++i2)
            acc.add(Z[static_cast<std::size_t>(i1) * stride + i2] *
                    X[static_cast<std::size_t>(i1) * stride + i2]);
    return acc.value();
}

double free_logsum(const std::vector<double>& LZ, const std::vector<double>& K,
                   LatticeBox box) {
    std::vector<double> X = exit_weights(K, box);
    const std::size_t stride = static_cast<std::size_t>(box.n2) + 1;
    double mx = std::log(X[0]);
    for (int i1 = 1; i1 <= box.n1; ++i1)
        for (int i2 = 1; i2 <= box.n2; ++i2) {
            double v = LZ[static_cast<std::size_t>(i1) * stride + i2] +
                       std::log(X[static_cast<std::size_t>(i1) * stride + i2]);
            mx = std::max(mx, v);
        }
    double s = std::exp(std::log(X[0]) - mx);
    for (int i1 = 1; i1 <= box.n1; ++i1)
        for (int i2 = 1; i2 <= box.n2; ++i2) {
            double v = LZ[static_cast<std::size_t>(i1) * stride + i2];
            if (v > -1e299)
                s += std::exp(v + std::log(X[static_cast<std::size_t>(i1) * stride + i2]) - mx);
        }
    return mx + std::log(s);
}

} // namespace

PartitionValue homogeneous_partition(const RenewalLaw& law, LatticeBox box, double h,
                                     Variant variant, const MassTable* mass) {
    PartitionValue out;
    out.variant = variant;
    out.box = box;
    out.h = h;
    const std::vector<double> K = law.pmf_upto(box.diameter());
    std::vector<double> w(static_cast<std::size_t>(box.n1 + 1) * (box.n2 + 1),
                          std::exp(h));
    std::vector<double> Z = dp_linear(K, w, box);
    switch (variant) {
        case Variant::Constrained:
            out.value = Z[static_cast<std::size_t>(box.n1) * (box.n2 + 1) + box.n2];
            break;
        case Variant::Free:
            out.value = free_sum(Z, K, box);
            break;
        case Variant::Conditioned: {
            double zq = Z[static_cast<std::size_t>(box.n1) * (box.n2 + 1) + box.n2];
            double u;
            if (mass) {
                u = (*mass)(box.n1, box.n2);
            } else {
                MassTable t = mass_function(law, box);
                u = t(box.n1, box.n2);
            }
            out.value = zq / u;
            break;
        }
    }
    out.log_value = std::log(out.value);
    return out;
}

PartitionValue quenched_partition(const RenewalLaw& law, const DisorderSample& sample,
                                  LatticeBox box, double beta, double h, Variant variant,
                                  bool log_domain, const MassTable* mass) {
    if (static_cast<int>(sample.hat_idx.size()) < box.n1 ||
        static_cast<int>(sample.bar_idx.size()) < box.n2)
        throw std::invalid_argument("quenched_partition: sample does not cover the box");
    if (std::abs(beta - sample.beta) > 0.0)
        throw std::invalid_argument("quenched_partition: beta must match the sample");
    PartitionValue out;
    out.variant = variant;
    out.box = box;
    out.beta = beta;
    out.h = h;
    out.log_domain = log_domain;

    const std::vector<double> K = law.pmf_upto(box.diameter());
    const std::size_t stride = static_cast<std::size_t>(box.n2) + 1;
    if (!log_domain) {
        std::vector<double> w(static_cast<std::size_t>(box.n1 + 1) * stride, 0.0);
        for (int i1 = 1; i1 <= box.n1; ++i1)
            for (int i2 = 1; i2 <= box.n2; ++i2)
                w[static_cast<std::size_t>(i1) * stride + i2] =
                    sample.weight(i1, i2) * std::exp(h);
        std::vector<double> Z = dp_linear(K, w, box);
        switch (variant) {
            case Variant::Constrained:
                out.value = Z[static_cast<std::size_t>(box.n1) * stride + box.n2];
                break;
            case Variant::Free:
                out.value = free_sum(Z, K, box);
                break;
            case Variant::Conditioned: {
                double zq = Z[static_cast<std::size_t>(box.n1) * stride + box.n2];
                double u = mass ? (*mass)(box.n1, box.n2)
                                : mass_function(law, box)(box.n1, box.n2);
                out.value = zq / u;
                break;
            }
        }
        out.log_value = std::log(out.value);
    } else {
        std::vector<double> logK(K.size(), -1e300);
        for (std::size_t s = 2; s < K.size(); ++s) logK[s] = std::log(K[s]);
        std::vector<double> logw(static_cast<std::size_t>(box.n1 + 1) * stride, 0.0);
        for (int i1 = 1; i1 <= box.n1; ++i1)
            for (int i2 = 1; i2 <= box.n2; ++i2)
                logw[static_cast<std::size_t>(i1) * stride + i2] =
                    beta * sample.omega(i1, i2) - sample.lambda_beta + h;
        std::vector<double> LZ = dp_log(logK, logw, box);
        switch (variant) {
            case Variant::Constrained:
                out.log_value = LZ[static_cast<std::size_t>(box.n1) * stride + box.n2];
                break;
            case Variant::Free:
                out.log_value = free_logsum(LZ, K, box);
                break;
            case Variant::Conditioned: {
                double u = mass ? (*mass)(box.n1, box.n2)
                                : mass_function(law, box)(box.n1, box.n2);
                out.log_value = LZ[static_cast<std::size_t>(box.n1) * stride + box.n2] - std::log(u);
                break;
            }
        }
        out.value = std::exp(out.log_value);
    }
    return out;
}

RescaledResult rescaled_partition(const RenewalLaw& law, const DisorderSpec& spec,
                                  const ScalingSchedule& schedule, int n,
                                  double t1, double t2, uint64_t seed,
                                  const MassTable* mass) {
    RescaledResult res;
    res.beta_n = schedule.beta_n(n);
    res.h_n = schedule.h_n(n);
    res.degenerate_regime = !(schedule.alpha > 0.5);
    LatticeBox box{static_cast<int>(std::floor(n * t1)), static_cast<int>(std::floor(n * t2))};
    DisorderSample sample = sample_fields(spec, box.n1, box.n2, res.beta_n, seed);
    PartitionValue z = quenched_partition(law, sample, box, res.beta_n, res.h_n,
                                          Variant::Constrained, false, mass);
    double scale = std::pow(static_cast<double>(n), 2.0 - schedule.alpha) * schedule.slow_constant;
    res.value = scale * z.value;
    return res;
}

namespace {

// all strictly increasing chains in [1,n1]x[1,n2] ending at (n1,n2)
void enumerate_chains(LatticeBox box, std::vector<std::vector<Point2i>>& out) {
    std::vector<Point2i> chain;
    std::function<void(int, int)> extend = [&](int x, int y) {
        // current chain ends at (x, y); either finish by jumping to the corner
        // or insert another point strictly between
        chain.push_back({box.n1, box.n2});
        out.push_back(chain);
        chain.pop_back();
        for (int i1 = x + 1; i1 < box.n1; ++i1)
            for (int i2 = y + 1; i2 < box.n2; ++i2) {
                chain.push_back({i1, i2});
                extend(i1, i2);
                chain.pop_back();
            }
    };
    extend(0, 0);
}

// E[ exp(beta sum multiplicity * omega) ] by column-factorized enumeration
double annealed_weight(const DisorderSpec& spec, double beta,
                       const std::vector<Point2i>& cells,
                       const std::vector<int>& mult) {
    std::vector<int> rows, cols;
    for (const auto& c : cells) {
        if (std::find(rows.begin(), rows.end(), c.x) == rows.end()) rows.push_back(c.x);
        if (std::find(cols.begin(), cols.end(), c.y) == cols.end()) cols.push_back(c.y);
    }
    const int nr = static_cast<int>(rows.size());
    const int nc = static_cast<int>(cols.size());
    const int m = spec.size();
    // per-row list of (column index in cols, multiplicity)
    std::vector<std::vector<std::pair<int, int>>> row_cells(static_cast<std::size_t>(nr));
    for (std::size_t c = 0; c < cells.size(); ++c) {
        int ri = static_cast<int>(std::find(rows.begin(), rows.end(), cells[c].x) - rows.begin());
        int ci = static_cast<int>(std::find(cols.begin(), cols.end(), cells[c].y) - cols.begin());
        row_cells[static_cast<std::size_t>(ri)].push_back({ci, mult[c]});
    }
    std::vector<int> assign(static_cast<std::size_t>(nc), 0);
    KahanSum acc;
    for (;;) {
        double pcols = 1.0;
        for (int c = 0; c < nc; ++c) pcols *= spec.probs()[assign[static_cast<std::size_t>(c)]];
        double prod = 1.0;
        for (int r = 0; r < nr; ++r) {
            KahanSum rowsum;
            for (int x = 0; x < m; ++x) {
                double e = 0.0;
                for (auto& cm : row_cells[static_cast<std::size_t>(r)])
                    e += cm.second * spec.V(x, assign[static_cast<std::size_t>(cm.first)]);
                rowsum.add(spec.probs()[x] * std::exp(beta * e));
            }
            prod *= rowsum.value();
        }
        acc.add(pcols * prod);
        int pos = 0;
        while (pos < nc) {
            if (++assign[static_cast<std::size_t>(pos)] < m) break;
            assign[static_cast<std::size_t>(pos)] = 0;
            ++pos;
        }
        if (pos == nc) break;
    }
    return acc.value();
}

double chain_k_weight(const RenewalLaw& law, const std::vector<Point2i>& chain) {
    double w = 1.0;
    int px = 0, py = 0;
    for (const auto& p : chain) {
        w *= law.pmf_total(p.x - px + p.y - py);
        px = p.x;
        py = p.y;
    }
    return w;
}

} // namespace

double second_moment_exact(const RenewalLaw& law, const DisorderSpec& spec,
                           LatticeBox box, double beta, double h) {
    if (box.n1 > 5 || box.n2 > 5)
        throw std::invalid_argument("second_moment_exact: box at most (5,5)");
    std::vector<std::vector<Point2i>> chains;
    enumerate_chains(box, chains);
    // cost guard: support^cols * rows per pair
    double cost = static_cast<double>(chains.size()) * chains.size() *
                  std::pow(static_cast<double>(spec.size()), box.n2) * box.n1 * spec.size();
    if (cost > 4e9) throw std::invalid_argument("second_moment_exact: instance too large");

    const double lambda = log_mgf(spec, beta);
    KahanSum total;
    for (const auto& c1 : chains) {
        double kw1 = chain_k_weight(law, c1);
        for (const auto& c2 : chains) {
            double kw2 = chain_k_weight(law, c2);
            // multiset of cells
            std::vector<Point2i> cells;
            std::vector<int> mult;
            auto push = [&](const Point2i& p) {
                for (std::size_t i = 0; i < cells.size(); ++i)
                    if (cells[i].x == p.x && cells[i].y == p.y) {
                        ++mult[i];
                        return;
                    }
                cells.push_back(p);
                mult.push_back(1);
            };
            for (const auto& p : c1) push(p);
            for (const auto& p : c2) push(p);
            int contacts = static_cast<int>(c1.size() + c2.size());
            double dis = annealed_weight(spec, beta, cells, mult);
            total.add(kw1 * kw2 * dis * std::exp((h - lambda) * contacts));
        }
    }
    return total.value();
}

double second_moment_replica(const RenewalLaw& law, const DisorderSpec& spec,
                             LatticeBox box, double beta) {
    std::vector<std::vector<Point2i>> chains;
    enumerate_chains(box, chains);
    const double g = log_mgf(spec, 2.0 * beta) - 2.0 * log_mgf(spec, beta);
    KahanSum total;
    for (const auto& c1 : chains) {
        double kw1 = chain_k_weight(law, c1);
        for (const auto& c2 : chains) {
            double kw2 = chain_k_weight(law, c2);
            int common = 0;
            for (const auto& p : c1)
                for (const auto& q : c2)
                    if (p.x == q.x && p.y == q.y) ++common;
            total.add(kw1 * kw2 * std::exp(g * common));
        }
    }
    return total.value();
}

namespace {

std::vector<double> mc_free_squared(const RenewalLaw& law, const DisorderSpec& spec,
                                    double beta, int n, int reps, uint64_t seed,
                                    int threads) {
    std::vector<double> vals(static_cast<std::size_t>(reps));
    LatticeBox box{n, n};
    threads = std::max(1, threads);
    auto worker = [&](int t0) {
        for (int i = t0; i < reps; i += threads) {
            DisorderSample s = sample_fields(spec, n, n, beta,
                                             seed + static_cast<uint64_t>(i));
            PartitionValue z =
                quenched_partition(law, s, box, beta, 0.0, Variant::Free, false);
            vals[static_cast<std::size_t>(i)] = z.value * z.value;
        }
    };
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
        for (auto& th : pool) th.join();
    }
    return vals;
}

} // namespace

NBetaResult n_beta_estimate(const RenewalLaw& law, const DisorderSpec& spec, double beta,
                            double C, int n_max, int reps, uint64_t seed, int threads) {
    if (!(C > 1.0)) throw std::invalid_argument("n_beta_estimate: C > 1");
    NBetaResult out;
    for (int n = 2; n <= n_max; n *= 2) out.grid.push_back(n);
    if (out.grid.empty() || out.grid.back() != n_max) out.grid.push_back(n_max);
    bool crossed = false;
    int last_ok = 0;
    for (int n : out.grid) {
        std::vector<double> v =
            mc_free_squared(law, spec, beta, n, reps, seed + static_cast<uint64_t>(n) * 65537u,
                            threads);
        MeanSe m = mean_se(v);
        out.second_moment.push_back(m.mean);
        out.second_moment_se.push_back(m.se);
        if (m.mean + 2.0 * m.se <= C) {
            last_ok = n;
        } else {
            crossed = true;
            break;
        }
    }
    out.exceeds = !crossed;
    out.n_beta = last_ok;
    return out;
}

std::vector<FreeEnergyPoint> free_energy_estimate(const RenewalLaw& law,
                                                  const DisorderSpec& spec, double beta,
                                                  double h, const std::vector<int>& n_list,
                                                  int reps, uint64_t seed, int threads) {
    std::vector<FreeEnergyPoint> out;
    threads = std::max(1, threads);
    for (int n : n_list) {
        std::vector<double> vals(static_cast<std::size_t>(reps));
        LatticeBox box{n, n};
        auto worker = [&](int t0) {
            for (int i = t0; i < reps; i += threads) {
                DisorderSample s = sample_fields(
                    spec, n, n, beta,
                    seed + static_cast<uint64_t>(n) * 1000003u + static_cast<uint64_t>(i));
                PartitionValue z = quenched_partition(law, s, box, beta, h,
                                                      Variant::Constrained, true);
                vals[static_cast<std::size_t>(i)] = z.log_value / static_cast<double>(n);
            }
        };
        if (threads == 1) {
            worker(0);
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
            for (auto& th : pool) th.join();
        }
        MeanSe m = mean_se(vals);
        out.push_back({n, m.mean, m.se});
    }
    return out;
}

} // namespace gps
